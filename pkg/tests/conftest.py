import sqlite3

import pytest

from abductdb.adb import build_adb
from abductdb.datasets import IMDB_SCHEMA, load_fixture
from abductdb.relstore import schema_from_doc, store_from_tables
from abductdb.synth import SynthConfig, generate_store


def _world(name):
    store = load_fixture(name)
    return store, build_adb(store)


@pytest.fixture(scope="session")
def academics():
    return _world("academics")


@pytest.fixture(scope="session")
def persons():
    return _world("persons")


@pytest.fixture(scope="session")
def titanic():
    return _world("titanic")


@pytest.fixture(scope="session")
def imdb():
    return _world("imdb-toy")


@pytest.fixture(scope="session")
def synthetic():
    store = generate_store(SynthConfig())
    return store, build_adb(store)


def sqlite_db(store, adb=None):
    """In-memory SQLite copy of the store plus derived relations."""
    con = sqlite3.connect(":memory:")
    tables = [store.table(n) for n in store.tables]
    if adb is not None:
        tables += [adb.relation(n) for n in adb.derived]
    for t in tables:
        cols = ", ".join(f'"{a}"' for a in t.attributes)
        con.execute(f'CREATE TABLE "{t.name}" ({cols})')
        marks = ", ".join("?" for _ in t.attributes)
        con.executemany(
            f'INSERT INTO "{t.name}" VALUES ({marks})',
            [tuple(t.columns[a][i] for a in t.attributes) for i in range(t.n_rows)],
        )
    return con


def run_sql(con, sql):
    return {tuple(r) for r in con.execute(sql).fetchall()}


def toy_store(cast, m2g, n_persons=2, n_movies=2):
    schema = schema_from_doc(IMDB_SCHEMA)
    tables = {
        "person": [{"id": i, "name": f"p{i}", "gender": "M"} for i in range(1, n_persons + 1)],
        "movie": [{"id": i, "title": f"m{i}", "year": 2000 + i} for i in range(1, n_movies + 1)],
        "genre": [{"id": 1, "name": "Comedy"}, {"id": 2, "name": "Drama"}, {"id": 3, "name": "Horror"}],
        "castinfo": [{"person_id": p, "movie_id": m} for p, m in cast],
        "movietogenre": [{"movie_id": m, "genre_id": g} for m, g in m2g],
    }
    return store_from_tables(schema, tables)
