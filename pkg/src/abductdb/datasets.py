"""Small built-in databases used by the tests, demos, and the CLI.

* ``academics``: researchers and their research interests,
* ``persons``: six people with gender and age,
* ``titanic``: films where the title "Titanic" names four different movies,
* ``imdb-toy``: persons, movies, genres, cast and genre associations, with a
  handful of actors who appear in far more comedies than anything else.
"""

from __future__ import annotations

import json
from pathlib import Path as FsPath

from .relstore import RelStore, SchemaConfig, schema_from_doc, store_from_tables, write_store


def _rel(name, *attrs):
    return {"name": name, "attributes": [dict(zip(("name", "kind", "type"), a)) if len(a) == 3 else {"name": a[0], "kind": a[1]} for a in attrs]}


ACADEMICS_SCHEMA = {
    "relations": [
        _rel("academics", ("id", "key"), ("name", "text")),
        _rel("research", ("aid", "foreign-key"), ("interest", "categorical")),
    ],
    "entity_relations": ["academics"],
    "property_attributes": ["research.interest"],
    "fact_tables": [],
    "fk_edges": [{"from": "research.aid", "to": "academics.id"}],
}

ACADEMICS_TABLES = {
    "academics": [
        {"id": 100, "name": "Thomas Cormen"},
        {"id": 101, "name": "Dan Suciu"},
        {"id": 102, "name": "Jiawei Han"},
        {"id": 103, "name": "Sam Madden"},
        {"id": 104, "name": "James Kurose"},
        {"id": 105, "name": "Joseph Hellerstein"},
    ],
    "research": [
        {"aid": 100, "interest": "algorithms"},
        {"aid": 101, "interest": "data management"},
        {"aid": 102, "interest": "data mining"},
        {"aid": 103, "interest": "data management"},
        {"aid": 103, "interest": "distributed systems"},
        {"aid": 104, "interest": "computer networks"},
        {"aid": 105, "interest": "data management"},
        {"aid": 105, "interest": "distributed systems"},
    ],
}

PERSONS_SCHEMA = {
    "relations": [_rel("person", ("id", "key"), ("name", "text"), ("gender", "categorical"), ("age", "numeric"))],
    "entity_relations": ["person"],
    "property_attributes": ["person.gender", "person.age"],
}

PERSONS_TABLES = {
    "person": [
        {"id": 1, "name": "Tom Cruise", "gender": "Male", "age": 50},
        {"id": 2, "name": "Clint Eastwood", "gender": "Male", "age": 90},
        {"id": 3, "name": "Tom Hanks", "gender": "Male", "age": 60},
        {"id": 4, "name": "Julia Roberts", "gender": "Female", "age": 50},
        {"id": 5, "name": "Emma Stone", "gender": "Female", "age": 29},
        {"id": 6, "name": "Julianne Moore", "gender": "Female", "age": 60},
    ]
}

TITANIC_SCHEMA = {
    "relations": [_rel("movie", ("id", "key"), ("title", "text"), ("year", "numeric"), ("country", "categorical"))],
    "entity_relations": ["movie"],
    "property_attributes": ["movie.year", "movie.country"],
}

_TITANIC_FILMS = [
    ("Titanic", 1915, "Italy"),
    ("Titanic", 1943, "Germany"),
    ("Titanic", 1953, "UK"),
    ("Titanic", 1997, "USA"),
    ("Pulp Fiction", 1994, "USA"),
    ("The Matrix", 1999, "USA"),
    ("Metropolis", 1927, "Germany"),
    ("Casablanca", 1942, "USA"),
    ("Rashomon", 1950, "Japan"),
    ("La Dolce Vita", 1960, "Italy"),
    ("Amelie", 2001, "France"),
    ("Spirited Away", 2001, "Japan"),
    ("Parasite", 2019, "South Korea"),
]

TITANIC_TABLES = {
    "movie": [{"id": i, "title": t, "year": y, "country": c} for i, (t, y, c) in enumerate(_TITANIC_FILMS, start=1)]
}

IMDB_SCHEMA = {
    "relations": [
        _rel("person", ("id", "key"), ("name", "text"), ("gender", "categorical")),
        _rel("movie", ("id", "key"), ("title", "text"), ("year", "numeric")),
        _rel("genre", ("id", "key"), ("name", "categorical")),
        _rel("castinfo", ("person_id", "foreign-key"), ("movie_id", "foreign-key")),
        _rel("movietogenre", ("movie_id", "foreign-key"), ("genre_id", "foreign-key")),
    ],
    "entity_relations": ["person", "movie"],
    "property_attributes": ["person.gender", "movie.year", "genre.name"],
    "fact_tables": ["castinfo", "movietogenre"],
    "fk_edges": [
        {"from": "castinfo.person_id", "to": "person.id"},
        {"from": "castinfo.movie_id", "to": "movie.id"},
        {"from": "movietogenre.movie_id", "to": "movie.id"},
        {"from": "movietogenre.genre_id", "to": "genre.id"},
    ],
}

_GENRES = ["Comedy", "Drama", "Action", "Thriller", "Romance", "Horror", "SciFi"]
_N_COMEDIES = 30
_PER_GENRE = 4

# name, gender, comedy movie numbers, {genre: number of films}
_CAST = [
    ("Jim Carrey", "Male", range(1, 25), "each"),
    ("Eddie Murphy", "Male", range(5, 27), "each"),
    ("Adam Sandler", "Male", range(8, 31), "each"),
    ("Meryl Streep", "Female", range(1, 3), {"Drama": 3}),
    ("Tom Hanks", "Male", range(3, 6), {"Drama": 2}),
    ("Julia Roberts", "Female", range(6, 8), {"Romance": 2}),
    ("Emma Stone", "Female", range(8, 11), {"Romance": 1}),
    ("Denzel Washington", "Male", range(0), {"Action": 3, "Thriller": 2}),
    ("Cate Blanchett", "Female", range(0), {"Drama": 2}),
    ("Keanu Reeves", "Male", range(0), {"Action": 4, "SciFi": 3}),
    ("Nicole Kidman", "Female", range(0), {"Horror": 2, "Drama": 1}),
    ("Morgan Freeman", "Male", range(0), {"Drama": 3, "Thriller": 1}),
]


def _imdb_tables() -> dict:
    genres = [{"id": i, "name": g} for i, g in enumerate(_GENRES, start=1)]
    gid = {g["name"]: g["id"] for g in genres}
    movies, m2g = [], []
    comedy_ids = []
    for i in range(1, _N_COMEDIES + 1):
        mid = len(movies) + 1
        movies.append({"id": mid, "title": f"Comedy Feature {i}", "year": 1980 + i})
        m2g.append({"movie_id": mid, "genre_id": gid["Comedy"]})
        comedy_ids.append(mid)
    by_genre = {}
    for g in _GENRES[1:]:
        by_genre[g] = []
        for i in range(1, _PER_GENRE + 1):
            mid = len(movies) + 1
            movies.append({"id": mid, "title": f"{g} Feature {i}", "year": 1990 + 3 * i})
            m2g.append({"movie_id": mid, "genre_id": gid[g]})
            by_genre[g].append(mid)
    persons, cast = [], []
    for pid, (name, gender, comedies, others) in enumerate(_CAST, start=1):
        persons.append({"id": pid, "name": name, "gender": gender})
        for c in comedies:
            cast.append({"person_id": pid, "movie_id": comedy_ids[c - 1]})
        spread = {g: 1 for g in _GENRES[1:]} if others == "each" else others
        for g, n in spread.items():
            for mid in by_genre[g][:n]:
                cast.append({"person_id": pid, "movie_id": mid})
    return {"person": persons, "movie": movies, "genre": genres, "castinfo": cast, "movietogenre": m2g}


FIXTURES = {
    "academics": (ACADEMICS_SCHEMA, lambda: ACADEMICS_TABLES),
    "persons": (PERSONS_SCHEMA, lambda: PERSONS_TABLES),
    "titanic": (TITANIC_SCHEMA, lambda: TITANIC_TABLES),
    "imdb-toy": (IMDB_SCHEMA, _imdb_tables),
}


def fixture_schema(name: str) -> SchemaConfig:
    try:
        doc, _ = FIXTURES[name]
    except KeyError:
        raise KeyError(f"unknown fixture {name!r}; choose from {sorted(FIXTURES)}") from None
    return schema_from_doc(doc)


def load_fixture(name: str) -> RelStore:
    """Frozen store for a built-in fixture."""
    schema = fixture_schema(name)
    return store_from_tables(schema, FIXTURES[name][1]())


def export_fixture(name: str, directory) -> FsPath:
    """Write ``schema.json`` and one CSV per relation; returns the directory."""
    d = FsPath(directory)
    store = load_fixture(name)
    write_store(store, d)
    with open(d / "schema.json", "w", encoding="utf-8") as fh:
        json.dump(FIXTURES[name][0], fh, indent=2)
    return d
