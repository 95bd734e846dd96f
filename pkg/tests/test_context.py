import dataclasses

import numpy as np
import pytest

from abductdb.abduction import AbductionParams
from abductdb.adb import build_adb
from abductdb.context import (
    UnresolvableExamples,
    build_example_set,
    derive_contexts,
    disambiguate,
    filter_families,
    resolve_examples,
)
from abductdb.datasets import IMDB_SCHEMA, PERSONS_SCHEMA, TITANIC_SCHEMA
from abductdb.query import BASIC_CATEGORICAL, BASIC_NUMERIC, DERIVED, BaseQuery, CandidateQuery, NumericRange
from abductdb.relstore import eval_query, schema_from_doc, store_from_tables
from conftest import toy_store


def examples_for(raw, store, adb, eta=0.2):
    matches = resolve_examples(raw, adb.index)
    match, cands = next(iter(matches.items()))
    rows = disambiguate(match, cands, store, adb, eta)
    return build_example_set(raw, match, rows, store)


def contexts_of(raw, store, adb):
    ex = examples_for(raw, store, adb)
    return ex, derive_contexts(ex, store, adb)


class TestResolve:
    def test_titanic_candidates(self, titanic):
        _, adb = titanic
        m = resolve_examples(["Titanic", "Pulp Fiction", "The Matrix"], adb.index)
        assert list(m) == [("movie", "title")]
        assert [len(c) for c in m[("movie", "title")]] == [4, 1, 1]

    def test_academics(self, academics):
        m = resolve_examples(["Dan Suciu", "Sam Madden"], academics[1].index)
        assert list(m) == [("academics", "name")]
        assert [len(c) for c in m[("academics", "name")]] == [1, 1]

    def test_unresolvable(self, academics):
        with pytest.raises(UnresolvableExamples):
            resolve_examples(["Dan Suciu", "zzz-nonexistent"], academics[1].index)

    def test_empty(self, academics):
        with pytest.raises(ValueError):
            resolve_examples(["  "], academics[1].index)

    def test_duplicates_collapse(self, academics):
        store, adb = academics
        ex = examples_for(["Dan Suciu", "dan suciu ", "Sam Madden"], store, adb)
        assert len(ex) == 2 and ex.entities == (101, 103)


class TestDisambiguate:
    def test_titanic_resolves_to_1997(self, titanic):
        store, adb = titanic
        ex = examples_for(["Titanic", "Pulp Fiction", "The Matrix"], store, adb)
        years = [store.table("movie").row(r)["year"] for r in ex.rows]
        assert years == [1997, 1994, 1999]

    def test_unambiguous_is_identity(self, academics):
        store, adb = academics
        m = resolve_examples(["Dan Suciu", "Sam Madden"], adb.index)
        match, cands = next(iter(m.items()))
        assert disambiguate(match, cands, store, adb) == (cands[0][0], cands[1][0])

    def test_identical_duplicates_pick_smallest_id(self):
        schema = schema_from_doc(TITANIC_SCHEMA)
        rows = [
            {"id": 7, "title": "Twin", "year": 2000, "country": "USA"},
            {"id": 3, "title": "Twin", "year": 2000, "country": "USA"},
            {"id": 5, "title": "Solo", "year": 2001, "country": "USA"},
        ]
        store = store_from_tables(schema, {"movie": rows})
        adb = build_adb(store)
        ex = examples_for(["Twin", "Solo"], store, adb)
        assert ex.entities == (3, 5)

    def test_deterministic(self, titanic):
        store, adb = titanic
        raw = ["Titanic", "Pulp Fiction", "The Matrix"]
        assert examples_for(raw, store, adb) == examples_for(raw, store, adb)

    def test_greedy_path_for_many_combinations(self, monkeypatch, titanic):
        import abductdb.context as ctx

        store, adb = titanic
        monkeypatch.setattr(ctx, "EXHAUSTIVE_LIMIT", 1)
        ex = examples_for(["Titanic", "Pulp Fiction", "The Matrix"], store, adb)
        assert store.table("movie").row(ex.rows[0])["year"] == 1997


def _movie_store():
    schema = schema_from_doc(IMDB_SCHEMA)
    genres = ["Action", "Thriller", "Drama", "Comedy"]
    movies = [("Dunkirk", 2017, ["Action", "Thriller", "Drama"]), ("Logan", 2017, ["Action", "Thriller"]),
              ("Taken", 2008, ["Action", "Thriller", "Comedy"]), ("Up", 2009, ["Comedy"])]
    tables = {
        "person": [],
        "genre": [{"id": i, "name": g} for i, g in enumerate(genres, 1)],
        "movie": [{"id": i, "title": t, "year": y} for i, (t, y, _) in enumerate(movies, 1)],
        "castinfo": [],
        "movietogenre": [{"movie_id": i, "genre_id": genres.index(g) + 1} for i, (_, _, gs) in enumerate(movies, 1) for g in gs],
    }
    store = store_from_tables(schema, tables)
    return store, build_adb(store)


class TestDeriveContexts:
    def test_shared_genres(self):
        store, adb = _movie_store()
        _, (contexts, filters) = contexts_of(["Dunkirk", "Logan", "Taken"], store, adb)
        cats = {(c.property.attribute, c.property.value) for c in contexts if c.filter.kind == BASIC_CATEGORICAL}
        assert cats == {("genre.name", "Action"), ("genre.name", "Thriller")}
        assert all(c.support == 3 for c in contexts)
        # the shadowed strength-1 derived genre contexts are not repeated
        assert not [f for f in filters if f.kind == DERIVED]

    def test_age_range(self):
        schema = schema_from_doc(PERSONS_SCHEMA)
        rows = [{"id": i, "name": n, "gender": "F", "age": a} for i, (n, a) in enumerate([("A", 45), ("B", 50), ("C", 52), ("D", 70)])]
        store = store_from_tables(schema, {"person": rows})
        adb = build_adb(store)
        _, (contexts, _) = contexts_of(["A", "B", "C"], store, adb)
        ages = [c for c in contexts if c.property.attribute == "person.age"]
        assert len(ages) == 1 and ages[0].property.value == NumericRange(45, 52) and ages[0].support == 3

    def test_minimum_association_strength(self):
        cast = [(1, m) for m in range(1, 4)] + [(2, m) for m in range(1, 6)]
        store = toy_store(cast, [(m, 1) for m in range(1, 6)], n_persons=2, n_movies=5)
        adb = build_adb(store)
        _, (contexts, _) = contexts_of(["p1", "p2"], store, adb)
        derived = [c.property for c in contexts if c.filter.kind == DERIVED]
        assert [(p.attribute, p.value, p.theta) for p in derived] == [("genre.name", "Comedy", 3)]

    def test_normalized_strength_rejected(self, imdb):
        store, adb = imdb
        ex = examples_for(["Jim Carrey"], store, adb)
        with pytest.raises(NotImplementedError):
            derive_contexts(ex, store, adb, AbductionParams(normalize_strength=True))

    def test_families_group_by_property(self, imdb):
        store, adb = imdb
        _, (_, filters) = contexts_of(["Jim Carrey", "Eddie Murphy"], store, adb)
        fams = filter_families(filters)
        assert len(fams) == 1
        fam = next(iter(fams.values()))
        assert sorted(fam.strengths) == [1, 1, 1, 1, 1, 1, 22]


def _check_validity_and_minimality(store, adb, raw):
    ex, (_, filters) = contexts_of(raw, store, adb)
    expected = {(store.table(ex.relation).row(r)[ex.attribute],) for r in ex.rows}
    base = BaseQuery(ex.relation, f"{ex.relation}.{ex.attribute}")
    for f in filters:
        assert eval_query(store, CandidateQuery(base, (f,)), adb) >= expected, f.describe()
        if f.kind == DERIVED:
            tighter = dataclasses.replace(f, property=dataclasses.replace(f.property, theta=f.property.theta + 1))
            assert not eval_query(store, CandidateQuery(base, (tighter,)), adb) >= expected
        if f.kind == BASIC_NUMERIC:
            observed, _ = adb.stats.numeric[f.property_id]
            r = f.property.value
            above = [v for v in observed if v > r.lo and v <= r.hi]
            if above:
                tighter = dataclasses.replace(f, property=dataclasses.replace(f.property, value=NumericRange(above[0], r.hi)))
                assert not eval_query(store, CandidateQuery(base, (tighter,)), adb) >= expected
    # conjunction of the whole set stays valid
    assert eval_query(store, CandidateQuery(base, tuple(filters)), adb) >= expected


def test_validity_minimality_conjunction_on_fixtures(imdb, titanic, academics):
    _check_validity_and_minimality(*imdb, ["Jim Carrey", "Eddie Murphy"])
    _check_validity_and_minimality(*imdb, ["Comedy Feature 3", "Comedy Feature 9"])
    _check_validity_and_minimality(*titanic, ["Titanic", "Pulp Fiction", "The Matrix"])
    _check_validity_and_minimality(*academics, ["Sam Madden", "Joseph Hellerstein"])


def test_validity_minimality_on_random_synthetic_examples(synthetic):
    store, adb = synthetic
    rng = np.random.default_rng(3)
    for _ in range(15):
        table = "person" if rng.random() < 0.5 else "movie"
        attr = "name" if table == "person" else "title"
        col = store.table(table).column(attr)
        picks = rng.choice(len(col), size=int(rng.integers(1, 6)), replace=False)
        _check_validity_and_minimality(store, adb, [col[i] for i in picks])
