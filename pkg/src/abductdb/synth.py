"""Seeded synthetic movie database and random query generator.

The generated schema mirrors the toy movie schema with a few more property
attributes; cast membership follows a heavy-tailed popularity so that
association strengths spread out the way real filmographies do.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .adb import AbductionReadyDB, DerivedRelationSpec
from .query import (
    BASIC_CATEGORICAL,
    BASIC_NUMERIC,
    DERIVED,
    BaseQuery,
    CandidateQuery,
    Filter,
    NumericRange,
    SemanticProperty,
)
from .relstore import NUMERIC, RelStore, eval_query, schema_from_doc, store_from_tables

SYNTH_SCHEMA = {
    "relations": [
        {"name": "person", "attributes": [
            {"name": "id", "kind": "key"},
            {"name": "name", "kind": "text"},
            {"name": "gender", "kind": "categorical"},
            {"name": "birth_year", "kind": "numeric"},
        ]},
        {"name": "movie", "attributes": [
            {"name": "id", "kind": "key"},
            {"name": "title", "kind": "text"},
            {"name": "year", "kind": "numeric"},
            {"name": "country", "kind": "categorical"},
            {"name": "language", "kind": "categorical"},
        ]},
        {"name": "genre", "attributes": [
            {"name": "id", "kind": "key"},
            {"name": "name", "kind": "categorical"},
        ]},
        {"name": "castinfo", "attributes": [
            {"name": "person_id", "kind": "foreign-key"},
            {"name": "movie_id", "kind": "foreign-key"},
        ]},
        {"name": "movietogenre", "attributes": [
            {"name": "movie_id", "kind": "foreign-key"},
            {"name": "genre_id", "kind": "foreign-key"},
        ]},
    ],
    "entity_relations": ["person", "movie"],
    "property_attributes": [
        "person.gender", "person.birth_year", "movie.year", "movie.country", "movie.language", "genre.name",
    ],
    "fact_tables": ["castinfo", "movietogenre"],
    "fk_edges": [
        {"from": "castinfo.person_id", "to": "person.id"},
        {"from": "castinfo.movie_id", "to": "movie.id"},
        {"from": "movietogenre.movie_id", "to": "movie.id"},
        {"from": "movietogenre.genre_id", "to": "genre.id"},
    ],
}

GENRES = ["Action", "Adventure", "Animation", "Comedy", "Crime", "Documentary", "Drama",
          "Family", "Fantasy", "Horror", "Romance", "Thriller"]
COUNTRIES = ["USA", "UK", "France", "India", "Japan", "Germany", "Italy", "Canada", "Spain", "Korea"]
LANGUAGES = ["English", "French", "Hindi", "Japanese", "German", "Italian", "Spanish", "Korean"]


@dataclass(frozen=True)
class SynthConfig:
    n_persons: int = 1500
    n_movies: int = 800
    cast_per_movie: float = 10.0
    max_genres_per_movie: int = 3
    popularity_exponent: float = 1.1
    seed: int = 7


def generate_tables(cfg: SynthConfig = SynthConfig()) -> dict:
    rng = np.random.default_rng(cfg.seed)
    persons = [
        {
            "id": i,
            "name": f"Person {i:05d}",
            "gender": str(rng.choice(["Female", "Male"])),
            "birth_year": int(rng.integers(1930, 2001)),
        }
        for i in range(1, cfg.n_persons + 1)
    ]
    country_w = 1.0 / np.arange(1, len(COUNTRIES) + 1)
    country_w /= country_w.sum()
    movies, m2g = [], []
    for i in range(1, cfg.n_movies + 1):
        c = int(rng.choice(len(COUNTRIES), p=country_w))
        lang = LANGUAGES[0] if rng.random() < 0.6 else str(rng.choice(LANGUAGES))
        movies.append({"id": i, "title": f"Film {i:05d}", "year": int(rng.integers(1950, 2021)), "country": COUNTRIES[c], "language": lang})
        k = int(rng.integers(1, cfg.max_genres_per_movie + 1))
        for g in sorted(rng.choice(len(GENRES), size=k, replace=False)):
            m2g.append({"movie_id": i, "genre_id": int(g) + 1})
    genres = [{"id": i, "name": g} for i, g in enumerate(GENRES, start=1)]
    # heavy-tailed popularity: a few persons appear in many films
    pop = 1.0 / np.arange(1, cfg.n_persons + 1) ** cfg.popularity_exponent
    pop = pop[rng.permutation(cfg.n_persons)]
    pop /= pop.sum()
    cast = []
    for m in range(1, cfg.n_movies + 1):
        k = max(1, int(rng.poisson(cfg.cast_per_movie)))
        k = min(k, cfg.n_persons)
        for p in sorted(rng.choice(cfg.n_persons, size=k, replace=False, p=pop)):
            cast.append({"person_id": int(p) + 1, "movie_id": m})
    return {"person": persons, "movie": movies, "genre": genres, "castinfo": cast, "movietogenre": m2g}


def generate_store(cfg: SynthConfig = SynthConfig()) -> RelStore:
    return store_from_tables(schema_from_doc(SYNTH_SCHEMA), generate_tables(cfg))


# -- random queries -------------------------------------------------------------

def _entity_filter(spec, values, key, rng, adb: AbductionReadyDB) -> Filter:
    """A filter over ``spec`` that entity ``key`` satisfies."""
    if isinstance(spec, DerivedRelationSpec):
        assoc = values[key]
        v = sorted(assoc)[int(rng.integers(len(assoc)))]
        theta = int(rng.integers(1, assoc[v] + 1))
        return Filter(SemanticProperty(spec.attribute, v, theta), DERIVED, spec.path, spec.id, spec.name, spec.source_path)
    vals = values[key]
    if spec.kind == NUMERIC:
        observed, _ = adb.stats.numeric[spec.id]
        x = vals[0]
        i = observed.index(x)
        span = max(1, len(observed) // 4)
        lo = observed[max(0, i - int(rng.integers(0, span)))]
        hi = observed[min(len(observed) - 1, i + int(rng.integers(0, span)))]
        return Filter(SemanticProperty(spec.attribute, NumericRange(lo, hi)), BASIC_NUMERIC, spec.path, spec.id)
    v = vals[int(rng.integers(len(vals)))]
    return Filter(SemanticProperty(spec.attribute, v), BASIC_CATEGORICAL, spec.path, spec.id)


def random_query(
    store: RelStore,
    adb: AbductionReadyDB,
    rng: np.random.Generator,
    max_basic: int = 3,
    max_derived: int = 1,
    min_derived: int = 0,
) -> CandidateQuery:
    """A query with 1..max_basic basic and min_derived..max_derived derived
    filters and a nonempty result, built around a randomly drawn entity."""
    entities = list(adb.schema.entity_relations)
    while True:
        root = entities[int(rng.integers(len(entities)))]
        rel = adb.schema.relation(root)
        proj = next(a.name for a in rel.attributes if a.kind == "text")
        keys = store.table(root).key_values()
        seed_key = keys[int(rng.integers(len(keys)))]
        basic = [p for p in adb.basic_properties_of(root) if seed_key in adb.values(store, p.id)]
        derived = [s for s in adb.derived_specs_of(root) if seed_key in adb.values(store, s.id)]
        if not basic or len(derived) < min_derived:
            continue
        nb = int(rng.integers(1, min(max_basic, len(basic)) + 1))
        nd = int(rng.integers(min_derived, min(max_derived, len(derived)) + 1))
        picks = [basic[i] for i in rng.choice(len(basic), size=nb, replace=False)]
        picks += [derived[i] for i in rng.choice(len(derived), size=nd, replace=False)] if nd else []
        filters = tuple(_entity_filter(s, adb.values(store, s.id), seed_key, rng, adb) for s in picks)
        paths = tuple(sorted({f.path for f in filters if f.path}))
        q = CandidateQuery(BaseQuery(root, f"{root}.{proj}", paths), tuple(sorted(filters, key=Filter.sort_key)))
        if eval_query(store, q, adb):
            return q


def synthetic_benchmark(store: RelStore, adb: AbductionReadyDB, n_cases: int, sizes=(5,), trials: int = 1, seed: int = 0, preset=None, min_truth: int = 1) -> list:
    """Random ground-truth queries packaged as benchmark cases."""
    from .evalharness import BenchmarkCase

    rng = np.random.default_rng(seed)
    need = max([min_truth] + [s for s in sizes if s != "all"])
    cases = []
    while len(cases) < n_cases:
        q = random_query(store, adb, rng)
        if len(eval_query(store, q, adb)) < need:
            continue
        cases.append(BenchmarkCase(f"q{len(cases) + 1:03d}", q, tuple(sizes), trials, seed + len(cases), preset))
    return cases
