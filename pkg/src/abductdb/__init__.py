"""Discover SQL queries from a handful of example tuples by probabilistic
abduction over semantic properties of the examples."""

from .abduction import (
    AbductionParams,
    AbductionResult,
    FilterLedgerEntry,
    abduce,
    brute_force_abduce,
    posterior_score,
    selectivity,
    skewness,
)
from .adb import AbductionReadyDB, build_adb, load_adb, persist_adb
from .context import UnresolvableExamples, derive_contexts, disambiguate, resolve_examples
from .evalharness import BenchmarkCase, MetricsRow, metrics, run_benchmark
from .pipeline import Discovery, discover
from .qbuild import EmittedQuery, assemble_query, build_base_queries, emit_sql
from .query import BaseQuery, CandidateQuery, Filter, NumericRange, SemanticProperty
from .relstore import RelStore, SchemaConfig, eval_query, load_schema, load_store, store_from_tables

__version__ = "0.1.0"

__all__ = [
    "AbductionParams", "AbductionResult", "FilterLedgerEntry", "abduce", "brute_force_abduce",
    "posterior_score", "selectivity", "skewness",
    "AbductionReadyDB", "build_adb", "load_adb", "persist_adb",
    "UnresolvableExamples", "derive_contexts", "disambiguate", "resolve_examples",
    "BenchmarkCase", "MetricsRow", "metrics", "run_benchmark",
    "Discovery", "discover",
    "EmittedQuery", "assemble_query", "build_base_queries", "emit_sql",
    "BaseQuery", "CandidateQuery", "Filter", "NumericRange", "SemanticProperty",
    "RelStore", "SchemaConfig", "eval_query", "load_schema", "load_store", "store_from_tables",
]
