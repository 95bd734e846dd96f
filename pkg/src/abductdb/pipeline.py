"""End-to-end online phase: examples in, abduced query out."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

from .abduction import AbductionParams, AbductionResult, abduce
from .adb import AbductionReadyDB
from .context import (
    ExampleSet,
    SemanticContext,
    build_example_set,
    derive_contexts,
    disambiguate,
    resolve_examples,
)
from .qbuild import MAX_BASE_CANDIDATES, assemble_query, build_base_queries, supported_filters
from .query import CandidateQuery
from .relstore import RelStore

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Candidate:
    examples: ExampleSet
    contexts: tuple[SemanticContext, ...]
    result: AbductionResult
    query: CandidateQuery

    def rank_key(self):
        base = self.result.base
        return (-self.result.ranking_log_score, base.join_count, base.projection)


@dataclass(frozen=True)
class Discovery:
    best: Candidate
    candidates: tuple[Candidate, ...]

    @property
    def query(self) -> CandidateQuery:
        return self.best.query

    @property
    def result(self) -> AbductionResult:
        return self.best.result

    @property
    def examples(self) -> ExampleSet:
        return self.best.examples


def discover(
    raw_examples: Sequence[str],
    store: RelStore,
    adb: AbductionReadyDB,
    params: Optional[AbductionParams] = None,
    max_candidates: int = MAX_BASE_CANDIDATES,
) -> Discovery:
    """Resolve, disambiguate, derive contexts, abduce, and assemble.

    Each matched attribute contributes the base query joining every context
    path; abduction over it also covers the smaller bases, because joins
    that serve no chosen filter are pruned afterwards. Candidates from
    different matched attributes are ranked by the cross-base score, then by
    fewer joins, then by projection name.
    """
    params = params or AbductionParams()
    if params.normalize_strength:
        raise NotImplementedError("normalized association strength is not implemented")
    matches = resolve_examples(raw_examples, adb.index)
    if len(matches) > max_candidates:
        logger.warning("%d matching attributes, keeping the first %d", len(matches), max_candidates)
        matches = dict(list(matches.items())[:max_candidates])
    out = []
    for match, cands in matches.items():
        rows = disambiguate(match, cands, store, adb, params.eta)
        ex = build_example_set(raw_examples, match, rows, store)
        contexts, filters = derive_contexts(ex, store, adb, params)
        base = build_base_queries(match, filters, max_candidates)[-1]
        result = abduce(base, supported_filters(base, filters), len(ex), params, adb.stats)
        out.append(Candidate(ex, tuple(contexts), result, assemble_query(base, result.chosen)))
    out.sort(key=Candidate.rank_key)
    return Discovery(out[0], tuple(out))
