"""Resolve raw example strings to entities and derive their semantic contexts.

Contexts come from the properties every example shares:

* categorical basic property: one context per value common to all examples,
* numeric basic property: the range spanned by the examples,
* derived property: one context per value every example is associated with,
  at the weakest strength among them.

Each context is paired with its minimal valid filter.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from math import prod
from typing import Optional

from .adb import AbductionReadyDB, DerivedRelationSpec, InvertedColumnIndex, normalize
from .query import (
    BASIC_CATEGORICAL,
    BASIC_NUMERIC,
    DERIVED,
    Filter,
    NumericRange,
    SemanticProperty,
)
from .relstore import NUMERIC, RelStore

logger = logging.getLogger(__name__)

EXHAUSTIVE_LIMIT = 10_000


class UnresolvableExamples(LookupError):
    """No single attribute contains every example value."""


@dataclass(frozen=True)
class SemanticContext:
    property: SemanticProperty
    support: int
    filter: Filter


@dataclass(frozen=True)
class ExampleSet:
    raw: tuple[str, ...]
    relation: str
    attribute: str
    entities: tuple  # entity keys (row ids when the relation has no key)
    rows: tuple[int, ...]

    def __len__(self):
        return len(self.raw)


@dataclass(frozen=True)
class FilterFamily:
    """Derived filters over the same derived property, with their strengths."""

    property_id: str
    attribute: str
    members: tuple[Filter, ...]

    @property
    def strengths(self) -> tuple[int, ...]:
        return tuple(f.property.theta for f in self.members)


def dedupe_examples(raw) -> tuple[str, ...]:
    seen, out = set(), []
    for r in raw:
        n = normalize(r)
        if n and n not in seen:
            seen.add(n)
            out.append(r.strip())
    return tuple(out)


def resolve_examples(raw, index: InvertedColumnIndex) -> dict:
    """Map each (relation, attribute) containing all examples to the
    per-example candidate row lists."""
    examples = dedupe_examples(raw)
    if not examples:
        raise ValueError("at least one example is required")
    per_example = []
    for ex in examples:
        by_attr: dict = {}
        for rel, attr, row in index.lookup(ex):
            by_attr.setdefault((rel, attr), []).append(row)
        per_example.append(by_attr)
    common = set(per_example[0])
    for m in per_example[1:]:
        common &= set(m)
    if not common:
        missing = [ex for ex, m in zip(examples, per_example) if not m]
        detail = f"; no match at all for {missing}" if missing else ""
        raise UnresolvableExamples(f"no attribute contains all examples{detail}")
    return {ma: [sorted(m[ma]) for m in per_example] for ma in sorted(common)}


# -- profiles and shared contexts ------------------------------------------------------

def _entity_keys(store: RelStore, relation: str, rows) -> list:
    t = store.table(relation)
    if t.key is None:
        return list(rows)
    keys = t.key_values()
    return [keys[r] for r in rows]


def _profile(store: RelStore, adb: AbductionReadyDB, entity: str, key) -> dict:
    prof = {}
    for p in adb.basic_properties_of(entity):
        v = adb.values(store, p.id).get(key)
        if v is not None:
            prof[p.id] = v
    for s in adb.derived_specs_of(entity):
        v = adb.values(store, s.id).get(key)
        if v is not None:
            prof[s.id] = v
    return prof


def _shared(adb: AbductionReadyDB, entity: str, profiles: list) -> list:
    """(property spec, value, theta) triples common to all profiles."""
    out = []
    for p in adb.basic_properties_of(entity):
        vals = [pr.get(p.id) for pr in profiles]
        if any(v is None for v in vals):
            continue
        if p.kind == NUMERIC:
            xs = [v[0] for v in vals]
            out.append((p, NumericRange(min(xs), max(xs)), None))
        else:
            common = set(vals[0]).intersection(*vals[1:])
            for v in vals[0]:
                if v in common:
                    out.append((p, v, None))
    for s in adb.derived_specs_of(entity):
        vals = [pr.get(s.id) for pr in profiles]
        if any(v is None for v in vals):
            continue
        common = set(vals[0]).intersection(*vals[1:])
        for v in sorted(common, key=lambda x: (type(x).__name__, x)):
            theta = min(d[v] for d in vals)
            if s.shadowed and theta == 1:
                continue
            out.append((s, v, theta))
    return out


def _as_filter(spec, value, theta) -> Filter:
    if isinstance(spec, DerivedRelationSpec):
        return Filter(
            SemanticProperty(spec.attribute, value, theta),
            DERIVED,
            spec.path,
            spec.id,
            spec.name,
            spec.source_path,
        )
    kind = BASIC_NUMERIC if isinstance(value, NumericRange) else BASIC_CATEGORICAL
    return Filter(SemanticProperty(spec.attribute, value), kind, spec.path, spec.id)


# -- disambiguation ------------------------------------------------------------------------

def _score(adb: AbductionReadyDB, entity: str, profiles: list, eta: float) -> tuple:
    shared = 0
    strength = 0
    for spec, value, theta in _shared(adb, entity, profiles):
        if isinstance(value, NumericRange):
            lo, hi = adb.stats.numeric_domain(spec.id)
            coverage = 0.0 if hi == lo else (value.hi - value.lo) / (hi - lo)
            if coverage > eta:
                continue
        shared += 1
        if theta is not None:
            strength += theta
    return shared, strength


def disambiguate(
    match: tuple,
    candidates: list,
    store: RelStore,
    adb: AbductionReadyDB,
    eta: float = 0.2,
) -> tuple:
    """Pick one row per example so that the chosen entities share the most
    contexts; ties go to the larger total derived strength, then to the
    smallest entity-id tuple.

    Numeric ranges count as shared only when they cover at most ``eta`` of the
    attribute's domain, which rewards value proximity. Exhaustive while the
    number of combinations stays under ``EXHAUSTIVE_LIMIT``, greedy otherwise.
    """
    relation, _ = match
    if any(len(c) == 0 for c in candidates):
        raise ValueError("every example needs at least one candidate")
    key_of = {}
    options = []
    for cands in candidates:
        keyed = sorted(zip(_entity_keys(store, relation, cands), cands))
        options.append(keyed)
        for k, r in keyed:
            key_of[r] = k
    if all(len(o) == 1 for o in options):
        return tuple(o[0][1] for o in options)
    if relation not in adb.schema.entity_relations:
        return tuple(o[0][1] for o in options)

    profiles = {}
    for o in options:
        for k, r in o:
            if r not in profiles:
                profiles[r] = _profile(store, adb, relation, k)

    def score(rows):
        return _score(adb, relation, [profiles[r] for r in rows], eta)

    if prod(len(o) for o in options) <= EXHAUSTIVE_LIMIT:
        best, best_score = None, None
        for combo in itertools.product(*options):
            rows = [r for _, r in combo]
            s = score(rows)
            if best_score is None or s > best_score:
                best, best_score = rows, s
        return tuple(best)

    logger.info("disambiguation: %d combinations, using greedy search", prod(len(o) for o in options))
    chosen: dict[int, int] = {i: o[0][1] for i, o in enumerate(options) if len(o) == 1}
    for i, o in enumerate(options):
        if i in chosen:
            continue
        best_r, best_s = None, None
        for _, r in o:
            s = score(list(chosen.values()) + [r])
            if best_s is None or s > best_s:
                best_r, best_s = r, s
        chosen[i] = best_r
    return tuple(chosen[i] for i in range(len(options)))


def build_example_set(raw, match: tuple, rows, store: RelStore) -> ExampleSet:
    relation, attribute = match
    # duplicate entities collapse so that |E| counts distinct examples
    seen, keep_raw, keep_rows = set(), [], []
    for r, row in zip(dedupe_examples(raw), rows):
        if row not in seen:
            seen.add(row)
            keep_raw.append(r)
            keep_rows.append(row)
    return ExampleSet(tuple(keep_raw), relation, attribute, tuple(_entity_keys(store, relation, keep_rows)), tuple(keep_rows))


# -- contexts --------------------------------------------------------------------------------

def derive_contexts(examples: ExampleSet, store: RelStore, adb: AbductionReadyDB, params=None):
    """Return ``(contexts, filters)`` for the resolved examples."""
    if params is not None and getattr(params, "normalize_strength", False):
        raise NotImplementedError("normalized association strength is not implemented")
    if examples.relation not in adb.schema.entity_relations or not examples.entities:
        return [], []
    profiles = [_profile(store, adb, examples.relation, k) for k in examples.entities]
    contexts, filters = [], []
    for spec, value, theta in _shared(adb, examples.relation, profiles):
        f = _as_filter(spec, value, theta)
        contexts.append(SemanticContext(f.property, len(examples), f))
        filters.append(f)
    return contexts, filters


def filter_families(filters) -> dict:
    """Group derived filters by derived property."""
    groups: dict = {}
    for f in filters:
        if f.kind == DERIVED:
            groups.setdefault(f.property_id, []).append(f)
    return {pid: FilterFamily(pid, fs[0].attribute, tuple(fs)) for pid, fs in groups.items()}


def family_of(f: Filter, families: dict) -> Optional[FilterFamily]:
    return families.get(f.property_id) if f.kind == DERIVED else None
