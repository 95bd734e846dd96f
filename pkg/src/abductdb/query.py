"""Query model shared by the store, the alpha-DB and the abduction pipeline.

A query is a root relation projected on one attribute, plus a conjunction of
semantic property filters. Every filter carries its own key/foreign-key join
path from the root, so two filters over the same relation never share a row
(conjunctions behave like intersections of semi-joins).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Optional, Union

BASIC_CATEGORICAL = "basic-categorical"
BASIC_NUMERIC = "basic-numeric"
DERIVED = "derived"
FILTER_KINDS = (BASIC_CATEGORICAL, BASIC_NUMERIC, DERIVED)


class QueryError(ValueError):
    """Raised for malformed queries or references to unknown schema objects."""


def split_qualified(name: str) -> tuple[str, str]:
    rel, sep, attr = name.partition(".")
    if not sep or not rel or not attr:
        raise QueryError(f"expected 'relation.attribute', got {name!r}")
    return rel, attr


@dataclass(frozen=True, order=True)
class NumericRange:
    lo: float
    hi: float

    def __post_init__(self):
        if self.lo > self.hi:
            raise QueryError(f"empty range [{self.lo}, {self.hi}]")

    def __contains__(self, x) -> bool:
        return self.lo <= x <= self.hi


Value = Union[str, int, float, NumericRange, frozenset]


@dataclass(frozen=True)
class SemanticProperty:
    """An attribute/value(-range) pair, with an association strength for
    derived properties (``theta is None`` marks a basic property)."""

    attribute: str
    value: Value
    theta: Optional[int] = None

    def __post_init__(self):
        if self.theta is not None and self.theta < 1:
            raise QueryError(f"association strength must be >= 1, got {self.theta}")

    @property
    def is_basic(self) -> bool:
        return self.theta is None


@dataclass(frozen=True, order=True)
class JoinStep:
    """Equality join ``left = right`` between qualified attributes; ``left``
    is on the side closer to the root."""

    left: str
    right: str

    @property
    def target(self) -> str:
        return split_qualified(self.right)[0]


Path = tuple[JoinStep, ...]


@dataclass(frozen=True)
class Filter:
    """A semantic property filter.

    ``path`` leads from the root relation to the relation holding the
    predicate attribute. For derived filters it leads to the derived relation
    in the alpha-DB and ``source_path`` is the original fact-table path used
    when the filter is expanded into GROUP BY / HAVING form.
    """

    property: SemanticProperty
    kind: str
    path: Path = ()
    property_id: str = ""
    derived: Optional[str] = None
    source_path: Path = ()

    def __post_init__(self):
        if self.kind not in FILTER_KINDS:
            raise QueryError(f"unknown filter kind {self.kind!r}")
        if (self.kind == DERIVED) != (self.property.theta is not None):
            raise QueryError("derived filters need a strength; basic filters must not have one")
        if self.kind == DERIVED and not self.derived:
            raise QueryError("derived filter without a derived relation")
        if self.kind == BASIC_NUMERIC and not isinstance(self.property.value, NumericRange):
            raise QueryError("numeric filter needs a NumericRange value")

    @property
    def attribute(self) -> str:
        return self.property.attribute

    def sort_key(self):
        v = self.property.value
        vkey = (v.lo, v.hi) if isinstance(v, NumericRange) else (str(v),)
        return (self.attribute, self.kind, vkey, self.property.theta or 0, self.path)

    def describe(self) -> str:
        p = self.property
        if isinstance(p.value, NumericRange):
            v = f"[{_fmt(p.value.lo)}, {_fmt(p.value.hi)}]"
        else:
            v = str(p.value)
        theta = "_" if p.theta is None else str(p.theta)
        return f"<{p.attribute}, {v}, {theta}>"


def _fmt(x):
    if isinstance(x, float) and x.is_integer():
        return str(int(x))
    return str(x)


@dataclass(frozen=True)
class BaseQuery:
    """Project-join skeleton: root relation, projection, and join paths."""

    root: str
    projection: str
    paths: tuple[Path, ...] = ()

    def __post_init__(self):
        rel, _ = split_qualified(self.projection)
        if rel != self.root:
            raise QueryError(f"projection {self.projection} is not on root {self.root}")

    @property
    def join_count(self) -> int:
        return sum(len(p) for p in self.paths)


@dataclass(frozen=True)
class CandidateQuery:
    base: BaseQuery
    filters: tuple[Filter, ...] = field(default_factory=tuple)

    @property
    def root(self) -> str:
        return self.base.root

    @property
    def projection(self) -> str:
        return self.base.projection


# -- structured query documents ---------------------------------------------

def _path_doc(path: Path) -> list:
    return [[s.left, s.right] for s in path]


def _path_from(doc) -> Path:
    return tuple(JoinStep(a, b) for a, b in doc or ())


def filter_to_doc(f: Filter) -> dict[str, Any]:
    p = f.property
    doc: dict[str, Any] = {"kind": f.kind, "attribute": p.attribute}
    if isinstance(p.value, NumericRange):
        doc["lo"], doc["hi"] = p.value.lo, p.value.hi
    elif isinstance(p.value, frozenset):
        raise QueryError("disjunctive value sets are not supported")
    else:
        doc["value"] = p.value
    if p.theta is not None:
        doc["theta"] = p.theta
    doc["path"] = _path_doc(f.path)
    if f.property_id:
        doc["property_id"] = f.property_id
    if f.derived:
        doc["derived"] = f.derived
        doc["source_path"] = _path_doc(f.source_path)
    return doc


def filter_from_doc(doc: dict[str, Any]) -> Filter:
    try:
        kind = doc["kind"]
        if kind == BASIC_NUMERIC:
            value: Value = NumericRange(doc["lo"], doc["hi"])
        else:
            value = doc["value"]
            if isinstance(value, list):
                raise QueryError("disjunctive value sets are not supported")
        prop = SemanticProperty(doc["attribute"], value, doc.get("theta"))
        return Filter(
            prop,
            kind,
            _path_from(doc.get("path")),
            doc.get("property_id", ""),
            doc.get("derived"),
            _path_from(doc.get("source_path")),
        )
    except KeyError as e:
        raise QueryError(f"filter document missing key {e}") from None


def query_to_doc(q: CandidateQuery) -> dict[str, Any]:
    return {
        "root": q.base.root,
        "projection": q.base.projection,
        "paths": [_path_doc(p) for p in q.base.paths],
        "filters": [filter_to_doc(f) for f in q.filters],
    }


def query_from_doc(doc: dict[str, Any]) -> CandidateQuery:
    try:
        filters = tuple(filter_from_doc(f) for f in doc.get("filters", ()))
        paths = tuple(_path_from(p) for p in doc.get("paths", ()))
        if not paths:
            paths = tuple(f.path for f in filters if f.path)
        base = BaseQuery(doc["root"], doc["projection"], paths)
    except KeyError as e:
        raise QueryError(f"query document missing key {e}") from None
    return CandidateQuery(base, filters)
