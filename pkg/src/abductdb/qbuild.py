"""Base-query construction, filter assembly with join pruning, and SQL emission.

Two SQL forms are produced for the same assembled query:

* ``adb``: plain conjunctive SPJ over the original relations plus the
  materialized derived relations (``persontogenre.count >= 40``),
* ``original``: derived filters expanded into their fact-table joins with
  ``GROUP BY <entity key> HAVING count(*) >= theta``.

Every filter gets its own chain of relation aliases, so two filters over the
same relation are independent semi-joins.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from typing import Optional, Sequence

from .query import (
    BASIC_NUMERIC,
    DERIVED,
    BaseQuery,
    CandidateQuery,
    Filter,
    NumericRange,
    Path,
    QueryError,
    query_to_doc,
    split_qualified,
)

logger = logging.getLogger(__name__)

MAX_BASE_CANDIDATES = 16
ADB = "adb"
ORIGINAL = "original"

_PLAIN_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")
_RESERVED = frozenset(
    """all and as between by case check create default delete distinct else end exists from group
    having in index insert is join key like not null on or order primary references select set
    table then union update user values when where""".split()
)


# -- base queries and assembly ----------------------------------------------------

def build_base_queries(match: tuple, filters: Sequence[Filter] = (), cap: int = MAX_BASE_CANDIDATES) -> list[BaseQuery]:
    """Minimal PJ query on the matched attribute first, then the query that
    joins every relation a filter needs."""
    relation, attribute = match
    minimal = BaseQuery(relation, f"{relation}.{attribute}")
    for f in filters:
        if f.path and split_qualified(f.path[0].left)[0] != relation:
            raise QueryError(f"filter {f.describe()} is not reachable from {relation}")
    paths = sorted({f.path for f in filters if f.path})
    out = [minimal]
    if paths:
        out.append(BaseQuery(relation, minimal.projection, tuple(paths)))
    if len(out) > cap:
        logger.warning("%d base-query candidates, keeping the first %d", len(out), cap)
        out = out[:cap]
    return out


def supported_filters(base: BaseQuery, filters: Sequence[Filter]) -> list[Filter]:
    """Filters whose join path is part of ``base``."""
    paths = set(base.paths)
    return [f for f in filters if not f.path or f.path in paths]


def assemble_query(base: BaseQuery, chosen: Sequence[Filter]) -> CandidateQuery:
    """Attach the chosen filters and drop joins none of them needs."""
    paths = set(base.paths)
    for f in chosen:
        if f.path and f.path not in paths:
            raise QueryError(f"filter {f.describe()} needs a join the base query lacks")
    ordered = tuple(sorted(chosen, key=Filter.sort_key))
    kept = tuple(p for p in base.paths if any(f.path == p for f in ordered))
    return CandidateQuery(BaseQuery(base.root, base.projection, kept), ordered)


# -- SQL text -----------------------------------------------------------------------

def ident(name: str) -> str:
    if _PLAIN_IDENT.match(name) and name.lower() not in _RESERVED:
        return name
    return '"' + name.replace('"', '""') + '"'


def literal(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return str(int(v)) if v.is_integer() else repr(v)
    return "'" + str(v).replace("'", "''") + "'"


def _col(alias: str, attr: str) -> str:
    return f"{ident(alias)}.{ident(attr)}"


@dataclass(frozen=True)
class EmittedQuery:
    sql_text: str
    mode: str
    predicate_count: int
    join_count: int


class _Scope:
    """Alias allocation for one SELECT block."""

    def __init__(self):
        self.used: dict[str, int] = {}
        self.relations: list[tuple[str, str]] = []  # (relation, alias)
        self.joins: list[str] = []

    def add(self, relation: str) -> str:
        n = self.used.get(relation, 0) + 1
        self.used[relation] = n
        alias = relation if n == 1 else f"{relation}_{n}"
        self.relations.append((relation, alias))
        return alias

    def walk(self, start_alias: str, path: Path) -> str:
        """Join along ``path`` with fresh aliases; returns the last alias."""
        alias = start_alias
        for step in path:
            _, lattr = split_qualified(step.left)
            rrel, rattr = split_qualified(step.right)
            nxt = self.add(rrel)
            self.joins.append(f"{_col(alias, lattr)} = {_col(nxt, rattr)}")
            alias = nxt
        return alias

    def from_clause(self) -> str:
        items = sorted(self.relations, key=lambda ra: ra[1])
        return ", ".join(ident(r) if r == a else f"{ident(r)} AS {ident(a)}" for r, a in items)


def _selection(alias: str, f: Filter, mode: str) -> list[tuple]:
    """(sort key, text) predicates of one filter on its last alias."""
    p = f.property
    if f.kind == DERIVED and mode == ADB:
        vcol = p.attribute.replace(".", "_")
        return [
            ((alias, vcol, 0, literal(p.value)), f"{_col(alias, vcol)} = {literal(p.value)}"),
            ((alias, "count", 1, p.theta), f"{_col(alias, 'count')} >= {p.theta}"),
        ]
    _, attr = split_qualified(p.attribute)
    if f.kind == BASIC_NUMERIC:
        r: NumericRange = p.value
        return [
            ((alias, attr, 1, r.lo), f"{_col(alias, attr)} >= {literal(r.lo)}"),
            ((alias, attr, 2, r.hi), f"{_col(alias, attr)} <= {literal(r.hi)}"),
        ]
    return [((alias, attr, 0, literal(p.value)), f"{_col(alias, attr)} = {literal(p.value)}")]


def _is_to_one(path: Path, schema) -> bool:
    if schema is None:
        return not path
    from .relstore import KEY

    return all(schema.attribute(s.right).kind == KEY for s in path)


def _render(select: str, scope: _Scope, preds: list[str], tail: list[str]) -> list[str]:
    lines = [select, f"FROM {scope.from_clause()}"]
    where = scope.joins + preds
    if where:
        lines.append(f"WHERE {where[0]}")
        lines.extend(f"  AND {w}" for w in where[1:])
    return lines + tail


def _derived_subquery(f: Filter) -> tuple[str, str, int]:
    """``root.key IN (...)`` subquery for one derived filter; returns
    (root-side key column, SQL, join count)."""
    steps = f.source_path
    root_rel, root_key = split_qualified(steps[0].left)
    first_rel, first_attr = split_qualified(steps[0].right)
    scope = _Scope()
    alias = scope.add(first_rel)
    last = scope.walk(alias, steps[1:])
    (_, pred), = _selection(last, f, ORIGINAL)
    group = _col(alias, first_attr)
    where = scope.joins + [pred]
    sql = (
        f"SELECT {group} FROM {scope.from_clause()} WHERE {' AND '.join(where)}"
        f" GROUP BY {group} HAVING count(*) >= {f.property.theta}"
    )
    return root_key, sql, len(scope.joins) + 1


def emit_sql(q: CandidateQuery, mode: str = ADB, schema=None) -> EmittedQuery:
    """Render ``q`` as SQL text. ``schema`` lets the original form keep a
    single derived filter in flat GROUP BY/HAVING shape when every other join
    is to-one; otherwise derived filters become ``IN`` subqueries."""
    if mode not in (ADB, ORIGINAL):
        raise QueryError(f"unknown SQL mode {mode!r}")
    scope = _Scope()
    root = scope.add(q.root)
    _, pattr = split_qualified(q.projection)
    select = f"SELECT DISTINCT {_col(root, pattr)}"
    filters = sorted(q.filters, key=Filter.sort_key)
    derived = [f for f in filters if f.kind == DERIVED]
    others = [f for f in filters if f.kind != DERIVED]
    filter_paths = {f.path for f in filters}
    bare_paths = [p for p in q.base.paths if p and p not in filter_paths]

    preds: list[tuple] = []
    tail: list[str] = []
    n_preds = 0
    extra_joins = 0
    for path in bare_paths:
        scope.walk(root, path)
    if mode == ADB:
        for f in filters:
            preds += _selection(scope.walk(root, f.path), f, ADB)
    else:
        flat = len(derived) == 1 and all(_is_to_one(f.path, schema) for f in others) and all(_is_to_one(p, schema) for p in bare_paths)
        for f in others:
            preds += _selection(scope.walk(root, f.path), f, ORIGINAL)
        if flat:
            f = derived[0]
            _, key = split_qualified(f.source_path[0].left)
            preds += _selection(scope.walk(root, f.source_path), f, ORIGINAL)
            tail = [f"GROUP BY {_col(root, key)}", f"HAVING count(*) >= {f.property.theta}"]
            n_preds += 1
        else:
            for f in derived:
                key, sub, joins = _derived_subquery(f)
                preds.append(((root, key, 3, sub), f"{_col(root, key)} IN ({sub})"))
                extra_joins += joins
                n_preds += 1
    preds.sort(key=lambda kt: tuple(str(x) for x in kt[0]))
    n_preds += len(preds)
    text = "\n".join(_render(select, scope, [t for _, t in preds], tail)) + "\n"
    return EmittedQuery(text, mode, n_preds, len(scope.joins) + extra_joins)


def emit_ast(q: CandidateQuery) -> str:
    """Structured query document, the format benchmark files use."""
    return json.dumps(query_to_doc(q), indent=2, sort_keys=True) + "\n"
