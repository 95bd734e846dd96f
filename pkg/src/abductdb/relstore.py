"""Schema metadata, an immutable in-memory relational store, and an SPJ
evaluator used as the ground-truth oracle throughout the package."""

from __future__ import annotations

import csv
import io
import json
import logging
import os
import re
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path as FsPath
from types import MappingProxyType
from typing import Iterable, Optional, TextIO, Union

from .query import (
    BASIC_CATEGORICAL,
    BASIC_NUMERIC,
    DERIVED,
    CandidateQuery,
    Filter,
    NumericRange,
    QueryError,
    split_qualified,
)

logger = logging.getLogger(__name__)

KEY = "key"
FOREIGN_KEY = "foreign-key"
CATEGORICAL = "categorical"
NUMERIC = "numeric"
TEXT = "text"
ATTRIBUTE_KINDS = (KEY, FOREIGN_KEY, CATEGORICAL, NUMERIC, TEXT)

INTEGER = "integer"
DECIMAL = "decimal"
STRING = "text"
_DEFAULT_TYPE = {KEY: INTEGER, FOREIGN_KEY: INTEGER, NUMERIC: INTEGER, CATEGORICAL: STRING, TEXT: STRING}

_INT_RE = re.compile(r"[+-]?\d+\Z")
_INT64 = 2**63


class SchemaError(ValueError):
    pass


class LoadError(ValueError):
    pass


@dataclass(frozen=True)
class AttributeSpec:
    name: str
    kind: str
    type: str

    @property
    def is_key_like(self) -> bool:
        return self.kind in (KEY, FOREIGN_KEY)


@dataclass(frozen=True)
class RelationSpec:
    name: str
    attributes: tuple[AttributeSpec, ...]

    def attribute(self, name: str) -> AttributeSpec:
        for a in self.attributes:
            if a.name == name:
                return a
        raise KeyError(name)

    @property
    def attribute_names(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.attributes)

    @property
    def key(self) -> Optional[str]:
        keys = [a.name for a in self.attributes if a.kind == KEY]
        return keys[0] if keys else None


@dataclass(frozen=True)
class FkEdge:
    source: str  # referencing attribute, "rel.attr"
    target: str  # referenced key, "rel.key"


@dataclass(frozen=True)
class SchemaConfig:
    relations: tuple[RelationSpec, ...]
    entity_relations: tuple[str, ...] = ()
    property_attributes: tuple[str, ...] = ()
    fact_tables: tuple[str, ...] = ()
    fk_edges: tuple[FkEdge, ...] = ()

    def relation(self, name: str) -> RelationSpec:
        for r in self.relations:
            if r.name == name:
                return r
        raise SchemaError(f"unknown relation {name!r}")

    def has_relation(self, name: str) -> bool:
        return any(r.name == name for r in self.relations)

    def attribute(self, qualified: str) -> AttributeSpec:
        rel, attr = split_qualified(qualified)
        try:
            return self.relation(rel).attribute(attr)
        except KeyError:
            raise SchemaError(f"unknown attribute {qualified!r}") from None

    def fks_from(self, relation: str) -> list[FkEdge]:
        return [e for e in self.fk_edges if split_qualified(e.source)[0] == relation]

    def fks_into(self, relation: str) -> list[FkEdge]:
        return [e for e in self.fk_edges if split_qualified(e.target)[0] == relation]

    def property_attributes_of(self, relation: str) -> list[str]:
        return [p for p in self.property_attributes if split_qualified(p)[0] == relation]

    def to_doc(self) -> dict:
        return {
            "relations": [
                {"name": r.name, "attributes": [{"name": a.name, "kind": a.kind, "type": a.type} for a in r.attributes]}
                for r in self.relations
            ],
            "entity_relations": list(self.entity_relations),
            "property_attributes": list(self.property_attributes),
            "fact_tables": list(self.fact_tables),
            "fk_edges": [{"from": e.source, "to": e.target} for e in self.fk_edges],
        }


def schema_from_doc(doc: dict) -> SchemaConfig:
    if not isinstance(doc, dict) or "relations" not in doc:
        raise SchemaError("schema document needs a 'relations' list")
    relations = []
    seen = set()
    for r in doc["relations"]:
        name = r["name"]
        if name in seen:
            raise SchemaError(f"duplicate relation name {name!r}")
        seen.add(name)
        attrs = []
        for a in r["attributes"]:
            kind = a.get("kind", TEXT)
            if kind not in ATTRIBUTE_KINDS:
                raise SchemaError(f"{name}.{a['name']}: unknown attribute kind {kind!r}")
            typ = a.get("type", _DEFAULT_TYPE[kind])
            if typ not in (INTEGER, DECIMAL, STRING):
                raise SchemaError(f"{name}.{a['name']}: unknown type {typ!r}")
            if kind == NUMERIC and typ == STRING:
                raise SchemaError(f"{name}.{a['name']}: numeric attribute cannot have text type")
            attrs.append(AttributeSpec(a["name"], kind, typ))
        if len({a.name for a in attrs}) != len(attrs):
            raise SchemaError(f"duplicate attribute in relation {name!r}")
        if sum(a.kind == KEY for a in attrs) > 1:
            raise SchemaError(f"relation {name!r} declares more than one key attribute")
        relations.append(RelationSpec(name, tuple(attrs)))

    edges = []
    for e in doc.get("fk_edges", ()):
        src, dst = (e["from"], e["to"]) if isinstance(e, dict) else tuple(e)
        edges.append(FkEdge(src, dst))

    schema = SchemaConfig(
        tuple(relations),
        tuple(doc.get("entity_relations", ())),
        tuple(doc.get("property_attributes", ())),
        tuple(doc.get("fact_tables", ())),
        tuple(edges),
    )
    _validate(schema)
    return schema


def _validate(schema: SchemaConfig) -> None:
    for e in schema.fk_edges:
        for end in (e.source, e.target):
            rel, attr = split_qualified(end)
            if not schema.has_relation(rel):
                raise SchemaError(f"fk edge {e.source} -> {e.target}: relation {rel!r} does not exist")
            if attr not in schema.relation(rel).attribute_names:
                raise SchemaError(f"fk edge {e.source} -> {e.target}: attribute {end!r} does not exist")
        if schema.attribute(e.target).kind != KEY:
            raise SchemaError(f"fk edge {e.source} -> {e.target} does not target a key attribute")
        if schema.attribute(e.source).kind != FOREIGN_KEY:
            raise SchemaError(f"fk edge source {e.source} is not declared as a foreign-key attribute")
        if schema.attribute(e.source).type != schema.attribute(e.target).type:
            raise SchemaError(f"fk edge {e.source} -> {e.target} joins attributes of different types")
    sources = [e.source for e in schema.fk_edges]
    if len(set(sources)) != len(sources):
        raise SchemaError("a foreign-key attribute has more than one fk edge")
    for r in schema.relations:
        for a in r.attributes:
            if a.kind == FOREIGN_KEY and f"{r.name}.{a.name}" not in sources:
                raise SchemaError(f"foreign-key attribute {r.name}.{a.name} has no fk edge")
    for name in schema.entity_relations:
        rel = schema.relation(name)
        if sum(a.kind == KEY for a in rel.attributes) != 1:
            raise SchemaError(f"entity relation {name!r} must have exactly one key attribute")
    for name in schema.fact_tables:
        schema.relation(name)
        if len(schema.fks_from(name)) < 2:
            raise SchemaError(f"fact table {name!r} needs at least two foreign keys")
        if name in schema.entity_relations:
            raise SchemaError(f"{name!r} cannot be both an entity relation and a fact table")
    if len(set(schema.property_attributes)) != len(schema.property_attributes):
        raise SchemaError("property attribute listed twice")
    for p in schema.property_attributes:
        a = schema.attribute(p)
        if a.kind not in (CATEGORICAL, NUMERIC):
            raise SchemaError(f"property attribute {p} must be categorical or numeric, not {a.kind}")


def load_schema(config_text: Union[str, TextIO]) -> SchemaConfig:
    """Parse and validate a JSON schema document."""
    text = config_text if isinstance(config_text, str) else config_text.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise SchemaError(f"schema is not valid JSON: {e}") from None
    try:
        return schema_from_doc(doc)
    except (KeyError, TypeError) as e:
        raise SchemaError(f"malformed schema document: {e!r}") from None


def load_schema_file(path) -> SchemaConfig:
    with open(path, encoding="utf-8") as fh:
        return load_schema(fh)


# -- tables -----------------------------------------------------------------

class Table:
    """Column-oriented relation; row ids are positions ``0..n_rows-1``."""

    def __init__(self, name: str, attributes: tuple[str, ...], columns: dict[str, tuple], key: Optional[str] = None):
        self.name = name
        self.attributes = attributes
        self.columns = MappingProxyType(dict(columns))
        self.key = key
        self.n_rows = len(next(iter(columns.values()))) if columns else 0
        self._indexes: dict[str, dict] = {}

    def __repr__(self):
        return f"Table({self.name!r}, rows={self.n_rows})"

    def __len__(self):
        return self.n_rows

    def column(self, attr: str) -> tuple:
        try:
            return self.columns[attr]
        except KeyError:
            raise QueryError(f"unknown attribute {self.name}.{attr}") from None

    def row(self, i: int) -> dict:
        return {a: self.columns[a][i] for a in self.attributes}

    def index(self, attr: str) -> dict:
        """Value -> list of row ids (nulls skipped); built on first use."""
        idx = self._indexes.get(attr)
        if idx is None:
            idx = defaultdict(list)
            for i, v in enumerate(self.column(attr)):
                if v is not None:
                    idx[v].append(i)
            idx = dict(idx)
            self._indexes[attr] = idx
        return idx

    def key_values(self) -> tuple:
        if self.key is None:
            raise QueryError(f"relation {self.name} has no key")
        return self.columns[self.key]


def _parse_cell(raw: str, attr: AttributeSpec, where: str):
    if raw == "":
        return None
    if attr.type == INTEGER:
        s = raw.strip()
        if not _INT_RE.match(s):
            raise LoadError(f"{where}: cannot parse {raw!r} as integer for attribute {attr.name}")
        v = int(s)
        if not -_INT64 <= v < _INT64:
            raise LoadError(f"{where}: integer {raw!r} out of 64-bit range for attribute {attr.name}")
        return v
    if attr.type == DECIMAL:
        try:
            return float(raw)
        except ValueError:
            raise LoadError(f"{where}: cannot parse {raw!r} as decimal for attribute {attr.name}") from None
    return raw


class RelStore:
    """Relations loaded from CSV; write-once, then frozen."""

    def __init__(self, schema: SchemaConfig):
        self.schema = schema
        self._rows: dict[str, list[tuple]] = {}
        self._tables: dict[str, Table] = {}
        self.frozen = False

    def __contains__(self, name):
        return name in self._tables

    @property
    def tables(self):
        return MappingProxyType(self._tables)

    def table(self, name: str) -> Table:
        try:
            return self._tables[name]
        except KeyError:
            raise QueryError(f"unknown relation {name!r}") from None

    # alpha-DB objects expose the same method, so evaluators can take either
    relation = table

    def load_table(self, relation_name: str, csv_stream: Union[TextIO, str]) -> int:
        """Parse one relation's CSV; returns the number of accepted rows."""
        if self.frozen:
            raise LoadError("store is frozen; no further loads")
        if not self.schema.has_relation(relation_name):
            raise LoadError(f"relation {relation_name!r} is not declared in the schema")
        if relation_name in self._rows:
            raise LoadError(f"relation {relation_name!r} already loaded")
        spec = self.schema.relation(relation_name)
        if isinstance(csv_stream, str):
            csv_stream = io.StringIO(csv_stream)
        reader = csv.reader(csv_stream)
        try:
            header = next(reader)
        except StopIteration:
            raise LoadError(f"{relation_name}: empty file, header row missing") from None
        header = [h.strip() for h in header]
        declared = set(spec.attribute_names)
        missing = declared - set(header)
        if missing:
            raise LoadError(f"{relation_name}: missing column(s) {sorted(missing)}")
        extra = set(header) - declared
        if extra:
            raise LoadError(f"{relation_name}: undeclared column(s) {sorted(extra)}")
        if len(set(header)) != len(header):
            raise LoadError(f"{relation_name}: duplicate column in header")
        pos = [header.index(a) for a in spec.attribute_names]
        key_pos = [i for i, a in enumerate(spec.attributes) if a.is_key_like]
        key_i = next((i for i, a in enumerate(spec.attributes) if a.kind == KEY), None)

        rows: list[tuple] = []
        seen_keys: dict = {}
        for lineno, raw in enumerate(reader, start=2):
            if not raw:
                continue
            where = f"{relation_name}.csv line {lineno}"
            if len(raw) != len(header):
                raise LoadError(f"{where}: expected {len(header)} cells, got {len(raw)}")
            row = tuple(_parse_cell(raw[p], a, where) for p, a in zip(pos, spec.attributes))
            if any(row[i] is None for i in key_pos):
                logger.warning("%s: null key/foreign-key cell, row rejected", where)
                continue
            if key_i is not None:
                k = row[key_i]
                if k in seen_keys:
                    raise LoadError(f"{where}: duplicate primary key {k!r} (first seen line {seen_keys[k]})")
                seen_keys[k] = lineno
            rows.append(row)
        if not rows:
            logger.warning("relation %s loaded with 0 rows", relation_name)
        self._rows[relation_name] = rows
        return len(rows)

    def freeze(self) -> "RelStore":
        """Resolve foreign keys (dangling rows are rejected) and publish tables."""
        if self.frozen:
            return self
        for r in self.schema.relations:
            self._rows.setdefault(r.name, [])
        changed = True
        while changed:
            changed = False
            keysets = {}
            for r in self.schema.relations:
                if r.key is not None:
                    ki = r.attribute_names.index(r.key)
                    keysets[r.name] = {row[ki] for row in self._rows[r.name]}
            for e in self.schema.fk_edges:
                srel, sattr = split_qualified(e.source)
                trel, _ = split_qualified(e.target)
                si = self.schema.relation(srel).attribute_names.index(sattr)
                valid = keysets[trel]
                before = self._rows[srel]
                after = [row for row in before if row[si] in valid]
                if len(after) != len(before):
                    logger.warning(
                        "%s: %d row(s) rejected, %s does not resolve to %s",
                        srel, len(before) - len(after), e.source, e.target,
                    )
                    self._rows[srel] = after
                    changed = True
        for r in self.schema.relations:
            rows = self._rows[r.name]
            cols = {a: tuple(row[i] for row in rows) for i, a in enumerate(r.attribute_names)}
            self._tables[r.name] = Table(r.name, r.attribute_names, cols, r.key)
        self._rows = {}
        self.frozen = True
        return self

    def domain(self, qualified: str) -> dict:
        """Distinct values (categorical/text) or min/max (numeric) of an attribute."""
        rel, attr = split_qualified(qualified)
        kind = self.schema.attribute(qualified).kind
        vals = [v for v in self.table(rel).column(attr) if v is not None]
        if kind == NUMERIC:
            return {"min": min(vals) if vals else None, "max": max(vals) if vals else None}
        return {"values": sorted(set(vals), key=str)}


def load_store(schema: SchemaConfig, data_dir) -> RelStore:
    """Load ``<relation>.csv`` for every declared relation and freeze."""
    store = RelStore(schema)
    data_dir = FsPath(data_dir)
    for r in schema.relations:
        path = data_dir / f"{r.name}.csv"
        if not path.exists():
            raise LoadError(f"missing data file {path}")
        with open(path, encoding="utf-8", newline="") as fh:
            store.load_table(r.name, fh)
    return store.freeze()


def store_from_tables(schema: SchemaConfig, tables: dict[str, Iterable[dict]]) -> RelStore:
    """Build a frozen store from in-memory rows (dicts keyed by attribute)."""
    store = RelStore(schema)
    for r in schema.relations:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(r.attribute_names)
        for row in tables.get(r.name, ()):
            w.writerow(["" if row.get(a) is None else row.get(a) for a in r.attribute_names])
        buf.seek(0)
        store.load_table(r.name, buf)
    return store.freeze()


def write_store(store: RelStore, data_dir) -> None:
    os.makedirs(data_dir, exist_ok=True)
    for name, t in store.tables.items():
        with open(FsPath(data_dir) / f"{name}.csv", "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(t.attributes)
            for i in range(t.n_rows):
                w.writerow(["" if v is None else v for v in (t.columns[a][i] for a in t.attributes)])


# -- SPJ evaluation -----------------------------------------------------------

def _walk_back(source, root: str, path, weights: dict) -> dict:
    """Propagate per-row weights from the last relation of ``path`` back to
    root rows, summing over join partners (weights count join paths)."""
    rels = [root] + [s.target for s in path]
    for i in range(len(path), 0, -1):
        step = path[i - 1]
        lrel, lattr = split_qualified(step.left)
        rrel, rattr = split_qualified(step.right)
        if lrel != rels[i - 1] or rrel != rels[i]:
            raise QueryError(f"join step {step.left} = {step.right} does not continue the path")
        rcol = source.relation(rrel).column(rattr)
        agg: dict = defaultdict(int)
        for row, w in weights.items():
            v = rcol[row]
            if v is not None:
                agg[v] += w
        lidx = source.relation(lrel).index(lattr)
        nxt: dict = defaultdict(int)
        for v, w in agg.items():
            for row in lidx.get(v, ()):
                nxt[row] += w
        weights = nxt
    return weights


def _matching_rows(table: Table, preds) -> dict:
    cols = [(table.column(a), op, v) for a, op, v in preds]
    out = {}
    for i in range(table.n_rows):
        ok = True
        for col, op, v in cols:
            x = col[i]
            if x is None:
                ok = False
            elif op == "=":
                ok = x == v
            elif op == ">=":
                ok = x >= v
            elif op == "<=":
                ok = x <= v
            else:
                raise QueryError(f"unsupported operator {op!r}")
            if not ok:
                break
        if ok:
            out[i] = 1
    return out


class _Source:
    def __init__(self, store: RelStore, adb):
        self.store = store
        self.adb = adb

    def relation(self, name: str) -> Table:
        if name in self.store:
            return self.store.table(name)
        if self.adb is not None:
            return self.adb.relation(name)
        raise QueryError(f"unknown relation {name!r} (derived relations need the alpha-DB)")


def filter_root_rows(store: RelStore, root: str, f: Filter, adb=None, mode: str = "adb") -> set:
    """Row ids of ``root`` satisfying one filter."""
    src = _Source(store, adb)
    p = f.property
    if isinstance(p.value, (frozenset, set, list)):
        raise QueryError("disjunctive value sets are not supported")
    if f.kind == DERIVED and mode == "original":
        path = f.source_path
        if not path:
            raise QueryError(f"derived filter {f.describe()} has no source path")
        rel, attr = split_qualified(p.attribute)
        preds = [(attr, "=", p.value)]
        threshold = p.theta
    elif f.kind == DERIVED:
        if adb is None:
            raise QueryError("derived filters require the alpha-DB")
        spec = adb.derived_spec(f.derived)
        path = f.path
        rel = f.derived
        preds = [(spec.value_column, "=", p.value), ("count", ">=", p.theta)]
        threshold = 1
    else:
        path = f.path
        rel, attr = split_qualified(p.attribute)
        if f.kind == BASIC_NUMERIC:
            preds = [(attr, ">=", p.value.lo), (attr, "<=", p.value.hi)]
        else:
            preds = [(attr, "=", p.value)]
        threshold = 1
    last = path[-1].target if path else root
    if last != rel:
        raise QueryError(f"filter {f.describe()}: path ends at {last}, predicate is on {rel}")
    weights = _matching_rows(src.relation(rel), preds)
    weights = _walk_back(src, root, path, weights)
    return {row for row, w in weights.items() if w >= threshold}


def eval_query(store: RelStore, q: CandidateQuery, adb=None, mode: str = "adb") -> set:
    """Evaluate ``q`` and return the set of distinct projected 1-tuples.

    Join paths of the base query act as inner joins: a root row survives only
    if it has a partner along every path. ``mode="original"`` evaluates derived filters by grouping over the source
    fact tables (GROUP BY root key HAVING count(*) >= theta) instead of reading
    the materialized derived relation.
    """
    if mode not in ("adb", "original"):
        raise QueryError(f"unknown evaluation mode {mode!r}")
    root = store.table(q.root)
    _, pattr = split_qualified(q.projection)
    pcol = root.column(pattr)
    rows: Optional[set] = None
    src = _Source(store, adb)
    for path in q.base.paths:
        if not path:
            continue
        last = src.relation(path[-1].target)
        reach = _walk_back(src, q.root, path, dict.fromkeys(range(last.n_rows), 1))
        rows = set(reach) if rows is None else rows & set(reach)
    for f in q.filters:
        matched = filter_root_rows(store, q.root, f, adb, mode)
        rows = matched if rows is None else rows & matched
        if not rows:
            return set()
    if rows is None:
        rows = range(root.n_rows)
    return {(pcol[i],) for i in rows if pcol[i] is not None}
