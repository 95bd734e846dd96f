"""Offline construction of the abduction-ready database (alpha-DB).

The alpha-DB holds three things next to the original store:

* derived relations ``(entity, value, count)`` that aggregate a categorical
  property of associated entities over one or two fact tables,
* a global inverted index over every text-valued column,
* selectivity statistics: per-value entity counts, prefix counts for numeric
  attributes, and per-(value, strength) counts for derived properties.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import os
from bisect import bisect_left, bisect_right
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path as FsPath
from typing import Optional, Union

from .query import JoinStep, Path, QueryError, split_qualified
from .relstore import (
    CATEGORICAL,
    DECIMAL,
    INTEGER,
    NUMERIC,
    STRING,
    RelStore,
    SchemaConfig,
    Table,
    schema_from_doc,
)

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
MAX_COUNT = 2**31 - 1
DEFAULT_DEPTH = 2


class AdbFormatError(ValueError):
    """A persisted alpha-DB is missing, truncated, or from a newer version."""


# -- property catalog ---------------------------------------------------------

@dataclass(frozen=True)
class BasicPropertySpec:
    entity: str
    attribute: str
    kind: str  # relstore.CATEGORICAL or relstore.NUMERIC
    path: Path = ()
    multi_valued: bool = False

    @property
    def id(self) -> str:
        hops = "".join(f"{s.right}/" for s in self.path)
        return f"{self.entity}:{hops}{self.attribute}"


@dataclass(frozen=True)
class DerivedRelationSpec:
    name: str
    entity: str
    entity_key: str
    attribute: str
    facts: tuple[str, ...]
    source_path: Path
    entity_column: str
    value_column: str
    # single fact table into a non-entity relation: strength 1 is already
    # expressed by a multi-valued basic property
    shadowed: bool = False

    @property
    def id(self) -> str:
        return f"{self.entity}:{self.name}"

    @property
    def path(self) -> Path:
        return (JoinStep(f"{self.entity}.{self.entity_key}", f"{self.name}.{self.entity_column}"),)


def discover_basic_properties(schema: SchemaConfig) -> list[BasicPropertySpec]:
    """Properties reachable from each entity relation without aggregation."""
    out: list[BasicPropertySpec] = []
    entities = set(schema.entity_relations)
    facts = set(schema.fact_tables)

    def add(entity, attr, path, multi):
        kind = schema.attribute(attr).kind
        if multi and kind == NUMERIC:
            return
        out.append(BasicPropertySpec(entity, attr, kind, tuple(path), multi))

    for e in schema.entity_relations:
        key = schema.relation(e).key
        for attr in schema.property_attributes_of(e):
            add(e, attr, (), False)
        # many-to-one: e.fk -> t.key
        for edge in schema.fks_from(e):
            t = split_qualified(edge.target)[0]
            if t == e or t in facts:
                continue
            for attr in schema.property_attributes_of(t):
                add(e, attr, [JoinStep(edge.source, edge.target)], False)
        # one-to-many: r.fk -> e.key, r is not an entity
        for edge in schema.fks_into(e):
            r = split_qualified(edge.source)[0]
            if r == e or r in entities:
                continue
            for attr in schema.property_attributes_of(r):
                add(e, attr, [JoinStep(f"{e}.{key}", edge.source)], True)
            if r in facts:
                for other in schema.fks_from(r):
                    if other.source == edge.source:
                        continue
                    t = split_qualified(other.target)[0]
                    if t == e or t in entities or t in facts:
                        continue
                    for attr in schema.property_attributes_of(t):
                        add(e, attr, [JoinStep(f"{e}.{key}", edge.source), JoinStep(other.source, other.target)], True)
    return out


def discover_derived_relations(schema: SchemaConfig, depth: int = DEFAULT_DEPTH) -> list[DerivedRelationSpec]:
    """Enumerate entity -> fact (-> fact) -> categorical property paths."""
    if depth < 1:
        return []
    entities = set(schema.entity_relations)
    facts = set(schema.fact_tables)
    raw = []  # (entity, key, attribute, facts, source_path)

    def categorical_props(rel):
        return [a for a in schema.property_attributes_of(rel) if schema.attribute(a).kind == CATEGORICAL]

    for e in schema.entity_relations:
        key = schema.relation(e).key
        for f1 in schema.fact_tables:
            for a in schema.fks_from(f1):
                if a.target != f"{e}.{key}":
                    continue
                for b in schema.fks_from(f1):
                    if b.source == a.source:
                        continue
                    t1 = split_qualified(b.target)[0]
                    if t1 == e or t1 in facts:
                        continue
                    hop1 = (JoinStep(f"{e}.{key}", a.source),)
                    for attr in categorical_props(t1):
                        raw.append((e, key, attr, (f1,), hop1 + (JoinStep(b.source, b.target),)))
                    if depth < 2:
                        continue
                    for f2 in schema.fact_tables:
                        if f2 == f1:
                            continue
                        for c in schema.fks_from(f2):
                            if c.target != b.target:
                                continue
                            for d in schema.fks_from(f2):
                                if d.source == c.source:
                                    continue
                                t2 = split_qualified(d.target)[0]
                                if t2 in (e, t1) or t2 in facts:
                                    continue
                                path = hop1 + (JoinStep(b.source, c.source), JoinStep(d.source, d.target))
                                for attr in categorical_props(t2):
                                    raw.append((e, key, attr, (f1, f2), path))

    def base_name(item):
        return f"{item[0]}to{split_qualified(item[2])[0]}"

    by_base = Counter(base_name(r) for r in raw)
    by_attr = Counter((base_name(r), r[2]) for r in raw)
    taken = set(r.name for r in schema.relations)
    specs = []
    for e, key, attr, fs, path in raw:
        name = base_name((e, key, attr))
        if by_base[name] > 1:
            name = f"{name}_{split_qualified(attr)[1]}"
            if by_attr[(base_name((e, key, attr)), attr)] > 1:
                name = f"{name}_via_{'_'.join(fs)}"
        if name in taken:
            name = f"{e}_to_{name[len(e) + 2:]}"
        while name in taken:
            name += "_d"
        taken.add(name)
        trel, tattr = split_qualified(attr)
        specs.append(
            DerivedRelationSpec(
                name=name,
                entity=e,
                entity_key=key,
                attribute=attr,
                facts=fs,
                source_path=path,
                entity_column=f"{e}_{key}",
                value_column=f"{trel}_{tattr}",
                shadowed=len(fs) == 1 and trel not in entities,
            )
        )
    specs.sort(key=lambda s: (s.entity, len(s.facts), s.name))
    return specs


# -- derived relations ------------------------------------------------------------

@dataclass(frozen=True)
class DerivedRelation:
    name: str
    entity_column: str
    value_column: str
    rows: tuple[tuple, ...]  # (entity_id, value, count), sorted

    def as_table(self) -> Table:
        cols = {
            self.entity_column: tuple(r[0] for r in self.rows),
            self.value_column: tuple(r[1] for r in self.rows),
            "count": tuple(r[2] for r in self.rows),
        }
        return Table(self.name, (self.entity_column, self.value_column, "count"), cols)


def _sort_key(v):
    return (type(v).__name__, v)


def materialize_derived(spec: DerivedRelationSpec, store: RelStore) -> DerivedRelation:
    """Group-by count of association paths per (entity, property value)."""
    counts: dict = defaultdict(int)
    steps = spec.source_path
    f1 = store.table(spec.facts[0])
    a_col = f1.column(split_qualified(steps[0].right)[1])
    b_col = f1.column(split_qualified(steps[1].left)[1])
    trel, tattr = split_qualified(spec.attribute)
    target = store.table(trel)
    tkey = target.index(target.key)
    tval = target.column(tattr)

    if len(spec.facts) == 1:
        for ent, t in zip(a_col, b_col):
            for r in tkey.get(t, ()):
                v = tval[r]
                if v is not None:
                    counts[(ent, v)] += 1
    else:
        f2 = store.table(spec.facts[1])
        c_idx = f2.index(split_qualified(steps[1].right)[1])
        d_col = f2.column(split_qualified(steps[2].left)[1])
        for ent, t in zip(a_col, b_col):
            for r2 in c_idx.get(t, ()):
                for r in tkey.get(d_col[r2], ()):
                    v = tval[r]
                    if v is not None:
                        counts[(ent, v)] += 1
    rows = []
    for (ent, v), c in counts.items():
        if c > MAX_COUNT:
            raise OverflowError(f"{spec.name}: association count {c} for ({ent!r}, {v!r}) exceeds 2^31-1")
        rows.append((ent, v, c))
    rows.sort(key=lambda r: (_sort_key(r[0]), _sort_key(r[1])))
    return DerivedRelation(spec.name, spec.entity_column, spec.value_column, tuple(rows))


# -- inverted column index ------------------------------------------------------

def normalize(text: str) -> str:
    return text.strip().casefold()


@dataclass(frozen=True)
class InvertedColumnIndex:
    postings: dict  # normalized text -> tuple of (relation, attribute, row_id)

    def lookup(self, text: str) -> tuple:
        return self.postings.get(normalize(text), ())

    def __eq__(self, other):
        return isinstance(other, InvertedColumnIndex) and self.postings == other.postings


def build_inverted_index(store: RelStore) -> InvertedColumnIndex:
    """Index every text-typed cell (text and categorical attributes)."""
    postings: dict = defaultdict(list)
    for rel in store.schema.relations:
        table = store.table(rel.name)
        for a in rel.attributes:
            if a.type != STRING or a.is_key_like:
                continue
            for i, v in enumerate(table.column(a.name)):
                if v is not None:
                    postings[normalize(v)].append((rel.name, a.name, i))
    return InvertedColumnIndex({k: tuple(v) for k, v in sorted(postings.items())})


# -- property values and statistics ---------------------------------------------

def basic_property_values(store: RelStore, prop: BasicPropertySpec) -> dict:
    """Entity key -> tuple of distinct property values (entities without a
    value are absent)."""
    root = store.table(prop.entity)
    keys = root.key_values()
    rel, attr = split_qualified(prop.attribute)
    # frontier: root row -> rows of the current relation
    frontier = {i: (i,) for i in range(root.n_rows)}
    current = prop.entity
    for step in prop.path:
        lrel, lattr = split_qualified(step.left)
        rrel, rattr = split_qualified(step.right)
        if lrel != current:
            raise QueryError(f"path of {prop.id} is not connected at {step.left}")
        lcol = store.table(lrel).column(lattr)
        ridx = store.table(rrel).index(rattr)
        nxt = {}
        for root_row, rows in frontier.items():
            hit = [r for x in rows for r in ridx.get(lcol[x], ())]
            if hit:
                nxt[root_row] = hit
        frontier = nxt
        current = rrel
    col = store.table(rel).column(attr)
    out = {}
    for root_row, rows in frontier.items():
        vals = {col[r] for r in rows if col[r] is not None}
        if vals:
            out[keys[root_row]] = tuple(sorted(vals, key=_sort_key))
    return out


def derived_property_values(rel: DerivedRelation) -> dict:
    """Entity key -> {value: count}."""
    out: dict = defaultdict(dict)
    for ent, v, c in rel.rows:
        out[ent][v] = c
    return dict(out)


@dataclass(frozen=True)
class SelectivityStats:
    base: dict            # entity relation -> number of entities
    categorical: dict     # property id -> tuple of (value, entity count)
    numeric: dict         # property id -> (sorted values, prefix counts of entities <= value)
    derived: dict         # property id -> tuple of (value, thetas ascending, counts of entities >= theta)
    entity_of: dict       # property id -> entity relation

    def base_cardinality(self, pid: str) -> int:
        return self.base[self.entity_of[pid]]

    def _cat(self, pid):
        try:
            return dict(self.categorical[pid])
        except KeyError:
            raise QueryError(f"no categorical statistics for {pid!r}") from None

    def categorical_count(self, pid: str, value) -> int:
        table = self._cat(pid)
        if value not in table:
            raise QueryError(f"value {value!r} not observed for {pid!r}")
        return table[value]

    def domain_size(self, pid: str) -> int:
        if pid in self.categorical:
            return len(self.categorical[pid])
        if pid in self.derived:
            return len(self.derived[pid])
        raise QueryError(f"no categorical domain for {pid!r}")

    def numeric_domain(self, pid: str) -> tuple:
        try:
            values, _ = self.numeric[pid]
        except KeyError:
            raise QueryError(f"no numeric statistics for {pid!r}") from None
        return values[0], values[-1]

    def prefix_count(self, pid: str, v) -> int:
        """Entities with value <= v."""
        values, prefix = self.numeric[pid]
        i = bisect_right(values, v)
        return prefix[i - 1] if i else 0

    def numeric_count(self, pid: str, lo, hi) -> int:
        """Entities with lo <= value <= hi, by prefix subtraction."""
        if pid not in self.numeric:
            raise QueryError(f"no numeric statistics for {pid!r}")
        values, prefix = self.numeric[pid]
        below = bisect_left(values, lo)
        return self.prefix_count(pid, hi) - (prefix[below - 1] if below else 0)

    def derived_count(self, pid: str, value, theta: int) -> int:
        """Entities associated with ``value`` at least ``theta`` times."""
        try:
            table = {v: (t, c) for v, t, c in self.derived[pid]}
        except KeyError:
            raise QueryError(f"no derived statistics for {pid!r}") from None
        if value not in table:
            raise QueryError(f"value {value!r} not observed for {pid!r}")
        thetas, counts = table[value]
        i = bisect_left(thetas, theta)
        return counts[i] if i < len(counts) else 0


def compute_selectivity_stats(store: RelStore, basic: list, derived_specs: list, derived: dict) -> SelectivityStats:
    base = {e: store.table(e).n_rows for e in store.schema.entity_relations}
    categorical, numeric, dstats, entity_of = {}, {}, {}, {}
    for prop in basic:
        entity_of[prop.id] = prop.entity
        values = basic_property_values(store, prop)
        if prop.kind == NUMERIC:
            dist = Counter(v[0] for v in values.values())
            xs = tuple(sorted(dist))
            running, prefix = 0, []
            for x in xs:
                running += dist[x]
                prefix.append(running)
            if xs:
                numeric[prop.id] = (xs, tuple(prefix))
        else:
            dist = Counter(v for vs in values.values() for v in vs)
            categorical[prop.id] = tuple(sorted(dist.items(), key=lambda kv: _sort_key(kv[0])))
    for spec in derived_specs:
        entity_of[spec.id] = spec.entity
        per_value: dict = defaultdict(list)
        for _, v, c in derived[spec.name].rows:
            per_value[v].append(c)
        rows = []
        for v in sorted(per_value, key=_sort_key):
            cs = sorted(per_value[v])
            thetas = tuple(sorted(set(cs)))
            n = len(cs)
            ge = tuple(n - bisect_left(cs, t) for t in thetas)
            rows.append((v, thetas, ge))
        dstats[spec.id] = tuple(rows)
    return SelectivityStats(base, categorical, numeric, dstats, entity_of)


# -- the bundle ------------------------------------------------------------------

@dataclass
class AbductionReadyDB:
    schema: SchemaConfig
    basic: tuple
    derived_specs: tuple
    derived: dict
    index: InvertedColumnIndex
    stats: SelectivityStats
    source_checksum: str = ""
    depth: int = DEFAULT_DEPTH
    _values: dict = field(default_factory=dict, compare=False, repr=False)
    _tables: dict = field(default_factory=dict, compare=False, repr=False)

    def relation(self, name: str) -> Table:
        t = self._tables.get(name)
        if t is None:
            try:
                t = self.derived[name].as_table()
            except KeyError:
                raise QueryError(f"unknown relation {name!r}") from None
            self._tables[name] = t
        return t

    def derived_spec(self, name: str) -> DerivedRelationSpec:
        for s in self.derived_specs:
            if s.name == name:
                return s
        raise QueryError(f"unknown derived relation {name!r}")

    def property(self, pid: str):
        for p in self.basic:
            if p.id == pid:
                return p
        for s in self.derived_specs:
            if s.id == pid:
                return s
        raise QueryError(f"unknown property {pid!r}")

    def basic_properties_of(self, entity: str) -> list:
        return [p for p in self.basic if p.entity == entity]

    def derived_specs_of(self, entity: str) -> list:
        return [s for s in self.derived_specs if s.entity == entity]

    def values(self, store: RelStore, pid: str) -> dict:
        """Cached entity -> values map for one property."""
        out = self._values.get(pid)
        if out is None:
            prop = self.property(pid)
            if isinstance(prop, DerivedRelationSpec):
                out = derived_property_values(self.derived[prop.name])
            else:
                out = basic_property_values(store, prop)
            self._values[pid] = out
        return out


def store_checksum(store: RelStore) -> str:
    h = hashlib.sha256()
    h.update(json.dumps(store.schema.to_doc(), sort_keys=True).encode())
    for name in sorted(store.tables):
        t = store.table(name)
        h.update(f"\n#{name}\n".encode())
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        for i in range(t.n_rows):
            w.writerow([t.columns[a][i] for a in t.attributes])
        h.update(buf.getvalue().encode())
    return h.hexdigest()


def build_adb(store: RelStore, depth: int = DEFAULT_DEPTH) -> AbductionReadyDB:
    if not store.frozen:
        raise ValueError("store must be frozen before building the alpha-DB")
    schema = store.schema
    basic = tuple(discover_basic_properties(schema))
    specs = tuple(discover_derived_relations(schema, depth))
    derived = {s.name: materialize_derived(s, store) for s in specs}
    index = build_inverted_index(store)
    stats = compute_selectivity_stats(store, list(basic), list(specs), derived)
    return AbductionReadyDB(schema, basic, specs, derived, index, stats, store_checksum(store), depth)


# -- persistence ---------------------------------------------------------------------

def _jsonable(x):
    if isinstance(x, tuple):
        return [_jsonable(v) for v in x]
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    return x


def _tuplify(x):
    if isinstance(x, list):
        return tuple(_tuplify(v) for v in x)
    return x


def persist_adb(adb: AbductionReadyDB, directory) -> None:
    d = FsPath(directory)
    (d / "derived").mkdir(parents=True, exist_ok=True)
    for name, rel in adb.derived.items():
        with open(d / "derived" / f"{name}.csv", "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([rel.entity_column, rel.value_column, "count"])
            w.writerows(rel.rows)
    s = adb.stats
    stats_doc = {
        "base": s.base,
        "categorical": _jsonable(s.categorical),
        "numeric": _jsonable(s.numeric),
        "derived": _jsonable(s.derived),
        "entity_of": s.entity_of,
    }
    with open(d / "stats.json", "w", encoding="utf-8") as fh:
        json.dump(stats_doc, fh, sort_keys=True)
    with open(d / "index.json", "w", encoding="utf-8") as fh:
        json.dump(_jsonable(adb.index.postings), fh, sort_keys=True)
    manifest = {
        "format_version": FORMAT_VERSION,
        "source_checksum": adb.source_checksum,
        "depth": adb.depth,
        "schema": adb.schema.to_doc(),
        "derived": {name: len(rel.rows) for name, rel in adb.derived.items()},
    }
    with open(d / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)


def _read_json(path: FsPath):
    if not path.exists():
        raise AdbFormatError(f"alpha-DB component missing: {path}")
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as e:
        raise AdbFormatError(f"alpha-DB component truncated or corrupt: {path} ({e})") from None


def _caster(typ):
    if typ == INTEGER:
        return int
    if typ == DECIMAL:
        return float
    return str


def load_adb(directory) -> AbductionReadyDB:
    d = FsPath(directory)
    manifest = _read_json(d / "manifest.json")
    version = manifest.get("format_version")
    if not isinstance(version, int) or version > FORMAT_VERSION:
        raise AdbFormatError(f"alpha-DB format version {version!r} is not supported (max {FORMAT_VERSION})")
    schema = schema_from_doc(manifest["schema"])
    depth = manifest.get("depth", DEFAULT_DEPTH)
    basic = tuple(discover_basic_properties(schema))
    specs = tuple(discover_derived_relations(schema, depth))
    expected = manifest.get("derived", {})
    if set(expected) != {s.name for s in specs}:
        raise AdbFormatError(f"{d / 'manifest.json'}: derived relation list does not match the schema")
    derived = {}
    for spec in specs:
        path = d / "derived" / f"{spec.name}.csv"
        if not path.exists():
            raise AdbFormatError(f"alpha-DB component missing: {path}")
        ecast = _caster(schema.attribute(f"{spec.entity}.{spec.entity_key}").type)
        vcast = _caster(schema.attribute(spec.attribute).type)
        rows = []
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != [spec.entity_column, spec.value_column, "count"]:
                raise AdbFormatError(f"alpha-DB component corrupt: {path} (bad header)")
            try:
                for rec in reader:
                    rows.append((ecast(rec[0]), vcast(rec[1]), int(rec[2])))
            except (ValueError, IndexError):
                raise AdbFormatError(f"alpha-DB component truncated or corrupt: {path}") from None
        if len(rows) != expected[spec.name]:
            raise AdbFormatError(f"alpha-DB component truncated: {path} has {len(rows)} rows, expected {expected[spec.name]}")
        derived[spec.name] = DerivedRelation(spec.name, spec.entity_column, spec.value_column, tuple(rows))
    sd = _read_json(d / "stats.json")
    try:
        stats = SelectivityStats(
            sd["base"],
            {k: _tuplify(v) for k, v in sd["categorical"].items()},
            {k: _tuplify(v) for k, v in sd["numeric"].items()},
            {k: _tuplify(v) for k, v in sd["derived"].items()},
            sd["entity_of"],
        )
    except KeyError as e:
        raise AdbFormatError(f"alpha-DB component corrupt: {d / 'stats.json'} lacks {e}") from None
    postings = _read_json(d / "index.json")
    index = InvertedColumnIndex({k: tuple(tuple(p) for p in v) for k, v in postings.items()})
    return AbductionReadyDB(schema, basic, specs, derived, index, stats, manifest.get("source_checksum", ""), depth)
