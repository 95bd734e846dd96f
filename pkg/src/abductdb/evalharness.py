"""Benchmark runner: sample examples from a ground-truth query, abduce, and
score the abduced query's output against the truth."""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .abduction import AbductionParams
from .adb import AbductionReadyDB
from .pipeline import discover
from .qbuild import emit_sql
from .query import CandidateQuery, QueryError, query_from_doc, query_to_doc
from .relstore import RelStore, eval_query

logger = logging.getLogger(__name__)

ALL = "all"


class BenchmarkError(ValueError):
    """Malformed benchmark file or case."""


def metrics(predicted: set, truth: set) -> tuple[float, float, float]:
    """(precision, recall, f-score); precision is 0 for an empty prediction."""
    hit = len(predicted & truth)
    precision = hit / len(predicted) if predicted else 0.0
    recall = hit / len(truth) if truth else 0.0
    if precision + recall == 0:
        return precision, recall, 0.0
    return precision, recall, 2 * precision * recall / (precision + recall)


@dataclass(frozen=True)
class BenchmarkCase:
    case_id: str
    query: CandidateQuery
    sizes: tuple[Union[int, str], ...] = (5,)
    trials: int = 1
    seed: int = 0
    preset: Optional[str] = None

    def to_doc(self) -> dict:
        doc = {"id": self.case_id, "query": query_to_doc(self.query), "sizes": list(self.sizes), "trials": self.trials, "seed": self.seed}
        if self.preset:
            doc["preset"] = self.preset
        return doc


@dataclass(frozen=True)
class MetricsRow:
    case_id: str
    size: int
    trials: int
    precision: float
    recall: float
    f_score: float
    predicate_count: float
    wall_time: float
    containment_violations: int
    preset: str
    params: AbductionParams = field(compare=False)


def case_from_doc(doc: dict, index: int = 0) -> BenchmarkCase:
    try:
        sizes = doc.get("sizes", [5])
        if sizes == ALL:
            sizes = [ALL]
        sizes = tuple(s if s == ALL else int(s) for s in sizes)
        if any(s != ALL and s < 1 for s in sizes):
            raise BenchmarkError(f"case {index}: sample sizes must be >= 1")
        preset = doc.get("preset")
        if preset is not None:
            AbductionParams.preset(preset)
        return BenchmarkCase(
            str(doc.get("id", f"case{index}")),
            query_from_doc(doc["query"]),
            sizes,
            int(doc.get("trials", 1)),
            int(doc.get("seed", 0)),
            preset,
        )
    except (KeyError, TypeError, ValueError) as e:
        if isinstance(e, BenchmarkError):
            raise
        raise BenchmarkError(f"case {index}: {e}") from None


def load_benchmark(fh_or_text) -> list[BenchmarkCase]:
    text = fh_or_text if isinstance(fh_or_text, str) else fh_or_text.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise BenchmarkError(f"benchmark is not valid JSON: {e}") from None
    cases = doc.get("cases") if isinstance(doc, dict) else doc
    if not isinstance(cases, list):
        raise BenchmarkError("benchmark needs a list of cases")
    out = [case_from_doc(c, i) for i, c in enumerate(cases)]
    if len({c.case_id for c in out}) != len(out):
        raise BenchmarkError("duplicate case id")
    return out


def dump_benchmark(cases: Sequence[BenchmarkCase]) -> str:
    return json.dumps({"cases": [c.to_doc() for c in cases]}, indent=2) + "\n"


def sample_examples(truth: set, size: int, seed: int, case_id: str, trial: int) -> list:
    """Uniform sample without replacement; deterministic in all arguments."""
    pool = sorted(truth, key=lambda t: tuple(str(x) for x in t))
    key = [seed, size, trial] + [ord(c) for c in case_id]
    rng = np.random.default_rng(key)
    picks = rng.choice(len(pool), size=size, replace=False)
    return [pool[i] for i in sorted(picks)]


def run_case(case: BenchmarkCase, store: RelStore, adb: AbductionReadyDB, params: Optional[AbductionParams] = None, preset_name: Optional[str] = None) -> list[MetricsRow]:
    if params is None:
        preset_name = case.preset or "qbe"
        params = AbductionParams.preset(preset_name)
    label = preset_name or "custom"
    try:
        truth = eval_query(store, case.query, adb)
    except QueryError as e:
        raise BenchmarkError(f"case {case.case_id}: ground truth does not execute: {e}") from None
    if not truth:
        logger.warning("case %s: ground truth is empty, skipped", case.case_id)
        return []
    rows = []
    for size in case.sizes:
        n = len(truth) if size == ALL else size
        if n > len(truth):
            logger.warning("case %s: sample size %d exceeds %d truth tuples, skipped", case.case_id, n, len(truth))
            continue
        prec, rec, fs, preds, times = [], [], [], [], []
        violations = 0
        for t in range(case.trials):
            sample = sorted(truth) if size == ALL else sample_examples(truth, n, case.seed, case.case_id, t)
            raw = [str(x[0]) for x in sample]
            start = time.perf_counter()
            found = discover(raw, store, adb, params)
            times.append(time.perf_counter() - start)
            predicted = eval_query(store, found.query, adb)
            if not set(sample) <= predicted:
                violations += 1
                logger.error("case %s size %d trial %d: abduced query misses examples", case.case_id, n, t)
            p, r, f = metrics(predicted, truth)
            prec.append(p)
            rec.append(r)
            fs.append(f)
            preds.append(emit_sql(found.query, "adb").predicate_count)
        rows.append(
            MetricsRow(
                case.case_id, n, case.trials,
                float(np.mean(prec)), float(np.mean(rec)), float(np.mean(fs)),
                float(np.mean(preds)), float(np.mean(times)), violations, label, params,
            )
        )
    return rows


def run_benchmark(cases: Sequence[BenchmarkCase], store: RelStore, adb: AbductionReadyDB, params: Optional[AbductionParams] = None, preset_name: Optional[str] = None) -> list[MetricsRow]:
    """Rows in case order, one per (case, sample size). Explicit ``params``
    override each case's own preset."""
    rows = []
    for case in cases:
        rows.extend(run_case(case, store, adb, params, preset_name))
    return rows


REPORT_COLUMNS = [
    "case_id", "size", "trials", "precision", "recall", "f_score", "predicate_count",
    "containment_violations", "preset", "rho", "gamma", "eta", "tau_a", "tau_s", "outlier_k",
]


def write_report(rows: Sequence[MetricsRow], fh, timings: bool = False) -> None:
    """CSV report. Wall times are left out unless ``timings`` is set, so that
    reruns with fixed seeds produce identical files."""
    cols = REPORT_COLUMNS + (["wall_time"] if timings else [])
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        p = r.params
        rec = [
            r.case_id, r.size, r.trials, f"{r.precision:.6f}", f"{r.recall:.6f}", f"{r.f_score:.6f}",
            f"{r.predicate_count:.3f}", r.containment_violations, r.preset,
            p.rho, p.gamma, p.eta, p.tau_a, p.tau_s, p.outlier_k,
        ]
        if timings:
            rec.append(f"{r.wall_time:.6f}")
        w.writerow(rec)
