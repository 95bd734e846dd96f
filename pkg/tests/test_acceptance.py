"""Acceptance suite: one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -v``; verdict lines are printed even
without ``-s``.
"""

import itertools
import math
import time

import numpy as np
import pytest
from scipy import stats as sps

from abductdb.abduction import (
    AbductionParams,
    filter_prior,
    include_filter,
    is_outlier,
    posterior_log_score,
    posterior_score,
    select,
    selectivity,
    skewness,
)
from abductdb.evalharness import run_benchmark, run_case, sample_examples
from abductdb.pipeline import discover
from abductdb.qbuild import assemble_query, emit_sql
from abductdb.query import BASIC_CATEGORICAL, BASIC_NUMERIC, DERIVED, Filter, NumericRange, SemanticProperty
from abductdb.relstore import eval_query
from abductdb.synth import random_query, synthetic_benchmark
from conftest import run_sql, sqlite_db


@pytest.fixture
def verdict(capsys):
    def report(number, title, ok, detail=""):
        with capsys.disabled():
            print(f"\n[criterion {number:2d}] {'PASS' if ok else 'FAIL'}  {title}  {detail}".rstrip())
        assert ok, f"criterion {number} failed: {detail}"

    return report


def test_criterion_01_academics_interest_query(academics, verdict):
    store, adb = academics
    start = time.perf_counter()
    found = discover(["Dan Suciu", "Sam Madden"], store, adb, AbductionParams(rho=0.5, gamma=0))
    output = eval_query(store, found.query, adb)
    elapsed = time.perf_counter() - start
    has_interest = any(
        f.property.attribute == "research.interest" and f.property.value == "data management" for f in found.query.filters
    )
    ids = {store.table("academics").row(r)["id"] for r in range(store.table("academics").n_rows)
           if (store.table("academics").row(r)["name"],) in output}
    ok = has_interest and output == {("Dan Suciu",), ("Sam Madden",), ("Joseph Hellerstein",)} and ids == {101, 103, 105} and elapsed < 1
    verdict(1, "academics example reproduces interest query", ok, f"output={sorted(o[0] for o in output)} time={elapsed:.3f}s")


def test_criterion_02_equal_priors_ordering(academics, verdict):
    store, adb = academics
    start = time.perf_counter()
    p = AbductionParams(rho=0.5, gamma=0)
    found = discover(["Dan Suciu", "Sam Madden"], store, adb, p)
    (interest,) = [e.filter for e in found.result.ledger]
    with_filter = posterior_score([interest], [interest], 2, p, adb.stats)
    without = posterior_score([], [interest], 2, p, adb.stats)
    elapsed = time.perf_counter() - start
    verdict(2, "posterior with interest filter beats posterior without", with_filter > without and elapsed < 1,
            f"with={with_filter:.4f} without={without:.4f} time={elapsed:.3f}s")


def _oracle_best(priors, psis, n):
    """Every subset scored independently; returns (best score, smallest optimal size)."""
    scored = []
    for mask in itertools.product((False, True), repeat=len(priors)):
        s = 0.0
        for chosen, prior, psi in zip(mask, priors, psis):
            if chosen:
                s += math.log(prior) if prior > 0 else -math.inf
            else:
                s += math.log1p(-prior) + max(n * math.log(psi), -700.0)
        scored.append((s, sum(mask)))
    best = max(s for s, _ in scored)
    tol = 1e-9 * max(1.0, abs(best))
    return best, min(size for s, size in scored if s >= best - tol)


def test_criterion_03_selection_matches_brute_force(verdict):
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    failures, instances = 0, 1000
    for _ in range(instances):
        m = int(rng.integers(0, 13))
        rho = rng.uniform(0.01, 0.99)
        priors = [filter_prior(rho, d, a, l) for d, a, l in zip(rng.uniform(0.01, 1, m), rng.random(m) < 0.85, rng.random(m) < 0.85)]
        psis = list(1.0 - rng.uniform(0, 1, m))
        n = int(rng.integers(1, 21))
        chosen = select(priors, psis, n)
        score = posterior_log_score(chosen, priors, psis, n)
        best, best_size = _oracle_best(priors, psis, n)
        tol = 1e-9 * max(1.0, abs(best))
        if not (abs(score - best) <= tol and sum(chosen) == best_size):
            failures += 1
    elapsed = time.perf_counter() - start
    verdict(3, "per-filter selection attains brute-force optimum", failures == 0 and elapsed < 60,
            f"{instances - failures}/{instances} instances time={elapsed:.1f}s")


def test_criterion_04_selectivity(persons, synthetic, verdict):
    _, padb = persons
    male = Filter(SemanticProperty("person.gender", "Male"), BASIC_CATEGORICAL, (), "person:person.gender")
    age = Filter(SemanticProperty("person.age", NumericRange(50, 90)), BASIC_NUMERIC, (), "person:person.age")
    fixed_ok = selectivity(male, padb.stats) == 0.5 and selectivity(age, padb.stats) == 5 / 6

    store, adb = synthetic
    rng = np.random.default_rng(4)
    mismatches = 0
    pids = sorted(adb.stats.numeric)
    for i in range(500):
        pid = pids[i % len(pids)]
        entity = adb.stats.entity_of[pid]
        attr = pid.split(":", 1)[1]
        column = store.table(entity).column(attr.split(".", 1)[1])
        observed, _ = adb.stats.numeric[pid]
        lo, hi = sorted(int(x) for x in rng.integers(observed[0] - 3, observed[-1] + 4, 2))
        f = Filter(SemanticProperty(attr, NumericRange(lo, hi)), BASIC_NUMERIC, (), pid)
        direct = sum(1 for v in column if v is not None and lo <= v <= hi) / store.table(entity).n_rows
        mismatches += selectivity(f, adb.stats) != direct
    verdict(4, "selectivities exact on persons fixture and 500 random ranges", fixed_ok and mismatches == 0,
            f"fixed={'ok' if fixed_ok else 'wrong'} range mismatches={mismatches}")


def test_criterion_05_qre_round_trip(synthetic, verdict):
    store, adb = synthetic
    fact_rows = store.table("castinfo").n_rows + store.table("movietogenre").n_rows
    cases = synthetic_benchmark(store, adb, 50, sizes=("all",), seed=55, preset="qre")
    perfect, slowest = 0, 0.0
    for case in cases:
        nb = sum(f.kind != DERIVED for f in case.query.filters)
        nd = sum(f.kind == DERIVED for f in case.query.filters)
        assert 1 <= nb <= 3 and nd <= 1
        (row,) = run_case(case, store, adb)
        perfect += row.f_score == 1.0
        slowest = max(slowest, row.wall_time)
    ok = perfect >= 45 and slowest < 5
    verdict(5, "full-output examples recover instance-equivalent queries", ok,
            f"f=1 on {perfect}/50 slowest={slowest:.3f}s fact_rows={fact_rows}")


def test_criterion_06_containment(synthetic, verdict):
    store, adb = synthetic
    rows = run_benchmark(synthetic_benchmark(store, adb, 25, sizes=(1, 3, 10), trials=3, seed=66, min_truth=10), store, adb)
    rows += run_benchmark(synthetic_benchmark(store, adb, 25, sizes=("all",), seed=67, preset="qre"), store, adb)
    runs = sum(r.trials for r in rows)
    violations = sum(r.containment_violations for r in rows)
    verdict(6, "abduced output contains the examples", violations == 0, f"{runs} abductions, {violations} violations")


def test_criterion_07_monotonicity(verdict):
    rng = np.random.default_rng(7)
    rho_bad = count_bad = 0
    for _ in range(10_000):
        psi = 1.0 - rng.uniform()
        factor = rng.uniform()
        n = int(rng.integers(1, 50))
        lo, hi = sorted(rng.uniform(0.001, 0.999, 2))
        if include_filter(filter_prior(lo, factor, 1, 1), psi, n) and not include_filter(filter_prior(hi, factor, 1, 1), psi, n):
            rho_bad += 1
        prior = filter_prior(rng.uniform(0.001, 0.999), factor, 1, 1)
        if include_filter(prior, psi, n) and not include_filter(prior, psi, n + int(rng.integers(1, 10))):
            count_bad += 1
    verdict(7, "inclusion monotone in prior weight and example count", rho_bad == count_bad == 0,
            f"violations rho={rho_bad} examples={count_bad} over 10000 instances each")


def test_criterion_08_adb_and_original_forms_agree(synthetic, verdict):
    store, adb = synthetic
    con = sqlite_db(store, adb)
    rng = np.random.default_rng(8)
    mismatches = 0
    for _ in range(100):
        q = random_query(store, adb, rng, max_derived=2, min_derived=1)
        q = assemble_query(q.base, list(q.filters))
        adb_form = eval_query(store, q, adb, "adb")
        original = eval_query(store, q, adb, "original")
        sql_adb = run_sql(con, emit_sql(q, "adb").sql_text)
        sql_original = run_sql(con, emit_sql(q, "original", store.schema).sql_text)
        mismatches += not (adb_form == original == sql_adb == sql_original)
    verdict(8, "derived-relation and group-by forms give identical results", mismatches == 0,
            f"100 queries, {mismatches} mismatches")


def _reference_skew(a):
    n = len(a)
    mean = sum(a) / n
    s = math.sqrt(sum((x - mean) ** 2 for x in a) / (n - 1))
    return n / ((n - 1) * (n - 2)) * sum(((x - mean) / s) ** 3 for x in a)


def test_criterion_09_skewness_and_outliers(verdict):
    rng = np.random.default_rng(9)
    problems = []
    for _ in range(200):
        half = list(rng.integers(0, 100, int(rng.integers(1, 10))))
        centre = int(rng.integers(-50, 50))
        sym = [centre + d for d in half] + [centre - d for d in half] + ([centre] if rng.random() < 0.5 else [])
        if len(sym) >= 3 and abs(skewness(sym)) > 1e-9:
            problems.append(("symmetric", sym))
    for small in ([], [5], [1, 9], [3, 3]):
        if skewness(small) is not None or not all(is_outlier(x, small, 2.0) for x in small):
            problems.append(("small", small))
    for _ in range(500):
        a = list(rng.integers(1, 1000, int(rng.integers(3, 60))))
        if len(set(a)) == 1:
            continue
        got = skewness(a)
        if abs(got - _reference_skew(a)) > 1e-9 or abs(got - sps.skew(a, bias=False)) > 1e-9:
            problems.append(("random", a))
        mean, sd = np.mean(a), np.std(a, ddof=1)
        for x in a[:5]:
            if is_outlier(x, a, 2.0) != bool(x - mean > 2.0 * sd):
                problems.append(("outlier", a))
    verdict(9, "skewness and outlier rules match reference", not problems, f"{len(problems)} problems")


def test_criterion_10_scaling(synthetic, verdict):
    store, adb = synthetic
    (case,) = synthetic_benchmark(store, adb, 1, sizes=(100,), seed=10, min_truth=150)
    truth = eval_query(store, case.query, adb)
    sizes = [5, 10, 20, 40, 60, 80, 100]
    start = time.perf_counter()
    times = []
    for n in sizes:
        best = math.inf
        for trial in range(5):
            raw = [str(t[0]) for t in sample_examples(truth, n, 0, case.case_id, trial)]
            t0 = time.perf_counter()
            discover(raw, store, adb)
            best = min(best, time.perf_counter() - t0)
        times.append(best)
    total = time.perf_counter() - start
    slope = float(np.polyfit(np.log(sizes), np.log(times), 1)[0])
    verdict(10, "abduction time grows at most linearly in example count", slope <= 1.5 and total < 120,
            f"log-log slope={slope:.2f} times={[round(t * 1000, 1) for t in times]}ms total={total:.1f}s")
