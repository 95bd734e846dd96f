import csv
import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sps

from abductdb.abduction import (
    AbductionParams,
    abduce,
    association_strength_impact,
    brute_force_abduce,
    coverage_penalty,
    domain_impact,
    filter_prior,
    include_filter,
    is_outlier,
    outlier_impact,
    posterior_log_score,
    posterior_score,
    select,
    selectivity,
    skewness,
    write_ledger_csv,
)
from abductdb.query import BASIC_CATEGORICAL, BASIC_NUMERIC, DERIVED, BaseQuery, Filter, JoinStep, NumericRange, SemanticProperty


def derived(theta, value="Comedy"):
    return Filter(SemanticProperty("genre.name", value, theta), DERIVED, (), "person:persontogenre", "persontogenre")


AGE = Filter(SemanticProperty("person.age", NumericRange(50, 90)), BASIC_NUMERIC, (), "person:person.age")


class TestParams:
    def test_defaults(self):
        p = AbductionParams()
        assert (p.rho, p.gamma, p.eta, p.tau_a, p.tau_s, p.outlier_k) == (0.1, 2.0, 0.2, 5, 2.0, 2.0)

    def test_qre_preset(self):
        p = AbductionParams.preset("qre")
        assert (p.rho, p.gamma, p.tau_a) == (0.9, 0.0, 1) and p.tau_s == -math.inf

    @pytest.mark.parametrize("kw", [{"rho": 0}, {"rho": 1}, {"gamma": -1}, {"eta": 0}, {"tau_a": 0}, {"outlier_k": 1.5}])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            AbductionParams(**kw)

    def test_doc_round_trip(self):
        p = AbductionParams.preset("qre")
        assert AbductionParams.from_doc(p.to_doc()) == p


class TestFactors:
    def test_persons_fixture_selectivities(self, persons):
        _, adb = persons
        male = Filter(SemanticProperty("person.gender", "Male"), BASIC_CATEGORICAL, (), "person:person.gender")
        assert selectivity(male, adb.stats) == 0.5
        assert selectivity(AGE, adb.stats) == 5 / 6

    def test_unknown_value(self, persons):
        bad = Filter(SemanticProperty("person.gender", "Other"), BASIC_CATEGORICAL, (), "person:person.gender")
        with pytest.raises(ValueError):
            selectivity(bad, persons[1].stats)

    def test_gamma_zero_never_penalizes(self):
        assert coverage_penalty(1.0, 0.2, 0.0) == 1.0

    def test_coverage_penalty_formula(self):
        assert coverage_penalty(0.5, 0.2, 2) == pytest.approx(0.16)
        assert coverage_penalty(0.2, 0.2, 2) == 1.0
        assert coverage_penalty(0.05, 0.2, 2) == 1.0

    def test_numeric_coverage(self, persons):
        # [50, 90] covers 40/61 of the age domain [29, 90]
        d = domain_impact(AGE, AbductionParams(), persons[1].stats)
        assert d == pytest.approx(1 / ((40 / 61) / 0.2) ** 2)

    def test_degenerate_domain_has_zero_coverage(self):
        from abductdb.adb import build_adb
        from abductdb.datasets import PERSONS_SCHEMA
        from abductdb.relstore import schema_from_doc, store_from_tables

        rows = [{"id": i, "name": str(i), "gender": "F", "age": 40} for i in range(3)]
        stats = build_adb(store_from_tables(schema_from_doc(PERSONS_SCHEMA), {"person": rows})).stats
        f = Filter(SemanticProperty("person.age", NumericRange(40, 40)), BASIC_NUMERIC, (), "person:person.age")
        assert domain_impact(f, AbductionParams(), stats) == 1.0

    def test_alpha(self):
        p = AbductionParams()
        assert association_strength_impact(derived(1), p) == 0
        assert association_strength_impact(derived(40), p) == 1
        assert association_strength_impact(AGE, p) == 1

    def test_prior(self):
        assert filter_prior(0.1, 1, 1, 1) == 0.1
        assert filter_prior(0.1, 0.16, 1, 1) == pytest.approx(0.016)
        assert filter_prior(0.1, 1, 0, 1) == 0.0


def reference_skewness(a):
    """Adjusted Fisher-Pearson coefficient, written out term by term."""
    n = len(a)
    mean = sum(a) / n
    s = math.sqrt(sum((x - mean) ** 2 for x in a) / (n - 1))
    return n / ((n - 1) * (n - 2)) * sum(((x - mean) / s) ** 3 for x in a)


class TestSkewness:
    def test_symmetric(self):
        assert abs(skewness([1, 2, 3])) < 1e-9
        assert abs(skewness([5, -5, 0, 10, -10])) < 1e-9

    def test_undefined_below_three(self):
        assert skewness([4, 9]) is None
        assert skewness([]) is None

    def test_zero_spread(self):
        assert skewness([7, 7, 7, 7]) == 0.0

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.integers(1, 500), min_size=3, max_size=40).filter(lambda a: len(set(a)) > 1))
    def test_matches_references(self, a):
        assert skewness(a) == pytest.approx(reference_skewness(a), abs=1e-9)
        assert skewness(a) == pytest.approx(sps.skew(a, bias=False), abs=1e-9)

    def test_all_outliers_below_three(self):
        assert is_outlier(1, [1, 100], 2) and is_outlier(100, [1, 100], 2)


class TestOutlierImpact:
    def test_basic_filter(self):
        assert outlier_impact(AGE, None, AbductionParams()) == 1

    def test_flat_family(self):
        fam = [10] * 5
        assert all(outlier_impact(derived(10), fam, AbductionParams()) == 0 for _ in fam)

    def test_skewed_family(self):
        fam = [100] + [1] * 9
        a = np.array(fam, float)
        assert sps.skew(a, bias=False) > 2
        assert (100 - a.mean()) > 2 * a.std(ddof=1)
        assert outlier_impact(derived(100), fam, AbductionParams()) == 1
        assert outlier_impact(derived(1), fam, AbductionParams()) == 0

    def test_small_family_keeps_everything(self):
        assert outlier_impact(derived(3), [3, 1], AbductionParams()) == 1

    def test_disabled_by_qre_preset(self):
        assert outlier_impact(derived(10), [10] * 5, AbductionParams.preset("qre")) == 1


class TestDecision:
    @pytest.mark.parametrize(
        "prior,psi,n,expect",
        [(0.5, 0.5, 2, True), (0.1, 0.5, 2, False), (0.1, 0.5, 10, True), (0.5, 1.0, 3, False), (0.0, 0.01, 5, False)],
    )
    def test_include_rule(self, prior, psi, n, expect):
        assert include_filter(prior, psi, n) is expect

    def test_empty_filter_set(self, persons):
        r = abduce(BaseQuery("person", "person.name"), [], 2, AbductionParams(), persons[1].stats)
        assert r.chosen == () and r.ledger == ()

    def test_ledger_and_csv(self, academics):
        from abductdb.pipeline import discover

        store, adb = academics
        r = discover(["Dan Suciu", "Sam Madden"], store, adb).result
        (e,) = r.ledger
        assert (e.psi, e.prior, e.include, e.decision) == (0.5, 0.1, 0.1, False)
        assert e.exclude == pytest.approx(0.225)
        buf = io.StringIO()
        write_ledger_csv(r.ledger, buf)
        rows = list(csv.DictReader(io.StringIO(buf.getvalue())))
        assert rows[0]["decision"] == "exclude" and rows[0]["filter"].startswith("<research.interest")

    def test_equal_priors_prefer_interest_filter(self, academics):
        from abductdb.pipeline import discover

        store, adb = academics
        p = AbductionParams(rho=0.5, gamma=0)
        found = discover(["Dan Suciu", "Sam Madden"], store, adb, p)
        (f,) = [e.filter for e in found.result.ledger]
        with_f = posterior_score([f], [f], 2, p, adb.stats)
        without = posterior_score([], [f], 2, p, adb.stats)
        assert with_f > without

    def test_all_zero_priors(self):
        priors = [0.0] * 4
        psis = [0.3, 0.5, 0.9, 1.0]
        for mask in range(16):
            sel = [(mask >> i) & 1 == 1 for i in range(4)]
            score = math.exp(posterior_log_score(sel, priors, psis, 3))
            assert (score > 0) == (mask == 0)

    def test_large_example_sets_do_not_underflow(self):
        lo = posterior_log_score([False], [0.1], [0.5], 5000)
        assert math.isfinite(lo)


def random_instance(rng, m):
    rho = rng.uniform(0.01, 0.99)
    delta = rng.uniform(0.01, 1.0, m)
    alpha = rng.random(m) < 0.8
    lam = rng.random(m) < 0.8
    priors = [filter_prior(rho, d, a, l) for d, a, l in zip(delta, alpha, lam)]
    psis = list(1.0 - rng.uniform(0.0, 1.0, m))  # (0, 1]
    return priors, psis, int(rng.integers(1, 21))


class TestBruteForce:
    def test_matches_per_filter_rule(self):
        rng = np.random.default_rng(0)
        for _ in range(300):
            m = int(rng.integers(0, 13))
            priors, psis, n = random_instance(rng, m)
            assert select(priors, psis, n) == brute_force_abduce(priors, psis, n)

    def test_single_filter(self):
        assert brute_force_abduce([0.5], [0.5], 2) == (True,)
        assert brute_force_abduce([0.1], [0.5], 2) == (False,)

    def test_ties_drop_filters(self):
        # include == exclude exactly: 0.5 vs 0.5 * 1^n
        assert brute_force_abduce([0.5, 0.5], [1.0, 1.0], 4) == (False, False)

    def test_psi_one_never_included_at_low_prior(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            m = int(rng.integers(1, 8))
            priors = list(rng.uniform(0, 0.5, m))
            assert brute_force_abduce(priors, [1.0] * m, int(rng.integers(1, 20))) == (False,) * m

    def test_limit(self):
        with pytest.raises(ValueError):
            brute_force_abduce([0.1] * 21, [0.5] * 21, 2)


class TestMonotonicity:
    def test_rho(self):
        rng = np.random.default_rng(5)
        for _ in range(2000):
            psi = 1.0 - rng.uniform()
            factor = rng.uniform()
            n = int(rng.integers(1, 30))
            r1, r2 = sorted(rng.uniform(0.001, 0.999, 2))
            if include_filter(filter_prior(r1, factor, 1, 1), psi, n):
                assert include_filter(filter_prior(r2, factor, 1, 1), psi, n)

    def test_example_count(self):
        rng = np.random.default_rng(6)
        for _ in range(2000):
            prior, psi = rng.uniform(), 1.0 - rng.uniform()
            n = int(rng.integers(1, 40))
            if include_filter(prior, psi, n):
                assert include_filter(prior, psi, n + 1)
