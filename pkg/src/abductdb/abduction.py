"""Filter priors, selectivities, and the per-filter abduction rule.

For a fixed base query the posterior of a candidate filter set factorizes
over the minimal valid filters, each contributing either

    include = prior(f) * 1                      (filter in the query)
    exclude = (1 - prior(f)) * psi(f) ** |E|    (filter left out)

so the maximum-posterior set keeps exactly the filters whose include term
beats their exclude term. ``brute_force_abduce`` enumerates all subsets and
is used to check that claim.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Iterable, Optional, Sequence

import numpy as np

from .adb import SelectivityStats
from .query import BASIC_NUMERIC, DERIVED, BaseQuery, Filter

LOG_FLOOR = -700.0
BRUTE_FORCE_LIMIT = 20


@dataclass(frozen=True)
class AbductionParams:
    rho: float = 0.1          # base filter prior
    gamma: float = 2.0        # domain-coverage penalty exponent
    eta: float = 0.2          # coverage allowed before the penalty starts
    tau_a: int = 5            # minimum association strength
    tau_s: float = 2.0        # skewness threshold; -inf disables the outlier test
    outlier_k: float = 2.0    # outlier if value - mean > k * std
    normalize_strength: bool = False

    def __post_init__(self):
        if not 0 < self.rho < 1:
            raise ValueError(f"rho must be in (0, 1), got {self.rho}")
        if self.gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if self.eta <= 0:
            raise ValueError(f"eta must be > 0, got {self.eta}")
        if self.tau_a < 1 or int(self.tau_a) != self.tau_a:
            raise ValueError(f"tau_a must be a positive integer, got {self.tau_a}")
        if self.outlier_k < 2:
            raise ValueError(f"outlier_k must be >= 2, got {self.outlier_k}")

    @classmethod
    def preset(cls, name: str) -> "AbductionParams":
        if name == "qbe":
            return cls()
        if name == "qre":
            # closed world: every shared property is intended
            return cls(rho=0.9, gamma=0.0, tau_a=1, tau_s=-math.inf)
        raise ValueError(f"unknown preset {name!r} (expected 'qbe' or 'qre')")

    def updated(self, **overrides) -> "AbductionParams":
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})

    def to_doc(self) -> dict:
        d = asdict(self)
        if math.isinf(d["tau_s"]):
            d["tau_s"] = "-inf" if d["tau_s"] < 0 else "inf"
        return d

    @classmethod
    def from_doc(cls, doc: dict) -> "AbductionParams":
        doc = dict(doc)
        preset = doc.pop("preset", "qbe")
        base = cls.preset(preset)
        if isinstance(doc.get("tau_s"), str):
            doc["tau_s"] = float(doc["tau_s"])
        unknown = set(doc) - set(asdict(base))
        if unknown:
            raise ValueError(f"unknown parameter(s): {sorted(unknown)}")
        return replace(base, **doc)


# -- selectivity and prior factors --------------------------------------------------

def selectivity(f: Filter, stats: SelectivityStats) -> float:
    """Fraction of the root relation's entities that satisfy ``f``."""
    pid = f.property_id
    base = stats.base_cardinality(pid)
    p = f.property
    if f.kind == DERIVED:
        n = stats.derived_count(pid, p.value, p.theta)
    elif f.kind == BASIC_NUMERIC:
        n = stats.numeric_count(pid, p.value.lo, p.value.hi)
    else:
        n = stats.categorical_count(pid, p.value)
    return n / base if base else 0.0


def domain_coverage(f: Filter, stats: SelectivityStats) -> float:
    if f.kind == BASIC_NUMERIC:
        lo, hi = stats.numeric_domain(f.property_id)
        if hi == lo:
            return 0.0
        return (f.property.value.hi - f.property.value.lo) / (hi - lo)
    return 1.0 / stats.domain_size(f.property_id)


def coverage_penalty(coverage: float, eta: float, gamma: float) -> float:
    return 1.0 / max(1.0, coverage / eta) ** gamma


def domain_impact(f: Filter, params: AbductionParams, stats: SelectivityStats) -> float:
    return coverage_penalty(domain_coverage(f, stats), params.eta, params.gamma)


def association_strength_impact(f: Filter, params: AbductionParams) -> int:
    if f.kind != DERIVED:
        return 1
    return 0 if f.property.theta < params.tau_a else 1


def skewness(values: Sequence[float]) -> Optional[float]:
    """Adjusted sample skewness; ``None`` when fewer than three values."""
    a = np.asarray(values, dtype=float)
    n = a.size
    if n < 3:
        return None
    d = a - a.mean()
    s = math.sqrt(float(np.sum(d * d)) / (n - 1))
    if s == 0.0:
        return 0.0
    return n * float(np.sum(d**3)) / (s**3 * (n - 1) * (n - 2))


def is_outlier(x: float, values: Sequence[float], k: float) -> bool:
    """Mean/standard-deviation rule; every value is an outlier below n = 3."""
    a = np.asarray(values, dtype=float)
    if a.size < 3:
        return True
    return (x - a.mean()) > k * a.std(ddof=1)


def outlier_impact(f: Filter, family_strengths: Optional[Sequence[int]], params: AbductionParams) -> int:
    if f.kind != DERIVED or math.isinf(params.tau_s) and params.tau_s < 0:
        return 1
    strengths = list(family_strengths) if family_strengths else [f.property.theta]
    if len(strengths) < 3:
        return 1
    skew = skewness(strengths)
    return int(skew > params.tau_s and is_outlier(f.property.theta, strengths, params.outlier_k))


def filter_prior(rho: float, delta: float, alpha: float, lam: float) -> float:
    return min(1.0, max(0.0, rho * delta * alpha * lam))


# -- decisions and scores ----------------------------------------------------------------

def _log(x: float) -> float:
    if x <= 0.0:
        return -math.inf
    return max(math.log(x), LOG_FLOOR)


def log_terms(prior: float, psi: float, n_examples: int) -> tuple[float, float]:
    """(log include, log exclude) with a floor on each non-zero factor."""
    inc = _log(prior)
    if psi <= 0.0:
        lpsi = -math.inf
    else:
        lpsi = max(n_examples * math.log(psi), LOG_FLOOR)
    exc = _log(1.0 - prior) + lpsi
    return inc, exc


def include_filter(prior: float, psi: float, n_examples: int) -> bool:
    inc, exc = log_terms(prior, psi, n_examples)
    return inc > exc


def select(priors: Sequence[float], psis: Sequence[float], n_examples: int) -> tuple[bool, ...]:
    """Per-filter inclusion decisions; ties exclude."""
    return tuple(include_filter(p, s, n_examples) for p, s in zip(priors, psis))


def posterior_log_score(selected: Sequence[bool], priors, psis, n_examples: int) -> float:
    terms = []
    for keep, p, s in zip(selected, priors, psis):
        inc, exc = log_terms(p, s, n_examples)
        terms.append(inc if keep else exc)
    if any(t == -math.inf for t in terms):
        return -math.inf
    return math.fsum(terms)


def brute_force_abduce(priors: Sequence[float], psis: Sequence[float], n_examples: int) -> tuple[bool, ...]:
    """Exhaustive argmax over all subsets; near-equal scores resolve to the
    fewest filters, then to the lowest subset index."""
    m = len(priors)
    if m > BRUTE_FORCE_LIMIT:
        raise ValueError(f"brute force limited to {BRUTE_FORCE_LIMIT} filters, got {m}")
    if m == 0:
        return ()
    inc, exc = zip(*(log_terms(p, s, n_examples) for p, s in zip(priors, psis)))
    masks = ((np.arange(2**m)[:, None] >> np.arange(m)) & 1).astype(bool)
    with np.errstate(invalid="ignore"):
        scores = np.where(masks, np.array(inc), np.array(exc)).sum(axis=1)
    best = scores.max()
    tol = 1e-9 * max(1.0, abs(best))
    tied = np.flatnonzero(scores >= best - tol)
    sizes = masks[tied].sum(axis=1)
    pick = tied[np.flatnonzero(sizes == sizes.min())[0]]
    return tuple(bool(b) for b in masks[pick])


# -- the full abduction step ------------------------------------------------------------

@dataclass(frozen=True)
class FilterLedgerEntry:
    filter: Filter
    psi: float
    delta: float
    alpha: int
    lam: int
    prior: float
    include: float
    exclude: float
    log_include: float
    log_exclude: float
    decision: bool

    def row(self) -> dict:
        return {
            "filter": self.filter.describe(),
            "kind": self.filter.kind,
            "psi": self.psi,
            "delta": self.delta,
            "alpha": self.alpha,
            "lambda": self.lam,
            "prior": self.prior,
            "include": self.include,
            "exclude": self.exclude,
            "decision": "include" if self.decision else "exclude",
        }


@dataclass(frozen=True)
class AbductionResult:
    base: BaseQuery
    chosen: tuple[Filter, ...]
    ledger: tuple[FilterLedgerEntry, ...]
    log_score: float          # log of the posterior up to the constant K / psi(all filters)
    n_examples: int

    @property
    def score(self) -> float:
        return math.exp(self.log_score)

    @property
    def ranking_log_score(self) -> float:
        """Log posterior divided by the product of all selectivities, used to
        compare different base queries (assumes filter independence)."""
        return self.log_score - math.fsum(_log(e.psi) for e in self.ledger)


def ledger_entry(f: Filter, n_examples: int, params: AbductionParams, stats: SelectivityStats, family_strengths=None) -> FilterLedgerEntry:
    psi = selectivity(f, stats)
    delta = domain_impact(f, params, stats)
    alpha = association_strength_impact(f, params)
    lam = outlier_impact(f, family_strengths, params)
    prior = filter_prior(params.rho, delta, alpha, lam)
    inc, exc = log_terms(prior, psi, n_examples)
    return FilterLedgerEntry(
        f, psi, delta, alpha, lam, prior,
        include=prior,
        exclude=(1.0 - prior) * psi**n_examples,
        log_include=inc,
        log_exclude=exc,
        decision=inc > exc,
    )


def _family_strengths(filters: Iterable[Filter]) -> dict:
    fam: dict = {}
    for f in filters:
        if f.kind == DERIVED:
            fam.setdefault(f.property_id, []).append(f.property.theta)
    return fam


def abduce(base: BaseQuery, filters: Sequence[Filter], n_examples: int, params: AbductionParams, stats: SelectivityStats) -> AbductionResult:
    """Keep each minimal valid filter whose inclusion raises the posterior."""
    if n_examples < 1:
        raise ValueError("need at least one example")
    if params.normalize_strength:
        raise NotImplementedError("normalized association strength is not implemented")
    fam = _family_strengths(filters)
    ledger = tuple(ledger_entry(f, n_examples, params, stats, fam.get(f.property_id)) for f in filters)
    chosen = tuple(e.filter for e in ledger if e.decision)
    log_score = posterior_log_score([e.decision for e in ledger], [e.prior for e in ledger], [e.psi for e in ledger], n_examples)
    return AbductionResult(base, chosen, ledger, log_score, n_examples)


def posterior_score(selection: Iterable[Filter], filters: Sequence[Filter], n_examples: int, params: AbductionParams, stats: SelectivityStats) -> float:
    """Unnormalized posterior of keeping ``selection`` out of ``filters``."""
    chosen = set(selection)
    if not chosen <= set(filters):
        raise ValueError("selection must be a subset of the filter set")
    fam = _family_strengths(filters)
    entries = [ledger_entry(f, n_examples, params, stats, fam.get(f.property_id)) for f in filters]
    return math.exp(posterior_log_score([e.filter in chosen for e in entries], [e.prior for e in entries], [e.psi for e in entries], n_examples))


def write_ledger_csv(ledger: Sequence[FilterLedgerEntry], fh) -> None:
    fields = ["filter", "kind", "psi", "delta", "alpha", "lambda", "prior", "include", "exclude", "decision"]
    w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
    w.writeheader()
    for e in ledger:
        w.writerow(e.row())
