"""Survival and classification statistics.

Kaplan-Meier, a scalar Cox model fitted by Newton-Raphson (Efron or
Breslow ties), Harrell's concordance, rank-based ROC AUC, confusion metrics
and the two-sided Wilcoxon signed-rank test with an exact null for small n.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import ndtr
from scipy.stats import rankdata

from . import kernels
from .errors import DataError

Z95 = 1.959963984540054


# --------------------------------------------------------------------------
# Kaplan-Meier
# --------------------------------------------------------------------------

@dataclass
class SurvivalCurve:
    times: np.ndarray
    at_risk: np.ndarray
    deaths: np.ndarray
    survival: np.ndarray

    def at(self, t: float) -> float:
        """Survival probability just after time ``t`` (right-continuous)."""
        idx = np.searchsorted(self.times, t, side="right") - 1
        return 1.0 if idx < 0 else float(self.survival[idx])


def _survival_inputs(times, events):
    times = np.asarray(times, dtype=np.float64)
    events = np.asarray(events).astype(bool)
    if times.ndim != 1 or times.shape != events.shape:
        raise DataError("times and events must be 1-d arrays of equal length")
    if times.size == 0:
        raise DataError("empty survival data")
    if not np.all(np.isfinite(times)) or np.any(times <= 0):
        raise DataError("survival times must be finite and positive")
    return times, events


def kaplan_meier(times, events) -> SurvivalCurve:
    times, events = _survival_inputs(times, events)
    uniq, inverse = np.unique(times, return_inverse=True)
    deaths = np.bincount(inverse, weights=events, minlength=uniq.size).astype(np.int64)
    leaving = np.bincount(inverse, minlength=uniq.size)
    at_risk = times.size - np.concatenate([[0], np.cumsum(leaving)[:-1]])
    # (n - d) / n is exact for small counts, e.g. 2/3 rather than 1 - 1/3
    factors = (at_risk - deaths) / at_risk
    return SurvivalCurve(uniq, at_risk.astype(np.int64), deaths, np.cumprod(factors))


# --------------------------------------------------------------------------
# Cox proportional hazards, single covariate
# --------------------------------------------------------------------------

@dataclass
class CoxFit:
    beta: float
    std_err: float
    hazard_ratio: float
    ci95: tuple
    ties: str
    iterations: int
    converged: bool
    loglik: float = float("nan")
    diagnostic: str = ""

    @property
    def wald_z(self) -> float:
        return self.beta / self.std_err if self.std_err > 0 else float("nan")

    def to_dict(self) -> dict:
        return {
            "beta": self.beta,
            "se": self.std_err,
            "hr": self.hazard_ratio,
            "ci95": list(self.ci95),
            "ties": self.ties,
            "iterations": self.iterations,
            "converged": self.converged,
            "loglik": self.loglik,
            "diagnostic": self.diagnostic,
        }


class _RiskSets:
    """Event-time groups with reverse-cumulative risk-set indexing."""

    def __init__(self, x, times, events):
        order = np.argsort(-times, kind="stable")
        self.x = x[order]
        self.t = times[order]
        self.e = events[order]
        # for each distinct event time: slice end in the descending order
        # (everybody before it is still at risk) and the tied deaths
        ev_times = np.unique(self.t[self.e])[::-1]
        self.ends = np.searchsorted(-self.t, -ev_times, side="right")
        self.death_idx = [np.flatnonzero((self.t == t) & self.e) for t in ev_times]

    def evaluate(self, beta: float, ties: str):
        x = self.x
        w = np.exp(beta * x)
        c0 = np.cumsum(w)
        c1 = np.cumsum(w * x)
        c2 = np.cumsum(w * x * x)
        ll = score = info = 0.0
        for end, didx in zip(self.ends, self.death_idx):
            s0, s1, s2 = c0[end - 1], c1[end - 1], c2[end - 1]
            m = didx.size
            xd = x[didx]
            wd = w[didx]
            ll += beta * xd.sum()
            score += xd.sum()
            if ties == "efron" and m > 1:
                d0, d1, d2 = wd.sum(), (wd * xd).sum(), (wd * xd * xd).sum()
                for j in range(m):
                    f = j / m
                    p0 = s0 - f * d0
                    p1 = s1 - f * d1
                    p2 = s2 - f * d2
                    ll -= math.log(p0)
                    score -= p1 / p0
                    info += p2 / p0 - (p1 / p0) ** 2
            else:
                ll -= m * math.log(s0)
                score -= m * s1 / s0
                info += m * (s2 / s0 - (s1 / s0) ** 2)
        return ll, score, info


def cox_partial_loglik(beta: float, scores, times, events, ties: str = "efron") -> float:
    x = np.asarray(scores, dtype=np.float64)
    times, events = _survival_inputs(times, events)
    return _RiskSets(x - x.mean(), times, events).evaluate(beta, ties)[0]


def cox_fit(scores, times, events, ties: str = "efron", tol: float = 1e-8, max_iter: int = 100) -> CoxFit:
    """Maximise the scalar Cox partial likelihood by damped Newton-Raphson.

    Non-convergence (including monotone likelihood, where the estimate runs
    off to infinity) is reported through ``converged=False`` and
    ``diagnostic`` rather than raised.
    """
    if ties not in ("efron", "breslow"):
        raise DataError(f"unknown ties method {ties!r}")
    x = np.asarray(scores, dtype=np.float64)
    times, events = _survival_inputs(times, events)
    if x.shape != times.shape:
        raise DataError("scores and times differ in length")
    if not np.all(np.isfinite(x)):
        raise DataError("non-finite risk scores")
    n_events = int(events.sum())
    nan_fit = dict(std_err=float("nan"), hazard_ratio=float("nan"), ci95=(float("nan"), float("nan")),
                   ties=ties, iterations=0, converged=False)
    if n_events < 2:
        return CoxFit(beta=float("nan"), diagnostic=f"need >= 2 events, have {n_events}", **nan_fit)
    spread = float(x.max() - x.min())
    if spread == 0.0:
        # no information: the likelihood is flat and beta = 0 by convention
        return CoxFit(0.0, float("inf"), 1.0, (0.0, float("inf")), ties, 0, False,
                      diagnostic="zero score variance")
    rs = _RiskSets(x - x.mean(), times, events)
    beta = 0.0
    ll, score, info = rs.evaluate(beta, ties)
    converged = False
    diagnostic = ""
    it = 0
    limit = 50.0 / spread
    for it in range(1, max_iter + 1):
        if info <= 0:
            diagnostic = "non-positive information"
            break
        step = score / info
        new = beta + step
        new_ll, new_score, new_info = rs.evaluate(new, ties)
        halvings = 0
        while (not math.isfinite(new_ll) or new_ll < ll - 1e-12) and halvings < 30:
            step *= 0.5
            new = beta + step
            new_ll, new_score, new_info = rs.evaluate(new, ties)
            halvings += 1
        beta, ll, score, info = new, new_ll, new_score, new_info
        if abs(step) < tol:
            converged = True
            break
        if abs(beta) > limit:
            diagnostic = "monotone likelihood: estimate diverging (perfect separation)"
            break
    if not converged and not diagnostic:
        diagnostic = f"no convergence in {max_iter} iterations"
    se = 1.0 / math.sqrt(info) if info > 0 else float("inf")
    hr = math.exp(beta) if beta < 700 else float("inf")
    lo = math.exp(beta - Z95 * se) if math.isfinite(se) else 0.0
    hi = math.exp(min(beta + Z95 * se, 700.0)) if math.isfinite(se) else float("inf")
    return CoxFit(beta, se, hr, (lo, hi), ties, it, converged, ll, diagnostic)


@dataclass
class DichotomizedCox:
    fit: CoxFit
    cut: float
    high: np.ndarray
    km_low: SurvivalCurve
    km_high: SurvivalCurve


def dichotomized_cox(probabilities, times, events, cut: Optional[float] = None,
                     ties: str = "efron") -> DichotomizedCox:
    """Cox fit on the binary high-risk indicator ``prob > cut`` (median by default)."""
    p = np.asarray(probabilities, dtype=np.float64)
    times, events = _survival_inputs(times, events)
    if cut is None:
        cut = float(np.median(p))
    high = p > cut
    n_high = int(high.sum())
    if n_high < 2 or p.size - n_high < 2:
        raise DataError(f"degenerate risk cut at {cut}: {n_high} high vs {p.size - n_high} low")
    fit = cox_fit(high.astype(np.float64), times, events, ties=ties)
    return DichotomizedCox(fit, cut, high, kaplan_meier(times[~high], events[~high]),
                           kaplan_meier(times[high], events[high]))


# --------------------------------------------------------------------------
# discrimination
# --------------------------------------------------------------------------

def concordance_index(scores, times, events) -> float:
    """Harrell's C: higher score should mean earlier death.

    Pair (i, j) is comparable when i died and ``t_i < t_j``; tied scores
    count one half.
    """
    s = np.asarray(scores, dtype=np.float64)
    times, events = _survival_inputs(times, events)
    if s.shape != times.shape:
        raise DataError("scores and times differ in length")
    num, den = kernels.concordance_counts(s, times, events)
    if den == 0:
        raise DataError("no comparable pairs")
    return num / den


def _binary_labels(labels):
    y = np.asarray(labels)
    if y.ndim != 1:
        raise DataError("labels must be 1-d")
    if not np.all((y == 0) | (y == 1)):
        raise DataError("labels must be 0/1")
    return y.astype(bool)


def roc_auc(probabilities, labels) -> float:
    """Mann-Whitney estimate ``P(s+ > s-) + P(s+ = s-)/2`` from midranks."""
    s = np.asarray(probabilities, dtype=np.float64)
    y = _binary_labels(labels)
    if s.shape != y.shape:
        raise DataError("scores and labels differ in length")
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DataError("roc_auc needs both classes")
    ranks = rankdata(s)
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


@dataclass
class BinaryMetrics:
    auc: float
    accuracy: float
    sensitivity: float
    specificity: float
    threshold: float
    tp: int = 0
    fn: int = 0
    tn: int = 0
    fp: int = 0


def _pct(num, den):
    return 100.0 * num / den if den else float("nan")


def confusion_metrics(probabilities, labels, threshold: float = 0.5) -> BinaryMetrics:
    """Sensitivity/specificity/accuracy in percent; positive = died within five years."""
    if not 0.0 <= threshold <= 1.0:
        raise DataError(f"threshold {threshold} outside [0, 1]")
    s = np.asarray(probabilities, dtype=np.float64)
    y = _binary_labels(labels)
    pred = s >= threshold
    tp = int((pred & y).sum())
    fn = int((~pred & y).sum())
    tn = int((~pred & ~y).sum())
    fp = int((pred & ~y).sum())
    try:
        auc = roc_auc(s, y.astype(int))
    except DataError:
        auc = float("nan")
    return BinaryMetrics(auc, _pct(tp + tn, y.size), _pct(tp, tp + fn), _pct(tn, tn + fp), threshold,
                         tp, fn, tn, fp)


def select_threshold(probabilities, labels) -> float:
    """Threshold maximising Youden's J (sensitivity + specificity - 1)."""
    s = np.asarray(probabilities, dtype=np.float64)
    y = _binary_labels(labels)
    best, best_j = 0.5, -np.inf
    for t in np.unique(s):
        m = confusion_metrics(s, y.astype(int), float(t))
        j = m.sensitivity + m.specificity
        if j > best_j:
            best, best_j = float(t), j
    return best


# --------------------------------------------------------------------------
# Wilcoxon signed-rank
# --------------------------------------------------------------------------

@dataclass
class WilcoxonResult:
    statistic: float
    p_value: float
    n: int
    method: str
    details: dict = field(default_factory=dict)


def _signed_rank_null(doubled_ranks) -> np.ndarray:
    """Exact null pmf of twice W+ given (integer) doubled ranks."""
    total = int(sum(doubled_ranks))
    pmf = np.zeros(total + 1)
    pmf[0] = 1.0
    for r in doubled_ranks:
        r = int(r)
        shifted = np.zeros_like(pmf)
        shifted[r:] = pmf[:-r] if r else pmf
        pmf = 0.5 * (pmf + shifted)
    return pmf


def wilcoxon_signed_rank(a, b, exact_max_n: int = 20) -> WilcoxonResult:
    """Two-sided paired test of ``a - b``; zero differences are dropped.

    Exact for ``n <= exact_max_n`` (ties handled through midranks, which the
    recursion carries as doubled integers); normal approximation with
    continuity and tie corrections otherwise.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise DataError("wilcoxon: paired samples must be 1-d and of equal length")
    d = a - b
    d = d[d != 0]
    if d.size == 0:
        raise DataError("wilcoxon: all paired differences are zero")
    if d.size < 5:
        raise DataError(f"wilcoxon: need >= 5 non-zero differences, have {d.size}")
    n = d.size
    ranks = rankdata(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    if n <= exact_max_n:
        doubled = np.rint(2 * ranks).astype(np.int64)
        pmf = _signed_rank_null(doubled)
        w2 = int(round(2 * w_plus))
        lower = pmf[: w2 + 1].sum()
        upper = pmf[w2:].sum()
        p = min(1.0, 2.0 * min(lower, upper))
        return WilcoxonResult(w_plus, float(p), n, "exact")
    mean = n * (n + 1) / 4.0
    _, counts = np.unique(np.abs(d), return_counts=True)
    var = n * (n + 1) * (2 * n + 1) / 24.0 - (counts ** 3 - counts).sum() / 48.0
    dev = abs(w_plus - mean) - 0.5
    z = max(dev, 0.0) / math.sqrt(var)
    p = min(1.0, 2.0 * float(ndtr(-z)))
    return WilcoxonResult(w_plus, p, n, "normal", {"z": z})
