import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from prism_mil.cohortgen import CohortConfig, generate_clinical
from prism_mil.errors import DataError
from prism_mil.survstats import (
    confusion_metrics,
    concordance_index,
    cox_fit,
    cox_partial_loglik,
    dichotomized_cox,
    kaplan_meier,
    roc_auc,
    select_threshold,
    wilcoxon_signed_rank,
)

# ---------------------------------------------------------------- oracles

def partial_loglik_by_hand(beta, x, t, d):
    """Breslow partial likelihood written out subject by subject (no ties)."""
    ll = 0.0
    for i in range(len(t)):
        if not d[i]:
            continue
        risk = sum(math.exp(beta * x[j]) for j in range(len(t)) if t[j] >= t[i])
        ll += beta * x[i] - math.log(risk)
    return ll


def grid_argmax(f, lo, hi, tol=1e-7):
    xs = np.linspace(lo, hi, 2001)
    vals = [f(v) for v in xs]
    k = int(np.argmax(vals))
    a, b = xs[max(k - 1, 0)], xs[min(k + 1, len(xs) - 1)]
    phi = (math.sqrt(5) - 1) / 2
    while b - a > tol:
        c, e = b - phi * (b - a), a + phi * (b - a)
        if f(c) > f(e):
            b = e
        else:
            a = c
    return 0.5 * (a + b)


def brute_cindex(s, t, e):
    num = den = 0.0
    for i in range(len(s)):
        for j in range(len(s)):
            if e[i] and t[i] < t[j]:
                den += 1
                num += 1.0 if s[i] > s[j] else 0.5 if s[i] == s[j] else 0.0
    return num / den


def brute_auc(s, y):
    pos = [a for a, b in zip(s, y) if b == 1]
    neg = [a for a, b in zip(s, y) if b == 0]
    hits = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return hits / (len(pos) * len(neg))


def enumerate_wilcoxon(a, b):
    d = np.asarray(a, float) - np.asarray(b, float)
    d = d[d != 0]
    absd = np.abs(d)
    # midranks computed by explicit counting
    ranks = np.array([np.sum(absd < v) + (np.sum(absd == v) + 1) / 2.0 for v in absd])
    w = ranks[d > 0].sum()
    lower = upper = 0
    for signs in itertools.product((0, 1), repeat=d.size):
        ws = float(np.dot(signs, ranks))
        lower += ws <= w + 1e-9
        upper += ws >= w - 1e-9
    return min(1.0, 2 * min(lower, upper) / 2 ** d.size)


# ---------------------------------------------------------------- KM

class TestKaplanMeier:
    def test_hand_fixture(self):
        km = kaplan_meier([1, 2, 3], [1, 0, 1])
        np.testing.assert_array_equal(km.times, [1, 2, 3])
        np.testing.assert_array_equal(km.at_risk, [3, 2, 1])
        np.testing.assert_array_equal(km.deaths, [1, 0, 1])
        assert km.survival.tolist() == [2 / 3, 2 / 3, 0.0]

    def test_all_censored(self):
        km = kaplan_meier([3, 1, 2], [0, 0, 0])
        np.testing.assert_array_equal(km.survival, 1.0)

    def test_no_censoring_is_empirical(self):
        rng = np.random.default_rng(0)
        t = rng.permutation(np.arange(1, 21)).astype(float)
        km = kaplan_meier(t, np.ones(20))
        for time, s in zip(km.times, km.survival):
            assert s == pytest.approx(np.mean(t > time), abs=1e-12)
        assert km.survival[-1] == 0.0

    def test_empty(self):
        with pytest.raises(DataError):
            kaplan_meier([], [])

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.tuples(st.integers(1, 15), st.booleans()), min_size=1, max_size=40))
    def test_monotone(self, data):
        t, e = zip(*data)
        km = kaplan_meier(t, e)
        assert np.all(np.diff(km.survival) <= 0)
        assert np.all(km.survival <= 1) and np.all(km.survival >= 0)
        assert np.all(np.diff(km.at_risk) <= 0)


# ---------------------------------------------------------------- Cox

SIX = dict(
    x=[1, 1, 0, 1, 0, 0],
    t=[1, 2, 3, 4, 5, 6],
    d=[1, 1, 1, 0, 1, 0],
)


class TestCox:
    def test_six_subject_grid_oracle(self):
        oracle = grid_argmax(lambda b: partial_loglik_by_hand(b, SIX["x"], SIX["t"], SIX["d"]), -5, 5)
        for ties in ("efron", "breslow"):
            fit = cox_fit(SIX["x"], SIX["t"], SIX["d"], ties=ties)
            assert fit.converged
            assert abs(fit.beta - oracle) < 1e-4

    def test_loglik_matches_hand(self):
        for beta in (-1.0, 0.0, 0.7):
            # centring the covariate changes the likelihood by a constant only at the optimum;
            # compare differences instead of values
            mine = cox_partial_loglik(beta, SIX["x"], SIX["t"], SIX["d"]) - cox_partial_loglik(0.0, SIX["x"], SIX["t"], SIX["d"])
            hand = partial_loglik_by_hand(beta, SIX["x"], SIX["t"], SIX["d"]) - partial_loglik_by_hand(0.0, SIX["x"], SIX["t"], SIX["d"])
            assert mine == pytest.approx(hand, abs=1e-12)

    def test_constant_scores(self):
        fit = cox_fit([2.0] * 5, [1, 2, 3, 4, 5], [1, 1, 0, 1, 1])
        assert fit.beta == 0.0 and fit.hazard_ratio == 1.0
        assert not fit.converged and "variance" in fit.diagnostic

    def test_too_few_events(self):
        fit = cox_fit([0, 1, 2], [1, 2, 3], [1, 0, 0])
        assert not fit.converged

    def test_perfect_separation_flagged(self):
        # every high-score subject dies before every low-score subject
        fit = cox_fit([1, 1, 1, 0, 0, 0], [1, 2, 3, 4, 5, 6], [1, 1, 1, 1, 1, 1])
        assert not fit.converged
        assert fit.diagnostic

    def test_planted_log_hr(self):
        cfg = CohortConfig(n_patients=500, signal_strength=1.2, age_effect=0.0, seed=21)
        recs = generate_clinical(cfg)
        z = [(r.burden - cfg.burden_mean) / cfg.burden_sd for r in recs]
        fit = cox_fit(z, [r.time_months for r in recs], [r.event for r in recs])
        assert fit.converged
        assert abs(fit.beta - 1.2) <= 0.2
        lo, hi = fit.ci95
        assert lo < fit.hazard_ratio < hi

    def test_invariances(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal(60)
        t = rng.exponential(np.exp(-0.8 * x)) + 0.01
        e = rng.random(60) < 0.8
        base = cox_fit(x, t, e)
        shifted = cox_fit(x + 3.0, t, e)
        scaled = cox_fit(2.5 * x, t, e)
        assert shifted.beta == pytest.approx(base.beta, abs=1e-6)
        assert scaled.beta == pytest.approx(base.beta / 2.5, abs=1e-6)
        assert scaled.wald_z == pytest.approx(base.wald_z, abs=1e-6)
        assert scaled.loglik == pytest.approx(base.loglik, abs=1e-6)

    def test_efron_equals_breslow_without_ties(self):
        rng = np.random.default_rng(8)
        x = rng.standard_normal(40)
        t = rng.permutation(np.arange(1, 41)).astype(float)
        e = rng.random(40) < 0.7
        a, b = cox_fit(x, t, e, "efron"), cox_fit(x, t, e, "breslow")
        assert a.beta == b.beta and a.std_err == b.std_err

    def test_efron_differs_with_ties(self):
        x = [0.1, 0.5, 1.0, 1.5, 0.3, 2.0]
        t = [1, 1, 2, 2, 3, 3]
        e = [1, 1, 1, 1, 1, 0]
        assert cox_fit(x, t, e, "efron").beta != cox_fit(x, t, e, "breslow").beta


class TestDichotomized:
    def test_identical_probs(self):
        with pytest.raises(DataError):
            dichotomized_cox([0.4] * 6, [1, 2, 3, 4, 5, 6], [1] * 6)

    def test_direction(self):
        t = np.arange(1, 21, dtype=float)
        good = np.linspace(1, 0, 20)  # early deaths get high risk
        res = dichotomized_cox(-good + 2, t, np.ones(20))
        assert res.fit.hazard_ratio < 1
        res = dichotomized_cox(good, t, np.r_[np.ones(18), 0, 0])
        assert res.fit.hazard_ratio > 1
        assert res.km_high.survival[-1] <= res.km_low.survival[0]


# ---------------------------------------------------------------- c-index / AUC

class TestConcordance:
    def test_perfect(self):
        t = np.array([5.0, 1.0, 3.0, 2.0])
        assert concordance_index(-t, t, np.ones(4)) == 1.0

    def test_constant(self):
        assert concordance_index(np.zeros(5), [1, 2, 3, 4, 5], [1, 1, 0, 1, 1]) == 0.5

    def test_no_pairs(self):
        with pytest.raises(DataError):
            concordance_index([1, 2], [1, 2], [0, 0])

    @pytest.mark.parametrize("seed", range(5))
    def test_brute_force(self, seed):
        rng = np.random.default_rng(seed)
        s = rng.integers(0, 10, 50).astype(float)
        t = rng.integers(1, 30, 50).astype(float)
        e = rng.random(50) < 0.6
        assert concordance_index(s, t, e) == brute_cindex(s, t, e)

    def test_antisymmetry(self):
        rng = np.random.default_rng(1)
        s = rng.standard_normal(40)
        t = rng.exponential(size=40) + 0.1
        e = rng.random(40) < 0.7
        assert concordance_index(s, t, e) + concordance_index(-s, t, e) == pytest.approx(1.0, abs=1e-12)


class TestAUC:
    def test_perfect(self):
        assert roc_auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0

    def test_ties(self):
        assert roc_auc([0.5] * 6, [0, 1, 0, 1, 1, 0]) == 0.5

    def test_single_class(self):
        with pytest.raises(DataError):
            roc_auc([0.1, 0.2], [1, 1])

    @pytest.mark.parametrize("seed", range(5))
    def test_pair_count(self, seed):
        rng = np.random.default_rng(seed)
        s = rng.integers(0, 6, 20) / 5.0
        y = rng.integers(0, 2, 20)
        y[:2] = [0, 1]
        assert roc_auc(s, y) == brute_auc(s, y)

    def test_monotone_invariance(self):
        rng = np.random.default_rng(2)
        s = rng.random(30)
        y = rng.integers(0, 2, 30)
        assert roc_auc(s, y) == roc_auc(np.log(s) * 3 + 1, y)


class TestConfusion:
    def test_all_correct(self):
        m = confusion_metrics([0.9, 0.8, 0.1, 0.2], [1, 1, 0, 0])
        assert (m.accuracy, m.sensitivity, m.specificity) == (100.0, 100.0, 100.0)

    def test_all_negative(self):
        m = confusion_metrics([0.1, 0.2, 0.3, 0.4], [1, 0, 1, 0])
        assert m.sensitivity == 0.0 and m.specificity == 100.0

    def test_counts(self):
        probs = [0.9, 0.8, 0.2, 0.1, 0.2, 0.3, 0.7]
        labels = [1, 1, 1, 0, 0, 0, 0]  # TP=2 FN=1 TN=3 FP=1
        m = confusion_metrics(probs, labels)
        assert (m.tp, m.fn, m.tn, m.fp) == (2, 1, 3, 1)
        assert round(m.sensitivity, 2) == 66.67
        assert round(m.specificity, 2) == 75.00
        assert round(m.accuracy, 2) == 71.43

    def test_accuracy_is_weighted_mix(self):
        rng = np.random.default_rng(4)
        p = rng.random(50)
        y = (rng.random(50) < 0.3).astype(int)
        m = confusion_metrics(p, y)
        prev = y.mean()
        assert m.accuracy == pytest.approx(prev * m.sensitivity + (1 - prev) * m.specificity, abs=1e-9)

    def test_select_threshold(self):
        t = select_threshold([0.2, 0.3, 0.35, 0.6], [0, 0, 1, 1])
        m = confusion_metrics([0.2, 0.3, 0.35, 0.6], [0, 0, 1, 1], t)
        assert m.accuracy == 100.0


# ---------------------------------------------------------------- Wilcoxon

class TestWilcoxon:
    def test_constant_shift_n6(self):
        a = np.arange(6, dtype=float)
        assert wilcoxon_signed_rank(a + 0.01, a).p_value == pytest.approx(0.03125, abs=1e-15)

    def test_constant_shift_n5(self):
        a = np.arange(5, dtype=float)
        assert wilcoxon_signed_rank(a + 0.01, a).p_value == pytest.approx(0.0625, abs=1e-15)

    def test_identical(self):
        with pytest.raises(DataError):
            wilcoxon_signed_rank([1, 2, 3, 4, 5], [1, 2, 3, 4, 5])

    @pytest.mark.parametrize("seed", range(6))
    def test_enumeration_n10(self, seed):
        rng = np.random.default_rng(seed)
        a = rng.standard_normal(10)
        b = rng.standard_normal(10) + 0.3
        assert wilcoxon_signed_rank(a, b).p_value == pytest.approx(enumerate_wilcoxon(a, b), abs=1e-12)

    def test_enumeration_with_ties(self):
        a = np.array([1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0])
        b = a - np.array([0.5, -0.5, 1.0, 1.0, -2.0, 0.5, 3.0, 0.0])
        assert wilcoxon_signed_rank(a, b).p_value == pytest.approx(enumerate_wilcoxon(a, b), abs=1e-12)

    def test_normal_branch_matches_scipy(self):
        from scipy.stats import wilcoxon

        rng = np.random.default_rng(0)
        a = rng.standard_normal(40)
        b = a + rng.standard_normal(40) * 0.5 + 0.2
        mine = wilcoxon_signed_rank(a, b)
        ref = wilcoxon(a, b, correction=True, method="approx")
        assert mine.method == "normal"
        assert mine.p_value == pytest.approx(ref.pvalue, rel=1e-9)
