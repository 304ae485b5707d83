"""Acceptance gate: one test per criterion, each reporting a pass/fail line.

Run alone with ``pytest tests/test_acceptance.py -v``; the summary section
"acceptance criteria" lists every criterion with its measured value.
"""
import csv
import itertools
import json
import math
import time

import numpy as np
import pytest

from prism_mil import kernels
from prism_mil.cli import RunConfig, cmd_evaluate, cmd_generate, cmd_train, main
from prism_mil.cohortgen import (
    CohortConfig,
    PatchFeatureBag,
    class_prototypes,
    generate_clinical,
    generate_patches,
)
from prism_mil.fusion import FusionParams, diagonal_selector, fuse, fuse_exact
from prism_mil.milattn import PrismHyper, PrismModel, forward_slide, slide_loss_grad
from prism_mil.morphclass import MorphTrainConfig, nearest_prototype_accuracy, train_morph
from prism_mil.numcore import ParamTensor, finite_diff_check, make_rng
from prism_mil.stratcv import (
    assign_strata,
    cell_balance_deviation,
    make_folds,
    max_prevalence_deviation,
    naive_folds,
)
from prism_mil.survstats import (
    concordance_index,
    cox_fit,
    kaplan_meier,
    roc_auc,
    wilcoxon_signed_rank,
)

# configuration of the planted-signal run (criterion 4)
SIGNAL_RUN = {
    "seed": 0,
    "cohort": {"n_patients": 400, "signal_strength": 5.0},
    "model": {"rank": 16},
    "hyper": {"epochs": 200},
    "fusion_mode": "factorized",
}


def _bag(n, d_g, d_m, rng, pid="B"):
    return PatchFeatureBag(pid, rng.standard_normal((n, d_g)), rng.standard_normal((n, d_m)),
                           np.zeros(n, dtype=np.int64))


def _random_model(mode, seed, d_g=5, d_m=4):
    hyper = PrismHyper(rank=3, d=4, hidden=3, fusion_mode=mode)
    model = PrismModel(d_g, d_m, hyper)
    model.theta[:] = np.random.default_rng(seed).standard_normal(model.theta.size) * 0.7
    return model


# ---------------------------------------------------------------- 1
def test_c01_gradient(criterion, monkeypatch):
    start = time.perf_counter()
    worst = 0.0
    for mod in kernels.available_backends().values():
        monkeypatch.setattr(kernels, "slide_forward_backward", mod.slide_forward_backward)
        for mode in ("factorized", "exact"):
            for point in range(3):
                model = _random_model(mode, 100 + point)
                bag = _bag(3, 5, 4, np.random.default_rng(200 + point))
                y = float(point % 2)
                param = ParamTensor("theta", model.theta)
                param.value = model.theta
                _, param.grad = slide_loss_grad(model, bag.generic, bag.morph, y)
                err = finite_diff_check(lambda: slide_loss_grad(model, bag.generic, bag.morph, y)[0], [param])
                worst = max(worst, err)
    elapsed = time.perf_counter() - start
    ok = worst < 1e-4 and elapsed < 10
    criterion(1, ok, f"max rel err {worst:.2e} (< 1e-4), {elapsed:.2f}s (< 10s)")
    assert ok


# ---------------------------------------------------------------- 2
def test_c02_mil_invariants(criterion):
    rng = np.random.default_rng(2)
    perm_err = sum_err = 0.0
    for mode in ("factorized", "exact"):
        model = _random_model(mode, 7)
        for i in range(100):
            bag = _bag(int(rng.integers(1, 50)), 5, 4, rng, f"P{i}")
            base = forward_slide(model, bag)
            sum_err = max(sum_err, abs(base.attention.sum() - 1.0))
            perm = forward_slide(model, bag.permuted(rng.permutation(bag.n_patches)))
            perm_err = max(perm_err, abs(perm.probability - base.probability))
    ok = perm_err <= 1e-12 and sum_err <= 1e-9
    criterion(2, ok, f"permutation |dp| {perm_err:.1e} (<= 1e-12), |sum a - 1| {sum_err:.1e} (<= 1e-9)")
    assert ok


# ---------------------------------------------------------------- 3
def test_c03_fusion_oracle(criterion):
    rng = np.random.default_rng(3)
    loop_err = diag_err = 0.0
    for seed in range(10):
        params = FusionParams.init(6, 5, 4, 7, make_rng(seed, "c3"), "exact")
        g, m = rng.standard_normal(6), rng.standard_normal(5)
        r = params.rank
        p = [sum(params.W_g[a, i] * g[a] for a in range(6)) for i in range(r)]
        q = [sum(params.W_m[b, k] * m[b] for b in range(5)) for k in range(r)]
        oracle = np.zeros(7)
        for i in range(r):
            for k in range(r):
                oracle += p[i] * q[k] * params.W_fusion[i * r + k]
        loop_err = max(loop_err, np.abs(fuse_exact(g, m, params) - oracle).max())
    for r in (1, 2, 3, 4):
        fac = FusionParams.init(6, 5, r, 7, make_rng(r, "c3f"), "factorized")
        ex = diagonal_selector(fac)
        for _ in range(10):
            g, m = rng.standard_normal(6), rng.standard_normal(5)
            diag_err = max(diag_err, np.abs(fuse(g, m, ex) - fuse(g, m, fac)).max())
    ok = loop_err <= 1e-12 and diag_err <= 1e-12
    criterion(3, ok, f"exact vs loop {loop_err:.1e}, diagonal selector {diag_err:.1e} (<= 1e-12)")
    assert ok


# ---------------------------------------------------------------- 4
def _fold_aucs(pred_csv):
    with open(pred_csv, newline="") as fh:
        rows = [r for r in csv.DictReader(fh) if r["label5y"] != "NA"]
    aucs = []
    for f in sorted({r["fold"] for r in rows}):
        sub = [r for r in rows if r["fold"] == f]
        aucs.append(roc_auc([float(r["prob"]) for r in sub], [int(r["label5y"]) for r in sub]))
    return aucs


def _signal_run(root, signal):
    cfg_dict = json.loads(json.dumps(SIGNAL_RUN))
    cfg_dict["cohort"]["signal_strength"] = signal
    cfg = RunConfig.from_dict(cfg_dict)
    cmd_generate(cfg, root / "cohort")
    cmd_train(cfg, root / "cohort", root / "train")
    cmd_evaluate(cfg, root / "train" / "predictions.csv", root / "cohort" / "clinical.csv", root / "eval",
                 group_by=[])
    cox = json.loads((root / "eval" / "cox.json").read_text())["dichotomized"]
    return _fold_aucs(root / "train" / "predictions.csv"), cox


@pytest.mark.slow
def test_c04_planted_signal(criterion, tmp_path, monkeypatch):
    monkeypatch.setenv("PRISM_THREADS", "1")
    start = time.perf_counter()
    aucs, cox = _signal_run(tmp_path / "signal", SIGNAL_RUN["cohort"]["signal_strength"])
    null_aucs, _ = _signal_run(tmp_path / "null", 0.0)
    elapsed = time.perf_counter() - start
    mean, null_mean = float(np.mean(aucs)), float(np.mean(null_aucs))
    lo, hi = cox["ci95"]
    ok = (mean >= 0.90 and cox["hr"] > 1 and lo > 1 and 0.40 <= null_mean <= 0.60 and elapsed < 600)
    criterion(4, ok, f"signal {SIGNAL_RUN['cohort']['signal_strength']}: mean AUC {mean:.3f} (>= 0.90) "
                     f"folds {np.round(aucs, 3).tolist()}; HR {cox['hr']:.2f} CI [{lo:.2f}, {hi:.2f}]; "
                     f"null AUC {null_mean:.3f} (in [0.40, 0.60]); {elapsed:.0f}s (< 600s)")
    assert ok


# ---------------------------------------------------------------- 5
def _hand_loglik(beta, x, t, d):
    ll = 0.0
    for i in range(len(t)):
        if d[i]:
            ll += beta * x[i] - math.log(sum(math.exp(beta * x[j]) for j in range(len(t)) if t[j] >= t[i]))
    return ll


def test_c05_cox_oracle(criterion):
    x, t, d = [1, 1, 0, 1, 0, 0], [1, 2, 3, 4, 5, 6], [1, 1, 1, 0, 1, 0]
    grid = np.linspace(-5, 5, 100001)
    vals = np.array([_hand_loglik(b, x, t, d) for b in grid])
    oracle = grid[int(np.argmax(vals))]
    grid_err = abs(cox_fit(x, t, d).beta - oracle)

    cfg = CohortConfig(n_patients=500, signal_strength=1.2, age_effect=0.0, seed=21)
    recs = generate_clinical(cfg)
    z = [(r.burden - cfg.burden_mean) / cfg.burden_sd for r in recs]
    tt, ee = [r.time_months for r in recs], [r.event for r in recs]
    planted = cox_fit(z, tt, ee).beta

    base = cox_fit(z, tt, ee)
    inv_err = max(abs(cox_fit(np.asarray(z) * s + c, tt, ee).wald_z - base.wald_z)
                  for s, c in ((2.0, 0.0), (0.5, 3.0), (1.0, -7.0)))
    ok = grid_err <= 1e-4 and abs(planted - 1.2) <= 0.2 and inv_err <= 1e-6
    criterion(5, ok, f"6-subject |beta - grid| {grid_err:.1e} (<= 1e-4); planted 1.2 -> {planted:.3f} "
                     f"(+-0.2); Wald z invariance {inv_err:.1e} (<= 1e-6)")
    assert ok


# ---------------------------------------------------------------- 6
def test_c06_km_fixture(criterion):
    km = kaplan_meier([1, 2, 3], [1, 0, 1])
    exact = km.survival.tolist() == [2 / 3, 2 / 3, 0.0]
    t = np.random.default_rng(6).permutation(np.arange(1, 31)).astype(float)
    km2 = kaplan_meier(t, np.ones(30))
    empirical = max(abs(s - np.mean(t > u)) for u, s in zip(km2.times, km2.survival))
    ok = exact and empirical <= 1e-12
    criterion(6, ok, f"fixture {km.survival.tolist()} exact={exact}; no-censoring max dev {empirical:.1e}")
    assert ok


# ---------------------------------------------------------------- 7
def test_c07_discrimination_brute_force(criterion):
    mismatches = 0
    for seed in range(10):
        rng = np.random.default_rng(seed)
        s = rng.integers(0, 12, 50).astype(float)
        t = rng.integers(1, 40, 50).astype(float)
        e = rng.random(50) < 0.6
        y = rng.integers(0, 2, 50)
        num = den = 0.0
        for i in range(50):
            for j in range(50):
                if e[i] and t[i] < t[j]:
                    den += 1
                    num += 1.0 if s[i] > s[j] else 0.5 if s[i] == s[j] else 0.0
        hits = sum(1.0 if a > b else 0.5 if a == b else 0.0 for a in s[y == 1] for b in s[y == 0])
        auc = hits / ((y == 1).sum() * (y == 0).sum())
        mismatches += concordance_index(s, t, e) != num / den
        mismatches += roc_auc(s, y) != auc
    ok = mismatches == 0
    criterion(7, ok, f"{mismatches} mismatches over 10 seeds x (c-index, AUC), n=50, exact equality")
    assert ok


# ---------------------------------------------------------------- 8
def test_c08_wilcoxon_enumeration(criterion):
    worst = 0.0
    for seed in range(10):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(5, 13))
        a = np.round(rng.standard_normal(n), 1)
        b = np.round(rng.standard_normal(n) + 0.4, 1)
        d = a - b
        d = d[d != 0]
        absd = np.abs(d)
        ranks = np.array([np.sum(absd < v) + (np.sum(absd == v) + 1) / 2.0 for v in absd])
        w = ranks[d > 0].sum()
        lo = hi = 0
        for signs in itertools.product((0, 1), repeat=d.size):
            ws = float(np.dot(signs, ranks))
            lo += ws <= w + 1e-9
            hi += ws >= w - 1e-9
        oracle = min(1.0, 2 * min(lo, hi) / 2 ** d.size)
        worst = max(worst, abs(wilcoxon_signed_rank(a, b).p_value - oracle))
    ok = worst <= 1e-12
    criterion(8, ok, f"max |p - enumeration| {worst:.1e} over 10 instances, n <= 12")
    assert ok


# ---------------------------------------------------------------- 9
def test_c09_stratified_cv(criterion):
    invariant_failures = 0
    for seed in range(20):
        rng = np.random.default_rng(1000 + seed)
        n, k = int(rng.integers(40, 400)), int(rng.integers(2, 9))
        recs = generate_clinical(CohortConfig(n_patients=n, seed=1000 + seed))
        folds = make_folds(assign_strata(recs), k, seed)
        sizes = np.bincount(list(folds.fold.values()), minlength=k)
        partition = sorted(folds.fold) == sorted(r.patient_id for r in recs)
        invariant_failures += not (partition and sizes.max() - sizes.min() <= 1
                                   and cell_balance_deviation(folds) <= 1)
    wins = 0
    for seed in range(20):
        recs = generate_clinical(CohortConfig(n_patients=400, seed=seed))
        strat = max_prevalence_deviation(make_folds(assign_strata(recs), 5, seed), recs)
        naive = max_prevalence_deviation(naive_folds(recs, 5, seed), recs)
        wins += strat < naive
    ok = invariant_failures == 0 and wins >= 14
    criterion(9, ok, f"invariant failures {invariant_failures}/20; stratified beats naive in {wins}/20 (>= 14)")
    assert ok


# ---------------------------------------------------------------- 10
def test_c10_morphology_classifier(criterion):
    cfg = CohortConfig(seed=0)
    X, y = generate_patches(cfg, 200, make_rng(0, "morph", "patches"))
    _, report = train_morph(X, y, MorphTrainConfig(seed=0))
    oracle = nearest_prototype_accuracy(class_prototypes(cfg)[0], X, y)
    _, shuffled = train_morph(X, make_rng(0, "shuffle").permutation(y), MorphTrainConfig(seed=0))
    chance = 1 / 13
    sd = math.sqrt(chance * (1 - chance) / shuffled.n_test)
    ok = report.test_accuracy >= 0.85 and oracle >= 0.9 and shuffled.test_accuracy <= chance + 4 * sd
    criterion(10, ok, f"test acc {report.test_accuracy:.3f} (>= 0.85), nearest-prototype {oracle:.3f} (>= 0.9), "
                      f"shuffled {shuffled.test_accuracy:.3f} (<= {chance + 4 * sd:.3f})")
    assert ok


# ---------------------------------------------------------------- 11
def test_c11_reproducibility(criterion, tmp_path):
    config = tmp_path / "run.json"
    config.write_text(json.dumps({"seed": 5, "cohort": {"n_patients": 40}, "hyper": {"epochs": 3}}))
    for run in ("a", "b"):
        base = tmp_path / run
        assert main(["generate", "--config", str(config), "--out", str(base / "cohort")]) == 0
        assert main(["train", "--config", str(config), "--cohort", str(base / "cohort"),
                     "--out", str(base / "train")]) == 0
        assert main(["evaluate", "--config", str(config), "--predictions", str(base / "train" / "predictions.csv"),
                     "--clinical", str(base / "cohort" / "clinical.csv"), "--out", str(base / "eval")]) == 0
    compared, diffs = 0, []
    for f in sorted((tmp_path / "a").rglob("*")):
        if f.is_file() and f.name != "timings.json":
            twin = tmp_path / "b" / f.relative_to(tmp_path / "a")
            compared += 1
            if f.read_bytes() != twin.read_bytes():
                diffs.append(str(f.relative_to(tmp_path / "a")))
    ok = not diffs and compared > 0
    criterion(11, ok, f"{compared} files compared, {len(diffs)} differ {diffs[:3]}")
    assert ok
