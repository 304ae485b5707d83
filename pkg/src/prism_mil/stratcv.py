"""Demographic strata and stratified fold construction.

Patients are banded by age, BMI and income, crossed with their five-year
outcome, and each cell is dealt round-robin into K folds so every fold sees
the same mix of survival-heterogeneous subgroups.
"""
from __future__ import annotations

import csv
import io
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError, DataError
from .numcore import make_rng

ROLES = ("train", "val", "test")
VAL_EVERY = 8  # 1/8 of the non-test folds -> 10% of the cohort at K=5


@dataclass(frozen=True)
class Stratum:
    age_band: str
    bmi_band: str
    income_band: str
    outcome: str
    cluster: Optional[int] = None

    @property
    def demographic_key(self) -> str:
        if self.cluster is not None:
            return f"cluster{self.cluster}"
        return f"age{self.age_band}|bmi{self.bmi_band}|income{self.income_band}"

    @property
    def key(self) -> str:
        return f"{self.demographic_key}|{self.outcome}"


@dataclass
class FoldAssignment:
    k: int
    fold: dict
    stratum: dict
    cell: dict
    position: dict = field(default_factory=dict)
    mode: str = "stratified"

    @property
    def patients(self) -> list:
        return sorted(self.fold)

    def members(self, f: int) -> list:
        return sorted(p for p, v in self.fold.items() if v == f)


def outcome_of(record) -> str:
    if record.label5y is None:
        return "censored"
    return "died5y" if record.label5y == 1 else "survived5y"


def age_band(age: float) -> str:
    return "<=65" if age <= 65.0 else ">65"


def bmi_band(bmi: float) -> str:
    if bmi < 25.0:
        return "<25"
    if bmi < 30.0:
        return "25-30"
    return ">=30"


def lower_median(values) -> float:
    s = sorted(values)
    return float(s[(len(s) - 1) // 2])


def _check_attrs(records):
    for r in records:
        for name in ("age", "bmi", "income"):
            v = getattr(r, name, None)
            if v is None or not math.isfinite(v):
                raise DataError(f"patient {r.patient_id}: missing or non-finite {name}")


def assign_strata(records) -> dict:
    """Map each patient id to its threshold-band ``Stratum``."""
    records = list(records)
    if not records:
        raise DataError("assign_strata: empty cohort")
    _check_attrs(records)
    med = lower_median(r.income for r in records)
    out = {}
    for r in records:
        out[r.patient_id] = Stratum(
            age_band(r.age),
            bmi_band(r.bmi),
            "<=median" if r.income <= med else ">median",
            outcome_of(r),
        )
    return out


def assign_clusters(records, k: int = 4, seed: int = 0) -> dict:
    """k-means alternative to threshold bands on z-scored (age, bmi, income)."""
    from scipy.cluster.vq import kmeans2

    records = list(records)
    _check_attrs(records)
    if k < 1 or k > len(records):
        raise ConfigError(f"assign_clusters: k={k} invalid for {len(records)} patients")
    x = np.array([[r.age, r.bmi, r.income] for r in records], dtype=np.float64)
    sd = x.std(axis=0)
    sd[sd == 0] = 1.0
    z = (x - x.mean(axis=0)) / sd
    _, labels = kmeans2(z, k, minit="++", seed=make_rng(seed, "kmeans"))
    out = {}
    for r, c in zip(records, labels):
        out[r.patient_id] = Stratum(age_band(r.age), bmi_band(r.bmi), "", outcome_of(r), int(c))
    return out


def stratum_death_rates(records, strata: dict, by=lambda s: s.demographic_key) -> dict:
    """Five-year death rate per group among classifiable patients.

    Returns ``{group: (n_classifiable, rate)}``; rate is NaN for empty groups.
    """
    counts = defaultdict(lambda: [0, 0])
    for r in records:
        g = by(strata[r.patient_id])
        if r.label5y is None:
            counts[g]
            continue
        counts[g][0] += 1
        counts[g][1] += int(r.label5y)
    return {g: (n, d / n if n else float("nan")) for g, (n, d) in sorted(counts.items())}


def _deal(cells: dict, k: int, rng) -> tuple:
    fold, position = {}, {}
    pointer = 0
    for key in sorted(cells):
        members = sorted(cells[key])
        order = rng.permutation(len(members))
        for pos, idx in enumerate(order):
            pid = members[idx]
            fold[pid] = pointer % k
            position[pid] = pos
            pointer += 1
    return fold, position


def make_folds(strata: dict, k: int = 5, seed: int = 0) -> FoldAssignment:
    if k < 2:
        raise ConfigError(f"make_folds: K must be >= 2, got {k}")
    if k > len(strata):
        raise ConfigError(f"make_folds: K={k} exceeds cohort size {len(strata)}")
    cells = defaultdict(list)
    for pid, s in strata.items():
        cells[s.key].append(pid)
    fold, position = _deal(cells, k, make_rng(seed, "folds"))
    cell = {pid: s.key for pid, s in strata.items()}
    return FoldAssignment(k, fold, {p: s.key for p, s in strata.items()}, cell, position, "stratified")


def naive_folds(records, k: int = 5, seed: int = 0) -> FoldAssignment:
    """Plain shuffled K-fold that ignores strata and outcome."""
    records = list(records)
    if k < 2:
        raise ConfigError(f"naive_folds: K must be >= 2, got {k}")
    if k > len(records):
        raise ConfigError(f"naive_folds: K={k} exceeds cohort size {len(records)}")
    cells = {"all": [r.patient_id for r in records]}
    fold, position = _deal(cells, k, make_rng(seed, "naive-folds"))
    try:
        strata = {p: s.key for p, s in assign_strata(records).items()}
    except DataError:
        strata = {r.patient_id: "all" for r in records}
    return FoldAssignment(k, fold, strata, {p: "all" for p in fold}, position, "naive")


def split_roles(folds: FoldAssignment, test_fold: int) -> dict:
    """Role per patient when ``test_fold`` is held out.

    The held-out fold is ``test``. In the remaining folds every eighth
    patient, walking cells in sorted order, goes to ``val``; at K=5 that is
    the 70/10/20 split with validation drawn proportionally from each cell.
    """
    if not 0 <= test_fold < folds.k:
        raise ConfigError(f"split_roles: test fold {test_fold} out of range 0..{folds.k - 1}")
    roles = {}
    by_cell = defaultdict(list)
    for pid, f in folds.fold.items():
        if f == test_fold:
            roles[pid] = "test"
        else:
            by_cell[folds.cell[pid]].append(pid)
    counter = 0
    for key in sorted(by_cell):
        members = sorted(by_cell[key], key=lambda p: (folds.fold[p], folds.position.get(p, 0), p))
        for pid in members:
            counter += 1
            roles[pid] = "val" if counter % VAL_EVERY == 0 else "train"
    return roles


# --------------------------------------------------------------------------
# audits and I/O
# --------------------------------------------------------------------------

def cell_balance_deviation(folds: FoldAssignment) -> int:
    """Largest (max - min) per-cell fold count over all cells."""
    counts = defaultdict(lambda: [0] * folds.k)
    for pid, f in folds.fold.items():
        counts[folds.cell[pid]][f] += 1
    return max(max(c) - min(c) for c in counts.values())


def fold_prevalence(folds: FoldAssignment, records) -> list:
    labels = {r.patient_id: r.label5y for r in records}
    rows = []
    for f in range(folds.k):
        ys = [labels[p] for p in folds.members(f) if labels.get(p) is not None]
        rows.append({
            "fold": f,
            "n": len(folds.members(f)),
            "n_classifiable": len(ys),
            "deaths": int(sum(ys)),
            "prevalence": float(np.mean(ys)) if ys else float("nan"),
        })
    return rows


def max_prevalence_deviation(folds: FoldAssignment, records) -> float:
    ys = [r.label5y for r in records if r.label5y is not None]
    overall = float(np.mean(ys))
    return max(abs(row["prevalence"] - overall) for row in fold_prevalence(folds, records)
               if row["n_classifiable"])


def audit_report(folds: FoldAssignment, records) -> dict:
    ys = [r.label5y for r in records if r.label5y is not None]
    strata_rates = defaultdict(lambda: defaultdict(int))
    for pid, f in sorted(folds.fold.items()):
        strata_rates[folds.stratum[pid]][str(f)] += 1
    return {
        "mode": folds.mode,
        "k": folds.k,
        "n_patients": len(folds.fold),
        "cohort_prevalence": float(np.mean(ys)) if ys else None,
        "folds": fold_prevalence(folds, records),
        "max_prevalence_deviation": max_prevalence_deviation(folds, records) if ys else None,
        "max_cell_imbalance": cell_balance_deviation(folds),
        "stratum_fold_counts": {k: dict(v) for k, v in sorted(strata_rates.items())},
    }


def folds_to_csv(folds: FoldAssignment, roles: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["patient_id", "stratum", "fold", "role"])
    for pid in folds.patients:
        w.writerow([pid, folds.stratum[pid], folds.fold[pid], roles.get(pid, "")])
    return buf.getvalue()
