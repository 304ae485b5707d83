"""Synthetic cohorts: clinical tables plus patch-feature bags.

Each patient has a latent morphology burden, the fraction of patches drawn
from the two high-risk tissue classes (high-grade adenocarcinoma, necrosis).
Burden enters a Weibull proportional-hazards model, so a model that can count
risk-class patches can recover survival risk.
"""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ConfigError, DataError, PrismIOError
from .numcore import make_rng
from .tensorio import decode_tensors, encode_tensor

MORPH_CLASSES = (
    "high_grade_adenocarcinoma",
    "low_grade_adenocarcinoma",
    "high_grade_adenoma",
    "low_grade_adenoma",
    "fat",
    "hyperplastic_polyp",
    "inflammation",
    "mucin",
    "smooth_muscle",
    "necrosis",
    "sessile_serrated_lesion",
    "stroma",
    "vascular_structures",
)
N_CLASSES = len(MORPH_CLASSES)
RISK_CLASSES = (0, 9)
LOCATIONS = (
    "cecum",
    "ascending_colon",
    "hepatic_flexure",
    "transverse_colon",
    "splenic_flexure",
    "descending_colon",
    "sigmoid_colon",
)
FIVE_YEARS = 60.0
CLINICAL_HEADER = (
    "patient_id", "age", "bmi", "income", "sex", "treatment", "grade",
    "location", "time_months", "event", "label5y",
)


@dataclass
class CohortConfig:
    n_patients: int = 424
    d_g: int = 16
    d_m: int = 16
    patches_min: int = 8
    patches_max: int = 64
    signal_strength: float = 1.0
    censoring_rate: float = 0.25
    censor_window: tuple = (12.0, 72.0)
    target_death_fraction: Optional[float] = 103 / 424
    baseline_scale: float = 90.0
    weibull_shape: float = 1.5
    burden_alpha: float = 0.6
    burden_beta: float = 1.6
    age_effect: float = 0.5
    prototype_separation: float = 5.0
    mixture_concentration: float = 10.0
    noise_sd: float = 1.0
    # demographic marginals
    age_mean: float = 60.47
    age_sd: float = 10.0
    income_mean: float = 43194.59
    income_sigma: float = 0.35
    bmi_weights: tuple = (0.35, 0.38, 0.27)
    male_fraction: float = 240 / 431
    fl_fraction: float = 219 / 431
    grade_weights: tuple = (20.0, 300.0, 108.0)
    location_weights: tuple = (101.0, 64.0, 28.0, 46.0, 19.0, 19.0, 149.0)
    seed: int = 0

    def __post_init__(self):
        self.censor_window = tuple(float(x) for x in self.censor_window)
        self.bmi_weights = tuple(float(x) for x in self.bmi_weights)
        self.grade_weights = tuple(float(x) for x in self.grade_weights)
        self.location_weights = tuple(float(x) for x in self.location_weights)
        self.validate()

    def validate(self) -> None:
        def need(cond, msg):
            if not cond:
                raise ConfigError(f"CohortConfig: {msg}")

        need(self.n_patients >= 1, "n_patients must be >= 1")
        need(self.d_g >= 1 and self.d_m >= 1, "feature dims must be >= 1")
        need(1 <= self.patches_min <= self.patches_max, "need 1 <= patches_min <= patches_max")
        need(self.signal_strength >= 0, "signal_strength must be >= 0")
        need(0.0 <= self.censoring_rate <= 1.0, "censoring_rate must lie in [0, 1]")
        lo, hi = self.censor_window
        need(0 < lo < hi, "censor_window must satisfy 0 < lo < hi")
        need(self.target_death_fraction is None or 0 < self.target_death_fraction < 1,
             "target_death_fraction must lie in (0, 1)")
        need(self.baseline_scale > 0 and self.weibull_shape > 0, "Weibull parameters must be positive")
        need(self.burden_alpha > 0 and self.burden_beta > 0, "burden Beta parameters must be positive")
        need(self.mixture_concentration > 0, "mixture_concentration must be positive")
        need(self.prototype_separation >= 2.0, "prototype_separation must be >= 2 (noise sd units)")
        need(self.noise_sd > 0 and self.age_sd > 0 and self.income_sigma > 0, "variances must be positive")
        need(self.income_mean > 0, "income_mean must be positive")
        need(len(self.bmi_weights) == 3 and min(self.bmi_weights) >= 0 and sum(self.bmi_weights) > 0,
             "bmi_weights needs three non-negative entries")
        need(len(self.grade_weights) == 3 and min(self.grade_weights) >= 0 and sum(self.grade_weights) > 0,
             "grade_weights needs three non-negative entries")
        need(len(self.location_weights) == len(LOCATIONS) and min(self.location_weights) >= 0
             and sum(self.location_weights) > 0, "location_weights needs seven non-negative entries")
        need(0 <= self.male_fraction <= 1 and 0 <= self.fl_fraction <= 1, "proportions must lie in [0, 1]")
        need(self.seed >= 0, "seed must be non-negative")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "CohortConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"CohortConfig: unknown keys {sorted(unknown)}")
        return cls(**data)

    @property
    def burden_mean(self) -> float:
        a, b = self.burden_alpha, self.burden_beta
        return a / (a + b)

    @property
    def burden_sd(self) -> float:
        a, b = self.burden_alpha, self.burden_beta
        return float(np.sqrt(a * b / ((a + b) ** 2 * (a + b + 1))))


@dataclass
class ClinicalRecord:
    patient_id: str
    age: float
    bmi: float
    income: float
    sex: str
    treatment: str
    grade: int
    location: str
    time_months: float
    event: int
    label5y: Optional[int]
    burden: float = float("nan")

    @property
    def classifiable(self) -> bool:
        return self.label5y is not None


@dataclass
class PatchFeatureBag:
    patient_id: str
    generic: np.ndarray
    morph: np.ndarray
    patch_class: np.ndarray

    def __post_init__(self):
        n = self.generic.shape[0]
        if n < 1:
            raise DataError(f"bag {self.patient_id}: no patches")
        if self.morph.shape[0] != n or self.patch_class.shape[0] != n:
            raise DataError(f"bag {self.patient_id}: per-patch arrays disagree in length")

    @property
    def n_patches(self) -> int:
        return self.generic.shape[0]

    def permuted(self, order) -> "PatchFeatureBag":
        order = np.asarray(order)
        return PatchFeatureBag(self.patient_id, self.generic[order], self.morph[order], self.patch_class[order])


@dataclass
class Cohort:
    config: CohortConfig
    records: list
    bags: dict = field(default_factory=dict)

    def record(self, patient_id: str) -> ClinicalRecord:
        for r in self.records:
            if r.patient_id == patient_id:
                return r
        raise KeyError(patient_id)


def five_year_label(time_months: float, event: int) -> Optional[int]:
    """1 = died within five years, 0 = followed past five years, None = censored earlier."""
    if event and time_months <= FIVE_YEARS:
        return 1
    if time_months > FIVE_YEARS:
        return 0
    return None


# --------------------------------------------------------------------------
# class prototypes
# --------------------------------------------------------------------------

@lru_cache(maxsize=32)
def _prototypes(seed: int, d_m: int, d_g: int, separation: float):
    rng = make_rng(seed, "prototypes")
    if d_m >= N_CLASSES:
        q, _ = np.linalg.qr(rng.standard_normal((d_m, N_CLASSES)))
        morph = q.T * (separation / np.sqrt(2.0))
    else:
        raw = rng.standard_normal((N_CLASSES, d_m))
        diffs = raw[:, None, :] - raw[None, :, :]
        dist = np.sqrt((diffs ** 2).sum(-1))
        dist[np.diag_indices(N_CLASSES)] = np.inf
        morph = raw * (separation / dist.min())
    k = max(d_m, d_g)
    rot, _ = np.linalg.qr(rng.standard_normal((k, k)))
    rotation = rot[:d_g, :d_m]
    generic = morph @ rotation.T
    morph.setflags(write=False)
    generic.setflags(write=False)
    return morph, generic


def class_prototypes(config: CohortConfig):
    """Per-class feature means ``(morph 13 x d_m, generic 13 x d_g)``.

    The generic channel is the morph prototype pushed through a fixed random
    orthogonal map, so the two channels are correlated but not identical.
    """
    return _prototypes(config.seed, config.d_m, config.d_g, float(config.prototype_separation))


def generate_patches(config: CohortConfig, n_per_class: int, rng: np.random.Generator):
    """Labelled morph-channel patches for training the morphology classifier."""
    morph, _ = class_prototypes(config)
    labels = np.repeat(np.arange(N_CLASSES), n_per_class)
    x = morph[labels] + config.noise_sd * rng.standard_normal((labels.size, config.d_m))
    return x, labels


# --------------------------------------------------------------------------
# clinical table
# --------------------------------------------------------------------------

def _draw_bmi(rng, n, weights):
    w = np.asarray(weights) / np.sum(weights)
    comp = rng.choice(3, size=n, p=w)
    means = np.array([22.0, 27.5, 33.5])
    sds = np.array([1.6, 1.3, 2.5])
    bmi = means[comp] + sds[comp] * rng.standard_normal(n)
    lows = np.array([15.0, 25.0, 30.0])
    highs = np.array([24.99, 29.99, 55.0])
    return np.clip(bmi, lows[comp], highs[comp])


def _labels_for(times, events):
    return [five_year_label(t, e) for t, e in zip(times, events)]


def _observe(scale, unit_draw, risk, shape, censor_time):
    t = scale * (unit_draw * np.exp(-risk)) ** (1.0 / shape)
    t = np.maximum(np.round(t, 4), 1e-3)
    obs = np.minimum(t, censor_time)
    event = (t <= censor_time).astype(int)
    return obs, event


def _death_fraction(times, events) -> float:
    labels = [l for l in _labels_for(times, events) if l is not None]
    if not labels:
        return 0.0
    return float(np.mean(labels))


def generate_clinical(config: CohortConfig) -> list:
    config.validate()
    rng = make_rng(config.seed, "clinical")
    n = config.n_patients

    age = np.round(np.clip(rng.normal(config.age_mean, config.age_sd, n), 30.0, 90.0), 2)
    mu = np.log(config.income_mean) - 0.5 * config.income_sigma ** 2
    income = np.round(rng.lognormal(mu, config.income_sigma, n), 2)
    bmi = np.round(_draw_bmi(rng, n, config.bmi_weights), 2)
    sex = np.where(rng.random(n) < config.male_fraction, "M", "F")
    treatment = np.where(rng.random(n) < config.fl_fraction, "FL", "IFL")
    gw = np.asarray(config.grade_weights) / sum(config.grade_weights)
    grade = rng.choice(3, size=n, p=gw) + 1
    lw = np.asarray(config.location_weights) / sum(config.location_weights)
    location = rng.choice(len(LOCATIONS), size=n, p=lw)

    burden = rng.beta(config.burden_alpha, config.burden_beta, n)
    risk = config.signal_strength * (burden - config.burden_mean) / config.burden_sd
    risk = risk + config.age_effect * (age > 65.0)
    unit = rng.exponential(1.0, n)
    lo, hi = config.censor_window
    censored = rng.random(n) < config.censoring_rate
    censor_time = np.where(censored, rng.uniform(lo, hi, n), np.inf)

    scale = config.baseline_scale
    if config.target_death_fraction is not None:
        # death fraction among classifiable patients falls monotonically in the scale
        lo_s, hi_s = np.log(1e-2), np.log(1e6)
        for _ in range(200):
            mid = 0.5 * (lo_s + hi_s)
            frac = _death_fraction(*_observe(np.exp(mid), unit, risk, config.weibull_shape, censor_time))
            if frac > config.target_death_fraction:
                lo_s = mid
            else:
                hi_s = mid
        cands = [np.exp(lo_s), np.exp(hi_s)]
        errs = [abs(_death_fraction(*_observe(c, unit, risk, config.weibull_shape, censor_time))
                    - config.target_death_fraction) for c in cands]
        scale = float(cands[int(np.argmin(errs))])
    times, events = _observe(scale, unit, risk, config.weibull_shape, censor_time)

    width = max(4, len(str(n - 1)))
    records = []
    for i in range(n):
        t = float(times[i])
        e = int(events[i])
        records.append(ClinicalRecord(
            patient_id=f"P{i:0{width}d}",
            age=float(age[i]),
            bmi=float(bmi[i]),
            income=float(income[i]),
            sex=str(sex[i]),
            treatment=str(treatment[i]),
            grade=int(grade[i]),
            location=LOCATIONS[int(location[i])],
            time_months=t,
            event=e,
            label5y=five_year_label(t, e),
            burden=float(burden[i]),
        ))
    return records


# --------------------------------------------------------------------------
# bags
# --------------------------------------------------------------------------

def generate_bag(record: ClinicalRecord, config: CohortConfig, rng: np.random.Generator) -> PatchFeatureBag:
    morph_proto, generic_proto = class_prototypes(config)
    n = int(rng.integers(config.patches_min, config.patches_max + 1))
    burden = float(np.clip(record.burden, 0.0, 1.0))
    is_risk = rng.random(n) < burden
    risk_mix = rng.uniform(0.3, 0.7)
    risk_pick = np.where(rng.random(n) < risk_mix, RISK_CLASSES[0], RISK_CLASSES[1])
    others = np.array([c for c in range(N_CLASSES) if c not in RISK_CLASSES])
    other_mix = rng.dirichlet(np.full(others.size, config.mixture_concentration))
    other_pick = others[rng.choice(others.size, size=n, p=other_mix)]
    classes = np.where(is_risk, risk_pick, other_pick).astype(np.int64)
    morph = morph_proto[classes] + config.noise_sd * rng.standard_normal((n, config.d_m))
    generic = generic_proto[classes] + config.noise_sd * rng.standard_normal((n, config.d_g))
    return PatchFeatureBag(record.patient_id, generic, morph, classes)


def bag_risk_fraction(bag: PatchFeatureBag) -> float:
    return float(np.isin(bag.patch_class, RISK_CLASSES).mean())


def generate_cohort(config: CohortConfig) -> Cohort:
    records = generate_clinical(config)
    bags = {}
    for r in records:
        bags[r.patient_id] = generate_bag(r, config, make_rng(config.seed, "bag", r.patient_id))
    return Cohort(config, records, bags)


# --------------------------------------------------------------------------
# persistence
# --------------------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def clinical_to_csv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CLINICAL_HEADER)
    for r in records:
        w.writerow([
            r.patient_id, _fmt(r.age), _fmt(r.bmi), _fmt(r.income), r.sex, r.treatment,
            r.grade, r.location, _fmt(r.time_months), r.event,
            "NA" if r.label5y is None else r.label5y,
        ])
    return buf.getvalue()


def read_clinical_csv(path) -> list:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise PrismIOError(f"{path}: {exc}") from exc
    rows = list(csv.DictReader(io.StringIO(text)))
    if not rows and not text.startswith(",".join(CLINICAL_HEADER)):
        raise PrismIOError(f"{path}: missing header")
    out = []
    for row in rows:
        try:
            label = row["label5y"]
            out.append(ClinicalRecord(
                patient_id=row["patient_id"],
                age=float(row["age"]),
                bmi=float(row["bmi"]),
                income=float(row["income"]),
                sex=row["sex"],
                treatment=row["treatment"],
                grade=int(row["grade"]),
                location=row["location"],
                time_months=float(row["time_months"]),
                event=int(row["event"]),
                label5y=None if label in ("", "NA") else int(label),
            ))
        except (KeyError, ValueError) as exc:
            raise PrismIOError(f"{path}: malformed row {row!r}: {exc}") from exc
    return out


def _sha(blob: bytes) -> str:
    return hashlib.sha256(blob).hexdigest()


def cohort_save(cohort: Cohort, directory) -> dict:
    """Write the cohort; returns the manifest dict that was saved."""
    root = Path(directory)
    try:
        (root / "bags").mkdir(parents=True, exist_ok=True)
        files = {}
        blob = clinical_to_csv(cohort.records).encode("utf-8")
        (root / "clinical.csv").write_bytes(blob)
        files["clinical.csv"] = _sha(blob)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["patient_id", "burden"])
        for r in cohort.records:
            w.writerow([r.patient_id, repr(float(r.burden))])
        blob = buf.getvalue().encode("utf-8")
        (root / "latent.csv").write_bytes(blob)
        files["latent.csv"] = _sha(blob)
        for r in cohort.records:
            bag = cohort.bags[r.patient_id]
            blob = encode_tensor(bag.generic) + encode_tensor(bag.morph) + encode_tensor(bag.patch_class)
            rel = f"bags/{r.patient_id}.bag"
            (root / rel).write_bytes(blob)
            files[rel] = _sha(blob)
        manifest = {
            "kind": "cohort",
            "config": cohort.config.to_dict(),
            "seed": cohort.config.seed,
            "n_patients": len(cohort.records),
            "patients": [r.patient_id for r in cohort.records],
            "files": files,
        }
        (root / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as exc:
        raise PrismIOError(f"{root}: {exc}") from exc
    return manifest


def _read_checked(root: Path, rel: str, files: dict) -> bytes:
    path = root / rel
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise PrismIOError(f"{path}: {exc}") from exc
    expected = files.get(rel)
    if expected is None:
        raise PrismIOError(f"{path}: not listed in manifest")
    if _sha(blob) != expected:
        raise PrismIOError(f"{path}: content hash mismatch")
    return blob


def cohort_load(directory) -> Cohort:
    root = Path(directory)
    mpath = root / "manifest.json"
    try:
        manifest = json.loads(mpath.read_text(encoding="utf-8"))
    except OSError as exc:
        raise PrismIOError(f"{mpath}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise PrismIOError(f"{mpath}: corrupt JSON ({exc})") from exc
    files = manifest.get("files", {})
    config = CohortConfig.from_dict(manifest["config"])
    _read_checked(root, "clinical.csv", files)
    records = read_clinical_csv(root / "clinical.csv")
    latent_blob = _read_checked(root, "latent.csv", files).decode("utf-8")
    burden = {row["patient_id"]: float(row["burden"]) for row in csv.DictReader(io.StringIO(latent_blob))}
    for r in records:
        r.burden = burden.get(r.patient_id, float("nan"))
    if len(records) != manifest.get("n_patients"):
        raise PrismIOError(f"{mpath}: n_patients does not match clinical.csv")
    bags = {}
    for r in records:
        rel = f"bags/{r.patient_id}.bag"
        blob = _read_checked(root, rel, files)
        parts = decode_tensors(blob, str(root / rel))
        if len(parts) != 3:
            raise PrismIOError(f"{root / rel}: expected 3 tensors, found {len(parts)}")
        bags[r.patient_id] = PatchFeatureBag(r.patient_id, parts[0], parts[1], parts[2])
    return Cohort(config, records, bags)
