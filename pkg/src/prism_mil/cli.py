"""Command-line entry point: ``prism <subcommand> [options]``.

Every stage writes ``manifest.json`` into its output directory with the
config echo, tool version, seed, input hashes and output hashes. Paths in
the manifest are relative to the output directory and no wall-clock values
are stored there, so reruns produce byte-identical manifests; stage timings
go to ``timings.json`` instead.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .cohortgen import CohortConfig, cohort_load, cohort_save, generate_cohort, generate_patches, read_clinical_csv
from .errors import ConfigError, DataError, PrismError, PrismIOError
from .milattn import (
    PrismHyper,
    export_attention,
    predictions_to_csv,
    save_checkpoint,
    train_prism,
)
from .morphclass import MorphTrainConfig, extract_morph_features, load_head, save_head, train_morph
from .numcore import make_rng
from .stratcv import assign_clusters, assign_strata, audit_report, folds_to_csv, make_folds, naive_folds, split_roles
from .survstats import (
    concordance_index,
    confusion_metrics,
    cox_fit,
    dichotomized_cox,
    kaplan_meier,
    roc_auc,
    wilcoxon_signed_rank,
)
from .svg import km_svg
from .tensorio import file_sha256

log = logging.getLogger("prism")

CV_MODES = ("stratified", "naive", "kmeans")
SUBGROUP_COLUMNS = ("sex", "treatment", "grade", "location")
METRICS = ("auc", "accuracy", "sensitivity", "specificity")


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------

def _from_dict(cls, data, where):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


@dataclass
class ModelDims:
    rank: int = 8
    d: int = 16
    hidden: int = 8


@dataclass
class HyperConfig:
    lr: float = 2e-5
    l1: float = 5e-4
    epochs: int = 50
    k: int = 5
    selection: str = "auc"
    threshold: float = 0.5


@dataclass
class MorphConfig:
    h1: int = 32
    h2: int = 16
    lr: float = 1e-3
    epochs: int = 100
    patience: int = 10
    batch_size: int = 32
    n_per_class: int = 200


@dataclass
class RunConfig:
    seed: int = 0
    cohort: CohortConfig = field(default_factory=CohortConfig)
    model: ModelDims = field(default_factory=ModelDims)
    hyper: HyperConfig = field(default_factory=HyperConfig)
    morph: MorphConfig = field(default_factory=MorphConfig)
    cv_mode: str = "stratified"
    fusion_mode: str = "factorized"
    kmeans_k: int = 4
    subgroup_columns: list = field(default_factory=lambda: list(SUBGROUP_COLUMNS))

    def __post_init__(self):
        if self.cv_mode not in CV_MODES:
            raise ConfigError(f"cv_mode must be one of {CV_MODES}, got {self.cv_mode!r}")
        bad = sorted(set(self.subgroup_columns) - set(SUBGROUP_COLUMNS))
        if bad:
            raise ConfigError(f"unknown subgroup columns {bad}")
        if not 0.0 <= self.hyper.threshold <= 1.0:
            raise ConfigError("threshold must lie in [0, 1]")
        # one root seed drives every stage
        self.cohort = dataclasses.replace(self.cohort, seed=self.seed)
        self.prism_hyper()

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("run config: expected a JSON object")
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ConfigError(f"run config: unknown keys {unknown}")
        kw = dict(data)
        if "cohort" in kw:
            kw["cohort"] = CohortConfig.from_dict(kw["cohort"])
        for key, sub in (("model", ModelDims), ("hyper", HyperConfig), ("morph", MorphConfig)):
            if key in kw:
                kw[key] = _from_dict(sub, kw[key], key)
        try:
            return cls(**kw)
        except TypeError as exc:
            raise ConfigError(f"run config: {exc}") from exc

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["cohort"] = self.cohort.to_dict()
        return out

    def prism_hyper(self) -> PrismHyper:
        return PrismHyper(lr=self.hyper.lr, l1=self.hyper.l1, epochs=self.hyper.epochs, seed=self.seed,
                          rank=self.model.rank, d=self.model.d, hidden=self.model.hidden,
                          fusion_mode=self.fusion_mode, selection=self.hyper.selection)

    def morph_config(self) -> MorphTrainConfig:
        m = self.morph
        return MorphTrainConfig(h1=m.h1, h2=m.h2, lr=m.lr, epochs=m.epochs, patience=m.patience,
                                batch_size=m.batch_size, seed=self.seed)


def load_run_config(args) -> RunConfig:
    data = {}
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except OSError as exc:
            raise PrismIOError(f"{args.config}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{args.config}: invalid JSON ({exc})") from exc
    cfg = RunConfig.from_dict(data)
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.cv_mode is not None:
        over["cv_mode"] = args.cv_mode
    if args.fusion_mode is not None:
        over["fusion_mode"] = args.fusion_mode
    cohort_over = {}
    if getattr(args, "n", None) is not None:
        cohort_over["n_patients"] = args.n
    if getattr(args, "signal", None) is not None:
        cohort_over["signal_strength"] = args.signal
    if getattr(args, "epochs", None) is not None:
        over["hyper"] = dataclasses.replace(cfg.hyper, epochs=args.epochs)
    if cohort_over:
        try:
            over["cohort"] = dataclasses.replace(cfg.cohort, **cohort_over)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    return dataclasses.replace(cfg, **over) if over else cfg


# --------------------------------------------------------------------------
# output plumbing
# --------------------------------------------------------------------------

class Stage:
    """Output directory guard, file writer and manifest builder for one stage."""

    def __init__(self, name: str, out: Path, force: bool, config: Optional[RunConfig] = None):
        self.name, self.out, self.config = name, Path(out), config
        if self.out.exists() and any(self.out.iterdir()) and not force:
            raise ConfigError(f"{self.out}: output directory is not empty (use --force)")
        try:
            self.out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise PrismIOError(f"{self.out}: {exc}") from exc
        self.inputs, self.outputs, self.timings = {}, {}, {}
        self._t0 = time.perf_counter()

    def add_input(self, label: str, path):
        self.inputs[label] = file_sha256(path)

    def write(self, rel: str, content):
        path = self.out / rel
        blob = content.encode("utf-8") if isinstance(content, str) else content
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_bytes(blob)
        except OSError as exc:
            raise PrismIOError(f"{path}: {exc}") from exc
        self.outputs[rel] = file_sha256(path)
        return path

    def record(self, rel: str):
        self.outputs[rel] = file_sha256(self.out / rel)

    def tick(self, label: str):
        now = time.perf_counter()
        self.timings[label] = round(now - self._t0, 3)
        self._t0 = now

    def finish(self, extra: Optional[dict] = None) -> dict:
        manifest = {
            "stage": self.name,
            "tool": "prism-mil",
            "version": __version__,
            "run_config": self.config.to_dict() if self.config else None,
            "seed": self.config.seed if self.config else None,
            "inputs": dict(sorted(self.inputs.items())),
            "outputs": dict(sorted(self.outputs.items())),
        }
        if extra:
            manifest.update(extra)
        text = json.dumps(manifest, indent=2, sort_keys=True) + "\n"
        try:
            (self.out / "manifest.json").write_text(text, encoding="utf-8")
            (self.out / "timings.json").write_text(json.dumps(self.timings, indent=2, sort_keys=True) + "\n",
                                                   encoding="utf-8")
        except OSError as exc:
            raise PrismIOError(f"{self.out}: {exc}") from exc
        return manifest


def _staged(label: str, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except PrismError as exc:
        raise type(exc)(f"[{label}] {exc}") from exc


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _fmt(x) -> str:
    if x is None or (isinstance(x, float) and not np.isfinite(x)):
        return "n/a"
    return f"{x:.6f}"


# --------------------------------------------------------------------------
# generate / folds / train-morph / train
# --------------------------------------------------------------------------

def cmd_generate(cfg: RunConfig, out, force=False) -> dict:
    stage = Stage("generate", out, force, cfg)
    cohort = _staged("generate", generate_cohort, cfg.cohort)
    stage.tick("generate")
    saved = cohort_save(cohort, stage.out)
    stage.outputs.update(saved["files"])
    stage.tick("write")
    # cohort_load reads "config", "n_patients" and "files"
    extra = {k: saved[k] for k in ("kind", "config", "n_patients", "patients", "files")}
    return stage.finish(extra)


def _build_folds(cfg: RunConfig, records):
    if cfg.cv_mode == "naive":
        return naive_folds(records, cfg.hyper.k, cfg.seed)
    strata = assign_clusters(records, cfg.kmeans_k, cfg.seed) if cfg.cv_mode == "kmeans" else assign_strata(records)
    return make_folds(strata, cfg.hyper.k, cfg.seed)


def _load_cohort(stage: Stage, cohort_dir):
    cohort = _staged("load", cohort_load, cohort_dir)
    stage.add_input("cohort/manifest.json", Path(cohort_dir) / "manifest.json")
    return cohort


def cmd_folds(cfg: RunConfig, cohort_dir, out, force=False) -> dict:
    stage = Stage("folds", out, force, cfg)
    cohort = _load_cohort(stage, cohort_dir)
    folds = _staged("folds", _build_folds, cfg, cohort.records)
    stage.write("folds.csv", folds_to_csv(folds, split_roles(folds, 0)))
    stage.write("audit.json", json.dumps(audit_report(folds, cohort.records), indent=2, sort_keys=True) + "\n")
    stage.tick("folds")
    return stage.finish()


def _train_head(cfg: RunConfig, cohort_config: CohortConfig):
    X, y = generate_patches(cohort_config, cfg.morph.n_per_class, make_rng(cfg.seed, "morph", "patches"))
    return train_morph(X, y, cfg.morph_config())


def cmd_train_morph(cfg: RunConfig, cohort_dir, out, force=False) -> dict:
    stage = Stage("train-morph", out, force, cfg)
    cohort = _load_cohort(stage, cohort_dir)
    head, report = _staged("train-morph", _train_head, cfg, cohort.config)
    stage.tick("train")
    save_head(head, stage.out / "morph_head.bin", cfg.morph_config(), report)
    stage.record("morph_head.bin")
    stage.record("morph_head.bin.json")
    summary = {k: v for k, v in report.to_dict().items() if not k.endswith("history")}
    stage.write("morph_report.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return stage.finish()


def _threads(k: int) -> int:
    raw = os.environ.get("PRISM_THREADS", "1")
    try:
        n = int(raw)
    except ValueError as exc:
        raise ConfigError(f"PRISM_THREADS must be an integer, got {raw!r}") from exc
    return max(1, min(n, k))


def cmd_train(cfg: RunConfig, cohort_dir, out, force=False, morph_head=None) -> dict:
    stage = Stage("train", out, force, cfg)
    cohort = _load_cohort(stage, cohort_dir)
    folds = _staged("folds", _build_folds, cfg, cohort.records)
    stage.write("folds.csv", folds_to_csv(folds, {}))
    stage.tick("folds")
    if morph_head:
        head = _staged("morph", load_head, morph_head)
        stage.add_input("morph_head", morph_head)
    else:
        head, report = _staged("morph", _train_head, cfg, cohort.config)
        save_head(head, stage.out / "morph_head.bin", cfg.morph_config(), report)
        stage.record("morph_head.bin")
        stage.record("morph_head.bin.json")
    stage.tick("morph")
    result = _staged("train", train_prism, cohort, folds, cfg.prism_hyper(),
                     morph_fn=lambda m: extract_morph_features(head, m), threads=_threads(folds.k))
    stage.tick("train")
    for fr in result.folds:
        rel = f"checkpoints/fold{fr.fold}.ckpt"
        (stage.out / "checkpoints").mkdir(exist_ok=True)
        save_checkpoint(fr.model, stage.out / rel, fold=fr.fold,
                        extra={"seed": cfg.seed, "best_epoch": fr.best_epoch})
        stage.record(rel)
        stage.record(rel + ".json")
    stage.write("predictions.csv", predictions_to_csv(result.predictions, cohort.records))
    export_attention(result.predictions, cohort.bags, stage.out / "attention.csv")
    stage.record("attention.csv")
    history = [
        {"fold": fr.fold, "best_epoch": fr.best_epoch, "val": fr.val_history, "train_loss": fr.train_loss}
        for fr in result.folds
    ]
    stage.write("history.json", json.dumps(history, indent=2) + "\n")
    stage.tick("write")
    return stage.finish()


# --------------------------------------------------------------------------
# evaluation
# --------------------------------------------------------------------------

@dataclass
class PredictionRow:
    patient_id: str
    fold: int
    prob: float
    label5y: Optional[int]
    time_months: float
    event: int


def read_predictions(path) -> list:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise PrismIOError(f"{path}: {exc}") from exc
    rows = []
    for i, row in enumerate(csv.DictReader(io.StringIO(text)), start=2):
        try:
            rows.append(PredictionRow(row["patient_id"], int(row["fold"]), float(row["prob"]),
                                      None if row["label5y"] in ("", "NA") else int(row["label5y"]),
                                      float(row["time_months"]), int(row["event"])))
        except (KeyError, ValueError) as exc:
            raise DataError(f"{path}, line {i}: {exc}") from exc
    if not rows:
        raise DataError(f"{path}: no predictions")
    return rows


def fold_metrics(rows, threshold=0.5) -> Optional[dict]:
    """AUC and confusion metrics for classifiable rows; None for a single class."""
    lab = [(r.prob, r.label5y) for r in rows if r.label5y is not None]
    ys = {y for _, y in lab}
    if ys != {0, 1}:
        return None
    probs, labels = zip(*lab)
    m = confusion_metrics(probs, labels, threshold)
    return {"n": len(lab), "auc": roc_auc(probs, labels), "accuracy": m.accuracy,
            "sensitivity": m.sensitivity, "specificity": m.specificity}


def _mean_sd(values):
    vals = [v for v in values if v is not None]
    if not vals:
        return None, None
    sd = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
    return float(np.mean(vals)), sd


def metrics_table(rows, threshold=0.5) -> str:
    folds = sorted({r.fold for r in rows})
    out, per = [], []
    for f in folds:
        m = fold_metrics([r for r in rows if r.fold == f], threshold)
        per.append(m)
        if m is None:
            out.append([f, sum(r.fold == f for r in rows)] + ["n/a"] * len(METRICS))
        else:
            out.append([f, m["n"]] + [_fmt(m[k]) for k in METRICS])
    mean_row, sd_row = ["mean", ""], ["sd", ""]
    for k in METRICS:
        mu, sd = _mean_sd([m[k] if m else None for m in per])
        mean_row.append(_fmt(mu))
        sd_row.append(_fmt(sd))
    return _csv_text(["fold", "n"] + list(METRICS), out + [mean_row, sd_row])


def subgroup_table(rows, records, column: str, threshold=0.5) -> str:
    values = {r.patient_id: str(getattr(r, column)) for r in records}
    groups = sorted({values[r.patient_id] for r in rows if r.patient_id in values})
    header = ["column", "value", "n"] + [f"{k}_{s}" for k in METRICS for s in ("mean", "sd")]
    out = []
    for g in groups:
        sub = [r for r in rows if values.get(r.patient_id) == g]
        per = [fold_metrics([r for r in sub if r.fold == f], threshold) for f in sorted({r.fold for r in sub})]
        line = [column, g, len(sub)]
        for k in METRICS:
            mu, sd = _mean_sd([m[k] if m else None for m in per])
            line += [_fmt(mu), _fmt(sd)]
        out.append(line)
    return _csv_text(header, out)


def _curve_csv(curve) -> str:
    return _csv_text(["time_months", "at_risk", "deaths", "survival"],
                     [[repr(float(t)), int(n), int(d), repr(float(s))]
                      for t, n, d, s in zip(curve.times, curve.at_risk, curve.deaths, curve.survival)])


def survival_outputs(stage: Stage, rows, km=True, cox=True):
    probs = [r.prob for r in rows]
    times = [r.time_months for r in rows]
    events = [r.event for r in rows]
    res = _staged("cox", dichotomized_cox, probs, times, events)
    if cox:
        doc = {
            "dichotomized": {**res.fit.to_dict(), "cut": res.cut, "n_high": int(np.sum(res.high)),
                             "n_low": int(np.size(res.high) - np.sum(res.high))},
            "continuous": cox_fit(probs, times, events).to_dict(),
            "c_index": concordance_index(probs, times, events),
        }
        stage.write("cox.json", json.dumps(doc, indent=2, sort_keys=True, default=float) + "\n")
    if km:
        stage.write("km_low.csv", _curve_csv(res.km_low))
        stage.write("km_high.csv", _curve_csv(res.km_high))
        stage.write("km.svg", km_svg([("low risk", res.km_low), ("high risk", res.km_high)],
                                     title="Kaplan-Meier by predicted risk"))
        stage.write("km_all.csv", _curve_csv(kaplan_meier(times, events)))


def cmd_evaluate(cfg: RunConfig, predictions, clinical, out, force=False, group_by=None) -> dict:
    stage = Stage("evaluate", out, force, cfg)
    rows = read_predictions(predictions)
    stage.add_input("predictions", predictions)
    threshold = cfg.hyper.threshold
    stage.write("metrics.csv", metrics_table(rows, threshold))
    columns = cfg.subgroup_columns if group_by is None else group_by
    if columns:
        records = read_clinical_csv(clinical)
        stage.add_input("clinical", clinical)
        for col in columns:
            if col not in SUBGROUP_COLUMNS:
                raise ConfigError(f"unknown subgroup column {col!r}")
            stage.write(f"subgroup_{col}.csv", subgroup_table(rows, records, col, threshold))
    survival_outputs(stage, rows)
    stage.tick("evaluate")
    return stage.finish()


def cmd_km(cfg: RunConfig, predictions, out, force=False) -> dict:
    stage = Stage("km", out, force, cfg)
    stage.add_input("predictions", predictions)
    survival_outputs(stage, read_predictions(predictions), km=True, cox=False)
    return stage.finish()


def cmd_cox(cfg: RunConfig, predictions, out, force=False) -> dict:
    stage = Stage("cox", out, force, cfg)
    stage.add_input("predictions", predictions)
    survival_outputs(stage, read_predictions(predictions), km=False, cox=True)
    return stage.finish()


def read_metrics(path) -> dict:
    """Per-fold metric columns from a metrics CSV (summary rows skipped)."""
    path = Path(path)
    try:
        rows = list(csv.DictReader(io.StringIO(path.read_text(encoding="utf-8"))))
    except OSError as exc:
        raise PrismIOError(f"{path}: {exc}") from exc
    per = {}
    for row in rows:
        if row.get("fold") in ("mean", "sd"):
            continue
        try:
            per[int(row["fold"])] = {k: (None if row[k] == "n/a" else float(row[k])) for k in METRICS}
        except (KeyError, ValueError) as exc:
            raise DataError(f"{path}: malformed row {row}") from exc
    return per


def cmd_compare(cfg: RunConfig, metrics_a, metrics_b, out, force=False) -> dict:
    stage = Stage("compare", out, force, cfg)
    a, b = read_metrics(metrics_a), read_metrics(metrics_b)
    stage.add_input("metrics_a", metrics_a)
    stage.add_input("metrics_b", metrics_b)
    if sorted(a) != sorted(b):
        raise DataError(f"compare: folds differ ({sorted(a)} vs {sorted(b)})")
    report = {}
    for k in METRICS:
        pairs = [(a[f][k], b[f][k]) for f in sorted(a) if a[f][k] is not None and b[f][k] is not None]
        res = _staged(f"compare {k}", wilcoxon_signed_rank, [p for p, _ in pairs], [q for _, q in pairs])
        report[k] = {"statistic": res.statistic, "p_value": res.p_value, "n": res.n, "method": res.method}
    stage.write("wilcoxon.json", json.dumps(report, indent=2, sort_keys=True) + "\n")
    return stage.finish()


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="RunConfig JSON file")
    common.add_argument("--seed", type=int, help="root seed (overrides the config)")
    common.add_argument("--out", required=True, help="output directory")
    common.add_argument("--force", action="store_true", help="allow a non-empty output directory")
    common.add_argument("--cv-mode", choices=CV_MODES)
    common.add_argument("--fusion-mode", choices=("exact", "factorized"))
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="prism", description="Fused-feature attention MIL for survival prediction.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", parents=[common], help="generate a synthetic cohort")
    p.add_argument("--n", type=int, help="number of patients")
    p.add_argument("--signal", type=float, help="planted signal strength")

    p = sub.add_parser("folds", parents=[common], help="build and audit CV folds")
    p.add_argument("--cohort", required=True)

    p = sub.add_parser("train-morph", parents=[common], help="train the morphology classifier")
    p.add_argument("--cohort", required=True)

    p = sub.add_parser("train", parents=[common], help="cross-validated PRISM training")
    p.add_argument("--cohort", required=True)
    p.add_argument("--morph-head", help="reuse a trained morphology classifier")
    p.add_argument("--epochs", type=int)

    p = sub.add_parser("evaluate", parents=[common], help="metrics, subgroup tables, KM and Cox outputs")
    p.add_argument("--predictions", required=True)
    p.add_argument("--clinical", required=True)
    p.add_argument("--group-by", nargs="*", choices=SUBGROUP_COLUMNS)

    for name, text in (("km", "Kaplan-Meier curves by predicted risk group"),
                       ("cox", "Cox model on predicted risk")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--predictions", required=True)

    p = sub.add_parser("compare", parents=[common], help="paired Wilcoxon test of two metrics tables")
    p.add_argument("metrics_a")
    p.add_argument("metrics_b")
    return parser


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    cfg = load_run_config(args)
    cmd = args.command
    if cmd == "generate":
        cmd_generate(cfg, args.out, args.force)
    elif cmd == "folds":
        cmd_folds(cfg, args.cohort, args.out, args.force)
    elif cmd == "train-morph":
        cmd_train_morph(cfg, args.cohort, args.out, args.force)
    elif cmd == "train":
        cmd_train(cfg, args.cohort, args.out, args.force, args.morph_head)
    elif cmd == "evaluate":
        cmd_evaluate(cfg, args.predictions, args.clinical, args.out, args.force, args.group_by)
    elif cmd == "km":
        cmd_km(cfg, args.predictions, args.out, args.force)
    elif cmd == "cox":
        cmd_cox(cfg, args.predictions, args.out, args.force)
    elif cmd == "compare":
        cmd_compare(cfg, args.metrics_a, args.metrics_b, args.out, args.force)
    return 0


def main(argv=None) -> int:
    try:
        return run(argv)
    except PrismError as exc:
        print(f"prism: error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
