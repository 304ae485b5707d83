"""Gated-attention MIL pooling, slide-level head and the training loop.

Per patch ``k`` with fused feature ``f_k``::

    e_k = W^T (tanh(V^T f_k) * sigm(U^T f_k))
    a   = softmax(e)            over the patches of one slide
    Z   = sum_k a_k f_k
    p   = sigm(head_w^T Z + head_b)

The loss per slide is binary cross-entropy plus ``l1 * sum|theta|`` over
every learnable parameter. One Adam step per slide.
"""
from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import kernels
from .errors import ConfigError, DataError, DimensionError, NumericError, PrismIOError
from .fusion import MODES, FusionParams, fuse_bag
from .numcore import AdamState, ParamTensor, adam_step, make_rng, xavier_uniform_init
from .stratcv import FoldAssignment, split_roles
from .survstats import roc_auc
from .tensorio import load_tensors, save_tensors

log = logging.getLogger(__name__)

PARAM_NAMES = ("W_g", "W_m", "W_fusion", "V", "U", "W", "head_w", "head_b")


@dataclass
class AttentionParams:
    V: np.ndarray
    U: np.ndarray
    W: np.ndarray

    def __post_init__(self):
        d, l = self.V.shape
        if self.U.shape != (d, l) or self.W.shape != (l, 1):
            raise DimensionError(f"attention shapes V{self.V.shape} U{self.U.shape} W{self.W.shape} inconsistent")

    @property
    def hidden(self) -> int:
        return self.V.shape[1]


@dataclass
class PrismHyper:
    lr: float = 2e-5
    l1: float = 5e-4
    epochs: int = 50
    seed: int = 0
    rank: int = 8
    d: int = 16
    hidden: int = 8
    fusion_mode: str = "factorized"
    selection: str = "auc"
    patience: Optional[int] = None
    batch_size: int = 1
    standardize: bool = True

    def __post_init__(self):
        if self.fusion_mode not in MODES:
            raise ConfigError(f"unknown fusion mode {self.fusion_mode!r}")
        if self.selection not in ("auc", "loss"):
            raise ConfigError(f"unknown selection metric {self.selection!r}")
        if self.batch_size != 1:
            raise ConfigError("only batch size 1 is supported")
        if self.lr <= 0 or self.l1 < 0 or self.epochs < 1:
            raise ConfigError("lr must be > 0, l1 >= 0, epochs >= 1")
        if min(self.rank, self.d, self.hidden) < 1:
            raise ConfigError("rank, d and hidden must be >= 1")


@dataclass
class FeatureScaler:
    """Per-column z-scoring of the generic and morphology channels.

    Fitted on the patches of the training patients of one fold and stored
    with the model, so held-out bags are scaled with training statistics.
    """
    g_mean: np.ndarray
    g_sd: np.ndarray
    m_mean: np.ndarray
    m_sd: np.ndarray

    @classmethod
    def fit(cls, pairs) -> "FeatureScaler":
        G = np.concatenate([g for g, _ in pairs])
        M = np.concatenate([m for _, m in pairs])
        # constant columns keep unit scale
        gsd, msd = G.std(0), M.std(0)
        return cls(G.mean(0), np.where(gsd > 1e-12, gsd, 1.0), M.mean(0), np.where(msd > 1e-12, msd, 1.0))

    def apply(self, G, M):
        return (np.ascontiguousarray((G - self.g_mean) / self.g_sd),
                np.ascontiguousarray((M - self.m_mean) / self.m_sd))

    def arrays(self) -> tuple:
        return self.g_mean, self.g_sd, self.m_mean, self.m_sd


class PrismModel:
    """All learnable parameters, stored in one flat float64 vector.

    Each named parameter is a C-contiguous view into ``theta`` so the
    optimiser updates everything with a single vector operation.
    """

    def __init__(self, d_g: int, d_m: int, hyper: PrismHyper, theta: Optional[np.ndarray] = None):
        self.d_g, self.d_m, self.hyper = d_g, d_m, hyper
        r, d, l = hyper.rank, hyper.d, hyper.hidden
        width = r * r if hyper.fusion_mode == "exact" else r
        self.shapes = {
            "W_g": (d_g, r), "W_m": (d_m, r), "W_fusion": (width, d),
            "V": (d, l), "U": (d, l), "W": (l, 1), "head_w": (d, 1), "head_b": (1, 1),
        }
        size = sum(int(np.prod(s)) for s in self.shapes.values())
        if theta is None:
            theta = np.zeros(size)
        theta = np.ascontiguousarray(theta, dtype=np.float64)
        if theta.shape != (size,):
            raise DimensionError(f"theta has shape {theta.shape}, model needs ({size},)")
        self.theta = theta
        self.scaler: Optional[FeatureScaler] = None
        self.views = {}
        off = 0
        for name in PARAM_NAMES:
            k = int(np.prod(self.shapes[name]))
            self.views[name] = theta[off:off + k].reshape(self.shapes[name])
            off += k

    @classmethod
    def init(cls, d_g: int, d_m: int, hyper: PrismHyper, rng) -> "PrismModel":
        model = cls(d_g, d_m, hyper)
        for name in PARAM_NAMES[:-1]:
            model.views[name][...] = xavier_uniform_init(*model.shapes[name], rng)
        return model

    def copy(self) -> "PrismModel":
        out = PrismModel(self.d_g, self.d_m, self.hyper, self.theta.copy())
        out.scaler = self.scaler
        return out

    def prepare(self, G, M):
        """Raw bag features -> the inputs the fused network sees."""
        G = np.ascontiguousarray(G, dtype=np.float64)
        M = np.ascontiguousarray(M, dtype=np.float64)
        return self.scaler.apply(G, M) if self.scaler is not None else (G, M)

    def arrays(self) -> tuple:
        return tuple(self.views[n] for n in PARAM_NAMES)

    @property
    def fusion(self) -> FusionParams:
        v = self.views
        return FusionParams(v["W_g"], v["W_m"], v["W_fusion"], self.hyper.fusion_mode)

    @property
    def attention(self) -> AttentionParams:
        v = self.views
        return AttentionParams(v["V"], v["U"], v["W"])

    def l1_norm(self) -> float:
        return float(np.abs(self.theta).sum())


@dataclass
class SlidePrediction:
    patient_id: str
    probability: float
    attention: np.ndarray
    slide_repr: np.ndarray
    logit: float = 0.0


# --------------------------------------------------------------------------
# building blocks
# --------------------------------------------------------------------------

def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def attention_scores(F, params: AttentionParams) -> np.ndarray:
    F = np.asarray(F, dtype=np.float64)
    if F.ndim != 2:
        raise DimensionError(f"attention_scores: expected n x d, got {F.shape}")
    if F.shape[0] == 0:
        raise DataError("attention_scores: empty bag")
    if F.shape[1] != params.V.shape[0]:
        raise DimensionError(f"attention_scores: features have dim {F.shape[1]}, V expects {params.V.shape[0]}")
    e = (np.tanh(F @ params.V) * _sigmoid(F @ params.U)) @ params.W[:, 0]
    e = np.exp(e - e.max())
    return e / e.sum()


def aggregate(F, a) -> np.ndarray:
    F = np.asarray(F, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 1 or F.ndim != 2 or a.shape[0] != F.shape[0]:
        raise DimensionError(f"aggregate: {a.shape} weights for {F.shape} features")
    return a @ F


def _check_bag(model: PrismModel, G, M, pid):
    if G.shape[0] == 0:
        raise DataError(f"bag {pid}: empty")
    if G.shape[1] != model.d_g or M.shape[1] != model.d_m:
        raise DimensionError(
            f"bag {pid}: feature dims ({G.shape[1]}, {M.shape[1]}) != model ({model.d_g}, {model.d_m})")


def forward_slide(model: PrismModel, bag, morph: Optional[np.ndarray] = None) -> SlidePrediction:
    """Score one bag. ``morph`` overrides ``bag.morph`` (extracted features)."""
    G = np.ascontiguousarray(bag.generic, dtype=np.float64)
    M = np.ascontiguousarray(bag.morph if morph is None else morph, dtype=np.float64)
    _check_bag(model, G, M, bag.patient_id)
    G, M = model.prepare(G, M)
    logit, a, Z, _ = kernels.slide_forward_backward(
        G, M, *model.arrays(), 0.0, model.hyper.fusion_mode == "exact", False)
    return SlidePrediction(bag.patient_id, float(_sigmoid(logit)), np.asarray(a), np.asarray(Z), float(logit))


def forward_slide_reference(model: PrismModel, bag, morph=None) -> SlidePrediction:
    """Same computation through the public per-stage functions (slow path)."""
    if model.scaler is not None:
        G, M = model.prepare(bag.generic, bag.morph if morph is None else morph)
        bag, morph = dataclasses.replace(bag, generic=G, morph=M), None
    F = fuse_bag(bag, model.fusion, morph)
    a = attention_scores(F, model.attention)
    Z = aggregate(F, a)
    logit = float(Z @ model.views["head_w"][:, 0] + model.views["head_b"][0, 0])
    return SlidePrediction(bag.patient_id, float(_sigmoid(logit)), a, Z, logit)


def bce_with_logit(logit: float, y: float) -> float:
    # log(1 + e^s) - y s, stable for large |s|
    return float(np.logaddexp(0.0, logit) - y * logit)


def slide_loss_grad(model: PrismModel, G, M, y: float, l1: Optional[float] = None):
    """Penalised loss and its gradient as a flat vector aligned with ``theta``."""
    l1 = model.hyper.l1 if l1 is None else l1
    logit, _, _, grads = kernels.slide_forward_backward(
        G, M, *model.arrays(), float(y), model.hyper.fusion_mode == "exact", True)
    grad = np.concatenate([g.reshape(-1) for g in grads])
    loss = bce_with_logit(logit, y) + l1 * float(np.abs(model.theta).sum())
    if l1:
        grad += l1 * np.sign(model.theta)
    return loss, grad


def model_param_tensors(model: PrismModel) -> list:
    """ParamTensors sharing storage with the model, one per named parameter."""
    out = []
    for name in PARAM_NAMES:
        pt = ParamTensor.__new__(ParamTensor)
        pt.name, pt.value, pt.grad = name, model.views[name], np.zeros(model.shapes[name])
        out.append(pt)
    return out


# --------------------------------------------------------------------------
# training
# --------------------------------------------------------------------------

@dataclass
class FoldResult:
    fold: int
    model: PrismModel
    best_epoch: int
    val_history: list
    train_loss: list
    predictions: list = field(default_factory=list)
    roles: dict = field(default_factory=dict)


@dataclass
class TrainResult:
    folds: list
    predictions: list  # (patient_id, fold, SlidePrediction)


def _features(cohort, morph_fn):
    feats = {}
    for r in cohort.records:
        bag = cohort.bags[r.patient_id]
        G = np.ascontiguousarray(bag.generic, dtype=np.float64)
        M = bag.morph if morph_fn is None else morph_fn(bag.morph)
        feats[r.patient_id] = (G, np.ascontiguousarray(M, dtype=np.float64))
    return feats


def train_one(model: PrismModel, train_items, val_items, rng, epochs: Optional[int] = None,
              selection: Optional[str] = None, patience: Optional[int] = None):
    """Train ``model`` in place on ``[(G, M, y)]``; restores the best epoch.

    Returns ``(best_epoch, val_history, train_loss_history)``.
    """
    hyper = model.hyper
    epochs = hyper.epochs if epochs is None else epochs
    selection = hyper.selection if selection is None else selection
    patience = hyper.patience if patience is None else patience
    exact = hyper.fusion_mode == "exact"
    param = ParamTensor("theta", model.theta)
    param.value = model.theta  # share storage with the views
    state = AdamState(lr=hyper.lr)
    best_key, best_theta, best_epoch = (-np.inf, -np.inf), model.theta.copy(), 0
    val_history, loss_history = [], []
    val_y = np.array([y for _, _, y in val_items]) if val_items else np.array([])
    use_auc = selection == "auc" and val_y.size and 0 < val_y.sum() < val_y.size
    stale = 0
    for epoch in range(1, epochs + 1):
        total = 0.0
        for idx in rng.permutation(len(train_items)):
            G, M, y = train_items[idx]
            loss, param.grad = slide_loss_grad(model, G, M, y)
            if not np.isfinite(loss):
                raise NumericError(f"non-finite loss at epoch {epoch}")
            adam_step([param], state)
            total += loss
        loss_history.append(total / max(1, len(train_items)))
        if val_items:
            logits = np.array([
                kernels.slide_forward_backward(G, M, *model.arrays(), 0.0, exact, False)[0]
                for G, M, _ in val_items])
            neg_loss = -float(np.mean([bce_with_logit(s, y) for s, y in zip(logits, val_y)]))
            # validation AUC moves in coarse steps; ties go to the lower validation loss
            key = (roc_auc(logits, val_y), neg_loss) if use_auc else (neg_loss, 0.0)
        else:
            key = (-loss_history[-1], 0.0)
        val_history.append(key[0])
        if key > best_key:
            best_key, best_theta, best_epoch = key, model.theta.copy(), epoch
            stale = 0
        else:
            stale += 1
            if patience is not None and stale >= patience:
                break
    model.theta[...] = best_theta
    return best_epoch, val_history, loss_history


def train_prism(cohort, folds: FoldAssignment, hyper: PrismHyper,
                morph_fn: Optional[Callable] = None, fold_ids=None, threads: int = 1) -> TrainResult:
    """Cross-validated training; one model per held-out fold.

    ``morph_fn`` maps a bag's raw morphology matrix to the features fed to
    fusion (typically the truncated morphology classifier).
    """
    feats = _features(cohort, morph_fn)
    first = next(iter(feats.values()))
    d_g, d_m = first[0].shape[1], first[1].shape[1]
    records = {r.patient_id: r for r in cohort.records}
    fold_ids = list(range(folds.k)) if fold_ids is None else list(fold_ids)

    def run(k):
        roles = split_roles(folds, k)
        train_ids = [p for p in sorted(roles) if roles[p] == "train" and records[p].label5y is not None]
        val_ids = [p for p in sorted(roles) if roles[p] == "val" and records[p].label5y is not None]
        test_ids = [p for p in sorted(roles) if roles[p] == "test"]
        ys = {records[p].label5y for p in train_ids}
        if ys != {0, 1}:
            raise DataError(f"fold {k}: training split has classes {sorted(ys)}, need both")
        rng = make_rng(hyper.seed, "prism", f"fold-{k}")
        model = PrismModel.init(d_g, d_m, hyper, rng)
        if hyper.standardize:
            model.scaler = FeatureScaler.fit([feats[p] for p in sorted(roles) if roles[p] == "train"])
        train_items = [(*model.prepare(*feats[p]), float(records[p].label5y)) for p in train_ids]
        val_items = [(*model.prepare(*feats[p]), float(records[p].label5y)) for p in val_ids]
        best, hist, losses = train_one(model, train_items, val_items, rng)
        log.info("fold %d: best epoch %d, val %.4f", k, best, hist[best - 1])
        preds = []
        for p in test_ids:
            G, M = model.prepare(*feats[p])
            logit, a, Z, _ = kernels.slide_forward_backward(
                G, M, *model.arrays(), 0.0, hyper.fusion_mode == "exact", False)
            preds.append(SlidePrediction(p, float(_sigmoid(logit)), np.asarray(a), np.asarray(Z), float(logit)))
        return FoldResult(k, model, best, hist, losses, preds, roles)

    if threads > 1 and len(fold_ids) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, fold_ids))
    else:
        results = [run(k) for k in fold_ids]
    results.sort(key=lambda fr: fr.fold)
    predictions = [(p.patient_id, fr.fold, p) for fr in results for p in fr.predictions]
    return TrainResult(results, predictions)


# --------------------------------------------------------------------------
# persistence and exports
# --------------------------------------------------------------------------

def save_checkpoint(model: PrismModel, path, fold: Optional[int] = None, extra: Optional[dict] = None) -> dict:
    """Write ``<path>`` (tensors in PARAM_NAMES order, then the scaler if any) and ``<path>.json``."""
    path = Path(path)
    arrays = model.arrays() + (model.scaler.arrays() if model.scaler is not None else ())
    digest = save_tensors(path, arrays)
    meta = {
        "scaler": model.scaler is not None,
        "d_g": model.d_g,
        "d_m": model.d_m,
        "hyper": dataclasses.asdict(model.hyper),
        "params": [{"name": n, "shape": list(model.shapes[n])} for n in PARAM_NAMES],
        "fold": fold,
        "sha256": digest,
    }
    if extra:
        meta.update(extra)
    try:
        Path(str(path) + ".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as exc:
        raise PrismIOError(f"{path}.json: {exc}") from exc
    return meta


def load_checkpoint(path) -> PrismModel:
    path = Path(path)
    try:
        meta = json.loads(Path(str(path) + ".json").read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise PrismIOError(f"{path}.json: {exc}") from exc
    hyper = PrismHyper(**meta["hyper"])
    model = PrismModel(meta["d_g"], meta["d_m"], hyper)
    arrays = load_tensors(path)
    expected = len(PARAM_NAMES) + (4 if meta.get("scaler") else 0)
    if len(arrays) != expected:
        raise PrismIOError(f"{path}: expected {expected} tensors, found {len(arrays)}")
    if meta.get("scaler"):
        model.scaler = FeatureScaler(*arrays[len(PARAM_NAMES):])
    for name, arr in zip(PARAM_NAMES, arrays):
        if arr.shape != model.shapes[name]:
            raise PrismIOError(f"{path}: {name} has shape {arr.shape}, expected {model.shapes[name]}")
        model.views[name][...] = arr
    return model


PREDICTION_HEADER = ("patient_id", "fold", "prob", "label5y", "time_months", "event")


def predictions_to_csv(predictions, records) -> str:
    recs = {r.patient_id: r for r in records}
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PREDICTION_HEADER)
    for pid, fold, pred in sorted(predictions, key=lambda t: t[0]):
        r = recs[pid]
        w.writerow([pid, fold, repr(float(pred.probability)), "NA" if r.label5y is None else r.label5y,
                    repr(float(r.time_months)), r.event])
    return buf.getvalue()


def attention_rows(predictions, bags) -> list:
    rows = []
    for pid, _, pred in sorted(predictions, key=lambda t: t[0]):
        classes = bags[pid].patch_class
        for j, w in enumerate(pred.attention):
            rows.append((pid, j, int(classes[j]), float(w)))
    return rows


def export_attention(predictions, bags, path) -> int:
    """Write ``patient_id, patch_index, patch_class, attention_weight``; returns row count."""
    rows = attention_rows(predictions, bags)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["patient_id", "patch_index", "patch_class", "attention_weight"])
    for pid, j, c, a in rows:
        w.writerow([pid, j, c, repr(a)])
    try:
        Path(path).write_text(buf.getvalue(), encoding="utf-8")
    except OSError as exc:
        raise PrismIOError(f"{path}: {exc}") from exc
    return len(rows)
