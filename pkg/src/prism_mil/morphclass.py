"""Tissue-morphology classifier and its truncated feature extractor.

Three linear maps ``d_in -> h1 -> h2 -> 13`` with ReLU between them and a
softmax on top, trained with cross-entropy. After training the network is
cut after the first hidden layer: its post-ReLU activations are the
morphology-aware patch features.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .cohortgen import N_CLASSES
from .errors import ConfigError, DataError, DimensionError, PrismIOError
from .numcore import AdamState, ParamTensor, adam_step, make_rng, xavier_uniform_init
from .survstats import roc_auc
from .tensorio import load_tensors, save_tensors

WIDTH_PRESETS = {"desk": (32, 16), "full": (512, 128)}
LAYER_NAMES = ("W1", "b1", "W2", "b2", "W3", "b3")


@dataclass
class MorphHead:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    W3: np.ndarray
    b3: np.ndarray

    def __post_init__(self):
        h1, h2 = self.W1.shape[1], self.W2.shape[1]
        if self.b1.shape != (h1,) or self.W2.shape[0] != h1 or self.b2.shape != (h2,) \
                or self.W3.shape[0] != h2 or self.b3.shape != (self.W3.shape[1],):
            raise DimensionError("MorphHead: inconsistent layer shapes")

    @property
    def d_in(self) -> int:
        return self.W1.shape[0]

    @property
    def widths(self) -> tuple:
        return self.W1.shape[1], self.W2.shape[1]

    @property
    def n_classes(self) -> int:
        return self.W3.shape[1]

    @classmethod
    def init(cls, d_in: int, h1: int, h2: int, rng, n_classes: int = N_CLASSES) -> "MorphHead":
        return cls(
            xavier_uniform_init(d_in, h1, rng), np.zeros(h1),
            xavier_uniform_init(h1, h2, rng), np.zeros(h2),
            xavier_uniform_init(h2, n_classes, rng), np.zeros(n_classes),
        )

    @classmethod
    def zeros(cls, d_in: int, h1: int = 32, h2: int = 16, n_classes: int = N_CLASSES) -> "MorphHead":
        return cls(np.zeros((d_in, h1)), np.zeros(h1), np.zeros((h1, h2)), np.zeros(h2),
                   np.zeros((h2, n_classes)), np.zeros(n_classes))

    def arrays(self) -> list:
        return [getattr(self, n) for n in LAYER_NAMES]

    def copy(self) -> "MorphHead":
        return MorphHead(*[a.copy() for a in self.arrays()])


def _as_batch(head: MorphHead, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.ndim != 2 or X.shape[1] != head.d_in:
        raise DimensionError(f"expected features of dim {head.d_in}, got shape {x.shape}")
    return X


def extract_morph_features(head: MorphHead, x) -> np.ndarray:
    """Post-ReLU activations of the first hidden layer (vector or row batch)."""
    X = _as_batch(head, x)
    out = np.maximum(X @ head.W1 + head.b1, 0.0)
    return out[0] if np.ndim(x) == 1 else out


def logits_from_features(head: MorphHead, h1) -> np.ndarray:
    """Layers two and three applied to extracted features."""
    h2 = np.maximum(np.asarray(h1) @ head.W2 + head.b2, 0.0)
    return h2 @ head.W3 + head.b3


def class_logits(head: MorphHead, x) -> np.ndarray:
    return logits_from_features(head, extract_morph_features(head, x))


def _softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def classify_patch(head: MorphHead, x) -> np.ndarray:
    """Class probabilities for one feature vector (or each row of a batch)."""
    return _softmax(class_logits(head, x))


def cross_entropy_grad(head: MorphHead, X, y):
    """Mean cross-entropy over the batch and gradients in ``LAYER_NAMES`` order."""
    X = _as_batch(head, X)
    y = np.asarray(y, dtype=np.int64)
    n = X.shape[0]
    a1 = X @ head.W1 + head.b1
    h1 = np.maximum(a1, 0.0)
    a2 = h1 @ head.W2 + head.b2
    h2 = np.maximum(a2, 0.0)
    z = h2 @ head.W3 + head.b3
    z = z - z.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1))
    loss = float(np.mean(logsum - z[np.arange(n), y]))
    dz = np.exp(z - logsum[:, None])
    dz[np.arange(n), y] -= 1.0
    dz /= n
    gW3 = h2.T @ dz
    gb3 = dz.sum(0)
    dh2 = (dz @ head.W3.T) * (a2 > 0)
    gW2 = h1.T @ dh2
    gb2 = dh2.sum(0)
    dh1 = (dh2 @ head.W2.T) * (a1 > 0)
    gW1 = X.T @ dh1
    gb1 = dh1.sum(0)
    return loss, [gW1, gb1, gW2, gb2, gW3, gb3]


# --------------------------------------------------------------------------
# training
# --------------------------------------------------------------------------

@dataclass
class MorphTrainConfig:
    h1: int = 32
    h2: int = 16
    lr: float = 1e-3
    epochs: int = 100
    patience: int = 10
    batch_size: int = 32
    split: tuple = (0.70, 0.15, 0.15)
    seed: int = 0

    def __post_init__(self):
        self.split = tuple(float(s) for s in self.split)
        if len(self.split) != 3 or abs(sum(self.split) - 1.0) > 1e-9 or min(self.split) < 0:
            raise ConfigError("split must be three non-negative fractions summing to 1")
        if min(self.h1, self.h2, self.batch_size, self.epochs) < 1 or self.lr <= 0:
            raise ConfigError("invalid morphology training hyperparameters")

    @classmethod
    def preset(cls, name: str, **kw) -> "MorphTrainConfig":
        h1, h2 = WIDTH_PRESETS[name]
        return cls(h1=h1, h2=h2, **kw)


@dataclass
class MorphReport:
    test_accuracy: float
    test_macro_auc: float
    val_accuracy: float
    best_epoch: int
    n_train: int
    n_val: int
    n_test: int
    val_history: list = field(default_factory=list)
    loss_history: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def stratified_split(y, fractions, rng) -> tuple:
    """Per-class shuffled split into index arrays ``(train, val, test)``."""
    y = np.asarray(y)
    parts = ([], [], [])
    for c in np.unique(y):
        idx = np.flatnonzero(y == c)
        idx = idx[rng.permutation(idx.size)]
        n_train = int(round(fractions[0] * idx.size))
        n_val = int(round(fractions[1] * idx.size))
        parts[0].append(idx[:n_train])
        parts[1].append(idx[n_train:n_train + n_val])
        parts[2].append(idx[n_train + n_val:])
    return tuple(np.sort(np.concatenate(p)) if p else np.array([], dtype=int) for p in parts)


def accuracy(head: MorphHead, X, y) -> float:
    if len(y) == 0:
        return float("nan")
    return float(np.mean(np.argmax(class_logits(head, X), axis=1) == np.asarray(y)))


def macro_auc(head: MorphHead, X, y) -> float:
    probs = classify_patch(head, X)
    y = np.asarray(y)
    aucs = [roc_auc(probs[:, c], (y == c).astype(int)) for c in range(head.n_classes)
            if 0 < (y == c).sum() < y.size]
    return float(np.mean(aucs)) if aucs else float("nan")


def fit_head(head: MorphHead, X, y, config: MorphTrainConfig, rng, X_val=None, y_val=None,
             epochs: Optional[int] = None):
    """Mini-batch Adam on cross-entropy; keeps the best-validation parameters.

    Without validation data every epoch is kept and the final parameters are
    returned. Returns ``(best_epoch, val_history, loss_history)``.
    """
    params = [ParamTensor(n, a) for n, a in zip(LAYER_NAMES, head.arrays())]
    for p, n in zip(params, LAYER_NAMES):
        setattr(head, n, p.value)
    state = AdamState(lr=config.lr)
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    epochs = config.epochs if epochs is None else epochs
    has_val = X_val is not None and len(y_val) > 0
    best_acc, best_epoch, best = -1.0, 0, head.copy()
    val_hist, loss_hist = [], []
    stale = 0
    for epoch in range(1, epochs + 1):
        order = rng.permutation(y.size)
        total = 0.0
        for start in range(0, y.size, config.batch_size):
            batch = order[start:start + config.batch_size]
            loss, grads = cross_entropy_grad(head, X[batch], y[batch])
            for p, g in zip(params, grads):
                p.grad = g
            adam_step(params, state)
            total += loss * batch.size
        loss_hist.append(total / y.size)
        if not has_val:
            best_epoch = epoch
            continue
        acc = accuracy(head, X_val, y_val)
        val_hist.append(acc)
        if acc > best_acc:
            best_acc, best_epoch, best = acc, epoch, head.copy()
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                break
    if has_val:
        for p, n in zip(params, LAYER_NAMES):
            p.value[...] = getattr(best, n)
    return best_epoch, val_hist, loss_hist


def train_morph(X, y, config: Optional[MorphTrainConfig] = None) -> tuple:
    """Stratified 70/15/15 split, train, and report test accuracy and macro AUC."""
    config = config or MorphTrainConfig()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or X.shape[0] != y.size:
        raise DimensionError(f"train_morph: X {X.shape} vs y {y.shape}")
    rng = make_rng(config.seed, "morph")
    tr, va, te = stratified_split(y, config.split, rng)
    missing = sorted(set(range(N_CLASSES)) - set(np.unique(y[tr]).tolist()))
    if missing:
        raise DataError(f"train_morph: classes {missing} absent from the training split")
    head = MorphHead.init(X.shape[1], config.h1, config.h2, rng)
    best_epoch, val_hist, loss_hist = fit_head(head, X[tr], y[tr], config, rng, X[va], y[va])
    report = MorphReport(
        test_accuracy=accuracy(head, X[te], y[te]),
        test_macro_auc=macro_auc(head, X[te], y[te]) if te.size else float("nan"),
        val_accuracy=accuracy(head, X[va], y[va]),
        best_epoch=best_epoch,
        n_train=int(tr.size), n_val=int(va.size), n_test=int(te.size),
        val_history=val_hist, loss_history=loss_hist,
    )
    return head, report


def nearest_prototype_accuracy(prototypes, X, y) -> float:
    d = ((np.asarray(X)[:, None, :] - np.asarray(prototypes)[None, :, :]) ** 2).sum(-1)
    return float(np.mean(np.argmin(d, axis=1) == np.asarray(y)))


# --------------------------------------------------------------------------
# persistence
# --------------------------------------------------------------------------

def save_head(head: MorphHead, path, config: Optional[MorphTrainConfig] = None, report: Optional[MorphReport] = None):
    path = Path(path)
    digest = save_tensors(path, head.arrays())
    meta = {
        "d_in": head.d_in,
        "widths": list(head.widths),
        "n_classes": head.n_classes,
        "train_config": dataclasses.asdict(config) if config else None,
        "report": {k: v for k, v in report.to_dict().items() if not k.endswith("history")} if report else None,
        "sha256": digest,
    }
    try:
        Path(str(path) + ".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as exc:
        raise PrismIOError(f"{path}.json: {exc}") from exc
    return meta


def load_head(path) -> MorphHead:
    arrays = load_tensors(path)
    if len(arrays) != len(LAYER_NAMES):
        raise PrismIOError(f"{path}: expected {len(LAYER_NAMES)} tensors, found {len(arrays)}")
    try:
        return MorphHead(*arrays)
    except DimensionError as exc:
        raise PrismIOError(f"{path}: {exc}") from exc
