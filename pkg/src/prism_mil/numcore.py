"""Dense float64 kernels, parameter containers, Adam and a gradient checker.

Matrices are plain ``numpy.ndarray`` objects of dtype float64. The helpers
here add the shape and finiteness guarantees the rest of the package relies
on; they are not meant to compete with BLAS.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import DimensionError, NumericError

Matrix = np.ndarray


# --------------------------------------------------------------------------
# randomness
# --------------------------------------------------------------------------

def _name_key(name: str) -> int:
    return int.from_bytes(hashlib.sha256(name.encode("utf-8")).digest()[:4], "little")


def make_rng(seed: int, *names: str | int) -> np.random.Generator:
    """Return a PCG64 generator split from ``seed`` by a path of names.

    ``make_rng(7, "prism", "fold-2")`` is stable across processes and
    independent of every other named split of the same root seed.
    """
    if seed < 0:
        raise ValueError("seed must be non-negative")
    key = tuple(_name_key(str(n)) for n in names)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=key)))


# --------------------------------------------------------------------------
# matrices
# --------------------------------------------------------------------------

def as_matrix(x, name: str = "matrix") -> Matrix:
    a = np.asarray(x, dtype=np.float64)
    if a.ndim != 2:
        raise DimensionError(f"{name}: expected a 2-d array, got shape {a.shape}")
    return a


def check_finite(x: np.ndarray, name: str) -> None:
    if not np.all(np.isfinite(x)):
        raise NumericError(f"{name}: non-finite values")


def matmul(a, b) -> Matrix:
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: {a.shape} x {b.shape} do not conform")
    out = a @ b
    check_finite(out, "matmul result")
    return out


def xavier_uniform_init(rows: int, cols: int, rng: np.random.Generator) -> Matrix:
    """Glorot/Xavier uniform draw on ``[-sqrt(6/(rows+cols)), +sqrt(6/(rows+cols))]``."""
    if rows < 1 or cols < 1:
        raise DimensionError(f"xavier_uniform_init: bad shape ({rows}, {cols})")
    bound = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-bound, bound, size=(rows, cols))


# --------------------------------------------------------------------------
# parameters and Adam
# --------------------------------------------------------------------------

@dataclass
class ParamTensor:
    name: str
    value: np.ndarray
    grad: np.ndarray = None  # type: ignore[assignment]

    def __post_init__(self):
        self.value = np.ascontiguousarray(self.value, dtype=np.float64)
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        elif self.grad.shape != self.value.shape:
            raise DimensionError(f"{self.name}: grad shape {self.grad.shape} != value shape {self.value.shape}")

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.value)


@dataclass
class AdamState:
    lr: float = 2e-5
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    first_moment: dict = field(default_factory=dict)
    second_moment: dict = field(default_factory=dict)


def adam_step(params: Sequence[ParamTensor], state: AdamState) -> None:
    """Apply one bias-corrected Adam update in place.

    Raises NumericError (naming the parameter) if any gradient is non-finite;
    in that case no parameter is modified.
    """
    for p in params:
        if not np.all(np.isfinite(p.grad)):
            raise NumericError(f"adam_step: non-finite gradient in parameter '{p.name}'")
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for p in params:
        m = state.first_moment.get(p.name)
        v = state.second_moment.get(p.name)
        if m is None:
            m = state.first_moment[p.name] = np.zeros_like(p.value)
            v = state.second_moment[p.name] = np.zeros_like(p.value)
        elif m.shape != p.value.shape:
            raise DimensionError(f"adam_step: moment shape mismatch for '{p.name}'")
        m *= b1
        m += (1.0 - b1) * p.grad
        v *= b2
        v += (1.0 - b2) * (p.grad * p.grad)
        # in place: callers may hold views into p.value
        p.value -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.epsilon)


# --------------------------------------------------------------------------
# gradient checking
# --------------------------------------------------------------------------

def finite_diff_check(
    loss_fn: Callable[[], float],
    params: Iterable[ParamTensor],
    eps: float = 1e-5,
) -> float:
    """Compare ``p.grad`` against central differences of ``loss_fn``.

    ``loss_fn`` takes no arguments and must read the current ``p.value`` of
    every parameter. Values are restored after probing. Returns the maximum
    of ``|analytic - numeric| / max(1, |numeric|)`` over all entries.
    """
    worst = 0.0
    base = float(loss_fn())
    if not np.isfinite(base):
        raise NumericError("finite_diff_check: non-finite loss")
    for p in params:
        flat = p.value.reshape(-1)
        analytic = p.grad.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = float(loss_fn())
            flat[i] = orig - eps
            down = float(loss_fn())
            flat[i] = orig
            if not (np.isfinite(up) and np.isfinite(down)):
                raise NumericError(f"finite_diff_check: non-finite loss probing '{p.name}'[{i}]")
            numeric = (up - down) / (2.0 * eps)
            err = abs(analytic[i] - numeric) / max(1.0, abs(numeric))
            worst = max(worst, err)
    return worst
