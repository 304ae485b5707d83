"""Patch-level fusion of generic and morphology features.

Both channels are projected to a shared interaction rank ``r``:
``p = W_g^T g`` and ``q = W_m^T m``. The ``exact`` mode forms the full outer
product ``vec(p q^T)`` (length ``r*r``, row-major so entry ``i*r + k`` is
``p_i q_k``) before the output map ``W_fusion``; the ``factorized`` mode keeps
only the Hadamard product ``p * q`` (length ``r``). No biases, so both modes
are bilinear in ``(g, m)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, DimensionError
from .numcore import xavier_uniform_init

MODES = ("exact", "factorized")


@dataclass
class FusionParams:
    W_g: np.ndarray
    W_m: np.ndarray
    W_fusion: np.ndarray
    mode: str = "factorized"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown fusion mode {self.mode!r}")
        r = self.W_g.shape[1]
        if self.W_m.shape[1] != r:
            raise DimensionError(f"W_g rank {r} != W_m rank {self.W_m.shape[1]}")
        width = r * r if self.mode == "exact" else r
        if self.W_fusion.shape[0] != width:
            raise DimensionError(
                f"W_fusion has {self.W_fusion.shape[0]} rows, {self.mode} mode needs {width}")

    @property
    def rank(self) -> int:
        return self.W_g.shape[1]

    @property
    def out_dim(self) -> int:
        return self.W_fusion.shape[1]

    @classmethod
    def init(cls, d_g: int, d_m: int, rank: int, d: int, rng, mode: str = "factorized") -> "FusionParams":
        width = rank * rank if mode == "exact" else rank
        return cls(
            xavier_uniform_init(d_g, rank, rng),
            xavier_uniform_init(d_m, rank, rng),
            xavier_uniform_init(width, d, rng),
            mode,
        )


def _check_vec(x, dim, name):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != dim:
        raise DimensionError(f"{name}: expected a vector of length {dim}, got shape {x.shape}")
    return x


def fuse_exact(g, m, params: FusionParams) -> np.ndarray:
    if params.mode != "exact":
        raise ConfigError("fuse_exact needs mode='exact'")
    g = _check_vec(g, params.W_g.shape[0], "g")
    m = _check_vec(m, params.W_m.shape[0], "m")
    p = params.W_g.T @ g
    q = params.W_m.T @ m
    return params.W_fusion.T @ np.outer(p, q).reshape(-1)


def fuse_factorized(g, m, params: FusionParams) -> np.ndarray:
    if params.mode != "factorized":
        raise ConfigError("fuse_factorized needs mode='factorized'")
    g = _check_vec(g, params.W_g.shape[0], "g")
    m = _check_vec(m, params.W_m.shape[0], "m")
    return params.W_fusion.T @ ((params.W_g.T @ g) * (params.W_m.T @ m))


def fuse(g, m, params: FusionParams) -> np.ndarray:
    if params.mode == "exact":
        return fuse_exact(g, m, params)
    return fuse_factorized(g, m, params)


def interaction(G: np.ndarray, M: np.ndarray, params: FusionParams):
    """Row-wise projections and interaction features ``(P, Q, H)``."""
    P = G @ params.W_g
    Q = M @ params.W_m
    if params.mode == "exact":
        H = (P[:, :, None] * Q[:, None, :]).reshape(G.shape[0], -1)
    else:
        H = P * Q
    return P, Q, H


def fuse_rows(G, M, params: FusionParams) -> np.ndarray:
    """Fuse matched rows of ``G`` (n x d_g) and ``M`` (n x d_m) into n x d."""
    G = np.asarray(G, dtype=np.float64)
    M = np.asarray(M, dtype=np.float64)
    if G.ndim != 2 or M.ndim != 2 or G.shape[0] != M.shape[0]:
        raise DimensionError(f"fuse_rows: incompatible shapes {G.shape}, {M.shape}")
    if G.shape[1] != params.W_g.shape[0]:
        raise DimensionError(f"generic features have dim {G.shape[1]}, W_g expects {params.W_g.shape[0]}")
    if M.shape[1] != params.W_m.shape[0]:
        raise DimensionError(f"morph features have dim {M.shape[1]}, W_m expects {params.W_m.shape[0]}")
    _, _, H = interaction(G, M, params)
    return H @ params.W_fusion


def fuse_bag(bag, params: FusionParams, morph=None) -> np.ndarray:
    """Fused n x d matrix for a bag, row order preserved.

    ``morph`` overrides ``bag.morph`` (e.g. with extracted classifier
    features). Shape errors are reported with the offending patch index.
    """
    G = np.asarray(bag.generic, dtype=np.float64)
    M = np.asarray(bag.morph if morph is None else morph, dtype=np.float64)
    if G.shape[0] != M.shape[0]:
        raise DataError(f"bag {bag.patient_id}: generic has {G.shape[0]} rows, morph has {M.shape[0]}")
    for j in range(G.shape[0]):
        if not (np.all(np.isfinite(G[j])) and np.all(np.isfinite(M[j]))):
            raise DataError(f"bag {bag.patient_id}: patch {j} has non-finite features")
    try:
        return fuse_rows(G, M, params)
    except DimensionError as exc:
        raise DimensionError(f"bag {bag.patient_id}, patch 0: {exc}") from exc


def fuse_rows_backward(G, M, params: FusionParams, dF: np.ndarray):
    """Gradients ``(dW_g, dW_m, dW_fusion)`` of a scalar loss given ``dL/dF``."""
    P, Q, H = interaction(G, M, params)
    dW_fusion = H.T @ dF
    dH = dF @ params.W_fusion.T
    if params.mode == "exact":
        r = params.rank
        dH3 = dH.reshape(-1, r, r)
        dP = np.einsum("nik,nk->ni", dH3, Q)
        dQ = np.einsum("nik,ni->nk", dH3, P)
    else:
        dP = dH * Q
        dQ = dH * P
    return G.T @ dP, M.T @ dQ, dW_fusion


def diagonal_selector(params: FusionParams) -> FusionParams:
    """Exact-mode parameters reproducing a factorized-mode map.

    Row ``i*r + i`` of the exact ``W_fusion`` copies row ``i`` of the
    factorized one; every off-diagonal interaction is ignored.
    """
    if params.mode != "factorized":
        raise ConfigError("diagonal_selector expects factorized parameters")
    r = params.rank
    W = np.zeros((r * r, params.out_dim))
    for i in range(r):
        W[i * r + i] = params.W_fusion[i]
    return FusionParams(params.W_g.copy(), params.W_m.copy(), W, "exact")
