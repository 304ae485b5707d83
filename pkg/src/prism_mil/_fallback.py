"""Pure numpy implementations of the hot kernels.

Must stay call-compatible with ``_kernels.pyx``; ``kernels.py`` picks one of
the two at import time.
"""
import numpy as np


def slide_forward_backward(G, M, Wg, Wm, Wf, V, U, W, hw, hb, y, exact, need_grad):
    """One slide through fusion, gated attention, pooling and the logit head.

    Returns ``(logit, attention, Z, grads)`` where ``grads`` is a tuple
    matching ``(Wg, Wm, Wf, V, U, W, hw, hb)`` of the cross-entropy loss
    (without any penalty) or ``None`` when ``need_grad`` is false.
    """
    n = G.shape[0]
    r = Wg.shape[1]
    P = G @ Wg
    Q = M @ Wm
    if exact:
        H = (P[:, :, None] * Q[:, None, :]).reshape(n, r * r)
    else:
        H = P * Q
    F = H @ Wf
    AV = np.tanh(F @ V)
    AU = 1.0 / (1.0 + np.exp(-(F @ U)))
    gate = AV * AU
    e = gate @ W[:, 0]
    e = e - e.max()
    a = np.exp(e)
    a /= a.sum()
    Z = a @ F
    logit = float(Z @ hw[:, 0] + hb[0, 0])
    if not need_grad:
        return logit, a, Z, None

    prob = 1.0 / (1.0 + np.exp(-logit))
    ds = prob - y
    d_hw = (ds * Z)[:, None]
    d_hb = np.array([[ds]])
    dZ = ds * hw[:, 0]
    da = F @ dZ
    de = a * (da - a @ da)
    dW = (gate.T @ de)[:, None]
    dgate = de[:, None] * W[:, 0][None, :]
    dpre_v = dgate * AU * (1.0 - AV * AV)
    dpre_u = dgate * AV * AU * (1.0 - AU)
    dV = F.T @ dpre_v
    dU = F.T @ dpre_u
    dF = a[:, None] * dZ[None, :] + dpre_v @ V.T + dpre_u @ U.T
    dWf = H.T @ dF
    dH = dF @ Wf.T
    if exact:
        dH3 = dH.reshape(n, r, r)
        dP = np.einsum("nik,nk->ni", dH3, Q)
        dQ = np.einsum("nik,ni->nk", dH3, P)
    else:
        dP = dH * Q
        dQ = dH * P
    dWg = G.T @ dP
    dWm = M.T @ dQ
    return logit, a, Z, (dWg, dWm, dWf, dV, dU, dW, d_hw, d_hb)


def concordance_counts(scores, times, events):
    """``(concordant + 0.5 * tied, comparable)`` over Harrell-comparable pairs.

    Pair (i, j) is comparable when ``events[i]`` and ``times[i] < times[j]``.
    """
    scores = np.asarray(scores, dtype=np.float64)
    times = np.asarray(times, dtype=np.float64)
    events = np.asarray(events).astype(bool)
    num = 0.0
    den = 0.0
    for i in np.flatnonzero(events):
        later = times > times[i]
        k = int(later.sum())
        if k == 0:
            continue
        s = scores[later]
        num += float((s < scores[i]).sum()) + 0.5 * float((s == scores[i]).sum())
        den += k
    return num, den
