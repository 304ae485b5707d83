# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled twins of the kernels in ``_fallback.py``."""
import numpy as np
from libc.math cimport exp, tanh


cdef inline double _sigm(double x) nogil:
    if x >= 0:
        return 1.0 / (1.0 + exp(-x))
    cdef double z = exp(x)
    return z / (1.0 + z)


def slide_forward_backward(
    const double[:, ::1] G, const double[:, ::1] M,
    const double[:, ::1] Wg, const double[:, ::1] Wm, const double[:, ::1] Wf,
    const double[:, ::1] V, const double[:, ::1] U, const double[:, ::1] W,
    const double[:, ::1] hw, const double[:, ::1] hb,
    double y, bint exact, bint need_grad,
):
    cdef Py_ssize_t n = G.shape[0], dg = G.shape[1], dm = M.shape[1]
    cdef Py_ssize_t r = Wg.shape[1], width = Wf.shape[0], d = Wf.shape[1], l = V.shape[1]
    cdef Py_ssize_t j, i, k, c, t
    cdef double acc, emax, total, logit, prob, ds, s, dot_ada

    P_ = np.zeros((n, r)); Q_ = np.zeros((n, r)); H_ = np.zeros((n, width))
    F_ = np.zeros((n, d)); AV_ = np.zeros((n, l)); AU_ = np.zeros((n, l))
    a_ = np.zeros(n); Z_ = np.zeros(d)
    cdef double[:, ::1] P = P_, Q = Q_, H = H_, F = F_, AV = AV_, AU = AU_
    cdef double[::1] a = a_, Z = Z_

    pv_ = np.zeros(l); pu_ = np.zeros(l)
    cdef double[::1] pv = pv_, pu = pu_
    cdef double x

    # inner loops run over contiguous output rows (axpy form) so they vectorise
    with nogil:
        for j in range(n):
            for k in range(dg):
                x = G[j, k]
                for i in range(r):
                    P[j, i] += x * Wg[k, i]
            for k in range(dm):
                x = M[j, k]
                for i in range(r):
                    Q[j, i] += x * Wm[k, i]
            if exact:
                for i in range(r):
                    for k in range(r):
                        H[j, i * r + k] = P[j, i] * Q[j, k]
            else:
                for i in range(r):
                    H[j, i] = P[j, i] * Q[j, i]
            for k in range(width):
                x = H[j, k]
                for c in range(d):
                    F[j, c] += x * Wf[k, c]
            for t in range(l):
                pv[t] = 0.0
                pu[t] = 0.0
            for c in range(d):
                x = F[j, c]
                for t in range(l):
                    pv[t] += x * V[c, t]
                    pu[t] += x * U[c, t]
            s = 0.0
            for t in range(l):
                AV[j, t] = tanh(pv[t])
                AU[j, t] = _sigm(pu[t])
                s = s + AV[j, t] * AU[j, t] * W[t, 0]
            a[j] = s
        emax = a[0]
        for j in range(1, n):
            if a[j] > emax:
                emax = a[j]
        total = 0.0
        for j in range(n):
            a[j] = exp(a[j] - emax)
            total = total + a[j]
        for j in range(n):
            a[j] = a[j] / total
        for j in range(n):
            for c in range(d):
                Z[c] = Z[c] + a[j] * F[j, c]
        logit = hb[0, 0]
        for c in range(d):
            logit = logit + Z[c] * hw[c, 0]

    if not need_grad:
        return logit, a_, Z_, None

    dWg_ = np.zeros((dg, r)); dWm_ = np.zeros((dm, r)); dWf_ = np.zeros((width, d))
    dV_ = np.zeros((d, l)); dU_ = np.zeros((d, l)); dW_ = np.zeros((l, 1))
    dhw_ = np.zeros((d, 1)); dhb_ = np.zeros((1, 1))
    dZ_ = np.zeros(d); da_ = np.zeros(n); dF_ = np.zeros(d); dH_ = np.zeros(width)
    dP_ = np.zeros(r); dQ_ = np.zeros(r); dpv_ = np.zeros(l); dpu_ = np.zeros(l)
    cdef double[:, ::1] dWg = dWg_, dWm = dWm_, dWf = dWf_, dV = dV_, dU = dU_, dW = dW_
    cdef double[:, ::1] dhw = dhw_, dhb = dhb_
    cdef double[::1] dZ = dZ_, da = da_, dF = dF_, dH = dH_, dP = dP_, dQ = dQ_, dpv = dpv_, dpu = dpu_
    cdef double de, gate

    with nogil:
        prob = _sigm(logit)
        ds = prob - y
        dhb[0, 0] = ds
        for c in range(d):
            dhw[c, 0] = ds * Z[c]
            dZ[c] = ds * hw[c, 0]
        dot_ada = 0.0
        for j in range(n):
            acc = 0.0
            for c in range(d):
                acc = acc + F[j, c] * dZ[c]
            da[j] = acc
            dot_ada = dot_ada + a[j] * acc
        for j in range(n):
            de = a[j] * (da[j] - dot_ada)
            for t in range(l):
                gate = AV[j, t] * AU[j, t]
                dW[t, 0] = dW[t, 0] + de * gate
                dpv[t] = de * W[t, 0] * AU[j, t] * (1.0 - AV[j, t] * AV[j, t])
                dpu[t] = de * W[t, 0] * AV[j, t] * AU[j, t] * (1.0 - AU[j, t])
            for c in range(d):
                acc = a[j] * dZ[c]
                for t in range(l):
                    dV[c, t] = dV[c, t] + F[j, c] * dpv[t]
                    dU[c, t] = dU[c, t] + F[j, c] * dpu[t]
                    acc = acc + dpv[t] * V[c, t] + dpu[t] * U[c, t]
                dF[c] = acc
            for k in range(width):
                acc = 0.0
                for c in range(d):
                    dWf[k, c] = dWf[k, c] + H[j, k] * dF[c]
                    acc = acc + dF[c] * Wf[k, c]
                dH[k] = acc
            if exact:
                for i in range(r):
                    acc = 0.0
                    for k in range(r):
                        acc = acc + dH[i * r + k] * Q[j, k]
                    dP[i] = acc
                for k in range(r):
                    acc = 0.0
                    for i in range(r):
                        acc = acc + dH[i * r + k] * P[j, i]
                    dQ[k] = acc
            else:
                for i in range(r):
                    dP[i] = dH[i] * Q[j, i]
                    dQ[i] = dH[i] * P[j, i]
            for k in range(dg):
                for i in range(r):
                    dWg[k, i] = dWg[k, i] + G[j, k] * dP[i]
            for k in range(dm):
                for i in range(r):
                    dWm[k, i] = dWm[k, i] + M[j, k] * dQ[i]

    return logit, a_, Z_, (dWg_, dWm_, dWf_, dV_, dU_, dW_, dhw_, dhb_)


def concordance_counts(scores, times, events):
    cdef const double[::1] s = np.ascontiguousarray(scores, dtype=np.float64)
    cdef const double[::1] tm = np.ascontiguousarray(times, dtype=np.float64)
    ev_arr = np.ascontiguousarray(np.asarray(events).astype(np.uint8))
    cdef const unsigned char[::1] ev = ev_arr
    cdef Py_ssize_t n = s.shape[0], i, j
    cdef double num = 0.0, den = 0.0
    with nogil:
        for i in range(n):
            if not ev[i]:
                continue
            for j in range(n):
                if tm[j] > tm[i]:
                    den = den + 1.0
                    if s[i] > s[j]:
                        num = num + 1.0
                    elif s[i] == s[j]:
                        num = num + 0.5
    return num, den
