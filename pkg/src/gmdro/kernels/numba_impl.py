"""Numba-jitted kernels.  Same contracts as ``numpy_impl``; see there."""

import numpy as np
from numba import njit

_INF = np.inf


@njit(cache=True)
def ftran_etas(eta, rows, k, x):
    m = x.shape[0]
    for j in range(k):
        r = rows[j]
        piv = eta[j, r]
        xr = x[r] / piv
        if xr != 0.0:
            for i in range(m):
                x[i] -= xr * eta[j, i]
        x[r] = xr
    return x


@njit(cache=True)
def btran_etas(eta, rows, k, y):
    m = y.shape[0]
    for j in range(k - 1, -1, -1):
        r = rows[j]
        piv = eta[j, r]
        dot = 0.0
        for i in range(m):
            dot += eta[j, i] * y[i]
        y[r] = y[r] - (dot - y[r]) / piv
    return y


@njit(cache=True)
def ratio_test(xB, lB, uB, alpha, sigma, feas_tol, piv_tol, tie_tol):
    """Harris-style two-pass ratio test; see numpy_impl for semantics."""
    m = xB.shape[0]
    tmax = _INF
    any_cand = False
    # pass 1: smallest step with tolerance-relaxed bounds
    for i in range(m):
        al = alpha[i]
        if al > piv_tol or al < -piv_tol:
            a = sigma * al
            x = xB[i]
            lo = lB[i]
            hi = uB[i]
            tlo = feas_tol * (1.0 + (lo if lo > 0.0 else -lo)) if lo > -_INF else feas_tol
            thi = feas_tol * (1.0 + (hi if hi > 0.0 else -hi)) if hi < _INF else feas_tol
            if x < lo - tlo:
                if a < 0.0:
                    tgt = lo
                else:
                    continue
            elif x > hi + thi:
                if a > 0.0:
                    tgt = hi
                else:
                    continue
            else:
                if a > 0.0:
                    if lo == -_INF:
                        continue
                    tgt = lo
                else:
                    if hi == _INF:
                        continue
                    tgt = hi
            t = (x - tgt) / a
            if t < 0.0:
                t = 0.0
            aa = al if al > 0.0 else -al
            atgt = tgt if tgt > 0.0 else -tgt
            t_rel = t + feas_tol * (1.0 + atgt) / aa
            any_cand = True
            if t_rel < tmax:
                tmax = t_rel
    if not any_cand:
        return _INF, -1
    tmax += tie_tol
    # pass 2: among candidates within the relaxed step pick the largest
    # pivot magnitude, lowest index on exact ties
    best = -1
    best_abs = -1.0
    best_t = 0.0
    for i in range(m):
        al = alpha[i]
        if al > piv_tol or al < -piv_tol:
            a = sigma * al
            x = xB[i]
            lo = lB[i]
            hi = uB[i]
            tlo = feas_tol * (1.0 + (lo if lo > 0.0 else -lo)) if lo > -_INF else feas_tol
            thi = feas_tol * (1.0 + (hi if hi > 0.0 else -hi)) if hi < _INF else feas_tol
            if x < lo - tlo:
                if a < 0.0:
                    tgt = lo
                else:
                    continue
            elif x > hi + thi:
                if a > 0.0:
                    tgt = hi
                else:
                    continue
            else:
                if a > 0.0:
                    if lo == -_INF:
                        continue
                    tgt = lo
                else:
                    if hi == _INF:
                        continue
                    tgt = hi
            t = (x - tgt) / a
            if t < 0.0:
                t = 0.0
            if t <= tmax:
                aa = al if al > 0.0 else -al
                if aa > best_abs:
                    best_abs = aa
                    best = i
                    best_t = t
    return best_t, best


@njit(cache=True)
def damage_batch(fields, ce, cn, kv, busidx, nbus, dq, kappa):
    nsamp = fields.shape[0]
    nt = ce.shape[0]
    out = np.zeros(nsamp)
    loss = np.zeros(nbus)
    for s in range(nsamp):
        for b in range(nbus):
            loss[b] = 0.0
        xe = fields[s, 0]
        xn = fields[s, 1]
        for t in range(nt):
            v = ce[t] * xe + cn[t] * xn
            if v < 0.0:
                v = -v
            loss[busidx[t]] += kv[t] * v
        tot = 0.0
        for b in range(nbus):
            sh = loss[b] - dq[b]
            if sh > 0.0:
                tot += sh
        out[s] = kappa * tot
    return out
