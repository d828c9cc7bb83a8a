"""Pure-numpy reference implementations of the hot kernels.

Semantics (shared with the numba backend):

* ``ftran_etas`` / ``btran_etas`` apply a product-form-of-the-inverse eta
  file to a dense vector, forward for FTRAN and reversed/transposed for
  BTRAN.  Eta ``j`` was recorded from a simplex pivot on row ``rows[j]``
  with pivot column ``eta[j]`` (the FTRAN'd entering column).
* ``ratio_test`` is the bounded-variable primal ratio test with a
  composite phase-1 extension: basic variables outside their bounds block
  only at the bound they violate and only when moving toward it.  Two-pass
  selection: smallest step first, then the largest pivot magnitude among
  near-ties, lowest index on exact ties.
* ``damage_batch`` evaluates the GIC damage oracle over a batch of
  E-field samples given per-transformer linear response coefficients.
"""

import numpy as np

_INF = np.inf


def ftran_etas(eta, rows, k, x):
    for j in range(k):
        r = rows[j]
        piv = eta[j, r]
        xr = x[r] / piv
        if xr != 0.0:
            x -= xr * eta[j]
        x[r] = xr
    return x


def btran_etas(eta, rows, k, y):
    for j in range(k - 1, -1, -1):
        r = rows[j]
        piv = eta[j, r]
        dot = float(eta[j] @ y)
        y[r] = y[r] - (dot - y[r]) / piv
    return y


def ratio_test(xB, lB, uB, alpha, sigma, feas_tol, piv_tol, tie_tol):
    """Harris-style two-pass ratio test.

    Pass 1 computes the largest step permitted when every blocking bound
    is relaxed by its feasibility tolerance; pass 2 picks, among the
    candidates whose strict ratio fits under that relaxed step, the one
    with the largest pivot magnitude (lowest index on exact ties)."""
    m = xB.shape[0]
    a = sigma * alpha
    usable = np.abs(alpha) > piv_tol

    tlo = feas_tol * (1.0 + np.where(np.isfinite(lB), np.abs(lB), 0.0))
    thi = feas_tol * (1.0 + np.where(np.isfinite(uB), np.abs(uB), 0.0))
    below = xB < lB - tlo
    above = xB > uB + thi
    feas = ~(below | above)

    target = np.full(m, np.nan)
    sel = below & (a < 0.0) & usable
    target[sel] = lB[sel]
    sel = above & (a > 0.0) & usable
    target[sel] = uB[sel]
    sel = feas & (a > 0.0) & usable & (lB > -_INF)
    target[sel] = lB[sel]
    sel = feas & (a < 0.0) & usable & (uB < _INF)
    target[sel] = uB[sel]

    cand = ~np.isnan(target)
    if not cand.any():
        return _INF, -1
    t = np.full(m, _INF)
    t[cand] = np.maximum((xB[cand] - target[cand]) / a[cand], 0.0)
    # relaxed ratios: bounds pushed outward by the feasibility tolerance
    slack = feas_tol * (1.0 + np.abs(np.where(cand, target, 0.0)))
    t_rel = np.full(m, _INF)
    t_rel[cand] = np.maximum(t[cand] + slack[cand] / np.abs(a[cand]), 0.0)
    tmax = t_rel.min() + tie_tol
    near = t <= tmax
    absa = np.where(near, np.abs(alpha), -1.0)
    idx = int(np.argmax(absa))
    return float(max(t[idx], 0.0)), idx


def damage_batch(fields, ce, cn, kv, busidx, nbus, dq, kappa):
    nsamp = fields.shape[0]
    out = np.zeros(nsamp)
    if ce.shape[0] == 0:
        return out
    ieff = np.abs(np.outer(fields[:, 0], ce) + np.outer(fields[:, 1], cn))
    wmat = np.zeros((ce.shape[0], nbus))
    wmat[np.arange(ce.shape[0]), busidx] = kv
    loss = ieff @ wmat
    short = np.maximum(loss - dq[None, :], 0.0)
    out[:] = kappa * short.sum(axis=1)
    return out
