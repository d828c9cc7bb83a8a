"""Bounded-variable primal simplex with sparse basis factorizations.

The engine works on the computational standard form

    min c' x   s.t.  A x + s = b,   l <= (x, s) <= u,

built from a :class:`~gmdro.optkernel.model.Model`'s linear rows (one
slack per row; senses encoded through slack bounds).  The basis inverse
is maintained as a sparse LU factorization (SuperLU via scipy) plus a
product-form eta file, refactorized periodically and whenever a pricing
self-check detects numerical drift.  Feasibility is reached with a
composite ("big-M free") phase 1 that charges unit cost to out-of-bound
basic variables.

Degeneracy is handled the classical way: the solve runs on bounds pushed
apart by tiny deterministic per-column perturbations (so blocking steps
are strictly positive), then the exact bounds are restored and a short
finishing pass repairs the perturbation-sized infeasibilities.  Pivoting
rules are deterministic: Dantzig pricing with lowest-index tie breaking,
a two-pass ratio test preferring large pivots among near-ties, and
Bland's rule after a long stall.
"""

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..kernels import btran_etas, ftran_etas, ratio_test
from .model import INF, Model, Solution

BASIC, AT_LOWER, AT_UPPER, NB_FREE = 0, 1, 2, 3

REFACTOR_EVERY = 64
DUAL_TOL = 1e-7
FEAS_TOL = 1e-9
PIVOT_TOL = 1e-9
TIE_TOL = 1e-9
DEGEN_CAP = 1000   # consecutive degenerate pivots before Bland's rule
STALL_BLAND = 1000  # iterations without progress before Bland's rule
STALL_GIVEUP = 20000
PERTURB = 1e-9


class _StdForm:
    """Scaled standard form of a model's linear part."""

    def __init__(self, model: Model):
        n, m = model.ncols, model.nrows
        self.n, self.m = n, m
        nnz = sum(a.shape[0] for a in model.row_cols)
        ri = np.empty(nnz, dtype=np.int64)
        ci = np.empty(nnz, dtype=np.int64)
        dv = np.empty(nnz)
        pos = 0
        for i in range(m):
            k = model.row_cols[i].shape[0]
            ri[pos:pos + k] = i
            ci[pos:pos + k] = model.row_cols[i]
            dv[pos:pos + k] = model.row_vals[i]
            pos += k
        A = sp.csc_matrix((dv, (ri, ci)), shape=(m, n))

        # inf-norm equilibration: rows on structural entries, then columns
        if m > 0 and n > 0 and A.nnz > 0:
            rmax = abs(A).max(axis=1).toarray().ravel()
            rmax[rmax <= 0.0] = 1.0
            rs = 1.0 / rmax
            A = sp.diags(rs) @ A
            cmax = abs(A).max(axis=0).toarray().ravel()
            cmax[cmax <= 0.0] = 1.0
            cs = 1.0 / cmax
            A = (A @ sp.diags(cs)).tocsc()
        else:
            rs = np.ones(m)
            cs = np.ones(n)
        self.row_scale = rs
        self.col_scale = cs

        self.A = sp.hstack([A, sp.identity(m, format="csc")], format="csc")
        self.A.sort_indices()
        self.AT = self.A.T.tocsr()

        sign = 1.0 if model.sense == "min" else -1.0
        c = np.zeros(n + m)
        c[:n] = sign * np.asarray(model.col_obj) * cs

        lb = np.empty(n + m)
        ub = np.empty(n + m)
        lb[:n] = np.asarray(model.col_lb) / cs
        ub[:n] = np.asarray(model.col_ub) / cs
        b = np.asarray(model.row_rhs) * rs
        for i in range(m):
            s = model.row_sense[i]
            if s == "<":
                lb[n + i], ub[n + i] = 0.0, INF
            elif s == ">":
                lb[n + i], ub[n + i] = -INF, 0.0
            else:
                lb[n + i], ub[n + i] = 0.0, 0.0

        # normalize the cost vector; feasibility tolerances are handled
        # per variable (relative to bound magnitude) rather than globally
        self.prim_scale = 1.0
        cmaxc = np.abs(c).max() if n + m else 1.0
        self.cost_scale = max(1.0, float(cmaxc))
        c = c / self.cost_scale

        self.c = c
        self.lb, self.ub, self.b = lb, ub, b
        self.sign = sign


class _Factor:
    """Sparse LU of the basis plus a product-form eta file."""

    def __init__(self, A, m):
        self.A = A
        self.m = m
        self.eta = np.empty((REFACTOR_EVERY, m))
        self.eta_rows = np.empty(REFACTOR_EVERY, dtype=np.int64)
        self.k = 0
        self.lu = None

    def refactor(self, basis):
        B = self.A[:, basis]
        self.lu = spla.splu(B.tocsc(), permc_spec="COLAMD")
        self.k = 0

    def ftran(self, rhs):
        x = self.lu.solve(rhs)
        if self.k:
            ftran_etas(self.eta, self.eta_rows, self.k, x)
        return x

    def btran(self, rhs):
        y = rhs.copy()
        if self.k:
            btran_etas(self.eta, self.eta_rows, self.k, y)
        return self.lu.solve(y, trans="T")

    def push_eta(self, alpha, r):
        self.eta[self.k] = alpha
        self.eta_rows[self.k] = r
        self.k += 1

    @property
    def full(self):
        return self.k >= REFACTOR_EVERY


def _dense_col(A, j, m):
    out = np.zeros(m)
    sl = slice(A.indptr[j], A.indptr[j + 1])
    out[A.indices[sl]] = A.data[sl]
    return out


def _hash_frac(n):
    # deterministic pseudo-random fractions in [0, 1): golden-ratio hashing
    idx = np.arange(n, dtype=np.float64)
    return np.mod(idx * 0.6180339887498949 + 0.1234567, 1.0)


def _ratio_test_bland(xB, lB, uB, alpha, sigma, basis):
    """Anti-cycling ratio test: smallest step, ties by lowest basis column."""
    a = sigma * alpha
    m = xB.shape[0]
    tmin = INF
    cand = []
    for i in range(m):
        al = alpha[i]
        if abs(al) <= PIVOT_TOL:
            continue
        x, lo, hi = xB[i], lB[i], uB[i]
        tlo = FEAS_TOL * (1.0 + abs(lo)) if lo > -INF else FEAS_TOL
        thi = FEAS_TOL * (1.0 + abs(hi)) if hi < INF else FEAS_TOL
        if x < lo - tlo:
            if a[i] < 0.0:
                t = (x - lo) / a[i]
            else:
                continue
        elif x > hi + thi:
            if a[i] > 0.0:
                t = (x - hi) / a[i]
            else:
                continue
        else:
            if a[i] > 0.0:
                if lo == -INF:
                    continue
                t = (x - lo) / a[i]
            else:
                if hi == INF:
                    continue
                t = (x - hi) / a[i]
        t = max(t, 0.0)
        cand.append((t, i))
        tmin = min(tmin, t)
    if not cand:
        return INF, -1
    best = min((basis[i], i) for t, i in cand if t <= tmin + TIE_TOL)
    i = best[1]
    t = max(min(t for t, j in cand if j == i), 0.0)
    return t, i


class SimplexCore:
    def __init__(self, std: _StdForm, itmax, trace=None):
        self.std = std
        self.itmax = itmax
        self.iters = 0
        self.trace = trace
        self.lb = std.lb
        self.ub = std.ub

    # -- state helpers --------------------------------------------------
    def _nonbasic_values(self):
        xv = np.zeros(self.std.n + self.std.m)
        at_l = self.vstat == AT_LOWER
        at_u = self.vstat == AT_UPPER
        xv[at_l] = self.lb[at_l]
        xv[at_u] = self.ub[at_u]
        return xv

    def _recompute_basics(self):
        # only called right after a refactor, when the eta file is empty
        std = self.std
        xnb = self._nonbasic_values()
        rhs = std.b - std.A @ xnb
        self.xB = self.factor.lu.solve(rhs)

    def _reset_to_slack_basis(self):
        std = self.std
        n, N = std.n, std.n + std.m
        for j in range(N):
            if self.vstat[j] == BASIC:
                if self.lb[j] > -INF:
                    self.vstat[j] = AT_LOWER
                elif self.ub[j] < INF:
                    self.vstat[j] = AT_UPPER
                else:
                    self.vstat[j] = NB_FREE
        self.basis = np.arange(n, N, dtype=np.int64)
        self.vstat[n:] = BASIC

    def _safe_refactor(self):
        """Refactorize; a numerically singular basis falls back to the
        (always nonsingular) slack basis and lets phase 1 rebuild."""
        try:
            self.factor.refactor(self.basis)
        except RuntimeError:
            self._reset_to_slack_basis()
            self.factor.refactor(self.basis)

    def _basic_tols(self):
        lo = self.lb[self.basis]
        hi = self.ub[self.basis]
        tl = FEAS_TOL * (1.0 + np.where(np.isfinite(lo), np.abs(lo), 0.0))
        tu = FEAS_TOL * (1.0 + np.where(np.isfinite(hi), np.abs(hi), 0.0))
        return lo, hi, tl, tu

    def _infeasibility(self):
        lo, hi, tl, tu = self._basic_tols()
        over = np.maximum(self.xB - hi - tu, 0.0)
        under = np.maximum(lo - tl - self.xB, 0.0)
        return over.sum() + under.sum()

    def _phase1_costs(self):
        lo, hi, tl, tu = self._basic_tols()
        cB = np.zeros(self.basis.shape[0])
        cB[self.xB > hi + tu] = 1.0
        cB[self.xB < lo - tl] = -1.0
        return cB

    # -- driver -----------------------------------------------------------
    def run(self, basis=None, vstat=None):
        std = self.std
        n, m, N = std.n, std.m, std.n + std.m
        if basis is None or vstat is None or len(basis) != m or len(vstat) != N:
            self.vstat = np.empty(N, dtype=np.int8)
            for j in range(n):
                if std.lb[j] > -INF:
                    self.vstat[j] = AT_LOWER
                elif std.ub[j] < INF:
                    self.vstat[j] = AT_UPPER
                else:
                    self.vstat[j] = NB_FREE
            self.basis = np.arange(n, N, dtype=np.int64)
            self.vstat[n:] = BASIC
        else:
            self.basis = basis.astype(np.int64).copy()
            self.vstat = vstat.astype(np.int8).copy()

        self.factor = _Factor(std.A, m)

        # pass 1: anti-degeneracy bound spread, deterministic per column
        spread = PERTURB * (0.5 + _hash_frac(N))
        self.lb = np.where(std.lb > -INF, std.lb - spread * (1.0 + np.abs(std.lb)),
                           std.lb)
        self.ub = np.where(std.ub < INF, std.ub + spread[::-1] * (1.0 + np.abs(std.ub)),
                           std.ub)
        fixed = std.ub - std.lb <= 0.0  # keep fixed columns exactly fixed
        self.lb[fixed] = std.lb[fixed]
        self.ub[fixed] = std.ub[fixed]

        self._safe_refactor()
        self._recompute_basics()
        status, farkas, ray = self._main_loop()

        if status == "optimal":
            # pass 2: exact bounds, short finishing run from the same basis
            self.lb = std.lb
            self.ub = std.ub
            self._safe_refactor()
            self._recompute_basics()
            status, farkas, ray = self._main_loop()

        self._safe_refactor()
        self._recompute_basics()
        return status, farkas, ray

    # -- main loop ---------------------------------------------------------
    def _main_loop(self):
        std = self.std
        n, m, N = std.n, std.m, std.n + std.m

        degen_run = 0
        bland = False
        status = "iteration-limit"
        farkas = None
        ray = None
        banned = np.zeros(N, dtype=bool)
        ban_resets = 0

        base_accept = FEAS_TOL * (1.0 + m)
        accept_level = base_accept
        best_infeas = INF
        best_obj = INF
        stall = 0
        since_refactor = 0

        while self.iters < self.itmax:
            self.iters += 1
            since_refactor += 1
            if since_refactor >= 4 * REFACTOR_EVERY:
                self._safe_refactor()
                self._recompute_basics()
                since_refactor = 0
            infeas = self._infeasibility()
            phase1 = infeas > accept_level
            obj_now = infeas if phase1 else float(std.c[self.basis] @ self.xB)
            ref = best_infeas if phase1 else best_obj
            # progress threshold is nearly absolute: perturbation-sized but
            # genuine steps must count, else Bland engages during real work
            if ref == INF or obj_now < ref - 1e-12 * (1.0 + abs(obj_now)):
                if phase1:
                    best_infeas = obj_now
                else:
                    best_obj = obj_now
                stall = 0
                bland = False
            else:
                stall += 1
            if stall == 200 or stall == STALL_BLAND:
                self._safe_refactor()
                self._recompute_basics()
                since_refactor = 0
                infeas = self._infeasibility()
                phase1 = infeas > accept_level
            if stall >= STALL_BLAND:
                if phase1 and infeas <= 100.0 * base_accept:
                    # irreducible noise-floor infeasibility: accept and optimize
                    accept_level = min(infeas * 1.25, 125.0 * base_accept)
                    stall = 0
                    bland = False
                    phase1 = False
                else:
                    bland = True
            if stall >= STALL_GIVEUP:
                break
            if self.trace and self.iters % self.trace == 0:
                print(f"  it={self.iters} phase1={phase1} infeas={infeas:.3e} "
                      f"obj={float(std.c[self.basis] @ self.xB):.8e} "
                      f"stall={stall} bland={bland}")

            if phase1:
                cB = self._phase1_costs()
                cN_full = np.zeros(N)
            else:
                cB = std.c[self.basis]
                cN_full = std.c

            y = self.factor.btran(cB)
            d = cN_full - std.AT @ y

            viol = np.zeros(N)
            nb_l = self.vstat == AT_LOWER
            nb_u = self.vstat == AT_UPPER
            nb_f = self.vstat == NB_FREE
            viol[nb_l] = np.maximum(-d[nb_l], 0.0)
            viol[nb_u] = np.maximum(d[nb_u], 0.0)
            viol[nb_f] = np.abs(d[nb_f])
            viol[self.ub - self.lb <= 0.0] = 0.0  # fixed columns never enter
            viol[banned] = 0.0

            if bland:
                elig = np.nonzero(viol > DUAL_TOL)[0]
                q = int(elig[0]) if elig.size else -1
            else:
                q = int(np.argmax(viol))
                if viol[q] <= DUAL_TOL:
                    q = -1

            if q < 0 and banned.any():
                # shelved candidates get another chance on fresh numerics
                banned[:] = False
                ban_resets += 1
                self._safe_refactor()
                self._recompute_basics()
                since_refactor = 0
                continue

            if q < 0:
                if phase1:
                    status = "infeasible"
                    farkas = y
                else:
                    status = "optimal"
                break

            if self.vstat[q] == AT_LOWER:
                sigma = 1.0
            elif self.vstat[q] == AT_UPPER:
                sigma = -1.0
            else:
                sigma = 1.0 if d[q] < 0.0 else -1.0

            alpha = self.factor.ftran(_dense_col(std.A, q, m))

            # self-check: pricing (BTRAN path) must agree with the FTRAN'd
            # column; disagreement means the eta file degraded numerically
            d_check = cN_full[q] - float(cB @ alpha)
            if abs(d_check - d[q]) > 1e-7 * (1.0 + abs(d[q])):
                self._safe_refactor()
                self._recompute_basics()
                since_refactor = 0
                continue

            lo = self.lb[self.basis]
            hi = self.ub[self.basis]
            t_block, r = ratio_test(self.xB, lo, hi, alpha, sigma,
                                    FEAS_TOL, PIVOT_TOL, TIE_TOL)
            if bland and r >= 0:
                # Bland's rule needs the lowest-index leaving variable among
                # ties; the default two-pass rule prefers large pivots
                t_block, r = _ratio_test_bland(self.xB, lo, hi, alpha, sigma,
                                               self.basis)
            t_flip = self.ub[q] - self.lb[q] if self.vstat[q] != NB_FREE else INF

            if (r >= 0 and abs(alpha[r]) < 1e-7 and t_flip > t_block
                    and ban_resets < 3):
                banned[q] = True
                continue

            if t_block == INF and t_flip == INF:
                if phase1:
                    status = "infeasible"
                    farkas = y
                else:
                    status = "unbounded"
                    ray = (q, sigma, alpha.copy())
                break

            if t_flip < t_block - 1e-15:
                self.xB -= sigma * t_flip * alpha
                self.vstat[q] = AT_UPPER if self.vstat[q] == AT_LOWER else AT_LOWER
                degen_run = 0
                continue

            t = t_block
            enter_from = self.lb[q] if sigma > 0 else self.ub[q]
            if self.vstat[q] == NB_FREE:
                enter_from = 0.0
            self.xB -= sigma * t * alpha
            xq = enter_from + sigma * t

            leave = self.basis[r]
            xl = self.xB[r]
            if abs(xl - self.lb[leave]) <= abs(xl - self.ub[leave]):
                self.vstat[leave] = AT_LOWER
            else:
                self.vstat[leave] = AT_UPPER

            self.basis[r] = q
            self.vstat[q] = BASIC
            self.xB[r] = xq
            weak_pivot = abs(alpha[r]) < 1e-8 * max(1.0, np.abs(alpha).max())
            self.factor.push_eta(alpha, r)
            if banned.any():
                banned[:] = False
            ban_resets = 0
            if weak_pivot:
                self._safe_refactor()
                self._recompute_basics()
                since_refactor = 0

            if t <= 1e-12:
                degen_run += 1
                if degen_run >= DEGEN_CAP:
                    bland = True
            else:
                degen_run = 0

            if self.factor.full:
                self._safe_refactor()
                self._recompute_basics()
                since_refactor = 0

        return status, farkas, ray


def _solve_bounds_only(model: Model) -> Solution:
    """Rowless models: optimize each column against its own bounds."""
    sign = 1.0 if model.sense == "min" else -1.0
    n = model.ncols
    x = np.zeros(n)
    for j in range(n):
        c = sign * model.col_obj[j]
        lo, hi = model.col_lb[j], model.col_ub[j]
        if c > 0.0:
            if lo <= -INF:
                ray = np.zeros(n)
                ray[j] = -1.0
                return Solution("unbounded", ray=ray)
            x[j] = lo
        elif c < 0.0:
            if hi >= INF:
                ray = np.zeros(n)
                ray[j] = 1.0
                return Solution("unbounded", ray=ray)
            x[j] = hi
        else:
            x[j] = min(max(0.0, lo), hi)
    red = sign * np.asarray(model.col_obj)
    vst = np.empty(n, dtype=np.int8)
    for j in range(n):
        if model.col_lb[j] > -INF:
            vst[j] = AT_LOWER if x[j] == model.col_lb[j] else (
                AT_UPPER if x[j] == model.col_ub[j] else AT_LOWER)
        elif model.col_ub[j] < INF:
            vst[j] = AT_UPPER
        else:
            vst[j] = NB_FREE
    return Solution("optimal", x=x, obj=model.objective_value(x),
                    duals=np.zeros(0), redcost=red,
                    basis=np.zeros(0, dtype=np.int64), vstat=vst)


def solve_lp(model: Model, basis=None, vstat=None, itmax=None) -> Solution:
    """Solve the linear part of ``model`` (binaries treated as continuous
    with their current bounds).  Returns primal values, row duals and
    reduced costs; infeasible/unbounded outcomes carry certificates."""
    if model.nrows == 0:
        return _solve_bounds_only(model)
    std = _StdForm(model)
    n, m = std.n, std.m
    if itmax is None:
        itmax = 50000 + 10 * (n + m)
    core = SimplexCore(std, itmax)
    status, farkas, ray = core.run(basis, vstat)

    if status == "optimal":
        xv = core._nonbasic_values()
        xv[core.basis] = core.xB
        x = xv[:n] * std.col_scale * std.prim_scale
        y_int = core.factor.btran(std.c[core.basis])
        d_int = std.c - std.AT @ y_int
        duals = std.sign * y_int * std.row_scale * std.cost_scale
        redcost = std.sign * d_int[:n] / std.col_scale * std.cost_scale
        obj = model.objective_value(x)
        return Solution("optimal", x=x, obj=obj, duals=duals, redcost=redcost,
                        iters=core.iters, basis=core.basis, vstat=core.vstat)
    if status == "infeasible":
        fk = farkas * std.row_scale if farkas is not None else None
        return Solution("infeasible", iters=core.iters, farkas=fk,
                        basis=core.basis, vstat=core.vstat)
    if status == "unbounded":
        q, sigma, alpha = ray
        direction = np.zeros(n + m)
        direction[q] = sigma
        direction[core.basis] = -sigma * alpha
        r = direction[:n] * std.col_scale * std.prim_scale
        return Solution("unbounded", iters=core.iters, ray=r,
                        basis=core.basis, vstat=core.vstat)
    return Solution("iteration-limit", iters=core.iters,
                    message=f"no convergence within {itmax} iterations",
                    basis=core.basis, vstat=core.vstat)
