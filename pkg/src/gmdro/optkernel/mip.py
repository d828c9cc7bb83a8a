"""Best-first branch-and-bound over binary columns with an outer
approximation of the stored convex facts.

Every node alternates LP solves with conic separation; cuts are valid
globally and stay in the model.  Warm starts pass the parent basis down,
extending it with basic slacks for freshly cut rows.  All tie-breaking is
deterministic (most-fractional branching by lowest index, heap ordered by
(bound, node id)), so identical models yield identical solutions.
"""

import heapq

import numpy as np

from .conic import apply_cuts, conic_violation, separate_conic
from .model import INF, Model, Solution
from .simplex import AT_LOWER, AT_UPPER, BASIC, NB_FREE, solve_lp

INT_TOL = 1e-6


def extend_warm(basis, vstat, n, m_old, m_new):
    """Extend a warm basis after rows were appended: new slacks are basic."""
    if basis is None or vstat is None:
        return None, None
    add = m_new - m_old
    if add <= 0:
        return basis, vstat
    basis2 = np.concatenate([basis, np.arange(n + m_old, n + m_new, dtype=np.int64)])
    vstat2 = np.concatenate([vstat, np.full(add, BASIC, dtype=np.int8)])
    return basis2, vstat2


def remap_warm(basis, vstat, n_old, m_old, n_new, m_new, model: Model):
    """Remap a warm basis after both columns and rows were appended."""
    if basis is None or vstat is None:
        return None, None
    shift = n_new - n_old
    basis2 = np.where(basis >= n_old, basis + shift, basis)
    basis2 = np.concatenate(
        [basis2, np.arange(n_new + m_old, n_new + m_new, dtype=np.int64)]
    )
    stat_new = np.empty(n_new - n_old, dtype=np.int8)
    for k, j in enumerate(range(n_old, n_new)):
        if model.col_lb[j] > -INF:
            stat_new[k] = AT_LOWER
        elif model.col_ub[j] < INF:
            stat_new[k] = AT_UPPER
        else:
            stat_new[k] = NB_FREE
    vstat2 = np.concatenate(
        [vstat[:n_old], stat_new, vstat[n_old:], np.full(m_new - m_old, BASIC, np.int8)]
    )
    return basis2, vstat2


WARM_ITMAX = 5000


def _lp(model, basis, vstat):
    """Warm-started solve with an iteration budget, cold retry on failure.
    Warm bases can wander after branching flips; a cold solve from the
    slack basis is reliably cheap, so it backstops the warm attempt."""
    if basis is not None:
        sol = solve_lp(model, basis, vstat, itmax=WARM_ITMAX)
        if sol.status != "iteration-limit":
            return sol
    return solve_lp(model)


def _cut_loop(model, basis, vstat, rounds):
    """Alternate LP solves and separation; returns (sol, clean)."""
    sol = _lp(model, basis, vstat)
    if sol.status != "optimal":
        return sol, False
    for _ in range(rounds):
        cuts = separate_conic(model, sol.x)
        if not cuts:
            return sol, True
        m_old = model.nrows
        apply_cuts(model, cuts)
        b, v = extend_warm(sol.basis, sol.vstat, model.ncols, m_old, model.nrows)
        sol = _lp(model, b, v)
        if sol.status != "optimal":
            return sol, False
    return sol, conic_violation(model, sol.x) <= 1e-6


class _Node:
    __slots__ = ("nid", "bound", "fixes", "basis", "vstat")

    def __init__(self, nid, bound, fixes, basis, vstat):
        self.nid = nid
        self.bound = bound
        self.fixes = fixes
        self.basis = basis
        self.vstat = vstat

    def __lt__(self, other):
        return (self.bound, self.nid) < (other.bound, other.nid)


def solve_mip(model: Model, gap_rel=1e-6, gap_abs=1e-9, node_limit=200000,
              root_cut_rounds=60, node_cut_rounds=10, int_cut_rounds=300,
              heuristics=True, log=None) -> Solution:
    """Branch-and-bound (binaries) around the LP/cut engine.

    Also serves models without binaries: those reduce to the pure cut loop.
    Objective sense follows the model; bounds/gaps are tracked in
    minimization space internally.
    """
    sgn = 1.0 if model.sense == "min" else -1.0
    bins = model.binaries
    root_lb = [model.col_lb[j] for j in bins]
    root_ub = [model.col_ub[j] for j in bins]

    def vmin(sol):
        return sgn * sol.obj

    def apply_fixes(fixes):
        for j, lo, hi in zip(bins, root_lb, root_ub):
            model.col_lb[j] = lo
            model.col_ub[j] = hi
        for j, val in fixes:
            model.col_lb[j] = val
            model.col_ub[j] = val

    total_iters = 0
    nodes_done = 0
    incumbent = None
    inc_vmin = INF

    # ---- root ----------------------------------------------------------
    apply_fixes([])
    sol, clean = _cut_loop(model, None, None, root_cut_rounds)
    if sol.status == "infeasible":
        return Solution("infeasible", iters=sol.iters, farkas=sol.farkas)
    if sol.status == "unbounded":
        return Solution("unbounded", iters=sol.iters, ray=sol.ray)
    if sol.status != "optimal":
        return sol
    total_iters += sol.iters
    root_bound = vmin(sol)

    def integral(x):
        return all(abs(x[j] - round(x[j])) <= INT_TOL for j in bins)

    def try_incumbent(sol):
        nonlocal incumbent, inc_vmin
        if vmin(sol) < inc_vmin - 1e-12:
            inc_vmin = vmin(sol)
            incumbent = sol

    def probe(fixvals, warm=None):
        """Continuous solve with all binaries fixed; used by heuristics
        and by integral nodes to certify conic feasibility."""
        nonlocal total_iters
        apply_fixes(list(zip(bins, fixvals)))
        s, ok = _cut_loop(model, warm[0] if warm else None,
                          warm[1] if warm else None, int_cut_rounds)
        if s.status == "optimal":
            total_iters += s.iters
        return s if (s.status == "optimal" and ok) else None

    if not bins:
        if clean:
            return sol
        s, ok = _cut_loop(model, sol.basis, sol.vstat, int_cut_rounds)
        return s if ok or s.status != "optimal" else Solution(
            "iteration-limit", x=s.x, obj=s.obj, iters=total_iters,
            message="cut loop did not close")

    if heuristics:
        allup = [min(1.0, u) for u in root_ub]
        s = probe(allup)
        if s is not None:
            try_incumbent(s)
        ceilv = [
            (1.0 if sol.x[j] > INT_TOL else 0.0) if u >= 1.0 else u
            for j, u in zip(bins, root_ub)
        ]
        if ceilv != allup:
            s = probe(ceilv)
            if s is not None:
                try_incumbent(s)

    heap = []
    next_id = 1
    heapq.heappush(heap, _Node(0, root_bound, [], sol.basis, sol.vstat))

    while heap:
        if nodes_done >= node_limit:
            break
        node = heapq.heappop(heap)
        # prune against incumbent
        tol = max(gap_abs, gap_rel * (1e-10 + abs(inc_vmin)))
        if node.bound >= inc_vmin - tol:
            heapq.heappush(heap, node)  # bound certified; keep for gap calc
            break
        nodes_done += 1
        apply_fixes(node.fixes)
        b, v = extend_warm(node.basis, node.vstat, model.ncols,
                           (len(node.vstat) - model.ncols) if node.vstat is not None else 0,
                           model.nrows)
        sol, clean = _cut_loop(model, b, v, node_cut_rounds)
        if sol.status == "infeasible":
            continue
        if sol.status != "optimal":
            break
        total_iters += sol.iters
        bound = vmin(sol)
        if bound >= inc_vmin - tol:
            continue
        if integral(sol.x):
            if clean:
                try_incumbent(sol)
                continue
            s = probe([round(sol.x[j]) for j in bins], warm=(sol.basis, sol.vstat))
            if s is not None:
                try_incumbent(s)
            continue
        # branch on the most fractional binary, lowest index on ties
        fr_best, jbr = -1.0, -1
        for j in bins:
            f = min(sol.x[j] - np.floor(sol.x[j]), np.ceil(sol.x[j]) - sol.x[j])
            if f > fr_best + 1e-12:
                fr_best, jbr = f, j
        for val in (0.0, 1.0):
            heapq.heappush(
                heap,
                _Node(next_id, bound, node.fixes + [(jbr, val)], sol.basis, sol.vstat),
            )
            next_id += 1

    apply_fixes([])  # restore original bounds

    lb = min((nd.bound for nd in heap), default=inc_vmin)
    lb = min(lb, inc_vmin)
    if incumbent is None:
        if not heap and nodes_done < node_limit:
            return Solution("infeasible", iters=total_iters, nodes=nodes_done)
        return Solution("iteration-limit", iters=total_iters, nodes=nodes_done,
                        message="no incumbent within node limit")
    gap = (inc_vmin - lb) / (1e-10 + abs(inc_vmin))
    status = "optimal" if (inc_vmin - lb) <= max(gap_abs, gap_rel * (1e-10 + abs(inc_vmin))) else "iteration-limit"
    return Solution(status, x=incumbent.x, obj=sgn * inc_vmin,
                    duals=incumbent.duals, redcost=incumbent.redcost,
                    gap=max(gap, 0.0), iters=total_iters, nodes=nodes_done,
                    basis=incumbent.basis, vstat=incumbent.vstat)
