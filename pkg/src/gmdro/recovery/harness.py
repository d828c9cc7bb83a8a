"""Recovery of physics-feasible operations for a fixed switching decision,
plus the evaluation machinery built on top of it.

The recovery loop alternates (a) a continuous re-solve of the relaxed
model with the switching fixed, proposing dispatch, allowance, and a dual
certificate; (b) a Newton projection of that proposal onto the AC
equations, treating the GIC allowance as reactive load; and (c) an exact
restricted inner maximization of the damage oracle over the sampled
fields.  The allowance fed to Newton is damped (factor 0.5) because the
loss depends on voltages which depend on the loss.
"""

import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

from ..ambiguity import sample_support
from ..dro import DualCertificate, solve_dro
from ..formulation import MasterProblem, Options, field_radius
from ..grid.gic import GicResponse
from ..grid.model import SwitchingDecision
from ..optkernel import solve_mip
from .newton import PowerFlowError, newton_ac_power_flow


class RecoveryError(RuntimeError):
    pass


@dataclass
class OperatingPoint:
    v: dict
    theta: dict
    flows: dict              # branch id -> (pf, pt, qf, qt)
    fp: dict
    fq: dict
    shed_p: dict             # bus id -> l^{p+}
    shed_q: dict
    loss_p: dict             # bus id -> l^{p-}
    loss_q: dict
    dqloss: dict
    slack_bus: int = 0
    mismatch: float = 0.0

    def shed_total(self):
        return sum(math.hypot(self.shed_p[b], self.shed_q[b]) for b in self.shed_p)

    def loss_total(self):
        return sum(math.hypot(self.loss_p[b], self.loss_q[b]) for b in self.loss_p)

    def dqloss_total(self):
        return sum(self.dqloss.values())


@dataclass
class EvaluationReport:
    approach: str
    c1: float
    c2: float
    c3: float
    c4: float
    shed_total: float
    loss_total: float
    dqloss_total: float
    per_bus_dqloss: dict
    off_branches: list
    off_generators: list
    iterations: int = 0
    gap: float = 0.0
    wall_ms: float = 0.0
    out_of_sample: float = None


def _threads():
    try:
        return max(1, int(os.environ.get("GMDRO_THREADS", "1")))
    except ValueError:
        return 1


def _fix_binaries(model, fs, z: SwitchingDecision):
    for e, col in fs.za.items():
        val = 1.0 if z.branch_on(e) else 0.0
        model.col_lb[col] = val
        model.col_ub[col] = val
    for k, col in fs.zg.items():
        val = 1.0 if z.gen_on(k) else 0.0
        model.col_lb[col] = val
        model.col_ub[col] = val
    model.col_binary = [False] * model.ncols


def generation_cost(net, z: SwitchingDecision, fp):
    c = 0.0
    for g in net.generators:
        if z.gen_on(g.id):
            p = fp.get(g.id, 0.0)
            c += g.c0 + g.c1 * p + g.c2 * p * p
    return c


def recover_operations(net, dc, z: SwitchingDecision, samples, mu,
                       opts: Options, eps=1e-4, max_rounds=20,
                       mip_gap=1e-8):
    """Fixed-point recovery; returns (OperatingPoint, DualCertificate,
    eta_hat, rounds).  Newton divergence marks the switching AC-infeasible."""
    if not samples:
        raise RecoveryError("recovery needs at least one sampled field")
    z.validate(net)
    fb = field_radius(list(samples) + [mu])
    mp = MasterProblem(net, dc, mu, opts, fb)
    _fix_binaries(mp.model, mp.fs, z)
    # the mean scenario keeps the free dual variables bounded; sampled
    # worst cases are appended as the rounds progress
    mp.add_scenario(mu)

    committed = [g for g in net.generators if z.gen_on(g.id)]
    if not committed:
        raise RecoveryError("switching decision commits no generator")
    slack_bus = max(committed, key=lambda g: (g.pmax, -g.id)).bus

    dq_cur = None
    ub_prev = math.inf
    op = None
    lam = None
    eta_hat = 0.0
    rounds = 0
    for rounds in range(1, max_rounds + 1):
        sol = solve_mip(mp.model, gap_rel=mip_gap)
        if sol.status != "optimal":
            raise RecoveryError(f"relaxed re-solve failed: {sol.status}")
        fs = mp.fs
        dq_star = {b: float(sol.x[j]) for b, j in fs.dqloss.items()}
        if dq_cur is None:
            dq_cur = dq_star
        else:
            dq_cur = {b: 0.5 * dq_cur[b] + 0.5 * dq_star[b] for b in dq_star}
        lam = DualCertificate(float(sol.x[mp.lam_e]), float(sol.x[mp.lam_n]),
                              float(sol.x[mp.eta]))
        dispatch = {g.id: float(sol.x[fs.fp[g.id]]) for g in committed}
        vset = {}
        for g in committed:
            w = float(sol.x[fs.w[g.bus]])
            vset[g.bus] = math.sqrt(max(w, 1e-12))
        shed_p = {b.id: float(sol.x[fs.lp_plus[b.id]]) for b in net.buses}
        shed_q = {b.id: float(sol.x[fs.lq_plus[b.id]]) for b in net.buses}
        loss_p = {b.id: float(sol.x[fs.lp_minus[b.id]]) for b in net.buses}
        loss_q = {b.id: float(sol.x[fs.lq_minus[b.id]]) for b in net.buses}
        pload = {b.id: b.pd - shed_p[b.id] + loss_p[b.id] for b in net.buses}
        qload = {b.id: b.qd - shed_q[b.id] + loss_q[b.id] for b in net.buses}

        try:
            nr = newton_ac_power_flow(net, z, dispatch, qextra=dq_cur,
                                      pload=pload, qload=qload, vset=vset,
                                      slack_bus=slack_bus)
        except PowerFlowError as exc:
            raise RecoveryError(
                f"switching decision is AC-infeasible: {exc}") from exc

        op = OperatingPoint(
            v=nr.v, theta=nr.theta, flows=nr.flows, fp=nr.fp, fq=nr.fq,
            shed_p=shed_p, shed_q=shed_q, loss_p=loss_p, loss_q=loss_q,
            dqloss=dict(dq_cur), slack_bus=slack_bus, mismatch=nr.mismatch)

        # restricted inner max by the exact oracle over the sampled fields
        resp = GicResponse(net, dc, z)
        fields = np.array([[p[0], p[1]] for p in samples])
        vals = resp.damage(nr.v, dq_cur, fields, opts.kappa_s)
        adj = vals - np.array([lam.price(p) for p in samples])
        kbest = int(np.argmax(adj))
        eta_hat = float(adj[kbest])
        ub = (generation_cost(net, z, nr.fp)
              + opts.kappa_l * sum(shed_p[b] + shed_q[b] + loss_p[b] + loss_q[b]
                                   for b in shed_p)
              + lam.lam_e * mu[0] + lam.lam_n * mu[1] + eta_hat)
        if abs(ub - ub_prev) <= eps * (1.0 + abs(ub)):
            break
        ub_prev = ub
        xi_star = tuple(samples[kbest])
        if not any(abs(s[0] - xi_star[0]) <= 1e-12 and abs(s[1] - xi_star[1]) <= 1e-12
                   for s in mp.scenarios):
            mp.add_scenario(xi_star)
    return op, lam, eta_hat, rounds


def check_sample_sufficiency(net, dc, z, op: OperatingPoint,
                             lam: DualCertificate, eta_hat, validation,
                             kappa_s, slack=1e-9):
    """Count validation fields whose certificate inequality fails."""
    if not validation:
        return 0
    resp = GicResponse(net, dc, z)
    fields = np.array([[p[0], p[1]] for p in validation])
    vals = resp.damage(op.v, op.dqloss, fields, kappa_s)
    adj = vals - fields @ np.array([lam.lam_e, lam.lam_n])
    return int(np.sum(adj > eta_hat + slack))


def out_of_sample_cost(net, dc, z, op: OperatingPoint, test_samples, kappa_s):
    """Average exact damage over fresh fields."""
    if not test_samples:
        return 0.0
    resp = GicResponse(net, dc, z)
    fields = np.array([[p[0], p[1]] for p in test_samples])
    vals = resp.damage(op.v, op.dqloss, fields, kappa_s)
    return float(vals.mean())


def evaluate_approach(net, dc, approach, amb=None, samples=None,
                      train_samples=None, test_samples=None,
                      opts: Options = None, eps=1e-4, mip_gap=1e-8,
                      algorithm="accel-ccg"):
    """Obtain a switching decision per approach, recover operations, and
    assemble the cost decomposition (plus out-of-sample damage when test
    fields are given).

    a1: robust solve over the ambiguity set;  a2: deterministic at the
    mean;  a3: everything on;  sp: sample-average over training fields.
    """
    opts = opts or Options()
    t0 = time.perf_counter()
    approach = approach.lower()
    iterations = 0
    gap = 0.0
    if approach == "a1":
        if amb is None:
            raise RecoveryError("approach a1 needs an ambiguity set")
        res = solve_dro(net, dc, amb.support, amb.mean, opts,
                        algorithm=algorithm, eps=eps, mip_gap=mip_gap)
        z = res.switching
        mu = tuple(amb.mean)
        iterations = res.state.iterations
        gap = res.state.gap
    elif approach == "a2":
        if amb is None:
            raise RecoveryError("approach a2 needs an ambiguity set (for its mean)")
        from ..formulation import build_deterministic

        model, fs, _ = build_deterministic(net, dc, tuple(amb.mean), opts)
        sol = solve_mip(model, gap_rel=mip_gap)
        if sol.status != "optimal":
            raise RecoveryError(f"deterministic solve failed: {sol.status}")
        z = fs.switching(sol.x)
        mu = tuple(amb.mean)
        gap = sol.gap
    elif approach == "a3":
        z = SwitchingDecision.all_on(net)
        mu = tuple(amb.mean) if amb is not None else _mean_of(train_samples or samples)
    elif approach == "sp":
        if not train_samples:
            raise RecoveryError("approach sp needs training samples")
        from ..formulation import build_sp

        model, fs, _ = build_sp(net, dc, train_samples, opts)
        sol = solve_mip(model, gap_rel=mip_gap)
        if sol.status != "optimal":
            raise RecoveryError(f"sample-average solve failed: {sol.status}")
        z = fs.switching(sol.x)
        mu = _mean_of(train_samples)
        gap = sol.gap
    else:
        raise RecoveryError(f"unknown approach {approach!r}")

    rec_fields = samples or train_samples
    if not rec_fields:
        raise RecoveryError("no sampled fields for recovery")
    op, lam, eta_hat, rounds = recover_operations(net, dc, z, rec_fields, mu,
                                                  opts, eps=eps, mip_gap=mip_gap)
    c1 = generation_cost(net, z, op.fp)
    c2 = opts.kappa_l * sum(op.shed_p[b] + op.shed_q[b] + op.loss_p[b] + op.loss_q[b]
                            for b in op.shed_p)
    c3 = lam.lam_e * mu[0] + lam.lam_n * mu[1] + eta_hat
    oos = None
    if test_samples:
        oos = out_of_sample_cost(net, dc, z, op, test_samples, opts.kappa_s)
    report = EvaluationReport(
        approach=approach, c1=c1, c2=c2, c3=c3, c4=c1 + c2 + c3,
        shed_total=op.shed_total(), loss_total=op.loss_total(),
        dqloss_total=op.dqloss_total(), per_bus_dqloss=dict(op.dqloss),
        off_branches=z.off_branches(), off_generators=z.off_generators(),
        iterations=iterations or rounds, gap=gap,
        wall_ms=(time.perf_counter() - t0) * 1e3, out_of_sample=oos)
    return report, z, op, lam, eta_hat


def _mean_of(samples):
    xs = [p[0] for p in samples]
    ys = [p[1] for p in samples]
    return (sum(xs) / len(xs), sum(ys) / len(ys))


def run_experiment_grid(net, dc, radii, m_fracs, deltas_deg, seed,
                        opts: Options = None, approaches=("a1",),
                        n_train=50, eps=1e-4, mip_gap=1e-8,
                        angles_deg=(0.0, 45.0, 90.0, 135.0, 180.0)):
    """Cartesian (R, M-fraction, mean-direction) sweep; one result row per
    instance and approach.  Row k uses seed + k so rows are independently
    replayable; failures are recorded and the sweep continues."""
    from ..ambiguity import AmbiguitySet

    jobs = []
    idx = 0
    for r in radii:
        for mf in m_fracs:
            for dd in deltas_deg:
                for ap in approaches:
                    jobs.append((idx, r, mf, dd, ap))
                    idx += 1

    def run_one(job):
        k, r, mf, dd, ap = job
        row = {"instance": k, "R": r, "M": mf * r, "delta_mu": dd, "approach": ap}
        try:
            amb = AmbiguitySet.polar(r, mf, dd, angles_deg=angles_deg)
            train = sample_support(amb.support, n_train, seed + k)
            rep, z, op, lam, eta = evaluate_approach(
                net, dc, ap, amb=amb, samples=train, opts=opts,
                eps=eps, mip_gap=mip_gap)
            row.update({
                "C1": rep.c1, "C2": rep.c2, "C3": rep.c3, "C4": rep.c4,
                "shed_total": rep.shed_total, "loss_total": rep.loss_total,
                "dqloss_total": rep.dqloss_total,
                "iterations": rep.iterations, "gap": rep.gap,
                "wall_ms": rep.wall_ms,
                "off_branches": rep.off_branches,
                "off_generators": rep.off_generators,
                "status": "ok",
            })
        except Exception as exc:  # per-row failures must not kill the sweep
            row.update({"status": f"error: {exc}"})
        return row

    nthreads = _threads()
    if nthreads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=nthreads) as pool:
            rows = list(pool.map(run_one, jobs))
    else:
        rows = [run_one(j) for j in jobs]
    return rows
