"""Newton-Raphson AC power flow in polar coordinates.

Operates on the switched-on subnetwork.  Buses with committed generators
are PV (reactive limits enforced by switching violated buses to PQ),
everything else PQ, one designated slack.  Flat start, convergence on the
worst mismatch.  De-energized islands without load or committed
generation are reported with zero voltage; islands that strand load or
generation raise a divergence report naming the island.
"""

import numpy as np

from ..grid.model import AcNetwork, SwitchingDecision


class PowerFlowError(RuntimeError):
    def __init__(self, message, islands=None, trace=None):
        super().__init__(message)
        self.islands = islands or []
        self.trace = trace or []


class NewtonResult:
    def __init__(self, v, theta, fp, fq, flows, mismatch, iters, slack_bus,
                 dead_buses=()):
        self.v = v              # bus id -> p.u.
        self.theta = theta      # bus id -> rad
        self.fp = fp            # gen id -> p.u. (slack-adjusted)
        self.fq = fq            # gen id -> p.u.
        self.flows = flows      # branch id -> (pf, pt, qf, qt)
        self.mismatch = mismatch
        self.iters = iters
        self.slack_bus = slack_bus
        self.dead_buses = tuple(dead_buses)


def _on_components(net, z):
    parent = {b.id: b.id for b in net.buses}

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for br in net.branches:
        if z.branch_on(br.id):
            ra, rb = find(br.from_bus), find(br.to_bus)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)
    comp = {}
    for b in net.buses:
        comp.setdefault(find(b.id), []).append(b.id)
    return list(comp.values())


def ybus(net: AcNetwork, z: SwitchingDecision, buses):
    pos = {b: k for k, b in enumerate(buses)}
    n = len(buses)
    Y = np.zeros((n, n), dtype=complex)
    for br in net.branches:
        if not z.branch_on(br.id):
            continue
        if br.from_bus not in pos or br.to_bus not in pos:
            continue
        i, j = pos[br.from_bus], pos[br.to_bus]
        y = br.g + 1j * br.b
        ych = 1j * br.bc / 2.0
        a = br.tap
        Y[i, i] += (y + ych) / a ** 2
        Y[j, j] += y + ych
        Y[i, j] += -y / a
        Y[j, i] += -y / a
    for b in net.buses:
        if b.id in pos:
            Y[pos[b.id], pos[b.id]] += b.gs + 1j * b.bs
    return Y, pos


def newton_ac_power_flow(net: AcNetwork, z: SwitchingDecision, dispatch,
                         qextra=None, pload=None, qload=None, vset=None,
                         slack_bus=None, tol=1e-8, max_iter=50):
    """Solve the AC equations for the committed dispatch.

    dispatch: gen id -> scheduled real output (committed gens only).
    qextra:   bus id -> additional reactive load (GIC losses).
    pload/qload: net loads overriding the case demands (shedding applied).
    vset:     bus id -> PV voltage setpoint (default 1.0).
    """
    qextra = qextra or {}
    vset = vset or {}
    pl = {b.id: (pload[b.id] if pload and b.id in pload else b.pd) for b in net.buses}
    ql = {b.id: (qload[b.id] if qload and b.id in qload else b.qd) for b in net.buses}

    committed = [g for g in net.generators if z.gen_on(g.id)]
    if slack_bus is None:
        if not committed:
            raise PowerFlowError("no committed generator to take the slack")
        slack_bus = max(committed, key=lambda g: (g.pmax, -g.id)).bus

    comps = _on_components(net, z)
    live = None
    dead = []
    stranded = []
    for comp in comps:
        if slack_bus in comp:
            live = comp
        else:
            has_load = any(abs(pl[b]) > 1e-12 or abs(ql[b]) > 1e-12 for b in comp)
            has_gen = any(g.bus in comp for g in committed)
            if has_load or has_gen:
                stranded.append(sorted(comp))
            dead.extend(comp)
    if stranded:
        raise PowerFlowError(
            f"islanded load/generation disconnected from slack bus {slack_bus}: "
            f"{stranded}", islands=stranded)

    buses = sorted(live)
    Y, pos = ybus(net, z, buses)
    G, B = Y.real, Y.imag
    n = len(buses)

    gens_at = {b: [g for g in committed if g.bus == b] for b in buses}
    pv = sorted(b for b in buses
                if b != slack_bus and gens_at[b])
    pq = sorted(b for b in buses if b != slack_bus and b not in pv)

    pspec = np.zeros(n)
    for b in buses:
        k = pos[b]
        pspec[k] = sum(dispatch.get(g.id, 0.0) for g in gens_at[b]) - pl[b]
    qspec_load = np.array([-(ql[b] + qextra.get(b, 0.0)) for b in buses])

    v = np.ones(n)
    th = np.zeros(n)
    for b in buses:
        if b == slack_bus or b in pv:
            v[pos[b]] = vset.get(b, 1.0)

    trace = []
    qlim_rounds = 0
    while True:
        pv_set = set(pv)
        pq_set = set(pq)
        pvpq = [pos[b] for b in sorted(pv_set | pq_set)]
        pq_idx = [pos[b] for b in sorted(pq_set)]
        converged = False
        for it in range(max_iter):
            vc = v * np.exp(1j * th)
            s_calc = vc * np.conj(Y @ vc)
            dp = pspec - s_calc.real
            dq = qspec_load - s_calc.imag
            mism = np.concatenate([dp[pvpq], dq[pq_idx]])
            worst = np.abs(mism).max() if mism.size else 0.0
            trace.append(worst)
            if worst <= tol:
                converged = True
                break
            J = _jacobian(v, th, G, B, s_calc, pvpq, pq_idx)
            try:
                step = np.linalg.solve(J, mism)
            except np.linalg.LinAlgError as exc:
                raise PowerFlowError(
                    f"singular Jacobian at iteration {it}", trace=trace) from exc
            th[pvpq] += step[:len(pvpq)]
            v[pq_idx] += step[len(pvpq):]
            if (v <= 0).any():
                raise PowerFlowError("voltage collapsed below zero", trace=trace)
        if not converged:
            raise PowerFlowError(
                f"no convergence within {max_iter} iterations "
                f"(last mismatch {trace[-1]:.3e})", trace=trace)

        # reactive limits: switch violated PV buses to PQ at the limit
        vc = v * np.exp(1j * th)
        s_calc = vc * np.conj(Y @ vc)
        moved = False
        if qlim_rounds < 5:
            for b in list(pv):
                k = pos[b]
                qgen = s_calc.imag[k] + ql[b] + qextra.get(b, 0.0)
                qlo = sum(g.qmin for g in gens_at[b])
                qhi = sum(g.qmax for g in gens_at[b])
                if qgen > qhi + 1e-9 or qgen < qlo - 1e-9:
                    qcap = min(max(qgen, qlo), qhi)
                    pv.remove(b)
                    pq.append(b)
                    pq.sort()
                    qspec_load[k] = qcap - ql[b] - qextra.get(b, 0.0)
                    moved = True
            qlim_rounds += 1
        if not moved:
            break

    # distribute bus-level generation onto units
    fp = {}
    fq = {}
    vc = v * np.exp(1j * th)
    s_calc = vc * np.conj(Y @ vc)
    for b in buses:
        k = pos[b]
        units = gens_at[b]
        if not units:
            continue
        pgen = s_calc.real[k] + pl[b]
        qgen = s_calc.imag[k] + ql[b] + qextra.get(b, 0.0)
        if b == slack_bus:
            sched = sum(dispatch.get(g.id, 0.0) for g in units)
            extra = pgen - sched
            span = sum(g.pmax for g in units) or 1.0
            for g in units:
                fp[g.id] = dispatch.get(g.id, 0.0) + extra * g.pmax / span
        else:
            for g in units:
                fp[g.id] = dispatch.get(g.id, 0.0)
        span = sum(g.qmax - g.qmin for g in units)
        for g in units:
            share = (g.qmax - g.qmin) / span if span > 0 else 1.0 / len(units)
            fq[g.id] = qgen * share

    flows = {}
    vmap = {b: v[pos[b]] for b in buses}
    tmap = {b: th[pos[b]] for b in buses}
    for br in net.branches:
        if not z.branch_on(br.id) or br.from_bus not in pos or br.to_bus not in pos:
            flows[br.id] = (0.0, 0.0, 0.0, 0.0)
            continue
        flows[br.id] = branch_flow(br, vmap[br.from_bus], vmap[br.to_bus],
                                   tmap[br.from_bus] - tmap[br.to_bus])

    vout = {b: float(vmap[b]) for b in buses}
    tout = {b: float(tmap[b]) for b in buses}
    for b in dead:
        vout[b] = 0.0
        tout[b] = 0.0
    return NewtonResult(vout, tout, fp, fq, flows, trace[-1] if trace else 0.0,
                        len(trace), slack_bus, dead_buses=sorted(dead))


def branch_flow(br, vi, vj, thij):
    """Both-end (pf, pt, qf, qt) of one switched-on branch."""
    a = br.tap
    g, b, bc = br.g, br.b, br.bc
    wc = vi * vj * np.cos(thij)
    ws = vi * vj * np.sin(thij)
    wi, wj = vi * vi, vj * vj
    pf = g / a ** 2 * wi - (g * wc + b * ws) / a
    pt = g * wj - (g * wc - b * ws) / a
    qf = -(b + bc / 2.0) / a ** 2 * wi + (b * wc - g * ws) / a
    qt = -(b + bc / 2.0) * wj + (b * wc + g * ws) / a
    return (float(pf), float(pt), float(qf), float(qt))


def _jacobian(v, th, G, B, s_calc, pvpq, pq_idx):
    n = v.shape[0]
    P, Q = s_calc.real, s_calc.imag
    # full H/N/M/L blocks, then slice
    H = np.zeros((n, n))
    N = np.zeros((n, n))
    M = np.zeros((n, n))
    L = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i == j:
                H[i, i] = -Q[i] - B[i, i] * v[i] ** 2
                N[i, i] = P[i] / v[i] + G[i, i] * v[i]
                M[i, i] = P[i] - G[i, i] * v[i] ** 2
                L[i, i] = Q[i] / v[i] - B[i, i] * v[i]
            else:
                tij = th[i] - th[j]
                gij, bij = G[i, j], B[i, j]
                vij = v[i] * v[j]
                H[i, j] = vij * (gij * np.sin(tij) - bij * np.cos(tij))
                N[i, j] = v[i] * (gij * np.cos(tij) + bij * np.sin(tij))
                M[i, j] = -vij * (gij * np.cos(tij) + bij * np.sin(tij))
                L[i, j] = v[i] * (gij * np.sin(tij) - bij * np.cos(tij))
    top = np.hstack([H[np.ix_(pvpq, pvpq)], N[np.ix_(pvpq, pq_idx)]])
    bot = np.hstack([M[np.ix_(pq_idx, pvpq)], L[np.ix_(pq_idx, pq_idx)]])
    return np.vstack([top, bot])
