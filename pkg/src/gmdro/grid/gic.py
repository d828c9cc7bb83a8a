"""GIC physics oracle: linear nodal analysis on the quasi-DC network.

Sign conventions (matched to nodal balance "incoming minus outgoing equals
grounding outflow"): an arc from tail m to head n carries

    I_l = gamma_l * (v_m - v_n + xi_l),

and at every node  sum(in) - sum(out) = a_m * v_m.  Connected components
without any grounded node are floating; one node is pinned to zero there
(currents are unaffected by the pinning choice).
"""

import numpy as np

from ..kernels import damage_batch
from .dc import DcNetwork
from .model import AcNetwork, GridError, SwitchingDecision


class GicError(RuntimeError):
    pass


def induced_voltages(dc: DcNetwork, field):
    """Per-arc source voltages for a uniform E-field (xe, xn) in V/km."""
    xe, xn = float(field[0]), float(field[1])
    out = np.zeros(dc.narcs)
    for k, arc in enumerate(dc.arcs):
        if arc.winding is None:
            out[k] = xe * arc.le_km + xn * arc.ln_km
    return out


def effective_gic(cfg, currents):
    """|Theta| of the winding currents for one transformer configuration."""
    expected = set(cfg.windings)
    if set(currents) != expected:
        raise GridError(
            f"winding currents {sorted(currents)} do not match configuration "
            f"{sorted(expected)}"
        )
    kind = cfg.kind
    if kind == "gwye-gwye":
        theta = (cfg.nh * currents["h"] + cfg.nl * currents["l"]) / cfg.nh
    elif kind == "gwye-gwye-auto":
        theta = (cfg.ns * currents["s"] + cfg.nc * currents["c"]) / (cfg.ns + cfg.nc)
    else:
        theta = currents["h"]
    return abs(theta)


class GicState:
    """Solved GIC flow: node voltages, arc currents, per-transformer
    effective GICs, and the per-bus loss coefficient sum(k_e * I_eff)."""

    def __init__(self, dc, vd, id_amps, ieff, loss_coeff):
        self.dc = dc
        self.vd = vd                # array over node positions, volts
        self.id_amps = id_amps      # array over arc positions, amps
        self.ieff = ieff            # dict branch id -> amps (>= 0)
        self.loss_coeff = loss_coeff  # dict bus id -> p.u. per p.u. voltage

    def dqloss(self, v):
        """Per-bus reactive loss k_e * v_i * I_eff summed over incident
        transformers; ``v`` maps bus id -> voltage (p.u.)."""
        return {i: v[i] * c for i, c in self.loss_coeff.items()}

    def grounding_residual(self):
        a = np.array([n.a for n in self.dc.nodes])
        return float(a @ self.vd)


def _components(dc, on_mask):
    parent = list(range(dc.nnodes))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for k, arc in enumerate(dc.arcs):
        if on_mask[k]:
            ra, rb = find(arc.tail), find(arc.head)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)
    comp = {}
    for i in range(dc.nnodes):
        comp.setdefault(find(i), []).append(i)
    return list(comp.values())


def solve_gic(dc: DcNetwork, z: SwitchingDecision, field) -> GicState:
    """Solve the nodal GIC system for the switched-on subnetwork."""
    n = dc.nnodes
    xi = induced_voltages(dc, field)
    on = np.array([z.branch_on(arc.branch) for arc in dc.arcs])

    mat = np.zeros((n, n))
    rhs = np.zeros(n)
    for i, node in enumerate(dc.nodes):
        mat[i, i] -= node.a
    for k, arc in enumerate(dc.arcs):
        if not on[k]:
            continue
        g = arc.gamma
        m, h = arc.tail, arc.head
        # current gamma*(v_m - v_h + xi): -I at tail, +I at head
        mat[m, m] -= g
        mat[m, h] += g
        mat[h, m] += g
        mat[h, h] -= g
        rhs[m] += g * xi[k]
        rhs[h] -= g * xi[k]

    # pin one node per floating component
    for comp in _components(dc, on):
        if all(dc.nodes[i].a == 0.0 for i in comp):
            i0 = min(comp)
            mat[i0, :] = 0.0
            mat[i0, i0] = 1.0
            rhs[i0] = 0.0

    try:
        vd = np.linalg.solve(mat, rhs)
    except np.linalg.LinAlgError as exc:
        bad = [dc.nodes[i].key for c in _components(dc, on) for i in c]
        raise GicError(f"singular nodal system after pinning; nodes {bad}") from exc

    id_amps = np.zeros(dc.narcs)
    for k, arc in enumerate(dc.arcs):
        if on[k]:
            id_amps[k] = arc.gamma * (vd[arc.tail] - vd[arc.head] + xi[k])

    return _finish_state(dc, z, vd, id_amps)


def _finish_state(dc, z, vd, id_amps):
    ieff = {}
    loss_coeff = {}
    for branch in sorted(dc.winding_arcs):
        warcs = dc.winding_arcs[branch]
        currents = {w: id_amps[dc.arc_pos[a]] for w, a in warcs.items()}
        cfg = dc.configs[branch]
        val = effective_gic(cfg, currents) if z.branch_on(branch) else 0.0
        ieff[branch] = val
        ke = dc.k_loss.get(branch, 0.0)
        # the reactive loss shows up at every bus the transformer touches
        for bus in dc.xfmr_buses[branch]:
            loss_coeff[bus] = loss_coeff.get(bus, 0.0) + ke * val
    return GicState(dc, vd, id_amps, ieff, loss_coeff)


def second_stage_value(net: AcNetwork, dc: DcNetwork, z: SwitchingDecision,
                       v, dqloss, field, kappa_s) -> float:
    """Exact damage oracle: solve the GIC flow, clip the per-bus reactive
    loss above its first-stage allowance, and price the shortfall."""
    state = solve_gic(dc, z, field)
    total = 0.0
    for b in net.buses:
        loss = v[b.id] * state.loss_coeff.get(b.id, 0.0)
        short = loss - dqloss.get(b.id, 0.0)
        if short > 0.0:
            total += short
    return kappa_s * total


class GicResponse:
    """Linear response of the damage oracle to the E-field at fixed
    topology: I_eff per transformer is |ce*xe + cn*xn|, so damage over a
    batch of fields reduces to one fused kernel call."""

    def __init__(self, net: AcNetwork, dc: DcNetwork, z: SwitchingDecision):
        base_e = solve_gic(dc, z, (1.0, 0.0))
        base_n = solve_gic(dc, z, (0.0, 1.0))
        self.net = net
        self.dc = dc
        self.z = z
        # signed Theta response per transformer (|.| deferred to evaluation)
        ce, cn, pairs = [], [], []
        for branch in sorted(dc.winding_arcs):
            cfg = dc.configs[branch]
            if not z.branch_on(branch):
                continue
            the = _signed_theta(dc, cfg, branch, base_e.id_amps)
            thn = _signed_theta(dc, cfg, branch, base_n.id_amps)
            ke = dc.k_loss.get(branch, 0.0)
            for bus in dc.xfmr_buses[branch]:
                ce.append(the)
                cn.append(thn)
                pairs.append((branch, bus))
        self.ce = np.asarray(ce)
        self.cn = np.asarray(cn)
        self.pairs = pairs
        self.buses = [b.id for b in net.buses]
        self.bus_pos = {b: k for k, b in enumerate(self.buses)}

    def damage(self, v, dqloss, fields, kappa_s):
        """Damage oracle over an (n, 2) array of fields; matches
        :func:`second_stage_value` field by field."""
        fields = np.atleast_2d(np.asarray(fields, dtype=float))
        kv = np.array(
            [self.dc.k_loss.get(br, 0.0) * v[bus] for br, bus in self.pairs]
        )
        busidx = np.array(
            [self.bus_pos[bus] for _, bus in self.pairs], dtype=np.int64
        )
        dq = np.array([dqloss.get(b, 0.0) for b in self.buses])
        return damage_batch(fields, self.ce, self.cn, kv, busidx,
                            len(self.buses), dq, float(kappa_s))


def _signed_theta(dc, cfg, branch, id_amps):
    warcs = dc.winding_arcs[branch]
    cur = {w: id_amps[dc.arc_pos[a]] for w, a in warcs.items()}
    kind = cfg.kind
    if kind == "gwye-gwye":
        return (cfg.nh * cur["h"] + cfg.nl * cur["l"]) / cfg.nh
    if kind == "gwye-gwye-auto":
        return (cfg.ns * cur["s"] + cfg.nc * cur["c"]) / (cfg.ns + cfg.nc)
    return cur["h"]
