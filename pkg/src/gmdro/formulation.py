"""Builders translating the grid and ambiguity data into solver models.

First stage: a second-order-cone relaxation of AC power flow with on/off
switching.  Squared voltages w_i replace v_i; per-edge cosine/sine
surrogates (wc, ws) couple to voltages through rotated cones
wc^2 + ws^2 <= w_i w_j; switched products are linearized with per-row
big-M values derived from variable bounds; apparent-power limits are
quadratic facts with z-scaled right-hand sides.

Second stage: the GIC flow block.  Inside optimization models the per-bus
loss row uses a constant reference voltage (default: the bus upper bound)
so the block stays linear in (x, z, y); the exact oracle in
``gmdro.grid.gic`` keeps the true v_i.  The block right-hand side is
affine in the E-field, which is what the vertex-enumeration machinery of
the DRO solvers relies on.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .grid.dc import DcNetwork
from .grid.model import AcNetwork, GridError, SwitchingDecision
from .optkernel import Model, remap_warm
from .optkernel.model import INF


class FormulationError(ValueError):
    pass


def ieff_default_limit(net: AcNetwork, br):
    """Fallback effective-GIC limit in amps: twice the physical apparent
    power limit over the lower endpoint voltage floor."""
    vmin = min(net.bus(br.from_bus).vmin, net.bus(br.to_bus).vmin)
    return 2.0 * br.smax * net.base_mva / vmin


@dataclass
class Options:
    kappa_l: float = 50000.0
    kappa_s: float = 100000.0
    enforce_ieff_limit: bool = False
    dqloss_cap: dict = None    # bus id -> cap (p.u.); None -> derived rule
    vref: dict = None          # bus id -> stage-2 loss reference voltage

    def vref_for(self, net, bus_id):
        if self.vref and bus_id in self.vref:
            return self.vref[bus_id]
        return net.bus(bus_id).vmax

    def dqloss_cap_for(self, net, bus_id):
        if self.dqloss_cap and bus_id in self.dqloss_cap:
            return self.dqloss_cap[bus_id]
        cap = 0.0
        for e in net.branches_at[bus_id]:
            br = net.branch(e)
            if br.is_transformer:
                lim = br.ieff_max if br.ieff_max is not None else ieff_default_limit(net, br)
                cap += br.k_loss * net.bus(bus_id).vmax * lim
        return cap


@dataclass
class FirstStageVars:
    za: dict = field(default_factory=dict)
    zg: dict = field(default_factory=dict)
    w: dict = field(default_factory=dict)
    wc: dict = field(default_factory=dict)
    ws: dict = field(default_factory=dict)
    pf: dict = field(default_factory=dict)
    pt: dict = field(default_factory=dict)
    qf: dict = field(default_factory=dict)
    qt: dict = field(default_factory=dict)
    fp: dict = field(default_factory=dict)
    fq: dict = field(default_factory=dict)
    tgen: dict = field(default_factory=dict)
    lp_plus: dict = field(default_factory=dict)
    lp_minus: dict = field(default_factory=dict)
    lq_plus: dict = field(default_factory=dict)
    lq_minus: dict = field(default_factory=dict)
    dqloss: dict = field(default_factory=dict)
    kappa_l: float = 0.0
    obj_terms: list = field(default_factory=list)  # first-stage (col, coef)

    def first_stage_cost(self, x):
        return sum(c * x[j] for j, c in self.obj_terms)

    def switching(self, x, tol=1e-6) -> SwitchingDecision:
        za = {e: int(round(x[j])) for e, j in self.za.items()}
        zg = {k: int(round(x[j])) for k, j in self.zg.items()}
        return SwitchingDecision(za, zg)


@dataclass
class SecondStageVars:
    vd: dict = field(default_factory=dict)    # node key -> col
    idc: dict = field(default_factory=dict)   # arc id -> col
    ieff: dict = field(default_factory=dict)  # branch id -> col
    s: dict = field(default_factory=dict)     # bus id -> col
    kappa_s: float = 0.0
    xi: tuple = (0.0, 0.0)

    def cost_terms(self):
        """Second-stage cost vector c as (col, coef) pairs."""
        return [(j, self.kappa_s) for _, j in sorted(self.s.items())]

    def value(self, x):
        return sum(c * x[j] for j, c in self.cost_terms())


def _interval(coef, lo, hi):
    a, b = coef * lo, coef * hi
    return (a, b) if a <= b else (b, a)


def build_first_stage_relaxed(net: AcNetwork, opts: Options):
    """Relaxed first-stage block: variables, AC rows, cones, objective."""
    m = Model(f"first-stage[{net.name}]")
    fs = FirstStageVars(kappa_l=opts.kappa_l)

    for br in net.branches:
        if not (-math.pi / 2 < br.amin < br.amax < math.pi / 2):
            raise FormulationError(
                f"branch {br.id}: angle bounds must lie within (-90, 90) degrees"
            )

    # ---- columns ---------------------------------------------------------
    for br in net.branches:
        fs.za[br.id] = m.add_var(f"za[{br.id}]", 0, 1, binary=True)
    for g in net.generators:
        fs.zg[g.id] = m.add_var(f"zg[{g.id}]", 0, 1, binary=True)
    for b in net.buses:
        fs.w[b.id] = m.add_var(f"w[{b.id}]", b.vmin ** 2, b.vmax ** 2)
    for br in net.branches:
        vv = net.bus(br.from_bus).vmax * net.bus(br.to_bus).vmax
        slo = min(0.0, vv * math.sin(br.amin))
        shi = max(0.0, vv * math.sin(br.amax))
        fs.wc[br.id] = m.add_var(f"wc[{br.id}]", 0.0, vv)
        fs.ws[br.id] = m.add_var(f"ws[{br.id}]", slo, shi)
        for tag, store in (("pf", fs.pf), ("pt", fs.pt), ("qf", fs.qf), ("qt", fs.qt)):
            store[br.id] = m.add_var(f"{tag}[{br.id}]", -br.smax, br.smax)
    for g in net.generators:
        fs.fp[g.id] = m.add_var(f"fp[{g.id}]", min(0.0, g.pmin), max(0.0, g.pmax))
        fs.fq[g.id] = m.add_var(f"fq[{g.id}]", min(0.0, g.qmin), max(0.0, g.qmax))
        if g.c2 > 0.0:
            tcap = g.c2 * max(g.pmin ** 2, g.pmax ** 2)
            fs.tgen[g.id] = m.add_var(f"tg[{g.id}]", 0.0, tcap)
    for b in net.buses:
        fs.lp_plus[b.id] = m.add_var(f"lpp[{b.id}]", 0.0, INF)
        fs.lp_minus[b.id] = m.add_var(f"lpm[{b.id}]", 0.0, INF)
        fs.lq_plus[b.id] = m.add_var(f"lqp[{b.id}]", 0.0, INF)
        fs.lq_minus[b.id] = m.add_var(f"lqm[{b.id}]", 0.0, INF)
        fs.dqloss[b.id] = m.add_var(f"dq[{b.id}]", 0.0, opts.dqloss_cap_for(net, b.id))

    # ---- objective (generation, commitment, unbalance penalties) ---------
    for g in net.generators:
        m.set_obj(fs.zg[g.id], g.c0)
        m.set_obj(fs.fp[g.id], g.c1)
        if g.id in fs.tgen:
            m.set_obj(fs.tgen[g.id], 1.0)
    for b in net.buses:
        for col in (fs.lp_plus[b.id], fs.lp_minus[b.id],
                    fs.lq_plus[b.id], fs.lq_minus[b.id]):
            m.set_obj(col, opts.kappa_l)
    fs.obj_terms = [(j, c) for j, c in enumerate(m.col_obj) if c != 0.0]

    # ---- power balance ----------------------------------------------------
    for b in net.buses:
        prow = []
        qrow = []
        for e in net.branches_at[b.id]:
            br = net.branch(e)
            if br.from_bus == b.id:
                prow.append((fs.pf[e], 1.0))
                qrow.append((fs.qf[e], 1.0))
            else:
                prow.append((fs.pt[e], 1.0))
                qrow.append((fs.qt[e], 1.0))
        for k in net.gens_at[b.id]:
            prow.append((fs.fp[k], -1.0))
            qrow.append((fs.fq[k], -1.0))
        prow += [(fs.lp_plus[b.id], -1.0), (fs.lp_minus[b.id], 1.0),
                 (fs.w[b.id], b.gs)]
        qrow += [(fs.lq_plus[b.id], -1.0), (fs.lq_minus[b.id], 1.0),
                 (fs.w[b.id], -b.bs), (fs.dqloss[b.id], 1.0)]
        m.add_row(prow, "=", -b.pd, name=f"balP[{b.id}]")
        m.add_row(qrow, "=", -b.qd, name=f"balQ[{b.id}]")

    # ---- switched Ohm's law, angle cuts, cones ----------------------------
    for br in net.branches:
        e = br.id
        i, j = br.from_bus, br.to_bus
        al, g, bb, bc = br.tap, br.g, br.b, br.bc
        wlo_i, whi_i = net.bus(i).vmin ** 2, net.bus(i).vmax ** 2
        wlo_j, whi_j = net.bus(j).vmin ** 2, net.bus(j).vmax ** 2
        wc_lo, wc_hi = 0.0, m.col_ub[fs.wc[e]]
        ws_lo, ws_hi = m.col_lb[fs.ws[e]], m.col_ub[fs.ws[e]]

        # flow expressions as (flow col, [(col, coef)], bounds of the expr)
        exprs = (
            (fs.pf[e], [(fs.w[i], g / al ** 2), (fs.wc[e], -g / al), (fs.ws[e], -bb / al)],
             (wlo_i, whi_i)),
            (fs.pt[e], [(fs.w[j], g), (fs.wc[e], -g / al), (fs.ws[e], bb / al)],
             (wlo_j, whi_j)),
            (fs.qf[e], [(fs.w[i], -(bb + bc / 2.0) / al ** 2), (fs.wc[e], bb / al),
                        (fs.ws[e], -g / al)], (wlo_i, whi_i)),
            (fs.qt[e], [(fs.w[j], -(bb + bc / 2.0)), (fs.wc[e], bb / al),
                        (fs.ws[e], g / al)], (wlo_j, whi_j)),
        )
        ranges = {fs.wc[e]: (wc_lo, wc_hi), fs.ws[e]: (ws_lo, ws_hi),
                  fs.w[i]: (wlo_i, whi_i), fs.w[j]: (wlo_j, whi_j)}
        for fcol, terms, _ in exprs:
            lo = hi = 0.0
            for col, coef in terms:
                a, bnd = _interval(coef, *ranges[col])
                lo += a
                hi += bnd
            big = max(abs(lo), abs(hi)) + br.smax
            # flow equals the expression when on, zero when off
            row = [(fcol, 1.0)] + [(col, -coef) for col, coef in terms]
            m.add_row(row + [(fs.za[e], big)], "<", big, name=f"lnk+[{e}]")
            m.add_row(row + [(fs.za[e], -big)], ">", -big, name=f"lnk-[{e}]")
            m.add_row([(fcol, 1.0), (fs.za[e], -br.smax)], "<", 0.0, name=f"box+[{e}]")
            m.add_row([(fcol, 1.0), (fs.za[e], br.smax)], ">", 0.0, name=f"box-[{e}]")

        # angle box: ws/wc between the tangents of the angle bounds
        m.add_row([(fs.ws[e], 1.0), (fs.wc[e], -math.tan(br.amax))], "<", 0.0,
                  name=f"ang+[{e}]")
        m.add_row([(fs.ws[e], 1.0), (fs.wc[e], -math.tan(br.amin))], ">", 0.0,
                  name=f"ang-[{e}]")

        # resistive loss is nonnegative whether the branch is on (AM-GM with
        # the voltage cone) or off (both flows zero); valid for binary z and
        # it keeps fractional-z relaxations from fabricating power
        if g > 0.0:
            m.add_row([(fs.pf[e], 1.0), (fs.pt[e], 1.0)], ">", 0.0,
                      name=f"loss[{e}]")

        # voltage-product cone and z-scaled apparent-power limits
        m.add_rotated_cone(([(fs.wc[e], 1.0)], 0.0), ([(fs.ws[e], 1.0)], 0.0),
                           ([(fs.w[i], 1.0)], 0.0), ([(fs.w[j], 1.0)], 0.0))
        s2 = br.smax ** 2
        m.add_quad_epigraph([(fs.pf[e], 1.0), (fs.qf[e], 1.0)],
                            rhs=([(fs.za[e], s2)], 0.0))
        m.add_quad_epigraph([(fs.pt[e], 1.0), (fs.qt[e], 1.0)],
                            rhs=([(fs.za[e], s2)], 0.0))

    # ---- generation bounds, cost epigraphs, commitment coupling -----------
    for g in net.generators:
        k = g.id
        m.add_row([(fs.fp[k], 1.0), (fs.zg[k], -g.pmax)], "<", 0.0, name=f"fp+[{k}]")
        m.add_row([(fs.fp[k], 1.0), (fs.zg[k], -g.pmin)], ">", 0.0, name=f"fp-[{k}]")
        m.add_row([(fs.fq[k], 1.0), (fs.zg[k], -g.qmax)], "<", 0.0, name=f"fq+[{k}]")
        m.add_row([(fs.fq[k], 1.0), (fs.zg[k], -g.qmin)], ">", 0.0, name=f"fq-[{k}]")
        if k in fs.tgen:
            m.add_quad_epigraph([(fs.fp[k], g.c2)], rhs=([(fs.tgen[k], 1.0)], 0.0))
        row = [(fs.za[e], 1.0) for e in net.branches_at[g.bus]]
        m.add_row(row + [(fs.zg[k], -1.0)], ">", 0.0, name=f"cpl[{k}]")

    return m, fs


class StageTwoTemplate:
    """Reusable second-stage block with right-hand sides affine in the
    E-field; instantiated into host models once per scenario."""

    def __init__(self, net: AcNetwork, dc: DcNetwork, opts: Options, field_bound):
        if field_bound <= 0.0:
            raise FormulationError("field bound must be positive for big-M derivation")
        self.net = net
        self.dc = dc
        self.opts = opts
        self.field_bound = float(field_bound)

        self.xfmrs = sorted(dc.winding_arcs)
        # superposition bound on node potentials: total driving EMF
        self.vbound = sum(
            math.hypot(a.le_km, a.ln_km) * self.field_bound for a in dc.arcs
        )
        self.imax = {}
        for arc in dc.arcs:
            ximax = math.hypot(arc.le_km, arc.ln_km) * self.field_bound
            self.imax[arc.id] = arc.gamma * (2.0 * self.vbound + ximax)
        self.ieff_max = {}
        for e in self.xfmrs:
            coefs = self._theta_coefs(e)
            self.ieff_max[e] = sum(abs(c) * self.imax[a] for a, c in coefs)

    def _theta_coefs(self, branch_id):
        cfg = self.dc.configs[branch_id]
        warcs = self.dc.winding_arcs[branch_id]
        if cfg.kind == "gwye-gwye":
            return [(warcs["h"], 1.0), (warcs["l"], cfg.nl / cfg.nh)]
        if cfg.kind == "gwye-gwye-auto":
            den = cfg.ns + cfg.nc
            return [(warcs["s"], cfg.ns / den), (warcs["c"], cfg.nc / den)]
        return [(warcs["h"], 1.0)]

    def instantiate(self, model: Model, za_cols, dq_cols, xi, weight, tag=""):
        """Append one scenario block; objective gets weight * kappa_s * s."""
        dc, net, opts = self.dc, self.net, self.opts
        xe, xn = float(xi[0]), float(xi[1])
        sv = SecondStageVars(kappa_s=opts.kappa_s, xi=(xe, xn))

        for node in dc.nodes:
            sv.vd[node.key] = model.add_var(
                f"vd{tag}[{node.key}]", -self.vbound, self.vbound)
        for arc in dc.arcs:
            im = self.imax[arc.id]
            sv.idc[arc.id] = model.add_var(f"id{tag}[{arc.id}]", -im, im)
        for e in self.xfmrs:
            sv.ieff[e] = model.add_var(f"ie{tag}[{e}]", 0.0, self.ieff_max[e])
        for b in net.buses:
            sv.s[b.id] = model.add_var(
                f"s{tag}[{b.id}]", 0.0, INF, obj=weight * opts.kappa_s)

        # nodal balance: incoming - outgoing - a*v = 0
        rows = {node.key: [(sv.vd[node.key], -node.a)] for node in dc.nodes}
        for arc in dc.arcs:
            rows[dc.nodes[arc.tail].key].append((sv.idc[arc.id], -1.0))
            rows[dc.nodes[arc.head].key].append((sv.idc[arc.id], 1.0))
        for node in dc.nodes:
            model.add_row(rows[node.key], "=", 0.0, name=f"kcl{tag}[{node.key}]")

        # switched arc law and deactivation
        for arc in dc.arcs:
            aid, g = arc.id, arc.gamma
            tail_key = dc.nodes[arc.tail].key
            head_key = dc.nodes[arc.head].key
            xiv = g * (xe * arc.le_km + xn * arc.ln_km)
            big = self.imax[aid] + g * (
                2.0 * self.vbound + math.hypot(arc.le_km, arc.ln_km) * self.field_bound)
            za = za_cols[arc.branch]
            base = [(sv.idc[aid], 1.0), (sv.vd[tail_key], -g), (sv.vd[head_key], g)]
            model.add_row(base + [(za, big)], "<", xiv + big, name=f"law+{tag}[{aid}]")
            model.add_row(base + [(za, -big)], ">", xiv - big, name=f"law-{tag}[{aid}]")
            im = self.imax[aid]
            model.add_row([(sv.idc[aid], 1.0), (za, -im)], "<", 0.0, name=f"off+{tag}[{aid}]")
            model.add_row([(sv.idc[aid], 1.0), (za, im)], ">", 0.0, name=f"off-{tag}[{aid}]")

        # effective GICs: ieff >= +-Theta
        for e in self.xfmrs:
            coefs = self._theta_coefs(e)
            pos = [(sv.ieff[e], 1.0)] + [(sv.idc[a], -c) for a, c in coefs]
            neg = [(sv.ieff[e], 1.0)] + [(sv.idc[a], c) for a, c in coefs]
            model.add_row(pos, ">", 0.0, name=f"eff+{tag}[{e}]")
            model.add_row(neg, ">", 0.0, name=f"eff-{tag}[{e}]")
            if opts.enforce_ieff_limit:
                br = net.branch(e)
                lim = br.ieff_max if br.ieff_max is not None else ieff_default_limit(net, br)
                model.add_row([(sv.ieff[e], 1.0)], "<", lim, name=f"cap{tag}[{e}]")

        # shortfall above the first-stage allowance, at reference voltage
        for b in net.buses:
            row = [(sv.s[b.id], 1.0), (dq_cols[b.id], 1.0)]
            vref = opts.vref_for(net, b.id)
            for e in net.branches_at[b.id]:
                br = net.branch(e)
                if br.is_transformer:
                    row.append((sv.ieff[e], -br.k_loss * vref))
            model.add_row(row, ">", 0.0, name=f"cut{tag}[{b.id}]")
        return sv

    # -- compact-form surface ------------------------------------------------
    def compact(self):
        return CompactForm(self)

    def evaluate(self, z: SwitchingDecision, dqloss, xi):
        """Q(z, y, xi): optimal block value at fixed switching/allowance,
        at the reference voltage (the relaxed models' second stage)."""
        vref = {b.id: self.opts.vref_for(self.net, b.id) for b in self.net.buses}
        mdl, _ = build_second_stage_lp(self.net, self.dc, z, vref, dqloss, xi,
                                       self.opts.kappa_s)
        from .optkernel import solve_lp

        sol = solve_lp(mdl)
        if sol.status != "optimal":
            raise FormulationError(f"second-stage LP {sol.status} at xi={tuple(xi)}")
        return sol.obj


class CompactForm:
    """Materialized matrices (q, b, c, A, B, C, d(xi)) of the scenario
    block; evaluation goes through these matrices as a cross-check on the
    hand-built second-stage LP."""

    def __init__(self, template: StageTwoTemplate):
        self.template = template
        net = template.net
        self.z_order = [br.id for br in net.branches]
        self.y_order = [b.id for b in net.buses]

        def probe_at(xi):
            p = Model("probe")
            za = {e: p.add_var(f"z[{e}]", 0, 1) for e in self.z_order}
            dq = {b: p.add_var(f"dq[{b}]", 0, INF) for b in self.y_order}
            sv = template.instantiate(p, za, dq, xi, 1.0)
            return p, sv

        probe, sv = probe_at((0.0, 0.0))
        probe_e, _ = probe_at((1.0, 0.0))
        probe_n, _ = probe_at((0.0, 1.0))
        nzy = len(self.z_order) + len(self.y_order)

        self.nx = probe.ncols - nzy
        self.nzy = nzy
        self.sv = sv
        self.rows = []
        for i in range(probe.nrows):
            cols = probe.row_cols[i]
            vals = probe.row_vals[i]
            xpart = [(int(c) - nzy, float(v)) for c, v in zip(cols, vals) if c >= nzy]
            zpart = [(int(c), float(v)) for c, v in zip(cols, vals) if c < nzy]
            d0 = probe.row_rhs[i]
            de = probe_e.row_rhs[i] - d0
            dn = probe_n.row_rhs[i] - d0
            self.rows.append((xpart, zpart, probe.row_sense[i], d0, de, dn))
        self.c = np.zeros(self.nx)
        for j, coef in sv.cost_terms():
            self.c[j - nzy] = coef
        self.xlb = np.array(probe.col_lb[nzy:])
        self.xub = np.array(probe.col_ub[nzy:])

    def d(self, xi):
        return np.array([d0 + de * xi[0] + dn * xi[1] for _, _, _, d0, de, dn in self.rows])

    def evaluate(self, z: SwitchingDecision, dqloss, xi):
        from .optkernel import solve_lp

        mdl = Model("compact-eval")
        for j in range(self.nx):
            mdl.add_var(f"x{j}", self.xlb[j], self.xub[j], obj=self.c[j])
        zy = np.zeros(self.nzy)
        for k, e in enumerate(self.z_order):
            zy[k] = 1.0 if z.branch_on(e) else 0.0
        for k, b in enumerate(self.y_order):
            zy[len(self.z_order) + k] = dqloss.get(b, 0.0)
        dvec = self.d(xi)
        for (xpart, zpart, sense, _, _, _), dval in zip(self.rows, dvec):
            shift = sum(v * zy[c] for c, v in zpart)
            mdl.add_row(xpart, sense, dval - shift)
        sol = solve_lp(mdl)
        if sol.status != "optimal":
            raise FormulationError(f"compact evaluation {sol.status}")
        return sol.obj


def build_second_stage_lp(net: AcNetwork, dc: DcNetwork, z: SwitchingDecision,
                          v, dqloss, xi, kappa_s):
    """Explicit second-stage LP at fixed (z, v, dqloss, xi): active arcs
    carry the arc law as equalities, inactive arcs are pinned to zero."""
    m = Model("second-stage")
    sv = SecondStageVars(kappa_s=kappa_s, xi=(float(xi[0]), float(xi[1])))
    xfmrs = sorted(dc.winding_arcs)

    for node in dc.nodes:
        sv.vd[node.key] = m.add_var(f"vd[{node.key}]", -INF, INF)
    for arc in dc.arcs:
        on = z.branch_on(arc.branch)
        sv.idc[arc.id] = m.add_var(f"id[{arc.id}]", *((-INF, INF) if on else (0.0, 0.0)))
    for e in xfmrs:
        hi = INF if z.branch_on(e) else 0.0
        sv.ieff[e] = m.add_var(f"ie[{e}]", 0.0, hi)
    for b in net.buses:
        sv.s[b.id] = m.add_var(f"s[{b.id}]", 0.0, INF, obj=kappa_s)

    rows = {node.key: [(sv.vd[node.key], -node.a)] for node in dc.nodes}
    for arc in dc.arcs:
        rows[dc.nodes[arc.tail].key].append((sv.idc[arc.id], -1.0))
        rows[dc.nodes[arc.head].key].append((sv.idc[arc.id], 1.0))
    for node in dc.nodes:
        m.add_row(rows[node.key], "=", 0.0, name=f"kcl[{node.key}]")

    xe, xn = float(xi[0]), float(xi[1])
    for arc in dc.arcs:
        if not z.branch_on(arc.branch):
            continue
        g = arc.gamma
        m.add_row(
            [(sv.idc[arc.id], 1.0),
             (sv.vd[dc.nodes[arc.tail].key], -g),
             (sv.vd[dc.nodes[arc.head].key], g)],
            "=", g * (xe * arc.le_km + xn * arc.ln_km), name=f"law[{arc.id}]")

    # pin floating components (no grounded node among reachable nodes)
    on_mask = [z.branch_on(arc.branch) for arc in dc.arcs]
    from .grid.gic import _components

    for comp in _components(dc, on_mask):
        if all(dc.nodes[i].a == 0.0 for i in comp):
            key = dc.nodes[min(comp)].key
            m.add_row([(sv.vd[key], 1.0)], "=", 0.0, name=f"pin[{key}]")

    for e in xfmrs:
        cfg = dc.configs[e]
        warcs = dc.winding_arcs[e]
        if cfg.kind == "gwye-gwye":
            coefs = [(warcs["h"], 1.0), (warcs["l"], cfg.nl / cfg.nh)]
        elif cfg.kind == "gwye-gwye-auto":
            den = cfg.ns + cfg.nc
            coefs = [(warcs["s"], cfg.ns / den), (warcs["c"], cfg.nc / den)]
        else:
            coefs = [(warcs["h"], 1.0)]
        m.add_row([(sv.ieff[e], 1.0)] + [(sv.idc[a], -c) for a, c in coefs], ">", 0.0)
        m.add_row([(sv.ieff[e], 1.0)] + [(sv.idc[a], c) for a, c in coefs], ">", 0.0)

    for b in net.buses:
        row = [(sv.s[b.id], 1.0)]
        for e in net.branches_at[b.id]:
            br = net.branch(e)
            if br.is_transformer:
                row.append((sv.ieff[e], -br.k_loss * v[b.id]))
        m.add_row(row, ">", -dqloss.get(b.id, 0.0), name=f"cut[{b.id}]")
    return m, sv


def field_radius(points):
    """Smallest field-magnitude bound covering the given E-field points."""
    r = 0.0
    for p in points:
        r = max(r, math.hypot(float(p[0]), float(p[1])))
    return max(r, 1e-9)


def build_deterministic(net, dc, mu, opts: Options, field_bound=None):
    """Single-scenario model at the mean field (no dual variables)."""
    model, fs = build_first_stage_relaxed(net, opts)
    fb = field_bound if field_bound is not None else field_radius([mu])
    tpl = StageTwoTemplate(net, dc, opts, fb)
    sv = tpl.instantiate(model, fs.za, fs.dqloss, mu, 1.0)
    model.name = f"deterministic[{net.name}]"
    return model, fs, sv


def build_sp(net, dc, samples, opts: Options, field_bound=None):
    """Sample-average model: one block per sample, weights 1/N."""
    if not samples:
        raise FormulationError("sample list is empty")
    model, fs = build_first_stage_relaxed(net, opts)
    fb = field_bound if field_bound is not None else field_radius(samples)
    tpl = StageTwoTemplate(net, dc, opts, fb)
    w = 1.0 / len(samples)
    svs = []
    for k, xi in enumerate(samples):
        svs.append(tpl.instantiate(model, fs.za, fs.dqloss, xi, w, tag=f"#{k}"))
    model.name = f"sp[{net.name}]x{len(samples)}"
    return model, fs, svs


def build_triangle_monolithic(net, dc, triangle, pstar, opts: Options,
                              field_bound=None):
    """Triangle-support reformulation: three probability-weighted blocks.

    Degenerate worst-case weights (a zero component) are rejected; those
    cases collapse to deterministic / two-scenario models and the solver
    drivers route them there."""
    p = list(pstar)
    if len(p) != 3 or len(triangle) != 3:
        raise FormulationError("triangle reformulation needs 3 vertices and weights")
    if min(p) <= 1e-12:
        raise FormulationError(
            "degenerate worst-case distribution; mean lies on the triangle boundary")
    model, fs = build_first_stage_relaxed(net, opts)
    fb = field_bound if field_bound is not None else field_radius(triangle)
    tpl = StageTwoTemplate(net, dc, opts, fb)
    svs = []
    for k, (xi, pk) in enumerate(zip(triangle, p)):
        svs.append(tpl.instantiate(model, fs.za, fs.dqloss, xi, pk, tag=f"#{k}"))
    model.name = f"triangle[{net.name}]"
    return model, fs, svs


class MasterProblem:
    """Scenario-cut master: first stage plus free (lam_e, lam_n, eta) and
    one recourse block per accumulated scenario.

    Scenario blocks share the first-stage columns by reference; adding a
    scenario extends the same model so cutting planes and warm bases
    survive across iterations."""

    def __init__(self, net, dc, mu, opts: Options, field_bound):
        self.net, self.dc, self.opts = net, dc, opts
        self.mu = (float(mu[0]), float(mu[1]))
        self.model, self.fs = build_first_stage_relaxed(net, opts)
        self.template = StageTwoTemplate(net, dc, opts, field_bound)
        self.lam_e = self.model.add_var("lam_e", -INF, INF, obj=self.mu[0])
        self.lam_n = self.model.add_var("lam_n", -INF, INF, obj=self.mu[1])
        self.eta = self.model.add_var("eta", -INF, INF, obj=1.0)
        self.scenarios = []
        self.blocks = []
        self.model.name = f"master[{net.name}]"

    def add_scenario(self, xi):
        xi = (float(xi[0]), float(xi[1]))
        k = len(self.scenarios)
        sv = self.template.instantiate(
            self.model, self.fs.za, self.fs.dqloss, xi, 0.0, tag=f"#{k}")
        # eta >= c'x_k - lam'xi_k
        row = [(self.eta, 1.0), (self.lam_e, xi[0]), (self.lam_n, xi[1])]
        row += [(col, -coef) for col, coef in sv.cost_terms()]
        self.model.add_row(row, ">", 0.0, name=f"opt#{k}")
        self.scenarios.append(xi)
        self.blocks.append(sv)
        return sv


def build_master(net, dc, scenarios, mu, opts: Options, field_bound=None):
    """One-shot master over a fixed scenario list."""
    if not scenarios:
        raise FormulationError("scenario list is empty")
    fb = field_bound if field_bound is not None else field_radius(list(scenarios) + [mu])
    mp = MasterProblem(net, dc, mu, opts, fb)
    for xi in scenarios:
        mp.add_scenario(xi)
    return mp
