"""Quasi-DC network construction from the AC model.

Every AC bus gets an image node; every distinct neutral grounding id gets
a neutral node carrying its grounding conductance.  Transmission lines
map to single arcs carrying eastward/northward lengths; transformers map
to winding arcs:

    gwye-gwye       {h, l}:  high->neutral, low->neutral
    gwye-gwye-auto  {s, c}:  high->low (series), low->neutral (common)
    gwye-delta-gsu  {h}:     high->neutral (delta side has no DC path)

Series-compensated lines are omitted (blocking capacitors).  Arc ids are
assigned deterministically: line arcs in branch order first, then winding
arcs in branch order with the winding order shown above.
"""

from dataclasses import dataclass

from .model import AcNetwork, GridError


@dataclass(frozen=True)
class DcNode:
    key: str
    bus: int = None       # AC bus id, None for neutrals
    a: float = 0.0        # grounding conductance, 1/ohm

    def __post_init__(self):
        if self.a < 0.0:
            raise GridError(f"dc node {self.key}: negative grounding conductance")


@dataclass(frozen=True)
class DcArc:
    id: int
    tail: int             # node positions
    head: int
    branch: int           # AC branch id (the edge map E)
    gamma: float
    le_km: float = 0.0
    ln_km: float = 0.0
    winding: str = None   # None on line arcs


class DcNetwork:
    def __init__(self, nodes, arcs, configs=None, k_loss=None, xfmr_buses=None,
                 vd_bound=10000.0):
        self.nodes = list(nodes)
        self.arcs = list(arcs)
        self.vd_bound = vd_bound
        self.node_pos = {n.key: k for k, n in enumerate(self.nodes)}
        self.bus_node = {n.bus: k for k, n in enumerate(self.nodes) if n.bus is not None}
        # E: arc id -> branch id, and its preimage E^-1
        self.edge_map = {arc.id: arc.branch for arc in self.arcs}
        self.inverse_map = {}
        for arc in self.arcs:
            self.inverse_map.setdefault(arc.branch, []).append(arc.id)
        self.arc_pos = {arc.id: k for k, arc in enumerate(self.arcs)}
        self.winding_arcs = {}
        for arc in self.arcs:
            if arc.winding is not None:
                self.winding_arcs.setdefault(arc.branch, {})[arc.winding] = arc.id
        # transformer metadata captured from the AC model at build time
        self.configs = dict(configs or {})        # branch id -> configuration
        self.k_loss = dict(k_loss or {})          # branch id -> loss factor
        self.xfmr_buses = dict(xfmr_buses or {})  # branch id -> (from, to) bus ids

    @property
    def nnodes(self):
        return len(self.nodes)

    @property
    def narcs(self):
        return len(self.arcs)


def build_dc_network(net: AcNetwork, vd_bound=10000.0) -> DcNetwork:
    nodes = [DcNode(f"b{b.id}", bus=b.id) for b in net.buses]
    pos = {n.key: k for k, n in enumerate(nodes)}

    def neutral_node(key):
        if key not in pos:
            if key not in net.substations:
                raise GridError(f"no grounding data for neutral {key!r}")
            pos[key] = len(nodes)
            nodes.append(DcNode(key, bus=None, a=float(net.substations[key])))
        return pos[key]

    arcs = []
    configs, k_loss, xfmr_buses = {}, {}, {}
    next_id = 1
    for br in net.branches:
        if br.is_transformer or br.compensated:
            continue
        arcs.append(
            DcArc(next_id, pos[f"b{br.from_bus}"], pos[f"b{br.to_bus}"], br.id,
                  gamma=br.gamma, le_km=br.le_km, ln_km=br.ln_km)
        )
        next_id += 1

    for br in net.branches:
        if not br.is_transformer:
            continue
        configs[br.id] = br.config
        k_loss[br.id] = br.k_loss
        xfmr_buses[br.id] = (br.from_bus, br.to_bus)
        gam = br.winding_gamma_map()
        missing = [w for w in br.config.windings if w not in gam]
        if missing:
            raise GridError(f"transformer {br.id}: missing winding conductance {missing}")
        if br.neutral is None:
            raise GridError(f"transformer {br.id}: no neutral grounding point")
        gidx = neutral_node(br.neutral)
        hi = pos[f"b{br.from_bus}"]
        lo = pos[f"b{br.to_bus}"]
        kind = br.config.kind
        if kind == "gwye-gwye":
            arcs.append(DcArc(next_id, hi, gidx, br.id, gam["h"], winding="h"))
            arcs.append(DcArc(next_id + 1, lo, gidx, br.id, gam["l"], winding="l"))
            next_id += 2
        elif kind == "gwye-gwye-auto":
            arcs.append(DcArc(next_id, hi, lo, br.id, gam["s"], winding="s"))
            arcs.append(DcArc(next_id + 1, lo, gidx, br.id, gam["c"], winding="c"))
            next_id += 2
        elif kind == "gwye-delta-gsu":
            arcs.append(DcArc(next_id, hi, gidx, br.id, gam["h"], winding="h"))
            next_id += 1
        else:  # pragma: no cover - config classes are closed
            raise GridError(f"transformer {br.id}: unknown configuration {kind!r}")

    return DcNetwork(nodes, arcs, configs=configs, k_loss=k_loss,
                     xfmr_buses=xfmr_buses, vd_bound=vd_bound)
