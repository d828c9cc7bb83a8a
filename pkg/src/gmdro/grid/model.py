"""AC network data model.

Conventions:
  * electrical quantities are per-unit, angles radians internally;
  * a branch is either a transmission line or a transformer; transformers
    carry a winding configuration, a reactive-loss factor ``k_loss``
    (p.u. per volt-amp of effective GIC) and their quasi-DC data;
  * for transformers the ``from`` bus is the grounded-wye (high) side and
    the ``to`` bus the low/secondary side.
"""

from dataclasses import dataclass, field


class GridError(ValueError):
    """Inconsistent network data."""


@dataclass(frozen=True)
class Bus:
    id: int
    pd: float = 0.0
    qd: float = 0.0
    vmin: float = 0.94
    vmax: float = 1.06
    gs: float = 0.0
    bs: float = 0.0

    def __post_init__(self):
        if not (0.0 < self.vmin <= self.vmax):
            raise GridError(f"bus {self.id}: bad voltage bounds [{self.vmin}, {self.vmax}]")


@dataclass(frozen=True)
class Generator:
    id: int
    bus: int
    c0: float = 0.0
    c1: float = 0.0
    c2: float = 0.0
    pmin: float = 0.0
    pmax: float = 0.0
    qmin: float = 0.0
    qmax: float = 0.0

    def __post_init__(self):
        if self.c2 < 0.0:
            raise GridError(f"generator {self.id}: concave cost (c2 < 0)")
        if self.pmin > self.pmax or self.qmin > self.qmax:
            raise GridError(f"generator {self.id}: crossed generation bounds")


# -- transformer winding configurations --------------------------------------

@dataclass(frozen=True)
class GwyeGwye:
    """Two grounded-wye windings; effective GIC (nh*Ih + nl*Il)/nh."""
    nh: float
    nl: float
    kind = "gwye-gwye"
    windings = ("h", "l")

    def __post_init__(self):
        if self.nh <= 0 or self.nl < 0:
            raise GridError("gwye-gwye turns must be positive (nl may be 0)")


@dataclass(frozen=True)
class GwyeGwyeAuto:
    """Autotransformer; effective GIC (ns*Is + nc*Ic)/(ns+nc)."""
    ns: float
    nc: float
    kind = "gwye-gwye-auto"
    windings = ("s", "c")

    def __post_init__(self):
        if self.ns <= 0 or self.nc < 0 or self.ns + self.nc <= 0:
            raise GridError("auto transformer turns must keep ns+nc positive")


@dataclass(frozen=True)
class GwyeDeltaGsu:
    """Generator step-up; only the grounded-wye winding carries GICs."""
    kind = "gwye-delta-gsu"
    windings = ("h",)


TRANSFORMER_KINDS = {
    "gwye-gwye": GwyeGwye,
    "gwye-gwye-auto": GwyeGwyeAuto,
    "gwye-delta-gsu": GwyeDeltaGsu,
}


@dataclass(frozen=True)
class AcBranch:
    id: int
    from_bus: int
    to_bus: int
    g: float
    b: float
    bc: float = 0.0
    tap: float = 1.0
    smax: float = 1.0
    amin: float = -0.5236  # +-30 degrees
    amax: float = 0.5236
    config: object = None           # None for lines
    k_loss: float = 0.0
    ieff_max: float = None
    compensated: bool = False
    # quasi-DC data: lines use (gamma, le_km, ln_km); transformers use
    # winding_gamma (per winding label) and the neutral grounding node id
    gamma: float = 0.0
    le_km: float = 0.0
    ln_km: float = 0.0
    winding_gamma: tuple = ()
    neutral: str = None

    def __post_init__(self):
        if self.tap <= 0.0:
            raise GridError(f"branch {self.id}: tap ratio must be positive")
        if self.smax <= 0.0:
            raise GridError(f"branch {self.id}: apparent-power limit must be positive")
        if not self.amin < self.amax:
            raise GridError(f"branch {self.id}: angle bounds crossed")
        if self.config is not None and self.k_loss < 0.0:
            raise GridError(f"branch {self.id}: negative loss factor")

    @property
    def is_transformer(self):
        return self.config is not None

    def winding_gamma_map(self):
        return dict(self.winding_gamma)


class AcNetwork:
    """Buses, generators, branches, and neutral grounding admittances."""

    def __init__(self, buses, generators, branches, substations=None, name="",
                 base_mva=100.0):
        self.name = name
        self.base_mva = float(base_mva)
        self.buses = list(buses)
        self.generators = list(generators)
        self.branches = list(branches)
        # neutral grounding: node id -> conductance to ground (1/ohm)
        self.substations = dict(substations or {})

        self.bus_pos = {b.id: k for k, b in enumerate(self.buses)}
        if len(self.bus_pos) != len(self.buses):
            raise GridError("duplicate bus ids")
        self.branch_pos = {br.id: k for k, br in enumerate(self.branches)}
        if len(self.branch_pos) != len(self.branches):
            raise GridError("duplicate branch ids")
        self.gen_pos = {g.id: k for k, g in enumerate(self.generators)}
        if len(self.gen_pos) != len(self.generators):
            raise GridError("duplicate generator ids")

        for br in self.branches:
            for end in (br.from_bus, br.to_bus):
                if end not in self.bus_pos:
                    raise GridError(f"branch {br.id} references missing bus {end}")
        for g in self.generators:
            if g.bus not in self.bus_pos:
                raise GridError(f"generator {g.id} references missing bus {g.bus}")

        self.branches_at = {b.id: [] for b in self.buses}
        for br in self.branches:
            self.branches_at[br.from_bus].append(br.id)
            if br.to_bus != br.from_bus:
                self.branches_at[br.to_bus].append(br.id)
        self.gens_at = {b.id: [] for b in self.buses}
        for g in self.generators:
            self.gens_at[g.bus].append(g.id)

        self.transformers = [br for br in self.branches if br.is_transformer]

    @property
    def nbus(self):
        return len(self.buses)

    def bus(self, bus_id):
        return self.buses[self.bus_pos[bus_id]]

    def branch(self, branch_id):
        return self.branches[self.branch_pos[branch_id]]

    def generator(self, gen_id):
        return self.generators[self.gen_pos[gen_id]]


@dataclass
class SwitchingDecision:
    """First-stage on/off state for branches and generators."""

    za: dict = field(default_factory=dict)  # branch id -> 0/1
    zg: dict = field(default_factory=dict)  # generator id -> 0/1

    @classmethod
    def all_on(cls, net: AcNetwork):
        return cls({br.id: 1 for br in net.branches}, {g.id: 1 for g in net.generators})

    def branch_on(self, branch_id):
        return self.za.get(branch_id, 1) >= 1

    def gen_on(self, gen_id):
        return self.zg.get(gen_id, 1) >= 1

    def off_branches(self):
        return sorted(e for e, v in self.za.items() if v < 1)

    def off_generators(self):
        return sorted(k for k, v in self.zg.items() if v < 1)

    def validate(self, net: AcNetwork):
        """A generator may be on only if some incident branch is on."""
        for g in net.generators:
            if self.gen_on(g.id):
                if not any(self.branch_on(e) for e in net.branches_at[g.bus]):
                    raise GridError(
                        f"generator {g.id} is on but every branch at bus {g.bus} is off"
                    )
