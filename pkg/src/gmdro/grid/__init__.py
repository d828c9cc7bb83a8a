"""AC/DC grid data model and GIC physics."""

from .dc import DcArc, DcNetwork, DcNode, build_dc_network
from .gic import (GicError, GicResponse, GicState, effective_gic,
                  induced_voltages, second_stage_value, solve_gic)
from .model import (AcBranch, AcNetwork, Bus, Generator, GridError, GwyeGwye,
                    GwyeGwyeAuto, GwyeDeltaGsu, SwitchingDecision,
                    TRANSFORMER_KINDS)

__all__ = [
    "Bus", "Generator", "AcBranch", "AcNetwork", "SwitchingDecision",
    "GwyeGwye", "GwyeGwyeAuto", "GwyeDeltaGsu", "TRANSFORMER_KINDS",
    "GridError", "DcNode", "DcArc", "DcNetwork", "build_dc_network",
    "GicError", "GicState", "GicResponse", "induced_voltages", "solve_gic",
    "effective_gic", "second_stage_value",
]
