"""Self-contained LP/MIP engine: bounded-variable revised simplex with
dual extraction, branch-and-bound over binaries, and outer approximation
of rotated-cone and convex-quadratic facts."""

from .conic import apply_cuts, conic_violation, separate_conic
from .mip import extend_warm, remap_warm, solve_mip
from .model import INF, Model, QuadEpigraph, RotatedCone, Solution, affine
from .simplex import solve_lp

__all__ = [
    "INF",
    "Model",
    "Solution",
    "RotatedCone",
    "QuadEpigraph",
    "affine",
    "solve_lp",
    "solve_mip",
    "separate_conic",
    "apply_cuts",
    "conic_violation",
    "extend_warm",
    "remap_warm",
]
