"""Distributionally robust switching and dispatch for grids exposed to
geomagnetically-induced currents (GICs) under uncertain surface E-fields.

Subpackages:
    grid         AC/DC network data model and the exact GIC oracle
    ambiguity    mean-support ambiguity sets over the E-field
    optkernel    self-contained LP/MIP engine with conic outer approximation
    formulation  translation of grid + ambiguity data into solver models
    dro          column-and-constraint generation (classical and accelerated)
    recovery     AC-feasible operation recovery and out-of-sample evaluation
    io           case ingestion, result serialization, CLI plumbing
"""

__version__ = "0.1.0"
