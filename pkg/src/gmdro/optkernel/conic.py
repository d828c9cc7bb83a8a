"""Cutting-plane separation for the stored convex facts.

Rotated cones are cut with the supporting hyperplane at the projection of
the violated point onto the cone boundary (via the isometric second-order
cone form ||(2x, 2y, u-w)|| <= u+w).  Quadratic epigraphs get the gradient
cut t >= q(xbar) + grad q(xbar)' (x - xbar).
"""

import math

from .model import Model, affine, affine_value

CONE_VIOL_TOL = 1e-6


class Cut:
    __slots__ = ("coeffs", "sense", "rhs", "tag")

    def __init__(self, coeffs, sense, rhs, tag):
        self.coeffs = coeffs
        self.sense = sense
        self.rhs = rhs
        self.tag = tag


def _scaled(expr, factor):
    coeffs, const = expr
    return [(j, factor * a) for j, a in coeffs], factor * const


def _combine(*parts):
    acc = {}
    const = 0.0
    for coeffs, c0 in parts:
        const += c0
        for j, a in coeffs:
            acc[j] = acc.get(j, 0.0) + a
    return sorted(acc.items()), const


def separate_cone(cone, xval):
    """Supporting-hyperplane cut for x^2+y^2 <= u*w, or None if satisfied."""
    xx = affine_value(cone.x, xval)
    yy = affine_value(cone.y, xval)
    uu = affine_value(cone.u, xval)
    ww = affine_value(cone.w, xval)
    if xx * xx + yy * yy - uu * ww <= CONE_VIOL_TOL:
        return None
    nx, ny, nz = 2.0 * xx, 2.0 * yy, uu - ww
    nrm = math.sqrt(nx * nx + ny * ny + nz * nz)
    if nrm <= 1e-14:
        # degenerate apex violation: u + w must be nonnegative
        coeffs, const = _combine(cone.u, cone.w)
        return Cut(coeffs, ">", -const, "cone-apex")
    nx, ny, nz = nx / nrm, ny / nrm, nz / nrm
    # n1*(2x) + n2*(2y) + n3*(u - w) - (u + w) <= 0
    coeffs, const = _combine(
        _scaled(cone.x, 2.0 * nx),
        _scaled(cone.y, 2.0 * ny),
        _scaled(cone.u, nz - 1.0),
        _scaled(cone.w, -nz - 1.0),
    )
    return Cut(coeffs, "<", -const, "cone")


def separate_quad(q, xval):
    """Gradient cut for q(x) <= rhs, or None if satisfied."""
    if q.violation(xval) <= CONE_VIOL_TOL:
        return None
    # q(xbar) + grad'(x - xbar) <= rhs
    lin = {}
    const = q.const
    for j, a in q.quad:
        xj = xval[j]
        lin[j] = lin.get(j, 0.0) + 2.0 * a * xj
        const -= a * xj * xj
    for j, a in q.lin:
        lin[j] = lin.get(j, 0.0) + a
    rcoeffs, rconst = q.rhs
    for j, a in rcoeffs:
        lin[j] = lin.get(j, 0.0) - a
    return Cut(sorted(lin.items()), "<", rconst - const, "quad")


def separate_conic(model: Model, xval):
    """All violated cuts of ``model`` at the point ``xval``."""
    cuts = []
    for cone in model.cones:
        cut = separate_cone(cone, xval)
        if cut is not None:
            cuts.append(cut)
    for q in model.quads:
        cut = separate_quad(q, xval)
        if cut is not None:
            cuts.append(cut)
    return cuts


def apply_cuts(model: Model, cuts):
    for cut in cuts:
        model.add_row(cut.coeffs, cut.sense, cut.rhs, name=cut.tag)


def conic_violation(model: Model, xval):
    worst = 0.0
    for cone in model.cones:
        worst = max(worst, cone.violation(xval))
    for q in model.quads:
        worst = max(worst, q.violation(xval))
    return worst


__all__ = ["Cut", "separate_conic", "separate_cone", "separate_quad",
           "apply_cuts", "conic_violation", "CONE_VIOL_TOL"]
