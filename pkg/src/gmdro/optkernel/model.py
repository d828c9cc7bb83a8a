"""Model container for the LP/MIP engine.

A :class:`Model` holds continuous/binary columns, linear rows, and two
kinds of symbolically stored convex facts that the solver enforces by
cutting planes:

* rotated-cone facts ``x^2 + y^2 <= u * w`` with affine ``x, y, u, w``
  (``u, w`` nonnegative on the feasible set), and
* epigraph facts ``q(vars) <= t`` with ``q`` a convex diagonal quadratic
  plus linear terms and ``t`` affine.

Affine expressions are ``(coeffs, const)`` pairs where ``coeffs`` is a
list of ``(col_index, coefficient)``.
"""

import numpy as np

INF = float("inf")

# column bound/status conventions shared with the simplex core
SENSES = ("<", "=", ">")


def affine(coeffs, const=0.0):
    """Normalize an affine expression: merge duplicate indices."""
    acc = {}
    for j, a in coeffs:
        if a != 0.0:
            acc[int(j)] = acc.get(int(j), 0.0) + float(a)
    return (sorted(acc.items()), float(const))


def affine_value(expr, x):
    coeffs, const = expr
    return const + sum(a * x[j] for j, a in coeffs)


class RotatedCone:
    """Fact x^2 + y^2 <= u*w, all terms affine."""

    __slots__ = ("x", "y", "u", "w")

    def __init__(self, x, y, u, w):
        self.x = affine(*x) if isinstance(x, tuple) else x
        self.y = affine(*y) if isinstance(y, tuple) else y
        self.u = affine(*u) if isinstance(u, tuple) else u
        self.w = affine(*w) if isinstance(w, tuple) else w

    def violation(self, xval):
        xx = affine_value(self.x, xval)
        yy = affine_value(self.y, xval)
        uu = affine_value(self.u, xval)
        ww = affine_value(self.w, xval)
        return xx * xx + yy * yy - uu * ww


class QuadEpigraph:
    """Fact sum_k q_k * var_k^2 + lin + const <= rhs (affine)."""

    __slots__ = ("quad", "lin", "const", "rhs")

    def __init__(self, quad, lin, const, rhs):
        self.quad = [(int(j), float(a)) for j, a in quad if a != 0.0]
        self.lin = [(int(j), float(a)) for j, a in lin if a != 0.0]
        self.const = float(const)
        self.rhs = rhs

    def qvalue(self, xval):
        v = self.const
        for j, a in self.quad:
            v += a * xval[j] * xval[j]
        for j, a in self.lin:
            v += a * xval[j]
        return v

    def violation(self, xval):
        return self.qvalue(xval) - affine_value(self.rhs, xval)


class Model:
    def __init__(self, name="model", sense="min"):
        assert sense in ("min", "max")
        self.name = name
        self.sense = sense
        self.obj_offset = 0.0
        self.col_names = []
        self.col_lb = []
        self.col_ub = []
        self.col_obj = []
        self.col_binary = []
        self.row_cols = []  # list of int arrays
        self.row_vals = []  # list of float arrays
        self.row_sense = []
        self.row_rhs = []
        self.row_names = []
        self.cones = []
        self.quads = []

    # ------------------------------------------------------------------
    @property
    def ncols(self):
        return len(self.col_lb)

    @property
    def nrows(self):
        return len(self.row_rhs)

    @property
    def binaries(self):
        return [j for j, b in enumerate(self.col_binary) if b]

    def add_var(self, name, lb=0.0, ub=INF, obj=0.0, binary=False):
        if binary:
            lb, ub = max(lb, 0.0), min(ub, 1.0)
        if lb > ub + 1e-12:
            raise ValueError(f"inconsistent bounds for {name}: [{lb}, {ub}]")
        self.col_names.append(name)
        self.col_lb.append(float(lb))
        self.col_ub.append(float(ub))
        self.col_obj.append(float(obj))
        self.col_binary.append(bool(binary))
        return len(self.col_lb) - 1

    def set_obj(self, j, coef):
        self.col_obj[j] = float(coef)

    def add_row(self, coeffs, sense, rhs, name=None):
        if sense not in SENSES:
            raise ValueError(f"bad row sense {sense!r}")
        acc = {}
        for j, a in coeffs:
            j = int(j)
            if j < 0 or j >= self.ncols:
                raise IndexError(f"row references unknown column {j}")
            if a != 0.0:
                acc[j] = acc.get(j, 0.0) + float(a)
        items = sorted(acc.items())
        self.row_cols.append(np.array([j for j, _ in items], dtype=np.int64))
        self.row_vals.append(np.array([a for _, a in items], dtype=np.float64))
        self.row_sense.append(sense)
        self.row_rhs.append(float(rhs))
        self.row_names.append(name or f"r{len(self.row_rhs) - 1}")
        return len(self.row_rhs) - 1

    def add_rotated_cone(self, x, y, u, w):
        for expr in (x, y, u, w):
            for j, _ in expr[0]:
                if j < 0 or j >= self.ncols:
                    raise IndexError(f"cone references unknown column {j}")
        self.cones.append(RotatedCone(affine(*x), affine(*y), affine(*u), affine(*w)))
        return len(self.cones) - 1

    def add_quad_epigraph(self, quad, rhs, lin=(), const=0.0):
        for j, a in quad:
            if j < 0 or j >= self.ncols:
                raise IndexError(f"quad row references unknown column {j}")
            if a < 0.0:
                raise ValueError("quadratic epigraph requires nonnegative curvature")
        self.quads.append(QuadEpigraph(quad, lin, const, affine(*rhs)))
        return len(self.quads) - 1

    # ------------------------------------------------------------------
    def objective_value(self, x):
        v = self.obj_offset
        for j, c in enumerate(self.col_obj):
            if c != 0.0:
                v += c * x[j]
        return v

    def row_activity(self, i, x):
        return float(self.row_vals[i] @ x[self.row_cols[i]])

    def max_violations(self, x):
        """(linear, conic) worst violations; used by validation and tests."""
        lin = 0.0
        for i in range(self.nrows):
            act = self.row_activity(i, x)
            s, r = self.row_sense[i], self.row_rhs[i]
            if s == "<":
                lin = max(lin, act - r)
            elif s == ">":
                lin = max(lin, r - act)
            else:
                lin = max(lin, abs(act - r))
        con = 0.0
        for cone in self.cones:
            con = max(con, cone.violation(x))
        for q in self.quads:
            con = max(con, q.violation(x))
        return lin, con

    def dump_lp(self, fh):
        """Write an LP-text rendering for external cross-checking."""
        fh.write(f"\\ model {self.name}\n")
        fh.write("Minimize\n" if self.sense == "min" else "Maximize\n")
        terms = [
            f"{c:+.17g} {self.col_names[j]}"
            for j, c in enumerate(self.col_obj)
            if c != 0.0
        ]
        fh.write(" obj: " + " ".join(terms) + "\n")
        fh.write("Subject To\n")
        op = {"<": "<=", "=": "=", ">": ">="}
        for i in range(self.nrows):
            parts = [
                f"{v:+.17g} {self.col_names[j]}"
                for j, v in zip(self.row_cols[i], self.row_vals[i])
            ]
            fh.write(
                f" {self.row_names[i]}: "
                + " ".join(parts)
                + f" {op[self.row_sense[i]]} {self.row_rhs[i]:.17g}\n"
            )
        for k, cone in enumerate(self.cones):
            fh.write(f"\\ cone{k}: x={cone.x} y={cone.y} u={cone.u} w={cone.w}\n")
        for k, q in enumerate(self.quads):
            fh.write(f"\\ quad{k}: quad={q.quad} lin={q.lin} c={q.const} rhs={q.rhs}\n")
        fh.write("Bounds\n")
        for j in range(self.ncols):
            fh.write(
                f" {self.col_lb[j]:.17g} <= {self.col_names[j]} <= {self.col_ub[j]:.17g}\n"
            )
        bins = [self.col_names[j] for j in self.binaries]
        if bins:
            fh.write("Binaries\n " + " ".join(bins) + "\n")
        fh.write("End\n")


class Solution:
    """Primal (and, for LPs, dual) result of a solve."""

    def __init__(self, status, x=None, obj=None, duals=None, redcost=None,
                 gap=0.0, iters=0, nodes=0, basis=None, vstat=None,
                 farkas=None, ray=None, message=""):
        self.status = status
        self.x = x
        self.obj = obj
        self.duals = duals
        self.redcost = redcost
        self.gap = gap
        self.iters = iters
        self.nodes = nodes
        self.basis = basis
        self.vstat = vstat
        self.farkas = farkas
        self.ray = ray
        self.message = message

    def __repr__(self):
        return (
            f"Solution(status={self.status!r}, obj={self.obj}, gap={self.gap:g}, "
            f"iters={self.iters}, nodes={self.nodes})"
        )
