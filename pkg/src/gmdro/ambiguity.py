"""Mean-support ambiguity sets over the uncertain E-field.

The support is a convex polygon in the (xe, xn) plane given by its
extreme points in counter-clockwise order.  The worst-case distribution
over a triangle support is the unique convex combination of its vertices
reproducing the mean; for larger polygons the solvers enumerate vertices.

Sampling is uniform over the polygon by rejection from the bounding box,
driven by a named, seedable generator (``RNG_ALGORITHM``) in fixed-size
chunks so that a sample of size k is a prefix of any larger sample drawn
with the same seed.
"""

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

RNG_ALGORITHM = "numpy-PCG64"
_GEOM_TOL = 1e-12
_CHUNK = 1024


class EFieldVector(NamedTuple):
    xe: float
    xn: float


class AmbiguityError(ValueError):
    pass


class SupportPolytope:
    """Extreme points in counter-clockwise convex position, no duplicates."""

    def __init__(self, vertices):
        pts = [EFieldVector(float(p[0]), float(p[1])) for p in vertices]
        if len(pts) < 3:
            raise AmbiguityError("support needs at least 3 extreme points")
        n = len(pts)
        for i in range(n):
            a, b, c = pts[i], pts[(i + 1) % n], pts[(i + 2) % n]
            cross = (b.xe - a.xe) * (c.xn - a.xn) - (b.xn - a.xn) * (c.xe - a.xe)
            if cross <= _GEOM_TOL:
                raise AmbiguityError(
                    "extreme points must be in strict counter-clockwise convex position"
                )
        self.vertices = pts

    def __len__(self):
        return len(self.vertices)

    def __iter__(self):
        return iter(self.vertices)

    def bounding_box(self):
        xs = [p.xe for p in self.vertices]
        ys = [p.xn for p in self.vertices]
        return min(xs), max(xs), min(ys), max(ys)

    def centroid(self):
        """Area centroid (used by sampling sanity checks)."""
        a2 = cx = cy = 0.0
        pts = self.vertices
        for i in range(len(pts)):
            x0, y0 = pts[i]
            x1, y1 = pts[(i + 1) % len(pts)]
            w = x0 * y1 - x1 * y0
            a2 += w
            cx += (x0 + x1) * w
            cy += (y0 + y1) * w
        return EFieldVector(cx / (3.0 * a2), cy / (3.0 * a2))


def build_polytope_support(radius, angles_deg) -> SupportPolytope:
    """Extreme points (R cos d, R sin d) for strictly increasing angles."""
    if radius <= 0.0:
        raise AmbiguityError("support radius must be positive")
    angles = list(angles_deg)
    if len(angles) < 3:
        raise AmbiguityError("need at least 3 angles")
    for a, b in zip(angles, angles[1:]):
        if not a < b:
            raise AmbiguityError("angles must be strictly increasing")
    if angles[0] < 0.0 or angles[-1] > 180.0:
        raise AmbiguityError("angles must lie within [0, 180] degrees")
    pts = [
        (radius * math.cos(math.radians(d)), radius * math.sin(math.radians(d)))
        for d in angles
    ]
    return SupportPolytope(pts)


def pentagon_support(radius) -> SupportPolytope:
    return build_polytope_support(radius, (0.0, 45.0, 90.0, 135.0, 180.0))


def contains_point(poly: SupportPolytope, p) -> str:
    """Classify p as 'inside', 'boundary' or 'outside' of the polygon."""
    px, py = float(p[0]), float(p[1])
    verdict = "inside"
    pts = poly.vertices
    for i in range(len(pts)):
        ax, ay = pts[i]
        bx, by = pts[(i + 1) % len(pts)]
        cross = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
        if cross < -_GEOM_TOL:
            return "outside"
        if cross <= _GEOM_TOL:
            verdict = "boundary"
    return verdict


@dataclass(frozen=True)
class WorstCaseDistribution:
    vertices: tuple
    p: tuple

    def mean(self):
        xe = sum(pl * v[0] for pl, v in zip(self.p, self.vertices))
        xn = sum(pl * v[1] for pl, v in zip(self.p, self.vertices))
        return EFieldVector(xe, xn)


def worst_case_distribution(triangle, mu) -> WorstCaseDistribution:
    """Unique convex weights on a triangle's vertices reproducing the mean."""
    v = [EFieldVector(float(t[0]), float(t[1])) for t in triangle]
    if len(v) != 3:
        raise AmbiguityError("triangle must have exactly 3 vertices")
    mat = np.array([
        [v[0].xe, v[1].xe, v[2].xe],
        [v[0].xn, v[1].xn, v[2].xn],
        [1.0, 1.0, 1.0],
    ])
    scale = max(1.0, abs(mat).max()) ** 2
    if abs(np.linalg.det(mat)) <= 1e-12 * scale:
        raise AmbiguityError("degenerate (collinear) triangle")
    rhs = np.array([float(mu[0]), float(mu[1]), 1.0])
    p = np.linalg.solve(mat, rhs)
    if p.min() < -1e-9:
        raise AmbiguityError(f"mean {tuple(mu)} lies outside the triangle")
    p = np.maximum(p, 0.0)
    p /= p.sum()
    return WorstCaseDistribution(tuple(v), tuple(float(x) for x in p))


class AmbiguitySet:
    """Mean vector plus polyhedral support; the mean must be interior."""

    def __init__(self, mean, support: SupportPolytope, construction=None):
        self.mean = EFieldVector(float(mean[0]), float(mean[1]))
        self.support = support
        self.construction = dict(construction or {})
        if contains_point(support, self.mean) != "inside":
            raise AmbiguityError(
                f"mean {tuple(self.mean)} is not strictly inside the support"
            )

    @classmethod
    def polar(cls, radius, m_frac, delta_mu_deg,
              angles_deg=(0.0, 45.0, 90.0, 135.0, 180.0)):
        """Polar construction: support on the radius-R arc, mean at
        magnitude m_frac*R along direction delta_mu."""
        support = build_polytope_support(radius, angles_deg)
        mag = m_frac * radius
        mu = (mag * math.cos(math.radians(delta_mu_deg)),
              mag * math.sin(math.radians(delta_mu_deg)))
        return cls(mu, support, construction={
            "radius": radius, "m_frac": m_frac, "delta_mu_deg": delta_mu_deg,
            "angles_deg": list(angles_deg),
        })


def enclosing_triangle(poly: SupportPolytope, mu):
    """First fan triangle containing the mean.

    The fan is anchored at vertex index 1 and its triangles are scanned in
    cyclic order; taking the first triangle that contains the mean resolves
    ties on internal fan edges toward the lower-index triangle.  The rule is
    arbitrary but frozen: any triangle of support vertices containing the
    mean works, reproducibility picks one.
    """
    where = contains_point(poly, mu)
    if where != "inside":
        raise AmbiguityError(f"mean must be strictly inside the support ({where})")
    pts = poly.vertices
    n = len(pts)
    anchor = 1 % n
    for i in range(1, n - 1):
        tri = (pts[anchor], pts[(anchor + i) % n], pts[(anchor + i + 1) % n])
        tri_poly = SupportPolytope(tri)
        if contains_point(tri_poly, mu) != "outside":
            return tri
    raise AmbiguityError("fan triangulation failed to cover the mean")  # pragma: no cover


def sample_support(poly: SupportPolytope, n, seed):
    """n i.i.d. uniform points in the polygon (rejection from the bounding
    box).  Chunked draws keep the accepted sequence seed-stable and
    prefix-stable across different n."""
    if n < 1:
        raise AmbiguityError("need at least one sample")
    rng = np.random.Generator(np.random.PCG64(seed))
    xmin, xmax, ymin, ymax = poly.bounding_box()
    out = []
    while len(out) < n:
        u = rng.random((_CHUNK, 2))
        xs = xmin + u[:, 0] * (xmax - xmin)
        ys = ymin + u[:, 1] * (ymax - ymin)
        for x, y in zip(xs, ys):
            if contains_point(poly, (x, y)) != "outside":
                out.append(EFieldVector(float(x), float(y)))
                if len(out) == n:
                    break
    return out
