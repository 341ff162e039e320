"""Distance-only plane geometry.

Everything here works from pairwise lengths: triangle areas come from the
Cayley-Menger determinant, point-in-triangle decisions from area additivity,
and the tracking chain from the law of cosines.  No coordinates are used.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

TRI_TOL = 1e-9
MIN_HULL_AREA = 1e-6
# shape floor for hulls used in updates; slivers amplify length errors
MIN_HULL_QUALITY = 0.05
# largest tolerated rounding-induced position shift from a computed weight
WEIGHT_ROUNDING_TOL = 1e-12
EPS = float(np.finfo(float).eps)


class DegenerateInput(ValueError):
    """Lengths that cannot be the sides of a real triangle."""


class DegenerateHull(ValueError):
    """Candidate hull is too flat to be used."""


class NotInterior(ValueError):
    """Barycentric weights requested for a point outside the hull."""


class DistanceTriple(NamedTuple):
    d_ab: float
    d_bc: float
    d_ca: float


@dataclass(frozen=True)
class HullDistances:
    """The six lengths among agent ``i`` and hull vertices ``j``, ``l``, ``n``."""

    d_ij: float
    d_il: float
    d_in: float
    d_jl: float
    d_jn: float
    d_ln: float

    def __post_init__(self):
        for name in ("d_ij", "d_il", "d_in", "d_jl", "d_jn", "d_ln"):
            if getattr(self, name) < 0:
                raise DegenerateInput(f"{name} is negative")

    def hull(self) -> DistanceTriple:
        return DistanceTriple(self.d_jl, self.d_ln, self.d_jn)

    def sub_triangles(self) -> tuple[DistanceTriple, DistanceTriple, DistanceTriple]:
        """Triangles with ``i`` substituted for ``j``, ``l`` and ``n`` in turn."""
        return (
            DistanceTriple(self.d_il, self.d_ln, self.d_in),
            DistanceTriple(self.d_ij, self.d_in, self.d_jn),
            DistanceTriple(self.d_jl, self.d_il, self.d_ij),
        )


@dataclass(frozen=True)
class Barycentrics:
    a_j: float
    a_l: float
    a_n: float
    # index (0, 1, 2) of the component filled in as 1 - (other two)
    residual: int = 2

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.a_j, self.a_l, self.a_n)

    def total(self) -> float:
        """Sum in construction order: the two computed weights, then the residual."""
        w = self.as_tuple()
        others = [w[q] for q in range(3) if q != self.residual]
        return (others[0] + others[1]) + w[self.residual]


@dataclass(frozen=True)
class Inclusion:
    inside: bool
    rel_error: float
    excess: float
    hull_area: float
    sub_areas: tuple[float, float, float]


def _heron_factors(a: float, b: float, c: float) -> tuple[float, float]:
    """Return (16 * area**2, signed slack) for sorted-descending sides.

    The 3-point Cayley-Menger determinant equals -16 A^2 and factors as
    (a+b+c)(-a+b+c)(a-b+c)(a+b-c).  Evaluating the factors with the larger
    side first keeps the needle-triangle case accurate.  The slack is the
    factor ``c - (a - b)``, negative exactly when the triangle inequality
    fails.
    """
    slack = c - (a - b)
    return (a + (b + c)) * slack * (c + (a - b)) * (a + (b - c)), slack


def cayley_menger_16a2(t: DistanceTriple, tol: float = TRI_TOL) -> float:
    """Sixteen times the squared area, clamped at zero within ``tol``."""
    if min(t) < 0:
        raise DegenerateInput("negative length")
    a, b, c = sorted(t, reverse=True)
    val, slack = _heron_factors(a, b, c)
    if slack < 0:
        if slack < -tol * a:
            raise DegenerateInput(f"sides {tuple(t)} violate the triangle inequality")
        return 0.0
    return max(val, 0.0)


def triangle_area(t: DistanceTriple | tuple[float, float, float], tol: float = TRI_TOL) -> float:
    return 0.25 * math.sqrt(cayley_menger_16a2(DistanceTriple(*t), tol))


def inclusion_test(
    h: HullDistances,
    eps: float = 0.0,
    tol: float = TRI_TOL,
    min_hull_area: float = MIN_HULL_AREA,
) -> Inclusion:
    """Area-additivity test for whether ``i`` lies in triangle ``jln``.

    Inside when the three sub-areas add up to the hull area within a
    relative error of ``eps`` (plus ``tol`` for rounding).  With exact
    lengths an outside point always overshoots; noisy lengths can also
    undershoot, which counts as a failed test.
    """
    total = triangle_area(h.hull(), tol)
    if total < min_hull_area:
        raise DegenerateHull(f"hull area {total:.3g} below {min_hull_area:g}")
    subs = tuple(triangle_area(t, tol) for t in h.sub_triangles())
    excess = ((subs[0] + subs[1]) + subs[2] - total) / total
    return Inclusion(abs(excess) <= eps + tol, abs(excess), excess, total, subs)


def barycentric_coords(
    h: HullDistances,
    rng: random.Random | np.random.Generator | None = None,
    residual: int | None = None,
    eps: float = 0.0,
    tol: float = TRI_TOL,
    min_hull_area: float = MIN_HULL_AREA,
) -> Barycentrics:
    """Area-ratio weights of ``i`` with respect to ``j``, ``l``, ``n``.

    Two weights are area ratios; the third is ``1 -`` their sum, so the
    weights add to one in floating point.  The vertex receiving the residual
    is ``residual`` if given, else drawn uniformly from ``rng`` (vertex ``n``
    when neither is supplied).
    """
    inc = inclusion_test(h, eps, tol, min_hull_area)
    if not inc.inside:
        raise NotInterior(f"point is outside the hull (excess {inc.excess:.3g})")
    ratios = [s / inc.hull_area for s in inc.sub_areas]
    return residual_weights(ratios, _pick_residual(rng, residual))


def _pick_residual(rng, residual: int | None) -> int:
    if residual is not None:
        return residual
    if rng is None:
        return 2
    if isinstance(rng, np.random.Generator):
        return int(rng.integers(3))
    return rng.randrange(3)


def residual_weights(ratios, residual: int) -> Barycentrics:
    """Replace ``ratios[residual]`` by one minus the other two."""
    w = [float(r) for r in ratios]
    others = [q for q in range(3) if q != residual]
    rest = 1.0 - (w[others[0]] + w[others[1]])
    if rest < 0.0 or w[others[0]] > 1.0 or w[others[1]] > 1.0:
        raise NotInterior("weights leave no room for the residual vertex")
    w[residual] = rest
    return Barycentrics(w[0], w[1], w[2], residual)


def step_distance(d_prev: float, move: float, turn_angle: float) -> float:
    """Distance to a fixed point after moving ``move`` along a ray that makes
    ``turn_angle`` with the direction to that point.

    Uses ``(d - m)^2 + 4 d m sin^2(t/2)``, the cancellation-free form of
    ``d^2 + m^2 - 2 d m cos t``.
    """
    s = math.sin(0.5 * turn_angle)
    diff = d_prev - move
    return math.sqrt(diff * diff + 4.0 * d_prev * move * s * s)


def indirect_distance(d_ij: float, d_il: float, angle_between: float) -> float:
    """Third side opposite ``angle_between`` for two rays of lengths d_ij, d_il."""
    return step_distance(d_ij, d_il, angle_between)


def interior_angle(a: float, b: float, c: float, tol: float = TRI_TOL) -> float:
    """Angle opposite side ``c`` in the triangle with sides ``a``, ``b``, ``c``.

    This is the law-of-cosines angle, evaluated in Kahan's half-angle form
    so that needle triangles (angles near 0 or pi) keep full precision.
    """
    if min(a, b, c) < 0:
        raise DegenerateInput("negative length")
    if a < b:
        a, b = b, a
    scale = max(a, c)
    if b >= c:
        mu = c - (a - b)
    else:
        mu = b - (a - c)
    num_l = (a - b) + c
    den_r = (a - c) + b
    if mu < 0 or num_l < 0 or den_r < 0:
        if min(mu, num_l, den_r) < -tol * scale:
            raise DegenerateInput(f"sides {(a, b, c)} violate the triangle inequality")
        mu, num_l, den_r = max(mu, 0.0), max(num_l, 0.0), max(den_r, 0.0)
    num = num_l * mu
    den = (a + (b + c)) * den_r
    if num == 0.0 and den == 0.0:
        # two zero sides: the angle is undefined, report a right angle
        return 0.5 * math.pi
    return 2.0 * math.atan2(math.sqrt(num), math.sqrt(den))


def wrap_angle(theta: float) -> float:
    """Map to [0, 2*pi)."""
    t = math.fmod(theta, 2.0 * math.pi)
    if t < 0.0:
        t += 2.0 * math.pi
    if t >= 2.0 * math.pi:
        t = 0.0
    return t


def fold_angle(theta: float) -> float:
    """Absolute angular difference folded into [0, pi]."""
    t = wrap_angle(theta)
    return 2.0 * math.pi - t if t > math.pi else t


def triangle_quality(area: float, a: float, b: float, c: float) -> float:
    """``4 sqrt(3) A / (a^2 + b^2 + c^2)``: 1 for equilateral, 0 when flat."""
    s = a * a + b * b + c * c
    return 4.0 * math.sqrt(3.0) * area / s if s > 0 else 0.0


def area_or_invalid(a: float, b: float, c: float, tol: float = TRI_TOL) -> float:
    """Non-raising :func:`triangle_area` for hot loops; -1.0 flags sides that
    break the triangle inequality beyond ``tol``."""
    if a < b:
        a, b = b, a
    if b < c:
        b, c = c, b
        if a < b:
            a, b = b, a
    slack = c - (a - b)
    if slack <= 0.0:
        return 0.0 if slack >= -tol * a else -1.0
    return 0.25 * math.sqrt((a + (b + c)) * slack * (c + (a - b)) * (a + (b - c)))


def area_rounding_error(a: float, b: float, c: float, area: float) -> float:
    """First-order rounding error of :func:`triangle_area` for these sides.

    Near-flat triangles lose precision because the slack factor is a small
    difference of the inputs; the error grows like ``1 / area``.
    """
    if area <= 0.0:
        return math.inf
    a, b, c = sorted((a, b, c), reverse=True)
    # the three factors other than the slack c - (a - b)
    others = (a + (b + c)) * (c + (a - b)) * (a + (b - c))
    return others * 4.0 * EPS * a / (32.0 * area)
