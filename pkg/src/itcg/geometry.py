"""Planar engagement geometry for a unit-speed pursuer against a fixed target.

The target sits at the origin. A state is (x, y, theta) with theta the
heading measured from the +x axis; the lead angle sigma is measured from the
pursuer-to-target line of sight to the velocity vector, positive clockwise,
so that

    cos sigma = -(x cos theta + y sin theta) / r
    sin sigma =  (x sin theta - y cos theta) / r

Field-of-view limits enter through the constraint surface
S = cos sigma_max - cos sigma <= 0 and its saturation substitute
psi(xi) = -exp(-xi), which matches S exactly at xi = -log(cos sigma -
cos sigma_max).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ConstraintActive, ZeroRange

R_MIN = 1e-12  # below this range the lead angle is undefined

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True, slots=True)
class CartesianState:
    x: float
    y: float
    theta: float


@dataclass(frozen=True, slots=True)
class PolarState:
    r: float
    sigma: float


@dataclass(frozen=True, slots=True)
class FovConfig:
    """Half-angle of the seeker cone, radians, in (0, pi/2]."""

    sigma_max: float

    def __post_init__(self):
        if not 0.0 < self.sigma_max <= math.pi / 2:
            raise ValueError(f"sigma_max must lie in (0, pi/2], got {self.sigma_max}")


def wrap_angle(x: float) -> float:
    """Wrap to (-pi, pi]."""
    w = math.fmod(x + math.pi, TWO_PI)
    if w <= 0.0:
        w += TWO_PI
    return w - math.pi


def kinematics_rhs(s: CartesianState, u: float) -> tuple[float, float, float]:
    """Unit-speed planar kinematics: (dx, dy, dtheta)/dt for turn rate u."""
    return math.cos(s.theta), math.sin(s.theta), u


def los(s: CartesianState) -> float:
    """Angle of the pursuer position as seen from the target, in (-pi, pi]."""
    if math.hypot(s.x, s.y) < R_MIN:
        raise ZeroRange("line of sight undefined at the target")
    return math.atan2(s.y, s.x)


def lead_from_los(lam: float, theta: float) -> float:
    """Lead angle sigma = wrap(pi + lambda - theta)."""
    return wrap_angle(math.pi + lam - theta)


def to_polar(s: CartesianState) -> PolarState:
    """Range and lead angle of a Cartesian state.

    Raises ZeroRange within R_MIN of the target where sigma is undefined.
    """
    r = math.hypot(s.x, s.y)
    if r < R_MIN:
        raise ZeroRange(f"range {r:.3g} below {R_MIN:.0e}")
    ct, st = math.cos(s.theta), math.sin(s.theta)
    cs = -(s.x * ct + s.y * st) / r
    sn = (s.x * st - s.y * ct) / r
    return PolarState(r, math.atan2(sn, cs))


def polar_rhs(p: PolarState, u: float) -> tuple[float, float]:
    """Polar kinematics (dr, dsigma)/dt = (-cos sigma, sin sigma / r - u)."""
    if p.r <= 0.0:
        raise ZeroRange("polar dynamics need r > 0")
    return -math.cos(p.sigma), math.sin(p.sigma) / p.r - u


def constraint_value(s: CartesianState, fov: FovConfig) -> float:
    """Cone constraint S = cos sigma_max - cos sigma (feasible iff <= 0)."""
    p = to_polar(s)
    return math.cos(fov.sigma_max) - math.cos(p.sigma)


def constraint_rate(s: CartesianState, u: float, fov: FovConfig) -> float:
    """Time derivative of S along the kinematics: sin sigma (sin sigma/r - u)."""
    p = to_polar(s)
    sn = math.sin(p.sigma)
    return sn * (sn / p.r - u)


def psi(xi: float) -> float:
    """Saturation function -exp(-xi); range (-inf, 0)."""
    return -math.exp(-xi)


def psi_prime(xi: float) -> float:
    """Derivative of psi: exp(-xi) > 0."""
    return math.exp(-xi)


def xi_from_sigma(sigma: float, fov: FovConfig) -> float:
    """Saturation state xi with psi(xi) = S(sigma), i.e. -log(cos sigma - cos sigma_max).

    Defined only strictly inside the cone; raises ConstraintActive on or
    outside it.
    """
    gap = math.cos(sigma) - math.cos(fov.sigma_max)
    if gap <= 0.0:
        raise ConstraintActive(
            f"|sigma|={abs(sigma):.6g} not inside cone of half-angle {fov.sigma_max:.6g}"
        )
    return -math.log(gap)
