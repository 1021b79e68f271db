"""Closed-loop guidance laws: the network-based feedback map and a PN baseline.

A physical query (r in meters, signed sigma, t_go in seconds, speed in m/s)
is reduced to the network's normalized chart in two exact steps:

* Time scaling. Trajectories of the unit-speed kinematics are invariant under
  (r, t) -> (r/k, t/k) with commands scaled by k, so every query is mapped to
  a fixed reference time-to-go t_ref; the network never extrapolates in its
  t_go channel. With k = t_go / (t_ref * speed-normalized time), the physical
  command is (speed / k) times the network output.
* Mirror fold. The optimal command is odd in sigma, so the network is trained
  on sigma >= 0 only and queried at |sigma|, the sign being restored outside.
  This makes the odd symmetry of the deployed law exact, not learned.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from . import mlp
from .errors import InfeasibleQuery, ZeroRange

A_MAX_DEFAULT = 100.0  # m/s^2
T_REF_DEFAULT = 1.0    # normalized time-to-go at which the network is queried


@dataclass(frozen=True, slots=True)
class GuidanceQuery:
    r: float       # m
    sigma: float   # rad, signed
    t_go: float    # s
    speed: float   # m/s

    def __post_init__(self):
        if self.r < 0.0:
            raise ValueError("range must be non-negative")
        if self.t_go <= 0.0:
            raise ValueError("t_go must be positive")
        if self.speed <= 0.0:
            raise ValueError("speed must be positive")

    @property
    def feasible(self) -> bool:
        return self.t_go * self.speed >= self.r


@dataclass(frozen=True, slots=True)
class ScalingParams:
    t_ref: float = T_REF_DEFAULT
    t_bar: float = 4.0

    def __post_init__(self):
        if not 0.0 < self.t_ref <= self.t_bar:
            raise ValueError("need 0 < t_ref <= t_bar")


def scale_query(q: GuidanceQuery, sp: ScalingParams = ScalingParams()):
    """Map a physical query onto the normalized chart at fixed t_ref.

    Returns (r_n, sigma, t_ref, gain): the network is evaluated at
    (r_n, sigma, t_ref) and its output multiplied by gain = speed/k,
    k = t_go / t_ref in speed-normalized time.
    """
    if not q.feasible:
        raise InfeasibleQuery(
            f"target at {q.r} m unreachable in {q.t_go} s at {q.speed} m/s")
    k = q.t_go / sp.t_ref
    r_n = q.r / (q.speed * k)
    return r_n, q.sigma, sp.t_ref, q.speed / k


def nn_command(m: mlp.MlpModel, q: GuidanceQuery,
               a_max: float = A_MAX_DEFAULT,
               sp: ScalingParams = ScalingParams()) -> float:
    """Lateral-acceleration command in m/s^2, positive = counter-clockwise."""
    r_n, sigma, t_ref, gain = scale_query(q, sp)
    sign = 1.0 if sigma >= 0.0 else -1.0
    a = sign * gain * mlp.forward(m, r_n, abs(sigma), t_ref)
    if a > a_max:
        return a_max
    if a < -a_max:
        return -a_max
    return a


def pn_command(q: GuidanceQuery, gain: float = 3.0,
               a_max: float | None = None) -> float:
    """Proportional navigation a = N * speed * los_rate for the same kinematics.

    For a stationary target, los_rate = speed * sin(sigma) / r.
    """
    if q.r <= 0.0:
        raise ZeroRange("PN needs a positive range")
    a = gain * q.speed * (q.speed * math.sin(q.sigma) / q.r)
    if a_max is not None:
        a = max(-a_max, min(a_max, a))
    return a


class GuidanceLaw:
    """Behavioral contract: callable query -> lateral acceleration (m/s^2)."""

    name = "abstract"

    def __call__(self, q: GuidanceQuery) -> float:
        raise NotImplementedError


class NnLaw(GuidanceLaw):
    """Deployable network law with proportional-navigation terminal homing.

    Three departures from raw nn_command, all confined to the engagement edge
    where the trained chart thins out:

    * Feasibility fallback. nn_command raises on queries with
      r > speed * t_go; in closed loop such states occur transiently
      (tracking error can leave the pursuer centimeters short of schedule),
      and the limiting extremal there is the straight line. PN collapses the
      lead angle onto exactly that line, so it is the continuous extension
      of the law past the boundary rather than a second guidance mode.
    * Terminal blend. Below homing_tgo seconds to go, the command fades
      linearly from the network output to PN. With the lead angle already
      small at that point, PN is the minimum-effort endgame, and the blend
      suppresses the amplification of network error by the 1/t_go command
      scaling (it perturbs the arrival time by only ~sigma^2/2 * homing_tgo).
    * Cone-edge governor. The training table covers |sigma| <= sigma_max
      only, so the net extrapolates past the cone edge; worse, a fit error
      of the wrong sign at the edge lets a boundary-riding arc creep
      outward until the extrapolation breaks down. At or beyond the edge
      (taken from the model's own sigma extent) the command is floored at
      the boundary-riding value a = speed^2 sin(sigma) / r, which pins
      sigma' <= 0 there. The floor is inactive strictly inside the cone,
      continuous at the edge, and odd in sigma like the law itself.
    """

    def __init__(self, model: mlp.MlpModel, a_max: float = A_MAX_DEFAULT,
                 sp: ScalingParams = ScalingParams(),
                 fallback_gain: float = 3.0, homing_tgo: float = 2.0,
                 sigma_edge: float | None = None):
        self.model = model
        self.a_max = a_max
        self.sp = sp
        self.fallback_gain = fallback_gain
        self.homing_tgo = homing_tgo
        # hi[1] is the sigma extent of the trained chart, sigma_max by build
        self.sigma_edge = (float(model.norm.hi[1]) if sigma_edge is None
                           else sigma_edge)
        self.name = "nn"

    def __call__(self, q: GuidanceQuery) -> float:
        try:
            a = nn_command(self.model, q, self.a_max, self.sp)
            if q.t_go < self.homing_tgo and q.r > 0.0:
                w = q.t_go / self.homing_tgo
                a_pn = pn_command(q, self.fallback_gain, self.a_max)
                a = w * a + (1.0 - w) * a_pn
        except InfeasibleQuery:
            a = pn_command(q, self.fallback_gain, self.a_max)
        if q.r > 0.0:
            if q.sigma >= self.sigma_edge:
                a = max(a, q.speed * q.speed * math.sin(q.sigma) / q.r)
            elif q.sigma <= -self.sigma_edge:
                a = min(a, q.speed * q.speed * math.sin(q.sigma) / q.r)
        return max(-self.a_max, min(self.a_max, a))


class PnLaw(GuidanceLaw):
    def __init__(self, gain: float = 3.0, a_max: float | None = A_MAX_DEFAULT):
        self.gain = gain
        self.a_max = a_max
        self.name = "pn"

    def __call__(self, q: GuidanceQuery) -> float:
        return pn_command(q, self.gain, self.a_max)
