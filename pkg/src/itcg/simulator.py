"""Closed-loop planar engagement simulation in physical units.

The pursuer flies constant-speed kinematics x' = V cos theta, y' = V sin
theta, theta' = a / V toward a stationary target at the origin, with the
lateral acceleration a supplied by a pluggable guidance law. Commands update
every dt_guidance and are held constant (zero-order hold) while the state is
integrated with fixed-step classical Runge-Kutta at dt_integrate.

The scenario is posed canonically by (r0, sigma0): the pursuer starts at
(-r0 cos sigma0, -r0 sin sigma0) heading along +x, which realizes range r0
and signed lead angle sigma0 without a separate heading convention.

Bookkeeping: impact_time is the first crossing of the capture radius
(linearly interpolated inside the integration step); miss_distance is the
parabolic-refined minimum range; effort_J is half the trapezoidal integral
of the stored squared-command history, so the reported number is exactly
reproducible from the history file.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import geometry
from .errors import InfeasibleQuery, ZeroRange
from .guidance import GuidanceLaw, GuidanceQuery

CAPTURE_RADIUS_DEFAULT = 0.5  # m
TIMEOUT_MARGIN = 5.0          # s past t_f before giving up

HISTORY_HEADER = "t,x,y,theta,sigma,r,a"


@dataclass(frozen=True, slots=True)
class Scenario:
    r0: float                    # m
    sigma0: float                # rad, signed
    speed: float                 # m/s
    t_f: float                   # s, desired impact time
    sigma_max: float = math.pi / 3
    a_max: float = 100.0         # m/s^2
    dt_guidance: float = 0.01    # s
    dt_integrate: float = 0.001  # s
    capture_radius: float = CAPTURE_RADIUS_DEFAULT

    def __post_init__(self):
        if self.r0 <= 0.0 or self.speed <= 0.0 or self.t_f <= 0.0:
            raise ValueError("r0, speed, t_f must be positive")
        if not 0.0 < self.dt_integrate <= self.dt_guidance:
            raise ValueError("need 0 < dt_integrate <= dt_guidance")
        if self.t_f * self.speed < self.r0:
            raise ValueError(
                f"t_f = {self.t_f} s cannot reach r0 = {self.r0} m at {self.speed} m/s")
        if self.capture_radius <= 0.0:
            raise ValueError("capture_radius must be positive")

    def initial_pose(self) -> geometry.CartesianState:
        return geometry.CartesianState(-self.r0 * math.cos(self.sigma0),
                                       -self.r0 * math.sin(self.sigma0), 0.0)


def scenario_from_pose(pose: geometry.CartesianState, **kwargs) -> Scenario:
    """Scenario from an explicit Cartesian pose (converted to (r0, sigma0))."""
    p = geometry.to_polar(pose)
    return Scenario(r0=p.r, sigma0=p.sigma, **kwargs)


@dataclass
class SimResult:
    impact_time: float | None
    no_intercept: bool
    miss_distance: float
    effort_J: float
    sigma_peak: float
    history: np.ndarray          # (n, 7) columns t,x,y,theta,sigma,r,a
    meta: dict = field(default_factory=dict)

    @property
    def impact_error(self) -> float | None:
        if self.impact_time is None:
            return None
        return self.impact_time - self.meta.get("t_f", 0.0)


@dataclass(frozen=True, slots=True)
class MinTimeReport:
    lower_bound: float   # r0 / speed, unconditional
    estimate: float      # impact time of a max-turn-then-coast run
    fov_feasible: bool   # |sigma| stayed within sigma_max during that run


def _sigma_r(x: float, y: float, theta: float):
    r = math.hypot(x, y)
    s = math.atan2(x * math.sin(theta) - y * math.cos(theta),
                   -(x * math.cos(theta) + y * math.sin(theta)))
    return s, r


def _rk4_step(x, y, th, V, a, dt):
    w = a / V

    def deriv(thc):
        return V * math.cos(thc), V * math.sin(thc), w

    k1x, k1y, k1t = deriv(th)
    k2x, k2y, k2t = deriv(th + 0.5 * dt * k1t)
    k3x, k3y, k3t = deriv(th + 0.5 * dt * k2t)
    k4x, k4y, k4t = deriv(th + dt * k3t)
    return (x + dt / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x),
            y + dt / 6.0 * (k1y + 2 * k2y + 2 * k3y + k4y),
            th + dt / 6.0 * (k1t + 2 * k2t + 2 * k3t + k4t))


def _refine_min(rs):
    """Parabolic refinement of a sampled minimum from its bracketing triple."""
    r0, r1, r2 = rs
    denom = r0 - 2.0 * r1 + r2
    if denom <= 0.0 or r1 > min(r0, r2):
        return float(min(rs))
    return float(r1 - 0.125 * (r0 - r2) ** 2 / denom)


def run(sc: Scenario, law: GuidanceLaw, store_substeps: bool = False) -> SimResult:
    """Simulate one engagement; interception failure is a flag, never an exception."""
    V = sc.speed
    pose = sc.initial_pose()
    x, y, th = pose.x, pose.y, pose.theta
    t = 0.0
    t_stop = sc.t_f + TIMEOUT_MARGIN
    n_sub = max(1, int(round(sc.dt_guidance / sc.dt_integrate)))
    dt = sc.dt_guidance / n_sub

    mt = min_time(sc)
    meta = {"t_f": sc.t_f, "speed": V, "law": getattr(law, "name", "unknown"),
            "capture_radius": sc.capture_radius,
            "min_time_lower_bound": mt.lower_bound,
            "min_time_estimate": mt.estimate}
    if sc.t_f < mt.estimate - 1e-9:
        meta["advisory"] = ("infeasible t_f: below the minimum-time estimate "
                            f"{mt.estimate:.3f} s")

    rows = []          # one row per guidance cycle (plus terminal row)
    sub_rows = [] if store_substeps else None
    impact_time = None
    a = 0.0

    sg, r = _sigma_r(x, y, th)
    sigma_peak = abs(sg)
    best_r = r
    # trailing 3-point (t, r) window; saved whenever its middle is the new minimum
    win_t, win_r = [t], [r]
    best_window = None

    while t < t_stop and impact_time is None:
        t_go = sc.t_f - t
        if t_go > 0.0 and r > 0.0:
            try:
                a = law(GuidanceQuery(r=r, sigma=sg, t_go=t_go, speed=V))
            except (InfeasibleQuery, ZeroRange):
                a = 0.0
        else:
            a = 0.0
        if a > sc.a_max:
            a = sc.a_max
        elif a < -sc.a_max:
            a = -sc.a_max

        rows.append((t, x, y, th, sg, r, a))

        for _ in range(n_sub):
            r_prev, t_prev = r, t
            x, y, th = _rk4_step(x, y, th, V, a, dt)
            t = t_prev + dt
            sg, r = _sigma_r(x, y, th)
            if abs(sg) > sigma_peak:
                sigma_peak = abs(sg)
            if sub_rows is not None:
                sub_rows.append((t, x, y, th, sg, r, a))
            if r < best_r:
                best_r = r
            win_t.append(t)
            win_r.append(r)
            if len(win_r) > 3:
                win_t.pop(0)
                win_r.pop(0)
            if len(win_r) == 3 and win_r[1] <= best_r:
                best_window = (list(win_t), list(win_r))
            if r < sc.capture_radius:
                frac = (r_prev - sc.capture_radius) / max(r_prev - r, 1e-30)
                impact_time = t_prev + frac * dt
                break

    rows.append((t, x, y, th, sg, r, a))
    history = np.array(rows)
    effort = 0.5 * float(np.trapezoid(history[:, 6] ** 2, history[:, 0]))

    if impact_time is not None:
        miss = min(best_r, sc.capture_radius)
    elif best_window is not None:
        miss = _refine_min(best_window[1])
    else:
        miss = best_r

    res = SimResult(impact_time=impact_time,
                    no_intercept=impact_time is None,
                    miss_distance=miss,
                    effort_J=effort,
                    sigma_peak=sigma_peak,
                    history=history,
                    meta=meta)
    if store_substeps:
        res.meta["substeps"] = np.array(sub_rows)
    return res


class _BangTurnLaw(GuidanceLaw):
    """Max-rate turn onto the collision course, then coast; feasibility probe."""

    name = "bang_turn"

    def __init__(self, a_max: float):
        self.a_max = a_max

    def __call__(self, q: GuidanceQuery) -> float:
        # sigma' = V sin(sigma)/r - a/V, so positive a for positive sigma
        # collapses the lead angle; proportional capture avoids chatter
        gain = self.a_max / math.radians(2.0)
        return max(-self.a_max, min(self.a_max, gain * q.sigma))


def min_time(sc: Scenario) -> MinTimeReport:
    """Feasibility screen: unconditional bound and a max-turn time estimate."""
    lb = sc.r0 / sc.speed
    if sc.sigma0 == 0.0:
        return MinTimeReport(lb, lb, True)

    V = sc.speed
    pose = sc.initial_pose()
    x, y, th = pose.x, pose.y, pose.theta
    law = _BangTurnLaw(sc.a_max)
    dt = max(sc.dt_integrate, 1e-3)
    t = 0.0
    t_stop = 3.0 * lb + 10.0
    sg, r = _sigma_r(x, y, th)
    fov_ok = abs(sg) <= sc.sigma_max + 1e-12
    while t < t_stop:
        a = law(GuidanceQuery(r=r, sigma=sg, t_go=1.0, speed=V))
        r_prev = r
        x, y, th = _rk4_step(x, y, th, V, a, dt)
        t += dt
        sg, r = _sigma_r(x, y, th)
        if abs(sg) > sc.sigma_max + 1e-12:
            fov_ok = False
        if r < sc.capture_radius:
            frac = (r_prev - sc.capture_radius) / max(r_prev - r, 1e-30)
            return MinTimeReport(lb, t - dt + frac * dt, fov_ok)
    return MinTimeReport(lb, t_stop, fov_ok)


@dataclass
class ComparisonTable:
    scenario: Scenario
    rows: list  # dict per law

    def as_csv(self) -> str:
        cols = ("law", "impact_time", "impact_error", "no_intercept",
                "miss_distance", "sigma_peak", "effort_J", "a_peak", "a_step_max")
        lines = [",".join(cols)]
        for row in self.rows:
            cells = []
            for c in cols:
                v = row[c]
                if isinstance(v, bool):
                    cells.append(str(int(v)))
                elif v is None:
                    cells.append("nan")
                elif isinstance(v, float):
                    cells.append("%.17g" % v)
                else:
                    cells.append(str(v))
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"


def compare(sc: Scenario, laws: list) -> ComparisonTable:
    """Run each law on the same scenario and tabulate the summary metrics."""
    rows = []
    for law in laws:
        res = run(sc, law)
        acmd = res.history[:, 6]
        rows.append({
            "law": getattr(law, "name", law.__class__.__name__),
            "impact_time": res.impact_time,
            "impact_error": res.impact_error,
            "no_intercept": res.no_intercept,
            "miss_distance": res.miss_distance,
            "sigma_peak": res.sigma_peak,
            "effort_J": res.effort_J,
            "a_peak": float(np.max(np.abs(acmd))),
            "a_step_max": float(np.max(np.abs(np.diff(acmd)))) if len(acmd) > 1 else 0.0,
            "result": res,
        })
    return ComparisonTable(sc, rows)


def save_history(path: str, res: SimResult) -> None:
    with open(path, "w") as fh:
        fh.write(HISTORY_HEADER + "\n")
        for row in res.history:
            fh.write(",".join("%.17g" % v for v in row) + "\n")


def save_summary(path: str, res: SimResult) -> None:
    doc = {
        "impact_time": res.impact_time,
        "no_intercept": res.no_intercept,
        "miss_distance": res.miss_distance,
        "effort_J": res.effort_J,
        "sigma_peak": res.sigma_peak,
        "meta": {k: v for k, v in res.meta.items() if not isinstance(v, np.ndarray)},
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
