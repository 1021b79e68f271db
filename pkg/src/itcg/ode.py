"""Adaptive Dormand-Prince 5(4) integration on plain Python floats.

The backward extremal system is low-dimensional (11 states) and is propagated
thousands of times per sweep, so the stepper works on lists of floats rather
than numpy arrays: at this size the interpreter overhead of array dispatch
dominates the arithmetic. The embedded 4th-order error estimate drives step
control; the 4th-order continuous extension (same coefficients scipy's RK45
uses) provides dense output for event localization and grid sampling.
"""

from __future__ import annotations

import math

from .errors import IntegrationFailure

# Dormand-Prince 5(4) tableau.
C2, C3, C4, C5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9
A21 = 1 / 5
A31, A32 = 3 / 40, 9 / 40
A41, A42, A43 = 44 / 45, -56 / 15, 32 / 9
A51, A52, A53, A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
A61, A62, A63, A64, A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
B1, B3, B4, B5, B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
# 5th-minus-4th order error weights (k2 column is zero).
E1, E3, E4, E5, E6, E7 = (71 / 57600, -71 / 16695, 71 / 1920,
                          -17253 / 339200, 22 / 525, -1 / 40)
# Continuous-extension polynomial, one row per stage, powers x..x^4.
P_DENSE = (
    (1.0, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432),
    (0.0, 0.0, 0.0, 0.0),
    (0.0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799),
    (0.0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072),
    (0.0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632),
    (0.0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844),
    (0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423),
)

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 10.0
H_MIN = 1e-14
MAX_STEPS = 1_000_000


class Dopri5:
    """Single-direction (increasing t) adaptive stepper.

    After each successful ``step()`` the solution over [t_old, t] can be
    interpolated; ``reset_state`` replaces y mid-run (used for periodic
    re-projection) and invalidates the FSAL derivative cache.
    """

    def __init__(self, rhs, t0: float, y0, t_bound: float,
                 rtol: float = 1e-10, atol: float = 1e-12,
                 max_step: float = math.inf, first_step: float | None = None):
        if t_bound <= t0:
            raise ValueError("t_bound must exceed t0")
        self.rhs = rhs
        self.t = float(t0)
        self.y = [float(v) for v in y0]
        self.t_bound = float(t_bound)
        self.rtol = rtol
        self.atol = atol
        self.max_step = max_step
        self.n = len(self.y)
        self._f = rhs(self.t, self.y)  # FSAL cache
        self.h = first_step if first_step is not None else self._initial_step()
        self.t_old = self.t
        self.y_old = list(self.y)
        self._K = None
        self._h_last = 0.0
        self.naccepted = 0
        self.nrejected = 0

    def _initial_step(self) -> float:
        # conservative version of the usual starting-step heuristic
        span = self.t_bound - self.t
        fnorm = max((abs(v) for v in self._f), default=0.0)
        ynorm = max((abs(v) for v in self.y), default=0.0)
        if fnorm == 0.0:
            return min(span * 1e-3, self.max_step)
        h = 0.01 * max(ynorm, self.atol) / fnorm
        return min(h, span, self.max_step)

    def reset_state(self, y) -> None:
        """Replace the current state (e.g. after projection); refresh FSAL."""
        self.y = [float(v) for v in y]
        self._f = self.rhs(self.t, self.y)

    def step(self) -> bool:
        """Advance one accepted step. Returns False once t_bound is reached."""
        if self.t >= self.t_bound:
            return False
        rhs = self.rhs
        rng = range(self.n)
        t, y, k1 = self.t, self.y, self._f
        h = min(self.h, self.max_step)
        nsteps = 0
        while True:
            nsteps += 1
            if nsteps > MAX_STEPS:
                raise IntegrationFailure("step budget exhausted", t)
            clamped = t + h >= self.t_bound
            if clamped:
                h = self.t_bound - t
            if h < H_MIN:
                if clamped:
                    # terminal sliver below resolvable step width
                    self.t_old, self.y_old = t, list(y)
                    self.t = self.t_bound
                    self._h_last = h if h > 0 else H_MIN
                    self._K = (k1,) * 7
                    return True
                raise IntegrationFailure("step size collapse", t)

            y2 = [y[i] + h * (A21 * k1[i]) for i in rng]
            k2 = rhs(t + C2 * h, y2)
            y3 = [y[i] + h * (A31 * k1[i] + A32 * k2[i]) for i in rng]
            k3 = rhs(t + C3 * h, y3)
            y4 = [y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]) for i in rng]
            k4 = rhs(t + C4 * h, y4)
            y5 = [y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i])
                  for i in rng]
            k5 = rhs(t + C5 * h, y5)
            y6 = [y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i]
                              + A65 * k5[i]) for i in rng]
            k6 = rhs(t + h, y6)
            ynew = [y[i] + h * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i]
                                + B6 * k6[i]) for i in rng]
            k7 = rhs(t + h, ynew)

            errsum = 0.0
            for i in rng:
                sc = self.atol + self.rtol * max(abs(y[i]), abs(ynew[i]))
                ei = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i]
                          + E6 * k6[i] + E7 * k7[i])
                errsum += (ei / sc) * (ei / sc)
            err = math.sqrt(errsum / self.n)

            if err < 1.0:
                factor = MAX_FACTOR if err == 0.0 else min(MAX_FACTOR, SAFETY * err ** -0.2)
                self.t_old, self.y_old = t, y
                self.t = self.t_bound if clamped else t + h
                self.y = ynew
                self._f = k7
                self._K = (k1, k2, k3, k4, k5, k6, k7)
                self._h_last = h
                self.h = min(h * factor, self.max_step)
                self.naccepted += 1
                return True
            self.nrejected += 1
            h *= max(MIN_FACTOR, SAFETY * err ** -0.2)

    def interpolate(self, t: float):
        """Dense output on the last accepted interval [t_old, t]."""
        if self._K is None:
            raise RuntimeError("no accepted step to interpolate")
        h = self._h_last
        x = (t - self.t_old) / h
        K = self._K
        acc = list(self.y_old)
        for s in range(7):
            p = P_DENSE[s]
            w = x * (p[0] + x * (p[1] + x * (p[2] + x * p[3]))) * h
            if w != 0.0:
                ks = K[s]
                for i in range(self.n):
                    acc[i] += w * ks[i]
        return acc


def integrate(rhs, t0: float, y0, t_end: float,
              rtol: float = 1e-10, atol: float = 1e-12,
              max_step: float = math.inf):
    """Convenience driver: integrate to t_end, return (t, y)."""
    stepper = Dopri5(rhs, t0, y0, t_end, rtol, atol, max_step)
    while stepper.step():
        pass
    return stepper.t, stepper.y
