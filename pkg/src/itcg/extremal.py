"""Backward generation of minimum-effort extremal trajectories.

Each extremal is parameterized by the terminal costate direction
P(0) = (alpha cos beta, alpha sin beta, 0, 0) and propagated backward in
time-to-go tau from the impact point. Backward dynamics follow from the
forward necessary conditions:

    dZ/dtau = -f(Z, U)          dP/dtau = +dH/dZ          dU/dtau = -dU/dt

with U kept on the stationarity manifold g = 0 by construction (and
periodically re-projected to scrub float drift). The impact point itself is
singular (r = 0, sigma/r terms are 0/0 limits), so propagation starts at a
small tau0 from a series expansion of the extremal about the terminal point:
with A = alpha sin beta, B = alpha cos beta, e_f = 1 - cos sigma_max,

    X = -tau,  Y = (A/6) tau^3,  Theta = -(A/2) tau^2 - (AB/24) tau^4,
    Xi = xi_f + (A^2/18) tau^4 / e_f,
    P  = (B, A, A tau + (AB/6) tau^3, 0),

all accurate to O(tau^5), after which U follows exactly from g = 0.

A trajectory stops at tau_bar, or earlier when the pursuer-target-velocity
collinearity condition |cos sigma| = 1 is met (an interior collinear point
with nonzero turn rate cannot lie on an optimal path, and backward of it the
stored samples would be unusable). Collinearity is tracked through the sign
of sin sigma, which crosses zero transversally where 1 - |cos sigma| only
touches it; straight-line seeds (sin beta = 0, where collinearity is benign)
never arm the detector and run out to tau_bar.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import pmp
from .errors import EmptySweep, IntegrationFailure, Malformed
from .ode import Dopri5

TERM_TBAR = "reached_tbar"
TERM_COLLINEAR = "collinearity"
TERM_BLOWUP = "range_blowup"

EVENT_ARM_LEVEL = 1e-9     # |sin sigma| must exceed this before the detector arms
EVENT_EXIT_LEVEL = 1e-12   # armed trajectories stop when |sin sigma| falls below
EVENT_TAU_TOL = 1e-10      # bisection width for the stopping time
BLOWUP_LIMIT = 1e9

CSV_HEADER = "tau,x,y,theta,xi,px,py,ptheta,pxi,u,omega,mu,r,sigma"


@dataclass(frozen=True, slots=True)
class SeedParams:
    """Terminal costate magnitude and direction."""

    alpha: float
    beta: float

    def __post_init__(self):
        if not self.alpha > 0.0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not math.isfinite(self.beta):
            raise ValueError("beta must be finite")


@dataclass(frozen=True, slots=True)
class PropagationConfig:
    sigma_max: float = math.pi / 3
    eps: float = 1e-4
    tau0: float = 1e-3
    t_bar: float = 4.0
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    sample_dtau: float = 0.002  # replay consistency degrades fast above 0.0025
    reproject_every: int = 20  # accepted steps between control re-projections; 0 disables

    def __post_init__(self):
        if not 0.0 < self.sigma_max <= math.pi / 2:
            raise ValueError("sigma_max must lie in (0, pi/2]")
        pmp.check_eps(self.eps)
        if not 0.0 < self.tau0 < 0.1:
            raise ValueError("tau0 must lie in (0, 0.1)")
        if self.t_bar <= 2.0 * self.tau0:
            raise ValueError("t_bar must exceed 2 tau0")
        if self.rel_tol <= 0.0 or self.abs_tol <= 0.0 or self.sample_dtau <= 0.0:
            raise ValueError("tolerances and sample_dtau must be positive")
        if self.reproject_every < 0:
            raise ValueError("reproject_every must be >= 0")


@dataclass
class ExtremalTrajectory:
    seed: SeedParams
    tau: np.ndarray        # (N,) strictly increasing, tau[0] = tau0
    Z: np.ndarray          # (N, 4) x, y, theta, xi
    P: np.ndarray          # (N, 4) costates
    U: np.ndarray          # (N, 3) u, omega, mu
    r: np.ndarray          # (N,)
    sigma: np.ndarray      # (N,)
    termination: str
    stats: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.tau)


@dataclass(frozen=True, slots=True)
class SweepGrid:
    n_alpha: int
    n_beta: int
    alpha_bar: float = 10.0
    alpha_min: float = 1e-2
    spacing: str = "log"

    def __post_init__(self):
        if self.n_alpha < 1 or self.n_beta < 1:
            raise ValueError("grid needs at least one node per axis")
        if not 0.0 < self.alpha_min <= self.alpha_bar:
            raise ValueError("need 0 < alpha_min <= alpha_bar")
        if self.spacing not in ("log", "linear"):
            raise ValueError(f"unknown spacing {self.spacing!r}")

    def alphas(self) -> np.ndarray:
        if self.n_alpha == 1:
            return np.array([self.alpha_bar])
        if self.spacing == "log":
            return np.geomspace(self.alpha_min, self.alpha_bar, self.n_alpha)
        return np.linspace(self.alpha_min, self.alpha_bar, self.n_alpha)

    def betas(self) -> np.ndarray:
        # endpoints included: beta = 0 carries the straight-line member
        return np.linspace(0.0, math.pi, self.n_beta)

    def seeds(self) -> list[SeedParams]:
        return [SeedParams(float(a), float(b))
                for a in self.alphas() for b in self.betas()]


def make_rhs(eps: float):
    """Backward-time right-hand side on the 11-vector (Z, P, U).

    Hand-inlined version of the pmp module's formulas; a unit test pins the
    two against each other.
    """
    sin, cos, exp, sqrt = math.sin, math.cos, math.exp, math.sqrt

    def rhs(t, y):
        X, Y, Th, Xi, Px, Py, Pth, Pxi, u, w, mu = y
        ct = cos(Th)
        st = sin(Th)
        r2 = X * X + Y * Y
        r = sqrt(r2)
        s = (X * st - Y * ct) / r
        c = -(X * ct + Y * st) / r
        e = exp(-Xi)
        sx = st / r - s * X / r2
        sy = -ct / r - s * Y / r2
        w2 = 2.0 * s / r - u
        r3i = 1.0 / (r2 * r)
        Qx = w2 * sx - s * s * X * r3i
        Qy = w2 * sy - s * s * Y * r3i
        Qth = -w2 * c
        Hth = -Px * st + Py * ct + mu * Qth
        v1 = -mu * (sx * ct + sy * st - c * u) - Hth
        v3 = Qx * ct + Qy * st + Qth * u + w * w * e
        D = e * e + eps * s * s
        return [-ct, -st, -u, -w,
                mu * Qx, mu * Qy, Hth, mu * w * e,
                (-e * e * v1 - eps * s * v3) / D,
                (e * s * v1 - e * v3) / D,
                eps * (v3 - s * v1) / D]

    return rhs


def seed_terminal(sp: SeedParams, cfg: PropagationConfig):
    """Exact terminal triple (Z, P, U) at tau = 0 (r = 0 there)."""
    xi_f = -math.log(1.0 - math.cos(cfg.sigma_max))
    Z0 = np.array([0.0, 0.0, 0.0, xi_f])
    P0 = np.array([sp.alpha * math.cos(sp.beta), sp.alpha * math.sin(sp.beta), 0.0, 0.0])
    U0 = np.zeros(3)
    return Z0, P0, U0


def taylor_seed(sp: SeedParams, cfg: PropagationConfig):
    """Series state at tau0 where numerical propagation can start."""
    t = cfg.tau0
    A = sp.alpha * math.sin(sp.beta)
    B = sp.alpha * math.cos(sp.beta)
    ef = 1.0 - math.cos(cfg.sigma_max)
    xi_f = -math.log(ef)
    Z = np.array([-t,
                  A / 6.0 * t ** 3,
                  -A / 2.0 * t ** 2 - A * B / 24.0 * t ** 4,
                  xi_f + A * A / 18.0 * t ** 4 / ef])
    P = np.array([B, A, A * t + A * B / 6.0 * t ** 3, 0.0])
    U = pmp.newton_project(Z, P, pmp.solve_controls(Z, P, cfg.eps), cfg.eps)
    return Z, P, U


def collinearity_event(Z) -> float:
    """Termination indicator 1 - |cos sigma|; zero exactly at collinearity."""
    x, y, th = Z[0], Z[1], Z[2]
    r = math.hypot(x, y)
    return 1.0 - abs(x * math.cos(th) + y * math.sin(th)) / r


def _sin_sigma(y) -> float:
    x, Y, th = y[0], y[1], y[2]
    return (x * math.sin(th) - Y * math.cos(th)) / math.hypot(x, Y)


def propagate(sp: SeedParams, cfg: PropagationConfig = PropagationConfig()) -> ExtremalTrajectory:
    """Generate one extremal, sampled every sample_dtau in tau.

    Samples carry Newton-projected controls; raises IntegrationFailure only
    on step collapse (range blowups terminate gracefully with the partial
    trajectory).
    """
    eps = cfg.eps
    rhs = make_rhs(eps)
    Z, P, U = taylor_seed(sp, cfg)
    y0 = [*Z, *P, *U]

    rows = []  # (tau, y-list)
    rows.append((cfg.tau0, y0))

    stepper = Dopri5(rhs, cfg.tau0, y0, cfg.t_bar,
                     rtol=cfg.rel_tol, atol=cfg.abs_tol,
                     first_step=cfg.tau0 / 4.0)

    dt = cfg.sample_dtau
    next_k = max(1, math.ceil(cfg.tau0 / dt + 1e-12))
    if next_k * dt <= cfg.tau0:
        next_k += 1

    tau_min = 2.0 * cfg.tau0
    armed = False
    sign0 = 0.0
    termination = TERM_TBAR
    steps_since_projection = 0
    n_projections = 0

    def emit_sample(tau_s, y_s):
        rows.append((tau_s, y_s))

    def sample_range(t_hi):
        # interpolate every pending grid point up to t_hi (inclusive)
        nonlocal next_k
        while next_k * dt <= t_hi + 1e-15:
            ts = next_k * dt
            emit_sample(min(ts, t_hi), stepper.interpolate(min(ts, t_hi)))
            next_k += 1

    try:
        while True:
            if not stepper.step():
                break
            y = stepper.y
            bad = False
            for v in y:
                if not math.isfinite(v) or abs(v) > BLOWUP_LIMIT:
                    bad = True
                    break
            if bad:
                # keep samples up to the last good step boundary
                sample_range(stepper.t_old)
                termination = TERM_BLOWUP
                break

            s_end = _sin_sigma(y)
            fired = False
            if not armed:
                if stepper.t >= tau_min and abs(s_end) > EVENT_ARM_LEVEL:
                    armed = True
                    sign0 = math.copysign(1.0, s_end)
            else:
                if abs(s_end) <= EVENT_EXIT_LEVEL or s_end * sign0 < 0.0:
                    fired = True

            if fired:
                lo, hi = stepper.t_old, stepper.t
                while hi - lo > EVENT_TAU_TOL:
                    mid = 0.5 * (lo + hi)
                    sm = _sin_sigma(stepper.interpolate(mid))
                    if abs(sm) <= EVENT_EXIT_LEVEL or sm * sign0 < 0.0:
                        hi = mid
                    else:
                        lo = mid
                t_star = 0.5 * (lo + hi)
                sample_range(t_star)
                if t_star - rows[-1][0] > 1e-9:
                    emit_sample(t_star, stepper.interpolate(t_star))
                termination = TERM_COLLINEAR
                break

            sample_range(stepper.t)

            if cfg.reproject_every > 0:
                steps_since_projection += 1
                if steps_since_projection >= cfg.reproject_every:
                    steps_since_projection = 0
                    Zc, Pc = y[0:4], y[4:8]
                    Uc = pmp.newton_project(Zc, Pc, y[8:11], eps)
                    stepper.reset_state([*Zc, *Pc, *Uc])
                    n_projections += 1
    except IntegrationFailure:
        raise
    except (ZeroDivisionError, ValueError, OverflowError) as ex:
        raise IntegrationFailure(f"right-hand side failed: {ex}", stepper.t) from ex

    if termination == TERM_TBAR and rows[-1][0] < cfg.t_bar - 1e-12:
        emit_sample(cfg.t_bar, list(stepper.y))

    n = len(rows)
    tau = np.empty(n)
    Za = np.empty((n, 4))
    Pa = np.empty((n, 4))
    Ua = np.empty((n, 3))
    ra = np.empty(n)
    sa = np.empty(n)
    for i, (ts, ys) in enumerate(rows):
        Zi = ys[0:4]
        Pi = ys[4:8]
        Ui = pmp.newton_project(Zi, Pi, ys[8:11], eps)
        x, Y, th = Zi[0], Zi[1], Zi[2]
        ct, st = math.cos(th), math.sin(th)
        r = math.hypot(x, Y)
        tau[i] = ts
        Za[i] = Zi
        Pa[i] = Pi
        Ua[i] = Ui
        ra[i] = r
        sa[i] = math.atan2((x * st - Y * ct) / r, -(x * ct + Y * st) / r)

    stats = {
        "naccepted": stepper.naccepted,
        "nrejected": stepper.nrejected,
        "nprojections": n_projections,
        "t_hat": float(tau[-1]),
        "cost": pmp.regularized_cost(tau, Ua, eps) if n >= 2 else 0.0,
    }
    return ExtremalTrajectory(sp, tau, Za, Pa, Ua, ra, sa, termination, stats)


# ---------------------------------------------------------------------------
# Audits

def replay_forward(traj: ExtremalTrajectory, rel_tol: float = 1e-12,
                   abs_tol: float = 1e-14):
    """Re-integrate the plain kinematics forward under the recorded control.

    Starts from the deepest-tau state and drives with a cubic spline of
    u(tau); an exact trajectory lands on the target, so the returned miss
    distance measures internal consistency of the stored samples.
    """
    from scipy.interpolate import CubicSpline

    if len(traj) < 4:
        raise Malformed("replay needs at least four samples")
    u_of_tau = CubicSpline(traj.tau, traj.U[:, 0])
    tau_deep = float(traj.tau[-1])
    x0, y0, th0 = (float(traj.Z[-1, 0]), float(traj.Z[-1, 1]), float(traj.Z[-1, 2]))

    def rhs(t, y):
        u = float(u_of_tau(tau_deep - t))
        return [math.cos(y[2]), math.sin(y[2]), u]

    stepper = Dopri5(rhs, 0.0, [x0, y0, th0], tau_deep,
                     rtol=rel_tol, atol=abs_tol, first_step=min(1e-3, tau_deep / 8))
    while stepper.step():
        pass
    xf, yf, thf = stepper.y
    return (xf, yf, thf), math.hypot(xf, yf)


def audit(traj: ExtremalTrajectory, cfg: PropagationConfig,
          with_replay: bool = True) -> dict:
    """Internal-consistency scalars for one stored trajectory."""
    g = pmp.stationarity_batch(traj.Z, traj.P, traj.U, cfg.eps)
    H = pmp.hamiltonian_batch(traj.Z, traj.P, traj.U, cfg.eps)
    H0 = H[0]
    out = {
        "max_g_residual": float(np.max(np.abs(g))),
        "hamiltonian_drift": float(np.max(np.abs(H - H0)) / (1.0 + abs(H0))),
        "fov_margin": float(cfg.sigma_max - np.max(np.abs(traj.sigma))),
        "constraint_defect": float(np.max(np.abs(
            (math.cos(cfg.sigma_max) - np.cos(traj.sigma)) + np.exp(-traj.Z[:, 3])))),
    }
    if with_replay:
        _, miss = replay_forward(traj)
        out["replay_miss"] = float(miss)
    return out


# ---------------------------------------------------------------------------
# Sweeps

_WORKER_CFG: PropagationConfig | None = None


def _sweep_worker_init(cfg: PropagationConfig):
    global _WORKER_CFG
    _WORKER_CFG = cfg


def _sweep_worker(args):
    idx, alpha, beta = args
    try:
        traj = propagate(SeedParams(alpha, beta), _WORKER_CFG)
        return idx, traj, None
    except IntegrationFailure as ex:
        return idx, None, str(ex)


@dataclass
class SweepResult:
    grid: SweepGrid
    cfg: PropagationConfig
    trajectories: list  # ExtremalTrajectory or None per grid node
    failures: list      # (index, alpha, beta, message)
    report: dict


def sweep(grid: SweepGrid, cfg: PropagationConfig = PropagationConfig(),
          threads: int = 1, with_audit: bool = True) -> SweepResult:
    """Propagate the full (alpha, beta) grid; failures recorded, not fatal."""
    seeds = grid.seeds()
    jobs = [(i, sp.alpha, sp.beta) for i, sp in enumerate(seeds)]
    results: list = [None] * len(seeds)
    failures = []

    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads, initializer=_sweep_worker_init,
                                 initargs=(cfg,)) as pool:
            for idx, traj, err in pool.map(_sweep_worker, jobs, chunksize=16):
                results[idx] = traj
                if err is not None:
                    failures.append((idx, seeds[idx].alpha, seeds[idx].beta, err))
    else:
        _sweep_worker_init(cfg)
        for job in jobs:
            idx, traj, err = _sweep_worker(job)
            results[idx] = traj
            if err is not None:
                failures.append((idx, seeds[idx].alpha, seeds[idx].beta, err))

    term_counts = {TERM_TBAR: 0, TERM_COLLINEAR: 0, TERM_BLOWUP: 0}
    for traj in results:
        if traj is not None:
            term_counts[traj.termination] += 1
    n_clean = term_counts[TERM_TBAR] + term_counts[TERM_COLLINEAR]
    report = {
        "n_seeds": len(seeds),
        "n_failed": len(failures) + term_counts[TERM_BLOWUP],
        "success_rate": n_clean / len(seeds),
        "terminations": term_counts,
    }

    if with_audit:
        agg = {"max_g_residual": 0.0, "hamiltonian_drift": 0.0,
               "replay_miss": 0.0, "constraint_defect": 0.0, "fov_margin": math.inf}
        per_seed = []
        for traj in results:
            if traj is None:
                per_seed.append(None)
                continue
            a = audit(traj, cfg)
            per_seed.append(a)
            for k in ("max_g_residual", "hamiltonian_drift", "replay_miss",
                      "constraint_defect"):
                agg[k] = max(agg[k], a[k])
            agg["fov_margin"] = min(agg["fov_margin"], a["fov_margin"])
        report["audit"] = agg
        report["per_seed_audit"] = per_seed

    if n_clean == 0:
        raise EmptySweep("no seed produced a usable trajectory")
    return SweepResult(grid, cfg, results, failures, report)


# ---------------------------------------------------------------------------
# Boundary matching (used to build reference solutions for closed-loop runs)

def match_extremal(r_target: float, sigma_target: float, tau_query: float,
                   cfg: PropagationConfig = PropagationConfig(),
                   scan: tuple[int, int] = (20, 24),
                   tol: float = 1e-9, max_iter: int = 40,
                   init: SeedParams | None = None):
    """Find (alpha, beta) whose extremal passes through (r, sigma) at tau_query.

    Coarse grid scan followed by damped finite-difference Newton on
    (log alpha, beta). Returns (SeedParams, trajectory, residual_inf).
    Near the FOV envelope the equations may admit no interior solution; the
    caller receives the best achievable residual rather than an exception.
    A warm start `init` skips the coarse scan when it yields a usable
    endpoint; Newton may leave the scan box either way.
    """
    run_cfg = PropagationConfig(
        sigma_max=cfg.sigma_max, eps=cfg.eps, tau0=cfg.tau0,
        t_bar=tau_query, rel_tol=cfg.rel_tol, abs_tol=cfg.abs_tol,
        sample_dtau=cfg.sample_dtau, reproject_every=cfg.reproject_every)

    def endpoint(la, beta):
        try:
            traj = propagate(SeedParams(math.exp(la), beta), run_cfg)
        except IntegrationFailure:
            return None, None
        if traj.termination != TERM_TBAR or abs(traj.tau[-1] - tau_query) > 1e-9:
            return None, traj
        return (traj.r[-1] - r_target, traj.sigma[-1] - sigma_target), traj

    best = None
    if init is not None:
        la0 = math.log(init.alpha)
        F, traj = endpoint(la0, init.beta)
        if F is not None:
            best = (max(abs(F[0]), abs(F[1])), la0, init.beta, F, traj)
    if best is None:
        for la in np.linspace(math.log(1e-2), math.log(10.0), scan[0]):
            for beta in np.linspace(0.0, math.pi, scan[1]):
                F, traj = endpoint(la, beta)
                if F is None:
                    continue
                res = max(abs(F[0]), abs(F[1]))
                if best is None or res < best[0]:
                    best = (res, la, beta, F, traj)
    if best is None:
        raise EmptySweep("no scan seed reaches the query time")

    res, la, beta, F, traj = best
    for _ in range(max_iter):
        if res < tol:
            break
        dla, dbe = 1e-7, 1e-7
        Fa, _ = endpoint(la + dla, beta)
        Fb, _ = endpoint(la, beta + dbe)
        if Fa is None or Fb is None:
            break
        J = np.array([[(Fa[0] - F[0]) / dla, (Fb[0] - F[0]) / dbe],
                      [(Fa[1] - F[1]) / dla, (Fb[1] - F[1]) / dbe]])
        try:
            step = np.linalg.solve(J, np.array(F))
        except np.linalg.LinAlgError:
            break
        damp = 1.0
        improved = False
        while damp > 1e-4:
            la_n = la - damp * step[0]
            be_n = beta - damp * step[1]
            Fn, traj_n = endpoint(la_n, be_n)
            if Fn is not None:
                rn = max(abs(Fn[0]), abs(Fn[1]))
                if rn < res:
                    la, beta, F, res, traj = la_n, be_n, Fn, rn, traj_n
                    improved = True
                    break
            damp *= 0.5
        if not improved:
            break
    return SeedParams(math.exp(la), beta), traj, res


# ---------------------------------------------------------------------------
# Trajectory serialization (one CSV per seed)

def save_trajectory_csv(path, traj: ExtremalTrajectory) -> None:
    with open(path, "w") as fh:
        fh.write(CSV_HEADER + "\n")
        for i in range(len(traj)):
            vals = (traj.tau[i], *traj.Z[i], *traj.P[i], *traj.U[i],
                    traj.r[i], traj.sigma[i])
            fh.write(",".join("%.17g" % v for v in vals) + "\n")


def load_trajectory_csv(path, seed: SeedParams | None = None,
                        termination: str = "") -> ExtremalTrajectory:
    with open(path) as fh:
        header = fh.readline().strip()
        if header != CSV_HEADER:
            raise Malformed(f"unexpected trajectory header in {path}")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    if data.shape[1] != 14:
        raise Malformed(f"expected 14 columns, got {data.shape[1]} in {path}")
    return ExtremalTrajectory(
        seed=seed if seed is not None else SeedParams(1.0, 0.0),
        tau=data[:, 0], Z=data[:, 1:5], P=data[:, 5:9], U=data[:, 9:12],
        r=data[:, 12], sigma=data[:, 13], termination=termination)
