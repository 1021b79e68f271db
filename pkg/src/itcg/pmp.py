"""First-order necessary conditions for the FOV-constrained minimum-effort problem.

State is augmented with the saturation variable xi so the cone constraint
S(z) <= 0 becomes the equality S(z) = psi(xi); its multiplier mu and the
rate omega = dxi/dt join the turn rate u in the control triple. With
e = exp(-xi) and s = sin sigma the Hamiltonian reads

    H = p_x cos th + p_y sin th + u p_th + p_xi w
        - u^2/2 - eps w^2/2 + mu (s (s/r - u) - e w)

All partial derivatives below are derived from this expression (and are what
the finite-difference consistency tests check); the stationarity residual

    g1 = p_th - u - mu s
    g2 = p_xi - eps w - mu e
    g3 = s (s/r - u) - w e

is linear in (u, w, mu) with constant (state-dependent) Jacobian

    dg/dU = [[-1, 0, -s], [0, -eps, -e], [-s, -e, 0]],
    det = e^2 + eps s^2 > 0,

so Newton projection onto g = 0 converges in a single step.

Array layout used throughout: Z = (x, y, theta, xi), P = (p_x, p_y, p_theta,
p_xi), U = (u, omega, mu). Scalar entry points take any sequence; *_batch
variants take (N, k) arrays and are what the sweep audits call.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import NoConvergence, SingularJacobian, ZeroRange

DEFAULT_EPS = 1e-4

# dg/dP is constant: g1 reads p_theta, g2 reads p_xi, g3 reads no costate.
DG_DP = np.array([[0.0, 0.0, 1.0, 0.0],
                  [0.0, 0.0, 0.0, 1.0],
                  [0.0, 0.0, 0.0, 0.0]])


def check_eps(eps: float) -> float:
    if not 0.0 < eps < 1.0:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    return eps


def _frame(Z):
    """Common trigonometric frame; raises ZeroRange at the target."""
    x, y, th, xi = Z
    ct, st = math.cos(th), math.sin(th)
    r2 = x * x + y * y
    if r2 < 1e-24:
        raise ZeroRange("stationarity frame undefined at r = 0")
    r = math.sqrt(r2)
    s = (x * st - y * ct) / r
    c = -(x * ct + y * st) / r
    return x, y, ct, st, r, r2, s, c, math.exp(-xi)


def state_rhs(Z, U) -> np.ndarray:
    """Augmented kinematics f = (cos th, sin th, u, omega)."""
    th = Z[2]
    return np.array([math.cos(th), math.sin(th), U[0], U[1]])


def hamiltonian(Z, P, U, eps: float = DEFAULT_EPS) -> float:
    x, y, ct, st, r, r2, s, c, e = _frame(Z)
    u, w, mu = U
    return (P[0] * ct + P[1] * st + u * P[2] + w * P[3]
            - 0.5 * u * u - 0.5 * eps * w * w
            + mu * (s * (s / r - u) - e * w))


def hamiltonian_z(Z, P, U) -> np.ndarray:
    """Gradient of H in the state (x, y, theta, xi)."""
    x, y, ct, st, r, r2, s, c, e = _frame(Z)
    u, w, mu = U
    sx = st / r - s * x / r2
    sy = -ct / r - s * y / r2
    w2 = 2.0 * s / r - u
    r3 = r2 * r
    Qx = w2 * sx - s * s * x / r3
    Qy = w2 * sy - s * s * y / r3
    Qth = -w2 * c
    return np.array([mu * Qx,
                     mu * Qy,
                     -P[0] * st + P[1] * ct + mu * Qth,
                     mu * w * e])


def costate_rhs(Z, P, U) -> np.ndarray:
    """Forward-time costate dynamics dP/dt = -dH/dZ."""
    return -hamiltonian_z(Z, P, U)


def stationarity(Z, P, U, eps: float = DEFAULT_EPS) -> np.ndarray:
    """Residual g = (dH/du, dH/dw, dH/dmu); zero along an extremal."""
    x, y, ct, st, r, r2, s, c, e = _frame(Z)
    u, w, mu = U
    return np.array([P[2] - u - mu * s,
                     P[3] - eps * w - mu * e,
                     s * (s / r - u) - w * e])


def jacobian_gu(Z, eps: float = DEFAULT_EPS) -> np.ndarray:
    """dg/dU; symmetric, determinant exp(-2 xi) + eps sin^2 sigma."""
    x, y, ct, st, r, r2, s, c, e = _frame(Z)
    return np.array([[-1.0, 0.0, -s],
                     [0.0, -eps, -e],
                     [-s, -e, 0.0]])


def gu_det(Z, eps: float = DEFAULT_EPS) -> float:
    x, y, ct, st, r, r2, s, c, e = _frame(Z)
    return e * e + eps * s * s


def stationarity_jac_z(Z, U, eps: float = DEFAULT_EPS) -> np.ndarray:
    """dg/dZ (3 x 4)."""
    x, y, ct, st, r, r2, s, c, e = _frame(Z)
    u, w, mu = U
    sx = st / r - s * x / r2
    sy = -ct / r - s * y / r2
    sth = -c
    w2 = 2.0 * s / r - u
    r3 = r2 * r
    Qx = w2 * sx - s * s * x / r3
    Qy = w2 * sy - s * s * y / r3
    Qth = w2 * sth
    return np.array([[-mu * sx, -mu * sy, -mu * sth, 0.0],
                     [0.0, 0.0, 0.0, mu * e],
                     [Qx, Qy, Qth, w * e]])


def control_rate(Z, P, U, eps: float = DEFAULT_EPS) -> np.ndarray:
    """Forward-time dU/dt from total differentiation of g = 0.

    dU/dt = -(dg/dU)^-1 (dg/dZ f - dg/dP dH/dZ); the system is autonomous so
    there is no explicit time term.
    """
    x, y, ct, st, r, r2, s, c, e = _frame(Z)
    u, w, mu = U
    sx = st / r - s * x / r2
    sy = -ct / r - s * y / r2
    w2 = 2.0 * s / r - u
    r3 = r2 * r
    Qx = w2 * sx - s * s * x / r3
    Qy = w2 * sy - s * s * y / r3
    Qth = -w2 * c
    Hth = -P[0] * st + P[1] * ct + mu * Qth
    # v = dg/dZ . f - dg/dP . dH/dZ; the omega row vanishes identically
    # because dg2/dZ . f = mu e w = dH/dxi.
    v1 = -mu * (sx * ct + sy * st - c * u) - Hth
    v3 = Qx * ct + Qy * st + Qth * u + w * w * e
    D = e * e + eps * s * s
    return np.array([(e * e * v1 + eps * s * v3) / D,
                     (e * v3 - e * s * v1) / D,
                     (eps * (s * v1 - v3)) / D])


def newton_project(Z, P, U0, eps: float = DEFAULT_EPS,
                   tol: float = 1e-12, max_iter: int = 50) -> np.ndarray:
    """Project a control guess onto the stationarity manifold g(Z, P, U) = 0.

    g is linear in U, so this is one exact linear solve; the loop form is
    kept to enforce the residual tolerance in floating point.
    """
    x, y, ct, st, r, r2, s, c, e = _frame(Z)
    D = e * e + eps * s * s
    if not D > 1e-300:
        raise SingularJacobian(f"det(dg/dU) = {D:.3g}")
    U = np.array(U0, dtype=float)
    for _ in range(max_iter):
        g = stationarity(Z, P, U, eps)
        if max(abs(g[0]), abs(g[1]), abs(g[2])) < tol:
            return U
        # closed-form symmetric inverse of dg/dU, scaled by 1/D
        du = (-e * e * g[0] + e * s * g[1] - eps * s * g[2]) / D
        dw = (e * s * g[0] - s * s * g[1] - e * g[2]) / D
        dmu = (-eps * s * g[0] - e * g[1] + eps * g[2]) / D
        U = U - np.array([du, dw, dmu])
    raise NoConvergence(f"projection residual {max(abs(stationarity(Z, P, U, eps))):.3g} "
                        f"after {max_iter} iterations")


def solve_controls(Z, P, eps: float = DEFAULT_EPS) -> np.ndarray:
    """Closed-form elimination of g = 0 for U given (Z, P).

    mu = (eps s (p_th - s/r) + e p_xi) / (eps s^2 + e^2), then u and omega
    from g1, g2. Used as an independent oracle for newton_project.
    """
    x, y, ct, st, r, r2, s, c, e = _frame(Z)
    q = s / r
    mu = (eps * s * (P[2] - q) + e * P[3]) / (eps * s * s + e * e)
    u = P[2] - mu * s
    w = (P[3] - mu * e) / eps
    return np.array([u, w, mu])


def regularized_cost(tau: np.ndarray, U: np.ndarray, eps: float = DEFAULT_EPS) -> float:
    """Trapezoid of the running cost (u^2 + eps w^2)/2 over a tau grid."""
    tau = np.asarray(tau, dtype=float)
    U = np.asarray(U, dtype=float)
    if tau.ndim != 1 or len(tau) < 2:
        raise ValueError("need at least two grid points")
    integrand = 0.5 * (U[:, 0] ** 2 + eps * U[:, 1] ** 2)
    return float(np.trapezoid(integrand, tau))


def control_effort(tau: np.ndarray, u: np.ndarray) -> float:
    """Trapezoid of u^2/2 only (the physically metered effort)."""
    return float(np.trapezoid(0.5 * np.asarray(u, dtype=float) ** 2,
                          np.asarray(tau, dtype=float)))


def fd_consistency(Z, P, U, eps: float = DEFAULT_EPS, h: float = 1e-6) -> float:
    """Worst relative error of all analytic partials against central differences.

    Covers dH/dz (costate side), dg/dz and dg/du (control-rate side) at one
    arbitrary point; relative to max(1, |value|) so near-zero entries are
    compared absolutely.
    """
    Z = np.asarray(Z, dtype=float)
    P = np.asarray(P, dtype=float)
    U = np.asarray(U, dtype=float)

    def rel(a, b):
        return abs(a - b) / max(1.0, abs(a), abs(b))

    worst = 0.0
    Hz = hamiltonian_z(Z, P, U)
    Gz = stationarity_jac_z(Z, U, eps)
    for j in range(4):
        dz = np.zeros(4)
        dz[j] = h
        fd_H = (hamiltonian(Z + dz, P, U, eps) - hamiltonian(Z - dz, P, U, eps)) / (2 * h)
        worst = max(worst, rel(Hz[j], fd_H))
        fd_g = (stationarity(Z + dz, P, U, eps) - stationarity(Z - dz, P, U, eps)) / (2 * h)
        for i in range(3):
            worst = max(worst, rel(Gz[i, j], fd_g[i]))

    Gu = jacobian_gu(Z, eps)
    for j in range(3):
        du = np.zeros(3)
        du[j] = h
        fd_g = (stationarity(Z, P, U + du, eps) - stationarity(Z, P, U - du, eps)) / (2 * h)
        for i in range(3):
            worst = max(worst, rel(Gu[i, j], fd_g[i]))

    # dg/dp block is constant; checked against differences in the costates
    for j in range(4):
        dp = np.zeros(4)
        dp[j] = h
        fd_g = (stationarity(Z, P + dp, U, eps) - stationarity(Z, P - dp, U, eps)) / (2 * h)
        for i in range(3):
            worst = max(worst, rel(DG_DP[i, j], fd_g[i]))
    return worst


# ---------------------------------------------------------------------------
# Vectorized variants over sample arrays, used by the trajectory audits.

def _frame_batch(Z: np.ndarray):
    x, y, th, xi = Z[:, 0], Z[:, 1], Z[:, 2], Z[:, 3]
    ct, st = np.cos(th), np.sin(th)
    r = np.hypot(x, y)
    if np.any(r < 1e-12):
        raise ZeroRange("batch frame contains r = 0 samples")
    s = (x * st - y * ct) / r
    e = np.exp(-xi)
    return ct, st, r, s, e


def hamiltonian_batch(Z: np.ndarray, P: np.ndarray, U: np.ndarray,
                      eps: float = DEFAULT_EPS) -> np.ndarray:
    ct, st, r, s, e = _frame_batch(Z)
    u, w, mu = U[:, 0], U[:, 1], U[:, 2]
    return (P[:, 0] * ct + P[:, 1] * st + u * P[:, 2] + w * P[:, 3]
            - 0.5 * u * u - 0.5 * eps * w * w
            + mu * (s * (s / r - u) - e * w))


def stationarity_batch(Z: np.ndarray, P: np.ndarray, U: np.ndarray,
                       eps: float = DEFAULT_EPS) -> np.ndarray:
    ct, st, r, s, e = _frame_batch(Z)
    u, w, mu = U[:, 0], U[:, 1], U[:, 2]
    return np.stack([P[:, 2] - u - mu * s,
                     P[:, 3] - eps * w - mu * e,
                     s * (s / r - u) - w * e], axis=1)
