import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from itcg import geometry as geo
from itcg import ode
from itcg.errors import ConstraintActive, ZeroRange

angles = st.floats(-50.0, 50.0, allow_nan=False, allow_infinity=False)
safe_angles = st.floats(-math.pi + 1e-6, math.pi - 1e-6)


@given(angles)
def test_wrap_angle_range_and_equivalence(x):
    w = geo.wrap_angle(x)
    assert -math.pi < w <= math.pi
    assert math.sin(w) == pytest.approx(math.sin(x), abs=1e-9)
    assert math.cos(w) == pytest.approx(math.cos(x), abs=1e-9)


@given(st.floats(-math.pi + 1e-9, math.pi))
def test_wrap_angle_identity_inside_range(x):
    assert geo.wrap_angle(x) == pytest.approx(x, abs=1e-12)


def test_wrap_angle_boundary():
    assert geo.wrap_angle(math.pi) == math.pi
    assert geo.wrap_angle(-math.pi) == math.pi
    assert geo.wrap_angle(geo.TWO_PI) == pytest.approx(0.0, abs=1e-15)


def test_kinematics_rhs_axis_aligned():
    dx, dy, dth = geo.kinematics_rhs(geo.CartesianState(5.0, -2.0, math.pi / 2), 0.3)
    assert dx == pytest.approx(0.0, abs=1e-15)
    assert dy == pytest.approx(1.0)
    assert dth == 0.3


def test_lead_from_los_wrap():
    assert geo.lead_from_los(math.pi / 2, math.pi) == pytest.approx(math.pi / 2)


def test_to_polar_head_on_from_above():
    p = geo.to_polar(geo.CartesianState(0.0, 1.0, -math.pi / 2))
    assert p.r == pytest.approx(1.0)
    assert p.sigma == pytest.approx(0.0, abs=1e-15)


def test_to_polar_matches_los_composition():
    s = geo.CartesianState(-3.0, 4.0, 0.7)
    p = geo.to_polar(s)
    assert p.sigma == pytest.approx(
        geo.lead_from_los(geo.los(s), s.theta), abs=1e-12)


@given(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3), angles)
def test_to_polar_mirror_is_exact(x, y, theta):
    try:
        p = geo.to_polar(geo.CartesianState(x, y, theta))
    except ZeroRange:
        return
    m = geo.to_polar(geo.CartesianState(x, -y, -theta))
    assert m.r == p.r
    if abs(p.sigma) < math.pi:  # pi is its own mirror image modulo 2*pi
        assert m.sigma == -p.sigma


def test_zero_range_raises():
    with pytest.raises(ZeroRange):
        geo.to_polar(geo.CartesianState(0.0, 0.0, 1.0))
    with pytest.raises(ZeroRange):
        geo.los(geo.CartesianState(0.0, 0.0, 1.0))
    with pytest.raises(ZeroRange):
        geo.polar_rhs(geo.PolarState(0.0, 0.1), 0.0)


def test_polar_rhs_direct():
    dr, dsig = geo.polar_rhs(geo.PolarState(2.0, math.pi / 2), 0.0)
    assert dr == pytest.approx(0.0, abs=1e-15)
    assert dsig == pytest.approx(0.5)


@pytest.mark.parametrize("seed", range(5))
def test_cartesian_polar_integration_equivalence(seed):
    # Integrating the Cartesian kinematics and mapping the endpoint must
    # agree with integrating the polar form from the mapped initial state.
    rng = np.random.default_rng(seed)
    r0 = rng.uniform(1.5, 5.0)
    sigma0 = rng.uniform(-1.2, 1.2)
    u = rng.uniform(-0.5, 0.5)
    s0 = geo.CartesianState(-r0 * math.cos(sigma0), -r0 * math.sin(sigma0), 0.0)
    assert geo.to_polar(s0).sigma == pytest.approx(sigma0, abs=1e-12)

    def cart_rhs(t, y):
        return list(geo.kinematics_rhs(geo.CartesianState(*y), u))

    def pol_rhs(t, y):
        return list(geo.polar_rhs(geo.PolarState(*y), u))

    _, y_c = ode.integrate(cart_rhs, 0.0, [s0.x, s0.y, s0.theta], 1.0)
    _, y_p = ode.integrate(pol_rhs, 0.0, [r0, sigma0], 1.0)
    end = geo.to_polar(geo.CartesianState(*y_c))
    assert end.r == pytest.approx(y_p[0], abs=1e-8)
    assert end.sigma == pytest.approx(y_p[1], abs=1e-8)


def test_constraint_value_sign_convention():
    fov = geo.FovConfig(math.pi / 3)
    inside = geo.CartesianState(-1.0, 0.0, 0.0)  # sigma = 0
    outside = geo.CartesianState(0.0, -1.0, 0.0)  # sigma = pi/2
    assert geo.constraint_value(inside, fov) < 0.0
    assert geo.constraint_value(outside, fov) == pytest.approx(0.5)


@pytest.mark.parametrize("seed", range(5))
def test_constraint_rate_matches_flow_derivative(seed):
    rng = np.random.default_rng(100 + seed)
    s = geo.CartesianState(rng.uniform(-4, -1), rng.uniform(-1, 1),
                           rng.uniform(-0.5, 0.5))
    u = rng.uniform(-0.5, 0.5)
    fov = geo.FovConfig(1.0)
    h = 1e-6
    dx, dy, dth = geo.kinematics_rhs(s, u)
    plus = geo.CartesianState(s.x + h * dx, s.y + h * dy, s.theta + h * dth)
    minus = geo.CartesianState(s.x - h * dx, s.y - h * dy, s.theta - h * dth)
    fd = (geo.constraint_value(plus, fov) - geo.constraint_value(minus, fov)) / (2 * h)
    assert geo.constraint_rate(s, u, fov) == pytest.approx(fd, abs=1e-8)


@given(st.floats(-30.0, 30.0))
def test_psi_negative_and_monotone(xi):
    assert geo.psi(xi) < 0.0
    assert geo.psi_prime(xi) > 0.0
    assert geo.psi_prime(xi) == -geo.psi(xi)


@given(st.floats(-0.9, 0.9))
def test_xi_sigma_roundtrip(frac):
    fov = geo.FovConfig(1.2)
    sigma = frac * fov.sigma_max
    xi = geo.xi_from_sigma(sigma, fov)
    # psi(xi) reproduces the constraint value S(sigma) exactly
    assert geo.psi(xi) == pytest.approx(
        math.cos(fov.sigma_max) - math.cos(sigma), rel=1e-12)


def test_xi_from_sigma_rejects_boundary_and_outside():
    fov = geo.FovConfig(1.0)
    for sigma in (1.0, 1.3, -1.0):
        with pytest.raises(ConstraintActive):
            geo.xi_from_sigma(sigma, fov)


def test_fov_config_domain():
    with pytest.raises(ValueError):
        geo.FovConfig(0.0)
    with pytest.raises(ValueError):
        geo.FovConfig(math.pi / 2 + 1e-9)
    geo.FovConfig(math.pi / 2)  # the scale-family limit case is legal
