import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from itcg import guidance as gd
from itcg import mlp
from itcg.errors import InfeasibleQuery, ZeroRange


def constant_model(value: float) -> mlp.MlpModel:
    """Identity-norm model whose normalized output is exactly `value`."""
    m = mlp.init(0)
    m.weights[2][:] = 0.0
    m.biases[2][:] = value
    return m


def random_model(seed: int) -> mlp.MlpModel:
    return mlp.init(seed)


def test_query_validation():
    with pytest.raises(ValueError):
        gd.GuidanceQuery(r=-1.0, sigma=0.0, t_go=1.0, speed=1.0)
    with pytest.raises(ValueError):
        gd.GuidanceQuery(r=1.0, sigma=0.0, t_go=0.0, speed=1.0)
    with pytest.raises(ValueError):
        gd.GuidanceQuery(r=1.0, sigma=0.0, t_go=1.0, speed=-2.0)
    assert gd.GuidanceQuery(r=1.0, sigma=0.0, t_go=2.0, speed=1.0).feasible
    assert not gd.GuidanceQuery(r=3.0, sigma=0.0, t_go=2.0, speed=1.0).feasible


def test_scaling_params_validation():
    with pytest.raises(ValueError):
        gd.ScalingParams(t_ref=0.0)
    with pytest.raises(ValueError):
        gd.ScalingParams(t_ref=5.0, t_bar=4.0)
    gd.ScalingParams(t_ref=4.0, t_bar=4.0)


def test_scale_query_identity_point():
    q = gd.GuidanceQuery(r=0.7, sigma=0.3, t_go=1.0, speed=1.0)
    r_n, sigma, t_ref, gain = gd.scale_query(q)
    assert (r_n, sigma, t_ref, gain) == (0.7, 0.3, 1.0, 1.0)


def test_scale_query_formula():
    q = gd.GuidanceQuery(r=5000.0, sigma=-0.4, t_go=25.0, speed=250.0)
    r_n, sigma, t_ref, gain = gd.scale_query(q)
    k = 25.0 / 1.0
    assert r_n == 5000.0 / (250.0 * k)
    assert sigma == -0.4
    assert gain == 250.0 / k
    with pytest.raises(InfeasibleQuery):
        gd.scale_query(gd.GuidanceQuery(r=5000.0, sigma=0.0, t_go=10.0, speed=250.0))


def test_nn_command_space_scaling_exact():
    # (r, t_go) -> (c r, c t_go) leaves the chart point fixed and divides the
    # command by c; with c a power of two this holds bitwise
    m = random_model(3)
    c = 4.0
    q1 = gd.GuidanceQuery(r=0.5, sigma=0.2, t_go=1.25, speed=1.0)
    q2 = gd.GuidanceQuery(r=c * 0.5, sigma=0.2, t_go=c * 1.25, speed=1.0)
    assert gd.nn_command(m, q2) == gd.nn_command(m, q1) / c


def test_nn_command_speed_scaling_exact():
    m = random_model(4)
    q1 = gd.GuidanceQuery(r=100.0, sigma=-0.5, t_go=2.0, speed=64.0)
    q2 = gd.GuidanceQuery(r=100.0, sigma=-0.5, t_go=2.0, speed=128.0)
    # doubling speed halves r_n; evaluate manually to confirm the gain rule
    rn1, _, _, g1 = gd.scale_query(q1)
    rn2, _, _, g2 = gd.scale_query(q2)
    assert rn2 == rn1 / 2.0 and g2 == 2.0 * g1


@given(st.floats(1e-6, 1.0), st.floats(0.05, 0.95), st.floats(0.2, 3.0),
       st.integers(0, 5))
def test_nn_command_odd_in_sigma(sigma, r, t_go, seed):
    m = random_model(seed)
    qp = gd.GuidanceQuery(r=r * t_go, sigma=sigma, t_go=t_go, speed=1.0)
    qm = gd.GuidanceQuery(r=r * t_go, sigma=-sigma, t_go=t_go, speed=1.0)
    assert gd.nn_command(m, qp) == -gd.nn_command(m, qm)


def test_nn_command_at_zero_sigma_takes_positive_branch():
    # the fold is exact for sigma != 0; at exactly zero the positive branch
    # is used, and a trained net makes that value ~0 via straight-line rows
    m = random_model(6)
    q = gd.GuidanceQuery(r=0.5, sigma=0.0, t_go=1.0, speed=1.0)
    assert gd.nn_command(m, q) == mlp.forward(m, 0.5, 0.0, 1.0)


def test_nn_command_clamps():
    m = constant_model(500.0)
    q = gd.GuidanceQuery(r=0.5, sigma=0.1, t_go=1.0, speed=1.0)
    assert gd.nn_command(m, q, a_max=7.0) == 7.0
    m_neg = constant_model(-500.0)
    assert gd.nn_command(m_neg, q, a_max=7.0) == -7.0


def test_nn_command_infeasible():
    m = random_model(0)
    with pytest.raises(InfeasibleQuery):
        gd.nn_command(m, gd.GuidanceQuery(r=2.0, sigma=0.0, t_go=1.0, speed=1.0))


def test_pn_command_formula():
    q = gd.GuidanceQuery(r=2000.0, sigma=0.3, t_go=10.0, speed=250.0)
    want = 3.0 * 250.0 * (250.0 * math.sin(0.3) / 2000.0)
    assert gd.pn_command(q) == want
    assert gd.pn_command(q, gain=4.5) == 1.5 * want
    assert gd.pn_command(q, a_max=5.0) == 5.0
    with pytest.raises(ZeroRange):
        gd.pn_command(gd.GuidanceQuery(r=0.0, sigma=0.1, t_go=1.0, speed=1.0))


def test_pn_law_wraps_pn_command():
    law = gd.PnLaw(gain=3.7, a_max=50.0)
    q = gd.GuidanceQuery(r=900.0, sigma=-0.25, t_go=8.0, speed=200.0)
    assert law(q) == gd.pn_command(q, 3.7, 50.0)
    assert law.name == "pn"


def test_nn_law_interior_matches_nn_command():
    m = random_model(7)
    law = gd.NnLaw(m)
    q = gd.GuidanceQuery(r=0.4, sigma=0.2, t_go=3.0, speed=1.0)
    assert law(q) == gd.nn_command(m, q)
    assert law.name == "nn"
    assert law.sigma_edge == 1.0  # identity norm trains sigma on [-1, 1]


def test_nn_law_feasibility_fallback_is_pn():
    m = random_model(1)
    law = gd.NnLaw(m, fallback_gain=3.0)
    q = gd.GuidanceQuery(r=5.0, sigma=0.1, t_go=1.0, speed=1.0)
    assert not q.feasible
    assert law(q) == gd.pn_command(q, 3.0, law.a_max)


def test_nn_law_homing_blend_weights():
    m = constant_model(0.25)
    law = gd.NnLaw(m, homing_tgo=2.0, fallback_gain=3.0)
    # at t_go = 1.0 the blend weight is exactly 1/2
    q = gd.GuidanceQuery(r=0.3, sigma=0.1, t_go=1.0, speed=1.0)
    a_nn = gd.nn_command(m, q, law.a_max, law.sp)
    a_pn = gd.pn_command(q, 3.0, law.a_max)
    assert law(q) == 0.5 * a_nn + 0.5 * a_pn
    # just above the homing window the blend is off
    q2 = gd.GuidanceQuery(r=0.3, sigma=0.1, t_go=2.0001, speed=1.0)
    assert law(q2) == gd.nn_command(m, q2, law.a_max, law.sp)


def test_nn_law_edge_governor_floors_command():
    m = constant_model(-0.5)  # net pushes outward at the cone edge
    law = gd.NnLaw(m)
    V, r = 20.0, 100.0
    ride = V * V * math.sin(1.0) / r
    q_edge = gd.GuidanceQuery(r=r, sigma=1.0, t_go=10.0, speed=V)
    assert law(q_edge) == ride
    q_out = gd.GuidanceQuery(r=r, sigma=1.1, t_go=10.0, speed=V)
    assert law(q_out) == V * V * math.sin(1.1) / r
    # strictly inside the cone the floor is inactive
    q_in = gd.GuidanceQuery(r=r, sigma=0.99, t_go=10.0, speed=V)
    assert law(q_in) == gd.nn_command(m, q_in, law.a_max, law.sp)
    # mirror side uses the ceiling instead
    q_neg = gd.GuidanceQuery(r=r, sigma=-1.0, t_go=10.0, speed=V)
    assert law(q_neg) == -ride


def test_nn_law_governor_respects_a_max():
    m = constant_model(0.0)
    law = gd.NnLaw(m, a_max=3.0)
    q = gd.GuidanceQuery(r=1.0, sigma=1.2, t_go=10.0, speed=20.0)
    assert law(q) == 3.0


@given(st.floats(1e-6, 1.3), st.floats(0.1, 0.9), st.floats(0.2, 3.0),
       st.integers(0, 4))
def test_nn_law_odd_in_sigma_everywhere(sigma, r_frac, t_go, seed):
    # odd symmetry survives the blend, the fallback, and the governor
    m = random_model(seed)
    law = gd.NnLaw(m)
    r = r_frac * t_go
    qp = gd.GuidanceQuery(r=r, sigma=sigma, t_go=t_go, speed=1.0)
    qm = gd.GuidanceQuery(r=r, sigma=-sigma, t_go=t_go, speed=1.0)
    assert law(qp) == -law(qm)


def test_nn_law_custom_edge_override():
    m = random_model(2)
    law = gd.NnLaw(m, sigma_edge=0.5)
    assert law.sigma_edge == 0.5
    V, r = 10.0, 20.0
    q = gd.GuidanceQuery(r=r, sigma=0.6, t_go=10.0, speed=V)
    assert law(q) >= V * V * math.sin(0.6) / r
