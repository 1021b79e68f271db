"""Acceptance suite: one test per release criterion, plus two deployment
properties of the guidance law that need the full trained pipeline.

Each criterion test prints a single PASS line with the measured numbers
(visible under `pytest -s`). The closed-loop tests share the session
pipelines from conftest; a full cold run builds three sweep+train chains
(~15 min single-core), a cached run finishes in a few minutes.
"""

import hashlib
import json
import math
import os
import pickle
import shutil
import time

import numpy as np
import pytest

from itcg import cli
from itcg import dataset as ds
from itcg import extremal as ex
from itcg import guidance as gd
from itcg import mlp
from itcg import pmp
from itcg import simulator as sim

pytestmark = pytest.mark.acceptance

CACHE_DIR = os.environ.get("ITCG_TEST_CACHE", "")

SPEED = 250.0           # m/s, assumed pursuer speed for scenario replication
R0 = 10000.0            # m
SIGMA0 = math.radians(30.0)

# closed-loop replication rows: (fov half-angle deg, prescribed impact s)
ROWS = [(30.0, 44.0), (45.0, 50.0), (60.0, 50.0), (60.0, 55.0), (60.0, 60.0)]

# warm two-parameter seeds for the matched boundary-value solves; Newton
# from these converges to machine residual for every row
WARM = {
    (30.0, 44.0): (10.0, 1.23),
    (45.0, 50.0): (38.4, 2.41),
    (60.0, 50.0): (16.2, 2.26),
    (60.0, 55.0): (22.5, 2.17),
    (60.0, 60.0): (41.0, 2.17),
}


def _pass(n, msg):
    print(f"criterion {n:2d} PASS: {msg}")


def _sin_sigma(x, y, th):
    # lead-angle sine straight from the planar pose; (s, c) is unit by r^2
    r = math.hypot(x, y)
    return (x * math.sin(th) - y * math.cos(th)) / r


def matched_reference(sigma_max_deg, t_f, warm):
    """Physical-units effort of the extremal matching (R0, SIGMA0, t_f)."""
    cfg = ex.PropagationConfig(sigma_max=math.radians(sigma_max_deg))
    seed, traj, resid = ex.match_extremal(
        R0 / (SPEED * t_f), SIGMA0, 1.0, cfg, init=ex.SeedParams(*warm))
    # rows launched on the cone edge admit only boundary-limited fits
    assert resid < 1e-3
    keep = traj.tau <= 1.0 + 1e-12
    return SPEED ** 2 / t_f * pmp.control_effort(traj.tau[keep],
                                                 traj.U[keep, 0])


# ---------------------------------------------------------------------------
# 1-2: algebraic layer


def test_criterion_01_determinant_closed_form():
    rng = np.random.default_rng(7)
    n = 10_000
    x = rng.uniform(-4, 4, n)
    y = rng.uniform(-4, 4, n)
    x[np.hypot(x, y) < 1e-3] += 1.0
    th = rng.uniform(-3, 3, n)
    xi = rng.uniform(-1, 4, n)
    t0 = time.perf_counter()
    worst = 0.0
    for i in range(n):
        Z = (x[i], y[i], th[i], xi[i])
        det = float(np.linalg.det(pmp.jacobian_gu(Z)))
        assert det > 0.0
        s = _sin_sigma(x[i], y[i], th[i])
        ref = math.exp(-2.0 * xi[i]) + pmp.DEFAULT_EPS * s * s
        worst = max(worst, abs(det - ref) / ref)
    wall = time.perf_counter() - t0
    assert worst < 1e-12
    assert wall < 1.0
    _pass(1, f"control-Jacobian det positive, matches closed form to "
             f"{worst:.1e} rel at {n} points in {wall:.2f} s")


def test_criterion_02_derivative_consistency():
    def random_point(seed, mu_scale=2.0):
        rg = np.random.default_rng(seed)
        Z = np.array([rg.uniform(-4, 4), rg.uniform(-4, 4),
                      rg.uniform(-3, 3), rg.uniform(-1, 4)])
        if math.hypot(Z[0], Z[1]) < 0.3:
            Z[0] += 1.0
        P = rg.uniform(-mu_scale, mu_scale, 4)
        U = rg.uniform(-mu_scale, mu_scale, 3)
        return Z, P, U

    t0 = time.perf_counter()
    worst = max(pmp.fd_consistency(*random_point(5000 + i))
                for i in range(1000))
    wall = time.perf_counter() - t0
    assert worst < 1e-6
    assert wall < 10.0
    _pass(2, f"analytic partials vs central differences {worst:.1e} rel "
             f"at 1000 points in {wall:.2f} s")


# ---------------------------------------------------------------------------
# 3-5: extremal generator


def test_criterion_03_default_sweep_self_consistency(pipe60):
    rep = pipe60["sweep"].report
    a = rep["audit"]
    assert rep["success_rate"] >= 0.95
    assert a["max_g_residual"] < 1e-8
    assert a["hamiltonian_drift"] < 1e-8
    assert a["replay_miss"] < 1e-6
    assert a["fov_margin"] >= -1e-3
    wall = pipe60["sweep_wall_s"]
    if wall is not None:
        assert wall < 300.0
    note = f"{wall:.0f} s" if wall is not None else "cached"
    _pass(3, f"50x50 sweep: success {rep['success_rate']:.3f}, "
             f"|g| {a['max_g_residual']:.1e}, drift "
             f"{a['hamiltonian_drift']:.1e}, replay "
             f"{a['replay_miss']:.1e}, fov margin "
             f"{a['fov_margin']:.1e} ({note})")


def test_criterion_04_terminal_offset_robustness():
    rng = np.random.default_rng(42)
    worst = 0.0
    for _ in range(10):
        alpha = float(rng.uniform(0.05, 8.0))
        beta = float(rng.uniform(0.0, math.pi))
        states = []
        for tau0 in (1e-4, 1e-3, 1e-2):
            cfg = ex.PropagationConfig(tau0=tau0, t_bar=1.5)
            traj = ex.propagate(ex.SeedParams(alpha, beta), cfg)
            i = int(np.argmin(np.abs(traj.tau - 1.0)))
            assert abs(traj.tau[i] - 1.0) < 1e-12  # sample grid hits 1.0
            states.append(traj.Z[i])
        d = max(np.max(np.abs(states[0] - states[1])),
                np.max(np.abs(states[0] - states[2])),
                np.max(np.abs(states[1] - states[2])))
        worst = max(worst, d)
    assert worst < 1e-5
    _pass(4, f"state at t=1 moves {worst:.1e} per component across "
             f"launch offsets 1e-4/1e-3/1e-2, 10 seeds")


def test_criterion_05_mirror_and_scaling():
    # odd symmetry: flipping the transverse seed component mirrors the
    # trajectory across the line of sight
    cfg = ex.PropagationConfig(t_bar=2.0)
    a = ex.propagate(ex.SeedParams(3.6, 1.9), cfg)
    b = ex.propagate(ex.SeedParams(3.6, -1.9), cfg)
    assert len(a) == len(b)
    flip_z = np.array([1.0, -1.0, -1.0, 1.0])
    flip_u = np.array([-1.0, 1.0, 1.0])
    mirror = max(float(np.max(np.abs(a.Z - b.Z * flip_z))),
                 float(np.max(np.abs(a.U - b.U * flip_u))))
    assert mirror < 1e-9

    # scaling family at sigma_max = pi/2: seeds (k^2 a, b) trace
    # (r(k t)/k, sigma(k t), k u(k t)); tolerance set by the eps=1e-4
    # regularization, which is not scale-invariant
    worst = 0.0
    for alpha, beta in ((0.05, 1.3), (0.02, 2.0), (0.1, 0.7)):
        for k in (0.5, 2.0):
            base = ex.PropagationConfig(sigma_max=math.pi / 2, t_bar=2.0,
                                        sample_dtau=0.002)
            scl = ex.PropagationConfig(sigma_max=math.pi / 2, t_bar=2.0 / k,
                                       sample_dtau=0.002 / k)
            A = ex.propagate(ex.SeedParams(alpha, beta), base)
            B = ex.propagate(ex.SeedParams(k * k * alpha, beta), scl)
            ja = {round(t / 0.002): i for i, t in enumerate(A.tau)}
            ia, jb = [], []
            for j, tb in enumerate(B.tau):
                i = ja.get(round(k * tb / 0.002))
                if i is not None and abs(A.tau[i] - k * tb) < 1e-12:
                    ia.append(i)
                    jb.append(j)
            ia = np.array(ia)
            jb = np.array(jb)
            assert len(ia) > 100
            dr = np.max(np.abs(B.r[jb] - A.r[ia] / k)) / np.max(A.r / k)
            dsg = (np.max(np.abs(B.sigma[jb] - A.sigma[ia]))
                   / np.max(np.abs(A.sigma)))
            du = (np.max(np.abs(B.U[jb, 0] - k * A.U[ia, 0]))
                  / np.max(np.abs(k * A.U[:, 0])))
            worst = max(worst, float(dr), float(dsg), float(du))
    assert worst < 1e-3
    _pass(5, f"mirror agreement {mirror:.1e}; scaling family at "
             f"sigma_max=pi/2, k=0.5/2 matches to {worst:.1e} rel")


# ---------------------------------------------------------------------------
# 6-7: network


def test_criterion_06_network_quality(pipe60):
    rmse = pipe60["trep"].final_val_rmse
    assert rmse < 1e-2
    gerr = mlp.gradient_check(pipe60["model"])
    assert gerr < 1e-6

    # bitwise reproducibility on a thinned copy of the default dataset
    data = pipe60["data"]
    sub = ds.Dataset(samples=data.samples[::37].copy(), norm=data.norm,
                     meta=dict(data.meta))
    tc = mlp.TrainConfig(seed=3, epochs=25)
    m1, _ = mlp.train(sub, tc)
    m2, _ = mlp.train(sub, tc)
    assert all(np.array_equal(p, q) for p, q in zip(m1.weights, m2.weights))
    assert all(np.array_equal(p, q) for p, q in zip(m1.biases, m2.biases))
    _pass(6, f"held-out RMSE {rmse:.2e}, gradient check {gerr:.1e}, "
             f"retrain bitwise identical")


def test_criterion_07_latency(pipe60):
    model = pipe60["model"]
    rng = np.random.default_rng(11)
    queries = []
    for _ in range(10_000):
        tg = rng.uniform(5.0, 80.0)
        r = rng.uniform(0.2, 0.999) * SPEED * tg
        queries.append(gd.GuidanceQuery(r, rng.uniform(-1.0, 1.0), tg, SPEED))
    ts = np.empty(len(queries))
    for i, q in enumerate(queries):
        t0 = time.perf_counter()
        gd.nn_command(model, q)
        ts[i] = time.perf_counter() - t0
    med = float(np.median(ts))
    assert med < 1e-4
    _pass(7, f"median command latency {med*1e3:.4f} ms over "
             f"{len(queries)} queries (reference design point ~0.01 ms)")


# ---------------------------------------------------------------------------
# 8-9: closed-loop replication


@pytest.fixture(scope="module")
def closed_loop_rows(pipe30, pipe45, pipe60):
    models = {30.0: pipe30["model"], 45.0: pipe45["model"],
              60.0: pipe60["model"]}
    out = {}
    for smd, t_f in ROWS:
        sc = sim.Scenario(r0=R0, sigma0=SIGMA0, speed=SPEED, t_f=t_f,
                          sigma_max=math.radians(smd))
        res = sim.run(sc, gd.NnLaw(models[smd]))
        jref = matched_reference(smd, t_f, WARM[(smd, t_f)])
        out[(smd, t_f)] = (res, jref)
    return out


def test_criterion_08_closed_loop_replication(closed_loop_rows):
    parts = []
    for (smd, t_f), (res, jref) in closed_loop_rows.items():
        assert not res.no_intercept
        err = res.impact_time - t_f
        peak = math.degrees(res.sigma_peak)
        ratio = res.effort_J / jref
        assert abs(err) <= 0.01
        assert peak <= smd + 0.1
        assert abs(ratio - 1.0) <= 0.05
        parts.append(f"({smd:.0f},{t_f:.0f}): dt={err:+.4f} "
                     f"peak={peak:.2f} J/ref={ratio:.3f}")
    # the 50 s budget leaves the cone bound inactive: peak well below 60
    peak50 = math.degrees(closed_loop_rows[(60.0, 50.0)][0].sigma_peak)
    assert abs(peak50 - 54.3235) <= 3.0
    _pass(8, "; ".join(parts))


def test_criterion_09_effort_dominance(pipe60, closed_loop_rows):
    model = pipe60["model"]
    res60, jref60 = closed_loop_rows[(60.0, 60.0)]
    assert res60.effort_J <= 1.05 * jref60

    # PN has no impact-time mechanism, so the comparison grid lets PN pick
    # its natural arrival per gain and prescribes that time to the nn law
    parts = [f"anchor J/ref={res60.effort_J / jref60:.3f}"]
    for gain, warm in ((4.0, (7.679, -6.180)), (6.0, None)):
        sc = sim.Scenario(r0=R0, sigma0=SIGMA0, speed=SPEED, t_f=60.0,
                          sigma_max=math.radians(60.0))
        pn = sim.run(sc, gd.PnLaw(gain=gain))
        assert not pn.no_intercept
        sc_nn = sim.Scenario(r0=R0, sigma0=SIGMA0, speed=SPEED,
                             t_f=pn.impact_time,
                             sigma_max=math.radians(60.0))
        nn = sim.run(sc_nn, gd.NnLaw(model))
        assert not nn.no_intercept
        assert abs(nn.impact_time - pn.impact_time) <= 0.2
        assert nn.effort_J < pn.effort_J
        if warm is not None:
            jref = matched_reference(60.0, pn.impact_time, warm)
            assert nn.effort_J <= 1.05 * jref
        parts.append(f"N={gain}: J {nn.effort_J:.0f} < {pn.effort_J:.0f} "
                     f"at t={pn.impact_time:.2f}")
    # speed-ambiguous absolute figures, reported not asserted:
    # 1.0390e4 (bounded baseline), 6.2226e3 (shaped baseline),
    # 5.9392e3 (optimal) m^2/s^3
    _pass(9, "; ".join(parts) + "; published absolute efforts "
             "1.0390e4/6.2226e3/5.9392e3 reported, not asserted")


# ---------------------------------------------------------------------------
# 10: pipeline budget


def _source_key(cfg_path):
    h = hashlib.sha256()
    with open(cfg_path, "rb") as fh:
        h.update(fh.read())
    src = os.path.join(os.path.dirname(__file__), "..", "src", "itcg")
    for name in sorted(os.listdir(src)):
        if name.endswith(".py"):
            with open(os.path.join(src, name), "rb") as fh:
                h.update(fh.read())
    return h.hexdigest()[:16]


def test_criterion_10_quickstart_budget(tmp_path):
    cfg_path = os.path.join(os.path.dirname(__file__), "..", "configs",
                            "quickstart.toml")
    cache = (os.path.join(CACHE_DIR, f"qs_{_source_key(cfg_path)}.pkl")
             if CACHE_DIR else "")
    summary = None
    if cache and os.path.exists(cache):
        with open(cache, "rb") as fh:
            summary = pickle.load(fh)
        note = "cached"
    if summary is None:
        out = str(tmp_path / "qs")
        t0 = time.perf_counter()
        for stage in ("sweep", "dataset", "train", "simulate", "compare",
                      "audit", "report"):
            rc = cli.main([stage, "--config", cfg_path, "--out", out])
            assert rc == 0, stage
        wall = time.perf_counter() - t0
        with open(os.path.join(out, "audit.json")) as fh:
            audit = json.load(fh)
        with open(os.path.join(out, "sim_summary.json")) as fh:
            summary = {"wall_s": wall, "audit_passed": audit["passed"],
                       "n_checks": len(audit["checks"]),
                       "sim": json.load(fh)}
        shutil.rmtree(out)
        if cache:
            with open(cache, "wb") as fh:
                pickle.dump(summary, fh)
        note = "fresh"
    assert summary["wall_s"] < 900.0
    assert summary["audit_passed"] is True
    assert not summary["sim"]["no_intercept"]
    _pass(10, f"quickstart sweep-to-report {summary['wall_s']:.0f} s "
              f"(budget 900 s), audit {summary['n_checks']} checks pass, "
              f"impact {summary['sim']['impact_time']:.2f} s ({note})")


# ---------------------------------------------------------------------------
# deployment properties needing the trained pipeline


def test_property_on_policy_command_tracking(pipe60):
    """Deployed command tracks the optimal control along fresh extremals.

    Seeds are off the training grid, at engagement-level effort. The window
    starts at t=0.1 because below it every query maps into the r ~ speed*t_go
    sliver where the 1/t_go command gain amplifies fit error; in closed loop
    that endgame is owned by the homing blend, not the raw network.
    """
    model = pipe60["model"]
    cfg = ex.PropagationConfig(t_bar=1.5)
    for seed in ((3.137, 2.04), (1.7, 0.35), (8.3, 0.6),
                 (2.4, 1.1), (4.8, 1.7), (9.4, 1.45)):
        traj = ex.propagate(ex.SeedParams(*seed), cfg)
        keep = traj.tau >= 0.1
        tau = traj.tau[keep]
        r = traj.r[keep]
        sg = traj.sigma[keep]
        u = traj.U[keep, 0]
        cmd = np.array([gd.nn_command(model,
                                      gd.GuidanceQuery(SPEED * ri, si, ti,
                                                       SPEED),
                                      a_max=math.inf)
                        for ri, si, ti in zip(r, sg, tau)])
        rms = float(np.sqrt(np.mean((cmd - SPEED * u) ** 2)))
        peak = float(np.max(np.abs(SPEED * u)))
        assert rms < 0.03 * peak, (seed, rms / peak)


def test_property_near_collision_command_small(pipe60):
    # on a collision course with just-feasible time-to-go the optimal
    # command is near zero; the deployed law must not inject a turn
    model = pipe60["model"]
    for r in (2000.0, 8000.0, 12000.0):
        t_go = r / SPEED * (1 + 1e-6)
        c = gd.nn_command(model, gd.GuidanceQuery(r, 0.0, t_go, SPEED),
                          a_max=math.inf)
        assert abs(c) < 0.05 * SPEED ** 2 / r
        # the sign fold keeps the law exactly odd through this regime
        cp = gd.nn_command(model, gd.GuidanceQuery(r, 0.013, t_go, SPEED))
        cm = gd.nn_command(model, gd.GuidanceQuery(r, -0.013, t_go, SPEED))
        assert cp == -cm
