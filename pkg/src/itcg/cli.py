"""Command-line pipeline: sweep -> dataset -> train -> simulate/compare -> report.

Every command reads one TOML config (sections [sweep], [dataset], [train],
[guidance], [scenario]) and writes its artifacts under --out. Reruns with the
same config and seed produce byte-identical CSV/JSON artifacts; wall-clock
timings are kept out of the manifest in a separate timing file so the
manifest itself stays deterministic.

Exit codes: 0 success, 2 config error, 3 missing upstream artifact,
4 audit or quality-gate failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

import numpy as np

from . import __version__, dataset, extremal, guidance, mlp, pmp, simulator
from .errors import ConfigError, ItcgError, Malformed, MissingArtifact

MANIFEST_NAME = "manifest.json"
TIMING_NAME = "timing.json"
SWEEP_CSV = "sweep.csv"
SWEEP_REPORT = "sweep_report.json"
DATASET_CSV = "dataset.csv"
MODEL_JSON = "model.json"
TRAIN_REPORT = "train_report.json"
SIM_HISTORY = "sim_history.csv"
SIM_SUMMARY = "sim_summary.json"
COMPARISON_CSV = "comparison.csv"
AUDIT_JSON = "audit.json"
REPORT_JSON = "report.json"
REPORT_MD = "report.md"

SWEEP_CSV_HEADER = ("alpha,beta,tau,x,y,theta,xi,px,py,ptheta,pxi,"
                    "u,omega,mu,r,sigma")


# ---------------------------------------------------------------------------
# Config handling

_SCHEMA = {
    "sweep": {
        "sigma_max_deg": float, "eps": float, "t_bar": float, "tau0": float,
        "rel_tol": float, "abs_tol": float, "sample_dtau": float,
        "reproject_every": int, "n_alpha": int, "n_beta": int,
        "alpha_bar": float, "alpha_min": float, "spacing": str,
        "output_stride": int, "min_success": float,
    },
    "dataset": {"stride": int},
    "train": {
        "seed": int, "epochs": int, "batch_size": int, "learning_rate": float,
        "lr_decay": float, "val_fraction": float, "patience": int,
    },
    "guidance": {"a_max": float, "t_ref": float, "pn_gain": float},
    "scenario": {
        "r0": float, "sigma0_deg": float, "speed": float, "t_f": float,
        "sigma_max_deg": float, "a_max": float, "dt_guidance": float,
        "dt_integrate": float, "capture_radius": float, "law": str,
    },
}

_DEFAULTS = {
    "sweep": {
        "sigma_max_deg": 60.0, "eps": 1e-4, "t_bar": 4.0, "tau0": 1e-3,
        "rel_tol": 1e-10, "abs_tol": 1e-12, "sample_dtau": 0.002,
        "reproject_every": 20, "n_alpha": 50, "n_beta": 50,
        "alpha_bar": 10.0, "alpha_min": 1e-2, "spacing": "log",
        "output_stride": 1, "min_success": 0.95,
    },
    "dataset": {"stride": 8},
    "train": {
        "seed": 0, "epochs": 200, "batch_size": 256, "learning_rate": 1e-2,
        "lr_decay": 0.995, "val_fraction": 0.1, "patience": 50,
    },
    "guidance": {"a_max": 100.0, "t_ref": 1.0, "pn_gain": 3.0},
    "scenario": {
        "r0": 10000.0, "sigma0_deg": 30.0, "speed": 250.0, "t_f": 60.0,
        "sigma_max_deg": 60.0, "a_max": 100.0, "dt_guidance": 0.01,
        "dt_integrate": 0.001, "capture_radius": 0.5, "law": "nn",
    },
}


def load_config(path: str) -> dict:
    """Parse and validate the TOML config, filling documented defaults."""
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except tomllib.TOMLDecodeError as ex:
        raise ConfigError(f"config parse error: {ex}") from ex

    cfg = {}
    for sec, defaults in _DEFAULTS.items():
        cfg[sec] = dict(defaults)
    for sec, table in raw.items():
        if sec not in _SCHEMA:
            raise ConfigError(f"unknown config section [{sec}]")
        if not isinstance(table, dict):
            raise ConfigError(f"[{sec}] must be a table")
        for key, val in table.items():
            if key not in _SCHEMA[sec]:
                raise ConfigError(f"unknown config key {sec}.{key}")
            want = _SCHEMA[sec][key]
            if want is float:
                if isinstance(val, bool) or not isinstance(val, (int, float)):
                    raise ConfigError(f"{sec}.{key}: expected a number")
                val = float(val)
            elif want is int:
                if isinstance(val, bool) or not isinstance(val, int):
                    raise ConfigError(f"{sec}.{key}: expected an integer")
            elif want is str and not isinstance(val, str):
                raise ConfigError(f"{sec}.{key}: expected a string")
            cfg[sec][key] = val
    return cfg


def propagation_config(cfg: dict) -> extremal.PropagationConfig:
    s = cfg["sweep"]
    try:
        return extremal.PropagationConfig(
            sigma_max=math.radians(s["sigma_max_deg"]), eps=s["eps"],
            tau0=s["tau0"], t_bar=s["t_bar"], rel_tol=s["rel_tol"],
            abs_tol=s["abs_tol"], sample_dtau=s["sample_dtau"],
            reproject_every=s["reproject_every"])
    except ValueError as ex:
        raise ConfigError(f"[sweep] {ex}") from ex


def sweep_grid(cfg: dict) -> extremal.SweepGrid:
    s = cfg["sweep"]
    try:
        return extremal.SweepGrid(
            n_alpha=s["n_alpha"], n_beta=s["n_beta"], alpha_bar=s["alpha_bar"],
            alpha_min=s["alpha_min"], spacing=s["spacing"])
    except ValueError as ex:
        raise ConfigError(f"[sweep] {ex}") from ex


def train_config(cfg: dict, seed_override: int | None) -> mlp.TrainConfig:
    t = cfg["train"]
    try:
        return mlp.TrainConfig(
            seed=t["seed"] if seed_override is None else seed_override,
            epochs=t["epochs"], batch_size=t["batch_size"],
            learning_rate=t["learning_rate"], lr_decay=t["lr_decay"],
            val_fraction=t["val_fraction"], patience=t["patience"])
    except ValueError as ex:
        raise ConfigError(f"[train] {ex}") from ex


def scenario_config(cfg: dict) -> simulator.Scenario:
    s = cfg["scenario"]
    try:
        return simulator.Scenario(
            r0=s["r0"], sigma0=math.radians(s["sigma0_deg"]), speed=s["speed"],
            t_f=s["t_f"], sigma_max=math.radians(s["sigma_max_deg"]),
            a_max=s["a_max"], dt_guidance=s["dt_guidance"],
            dt_integrate=s["dt_integrate"], capture_radius=s["capture_radius"])
    except ValueError as ex:
        raise ConfigError(f"[scenario] {ex}") from ex


# ---------------------------------------------------------------------------
# Manifest plumbing

def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _json_dump(path: str, doc) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _update_manifest(out: str, step: str, cfg: dict, seed, artifacts: list,
                     wall_s: float) -> None:
    mpath = os.path.join(out, MANIFEST_NAME)
    manifest = {"version": __version__, "steps": {}}
    if os.path.exists(mpath):
        try:
            with open(mpath) as fh:
                manifest = json.load(fh)
        except (OSError, json.JSONDecodeError):
            pass
    manifest["version"] = __version__
    manifest.setdefault("steps", {})
    manifest["steps"][step] = {
        "config": cfg,
        "seed": seed,
        "artifacts": {os.path.basename(p): "sha256:" + _sha256(p)
                      for p in artifacts},
    }
    _json_dump(mpath, manifest)

    tpath = os.path.join(out, TIMING_NAME)
    timing = {}
    if os.path.exists(tpath):
        try:
            with open(tpath) as fh:
                timing = json.load(fh)
        except (OSError, json.JSONDecodeError):
            timing = {}
    timing[step] = {"wall_time_s": wall_s}
    _json_dump(tpath, timing)


def _require(out: str, name: str) -> str:
    path = os.path.join(out, name)
    if not os.path.exists(path):
        raise MissingArtifact(f"expected {name} in {out}; run the upstream command")
    return path


# ---------------------------------------------------------------------------
# Sweep command and its file formats

def save_sweep_csv(path: str, result, output_stride: int = 1) -> None:
    with open(path, "w") as fh:
        fh.write(SWEEP_CSV_HEADER + "\n")
        for traj in result.trajectories:
            if traj is None:
                continue
            a, b = traj.seed.alpha, traj.seed.beta
            n = len(traj)
            idx = list(range(0, n, output_stride))
            if idx[-1] != n - 1:
                idx.append(n - 1)
            for i in idx:
                vals = (a, b, traj.tau[i], *traj.Z[i], *traj.P[i],
                        *traj.U[i], traj.r[i], traj.sigma[i])
                fh.write(",".join("%.17g" % v for v in vals) + "\n")


def load_sweep_csv(path: str) -> list:
    """Rebuild trajectories from the concatenated sweep file, in file order."""
    trajs = []
    cur_key = None
    rows: list = []

    def flush():
        if not rows:
            return
        data = np.array(rows)
        trajs.append(extremal.ExtremalTrajectory(
            seed=extremal.SeedParams(cur_key[0], cur_key[1]),
            tau=data[:, 0], Z=data[:, 1:5], P=data[:, 5:9], U=data[:, 9:12],
            r=data[:, 12], sigma=data[:, 13], termination=""))

    with open(path) as fh:
        header = fh.readline().rstrip("\n")
        if header != SWEEP_CSV_HEADER:
            raise Malformed(f"unexpected sweep header in {path}")
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 16:
                raise Malformed(f"line {lineno}: expected 16 fields")
            try:
                vals = [float(p) for p in parts]
            except ValueError as ex:
                raise Malformed(f"line {lineno}: {ex}") from ex
            key = (vals[0], vals[1])
            if key != cur_key:
                flush()
                cur_key = key
                rows = []
            rows.append(vals[2:])
    flush()
    if not trajs:
        raise Malformed(f"no trajectories in {path}")
    return trajs


def cmd_sweep(args, cfg: dict) -> int:
    t0 = time.perf_counter()
    pcfg = propagation_config(cfg)
    grid = sweep_grid(cfg)
    result = extremal.sweep(grid, pcfg, threads=args.threads, with_audit=True)

    out_csv = os.path.join(args.out, SWEEP_CSV)
    save_sweep_csv(out_csv, result, cfg["sweep"]["output_stride"])

    report = dict(result.report)
    report.pop("per_seed_audit", None)
    report["grid"] = {"n_alpha": grid.n_alpha, "n_beta": grid.n_beta,
                      "alpha_bar": grid.alpha_bar, "alpha_min": grid.alpha_min,
                      "spacing": grid.spacing}
    report["propagation"] = {
        "sigma_max": pcfg.sigma_max, "eps": pcfg.eps, "tau0": pcfg.tau0,
        "t_bar": pcfg.t_bar, "rel_tol": pcfg.rel_tol, "abs_tol": pcfg.abs_tol,
        "sample_dtau": pcfg.sample_dtau, "reproject_every": pcfg.reproject_every,
        "output_stride": cfg["sweep"]["output_stride"]}
    report["failures"] = [
        {"index": i, "alpha": a, "beta": b, "error": msg}
        for (i, a, b, msg) in result.failures]
    out_rep = os.path.join(args.out, SWEEP_REPORT)
    _json_dump(out_rep, report)

    _update_manifest(args.out, "sweep", cfg["sweep"], None,
                     [out_csv, out_rep], time.perf_counter() - t0)
    print(f"sweep: {report['n_seeds']} seeds, success rate "
          f"{report['success_rate']:.3f}, terminations {report['terminations']}")
    if report["success_rate"] < cfg["sweep"]["min_success"]:
        print(f"sweep: success rate below threshold "
              f"{cfg['sweep']['min_success']}", file=sys.stderr)
        return 4
    return 0


def cmd_dataset(args, cfg: dict) -> int:
    t0 = time.perf_counter()
    sweep_path = _require(args.out, SWEEP_CSV)
    report_path = _require(args.out, SWEEP_REPORT)
    with open(report_path) as fh:
        sweep_report = json.load(fh)
    prop = sweep_report.get("propagation")
    if prop is None:
        raise Malformed("sweep report lacks the propagation block")

    trajs = load_sweep_csv(sweep_path)
    pcfg = extremal.PropagationConfig(
        sigma_max=prop["sigma_max"], eps=prop["eps"], tau0=prop["tau0"],
        t_bar=prop["t_bar"], rel_tol=prop["rel_tol"], abs_tol=prop["abs_tol"],
        sample_dtau=prop["sample_dtau"], reproject_every=prop["reproject_every"])
    g = sweep_report.get("grid", {})
    desc = (f"{g.get('n_alpha', '?')}x{g.get('n_beta', '?')} "
            f"{g.get('spacing', '?')} alpha [{g.get('alpha_min', '?')}, "
            f"{g.get('alpha_bar', '?')}] beta [0, pi]")
    ds = dataset.build(trajs, cfg["dataset"]["stride"], pcfg, desc)
    dataset.validate(ds)

    out_csv = os.path.join(args.out, DATASET_CSV)
    dataset.save(ds, out_csv)
    side = dataset.sidecar_path(out_csv)
    _update_manifest(args.out, "dataset", cfg["dataset"], None,
                     [out_csv, side], time.perf_counter() - t0)
    print(f"dataset: {len(ds)} samples from {len(trajs)} trajectories")
    return 0


def cmd_train(args, cfg: dict) -> int:
    t0 = time.perf_counter()
    ds = dataset.load(_require(args.out, DATASET_CSV))
    tcfg = train_config(cfg, args.seed)
    model, rep = mlp.train(ds, tcfg)

    out_model = os.path.join(args.out, MODEL_JSON)
    mlp.save(model, out_model)
    out_rep = os.path.join(args.out, TRAIN_REPORT)
    _json_dump(out_rep, {
        "final_val_rmse": rep.final_val_rmse,
        "best_epoch": rep.best_epoch,
        "epochs_run": len(rep.train_mse),
        "train_mse": rep.train_mse,
        "val_mse": rep.val_mse,
        "seed": tcfg.seed,
    })
    _update_manifest(args.out, "train", cfg["train"], tcfg.seed,
                     [out_model, out_rep], time.perf_counter() - t0)
    print(f"train: best epoch {rep.best_epoch}, held-out RMSE "
          f"{rep.final_val_rmse:.3e} (normalized)")
    return 0


def _law_from_name(name: str, cfg: dict, model=None):
    g = cfg["guidance"]
    if name == "nn":
        if model is None:
            raise MissingArtifact("the nn law needs a trained model")
        return guidance.NnLaw(model, a_max=g["a_max"],
                              sp=guidance.ScalingParams(t_ref=g["t_ref"]))
    if name == "pn":
        return guidance.PnLaw(gain=g["pn_gain"], a_max=g["a_max"])
    raise ConfigError(f"scenario.law: unknown law {name!r}")


def cmd_simulate(args, cfg: dict) -> int:
    t0 = time.perf_counter()
    sc = scenario_config(cfg)
    model = None
    if cfg["scenario"]["law"] == "nn":
        model = mlp.load(_require(args.out, MODEL_JSON))
    law = _law_from_name(cfg["scenario"]["law"], cfg, model)
    res = simulator.run(sc, law)

    out_hist = os.path.join(args.out, SIM_HISTORY)
    simulator.save_history(out_hist, res)
    out_sum = os.path.join(args.out, SIM_SUMMARY)
    simulator.save_summary(out_sum, res)
    artifacts = [out_hist, out_sum]
    if args.plots:
        artifacts += emit_plots(args.out, [(law.name, res)], sc)
    _update_manifest(args.out, "simulate",
                     {**cfg["scenario"], **cfg["guidance"]}, None,
                     artifacts, time.perf_counter() - t0)
    if res.no_intercept:
        print(f"simulate: NO INTERCEPT, miss {res.miss_distance:.2f} m")
    else:
        print(f"simulate: impact at {res.impact_time:.4f} s "
              f"(desired {sc.t_f}), sigma peak "
              f"{math.degrees(res.sigma_peak):.3f} deg, J {res.effort_J:.4e}")
    return 0


def cmd_compare(args, cfg: dict) -> int:
    t0 = time.perf_counter()
    sc = scenario_config(cfg)
    model = mlp.load(_require(args.out, MODEL_JSON))
    laws = [_law_from_name("nn", cfg, model), _law_from_name("pn", cfg)]
    table = simulator.compare(sc, laws)

    out_csv = os.path.join(args.out, COMPARISON_CSV)
    with open(out_csv, "w") as fh:
        fh.write(table.as_csv())
    artifacts = [out_csv]
    for row in table.rows:
        hist_path = os.path.join(args.out, f"history_{row['law']}.csv")
        simulator.save_history(hist_path, row["result"])
        artifacts.append(hist_path)
    if args.plots:
        artifacts += emit_plots(args.out,
                                [(row["law"], row["result"]) for row in table.rows],
                                sc, prefix="compare_")
    _update_manifest(args.out, "compare",
                     {**cfg["scenario"], **cfg["guidance"]}, None,
                     artifacts, time.perf_counter() - t0)
    for row in table.rows:
        tag = "miss" if row["no_intercept"] else f"impact {row['impact_time']:.4f} s"
        print(f"compare: {row['law']:4s} {tag}, J {row['effort_J']:.4e}")
    return 0


# ---------------------------------------------------------------------------
# Plots (SVG, deterministic bytes: fixed hash salt, no date metadata)

def _mpl():
    import matplotlib
    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "itcg"
    import matplotlib.pyplot as plt
    return plt


def emit_plots(out: str, tagged_results: list, sc, prefix: str = "") -> list:
    """Write the trajectory/lead-angle/control figures.

    `prefix` keeps per-stage figures from clobbering one another (the
    manifest records a digest per stage, so overwrites would fail audit).
    """
    plt = _mpl()
    paths = []

    fig, ax = plt.subplots(figsize=(6, 5))
    for tag, res in tagged_results:
        ax.plot(res.history[:, 1] / 1000.0, res.history[:, 2] / 1000.0, label=tag)
    ax.plot([0.0], [0.0], "k*", markersize=10, label="target")
    ax.set_xlabel("x (km)")
    ax.set_ylabel("y (km)")
    ax.set_title("Pursuer Trajectories")
    ax.legend()
    ax.grid(True, alpha=0.3)
    p = os.path.join(out, prefix + "trajectories.svg")
    fig.savefig(p, format="svg", metadata={"Date": None})
    plt.close(fig)
    paths.append(p)

    fig, ax = plt.subplots(figsize=(6, 4))
    for tag, res in tagged_results:
        ax.plot(res.history[:, 0], np.degrees(res.history[:, 4]), label=tag)
    lim = math.degrees(sc.sigma_max)
    ax.axhline(lim, color="r", linestyle="--", linewidth=1, label="FOV limit")
    ax.axhline(-lim, color="r", linestyle="--", linewidth=1)
    ax.set_xlabel("t (s)")
    ax.set_ylabel("lead angle (deg)")
    ax.set_title("Lead Angle Profiles")
    ax.legend()
    ax.grid(True, alpha=0.3)
    p = os.path.join(out, prefix + "lead_angle.svg")
    fig.savefig(p, format="svg", metadata={"Date": None})
    plt.close(fig)
    paths.append(p)

    fig, ax = plt.subplots(figsize=(6, 4))
    for tag, res in tagged_results:
        ax.plot(res.history[:, 0], res.history[:, 6], label=tag)
    ax.set_xlabel("t (s)")
    ax.set_ylabel("lateral acceleration (m/s$^2$)")
    ax.set_title("Control Profiles")
    ax.legend()
    ax.grid(True, alpha=0.3)
    p = os.path.join(out, prefix + "control.svg")
    fig.savefig(p, format="svg", metadata={"Date": None})
    plt.close(fig)
    paths.append(p)
    return paths


# ---------------------------------------------------------------------------
# Audit

def _audit_check(checks: list, name: str, value: float, bound: float,
                 smaller_is_better: bool = True) -> None:
    passed = value <= bound if smaller_is_better else value >= bound
    checks.append({"name": name, "value": value, "bound": bound,
                   "passed": bool(passed)})


def cmd_audit(args, cfg: dict) -> int:
    t0 = time.perf_counter()
    rng = np.random.default_rng(0 if args.seed is None else args.seed)
    checks: list = []

    # 1. manifest digests for everything recorded so far
    mpath = os.path.join(args.out, MANIFEST_NAME)
    if os.path.exists(mpath):
        with open(mpath) as fh:
            manifest = json.load(fh)
        stale = []
        for step, entry in manifest.get("steps", {}).items():
            for name, digest in entry.get("artifacts", {}).items():
                path = os.path.join(args.out, name)
                if not os.path.exists(path):
                    stale.append(f"{name}: missing")
                elif "sha256:" + _sha256(path) != digest:
                    stale.append(f"{name}: digest mismatch")
        checks.append({"name": "artifact_digests", "value": len(stale),
                       "bound": 0, "passed": not stale, "detail": stale})

    pcfg = propagation_config(cfg)
    eps = pcfg.eps

    # 2. closed-form Jacobian determinant at random off-trajectory points
    worst_det = 0.0
    det_positive = True
    for _ in range(2000):
        Z = [rng.uniform(-3, 3), rng.uniform(-3, 3),
             rng.uniform(-math.pi, math.pi), rng.uniform(0.3, 5.0)]
        if math.hypot(Z[0], Z[1]) < 0.1:
            continue
        M = pmp.jacobian_gu(Z, eps)
        det_num = float(np.linalg.det(np.array(M)))
        det_closed = pmp.gu_det(Z, eps)
        worst_det = max(worst_det, abs(det_num - det_closed))
        if det_closed <= 0.0:
            det_positive = False
    _audit_check(checks, "jacobian_det_closed_form", worst_det, 1e-12)
    checks.append({"name": "jacobian_det_positive", "value": det_positive,
                   "bound": True, "passed": det_positive})

    # 3. analytic partials vs central differences
    worst_fd = 0.0
    for _ in range(200):
        Z = np.array([rng.uniform(-3, 3), rng.uniform(-3, 3),
                      rng.uniform(-math.pi, math.pi), rng.uniform(0.3, 5.0)])
        if math.hypot(Z[0], Z[1]) < 0.1:
            continue
        P = rng.uniform(-5, 5, size=4)
        U = rng.uniform(-3, 3, size=3)
        worst_fd = max(worst_fd, pmp.fd_consistency(Z, P, U, eps))
    _audit_check(checks, "partials_vs_finite_difference", worst_fd, 1e-6)

    # 4. fresh mini-sweep invariants at full resolution
    mini = extremal.SweepGrid(n_alpha=5, n_beta=5,
                              alpha_bar=cfg["sweep"]["alpha_bar"],
                              alpha_min=cfg["sweep"]["alpha_min"],
                              spacing=cfg["sweep"]["spacing"])
    res = extremal.sweep(mini, pcfg, threads=args.threads, with_audit=True)
    agg = res.report["audit"]
    _audit_check(checks, "sweep_g_residual", agg["max_g_residual"], 1e-8)
    _audit_check(checks, "sweep_hamiltonian_drift", agg["hamiltonian_drift"], 1e-8)
    _audit_check(checks, "sweep_replay_miss", agg["replay_miss"], 1e-6)
    _audit_check(checks, "sweep_fov_margin", agg["fov_margin"], -1e-3,
                 smaller_is_better=False)
    _audit_check(checks, "sweep_success_rate", res.report["success_rate"], 0.95,
                 smaller_is_better=False)

    # 5. trained model, when present
    model_path = os.path.join(args.out, MODEL_JSON)
    if os.path.exists(model_path):
        model = mlp.load(model_path)
        gerr = mlp.gradient_check(model, rng=rng)
        _audit_check(checks, "model_gradient_check", gerr, 1e-6)
        rep_path = os.path.join(args.out, TRAIN_REPORT)
        if os.path.exists(rep_path):
            with open(rep_path) as fh:
                rmse = json.load(fh).get("final_val_rmse", math.inf)
            _audit_check(checks, "model_heldout_rmse", rmse, 1e-2)

    # 6. simulation bookkeeping, when present
    sum_path = os.path.join(args.out, SIM_SUMMARY)
    hist_path = os.path.join(args.out, SIM_HISTORY)
    if os.path.exists(sum_path) and os.path.exists(hist_path):
        with open(sum_path) as fh:
            summary = json.load(fh)
        hist = np.loadtxt(hist_path, delimiter=",", skiprows=1, ndmin=2)
        j_file = 0.5 * float(np.trapezoid(hist[:, 6] ** 2, hist[:, 0]))
        j_rep = summary["effort_J"]
        rel = abs(j_file - j_rep) / max(abs(j_rep), 1e-30)
        _audit_check(checks, "effort_accounting", rel, 1e-9)
        intercepted = not summary.get("no_intercept", True)
        checks.append({"name": "sim_intercept", "value": intercepted,
                       "bound": True, "passed": intercepted})
        # the law answers for the cone only up to the scheduled impact;
        # after a miss the fly-by makes the lead angle spin regardless
        t_end = summary.get("impact_time") or summary["meta"]["t_f"]
        in_window = hist[hist[:, 0] <= t_end + 1e-9]
        sig_peak = float(np.max(np.abs(in_window[:, 4]))) if len(in_window) else 0.0
        lim = math.radians(cfg["scenario"]["sigma_max_deg"]) + math.radians(0.1)
        _audit_check(checks, "sim_fov_peak", sig_peak, lim)

    passed = all(c["passed"] for c in checks)
    doc = {"passed": passed, "checks": checks}
    out_path = os.path.join(args.out, AUDIT_JSON)
    _json_dump(out_path, doc)
    _update_manifest(args.out, "audit", {}, args.seed, [out_path],
                     time.perf_counter() - t0)
    for c in checks:
        status = "ok " if c["passed"] else "FAIL"
        print(f"audit: [{status}] {c['name']}: {c['value']} vs {c['bound']}")
    return 0 if passed else 4


def cmd_report(args, cfg: dict) -> int:
    t0 = time.perf_counter()
    sections = {}
    for name, key in ((SWEEP_REPORT, "sweep"), (TRAIN_REPORT, "train"),
                      (SIM_SUMMARY, "simulate"), (AUDIT_JSON, "audit")):
        path = os.path.join(args.out, name)
        if os.path.exists(path):
            with open(path) as fh:
                sections[key] = json.load(fh)
    side = dataset.sidecar_path(os.path.join(args.out, DATASET_CSV))
    if os.path.exists(side):
        with open(side) as fh:
            meta = json.load(fh).get("meta", {})
        meta.pop("trajectories", None)
        sections["dataset"] = meta
    comp = os.path.join(args.out, COMPARISON_CSV)
    if os.path.exists(comp):
        with open(comp) as fh:
            sections["compare"] = fh.read().strip().split("\n")
    if not sections:
        raise MissingArtifact(f"nothing to report in {args.out}")

    doc = {"version": __version__, "sections": sections}
    out_json = os.path.join(args.out, REPORT_JSON)
    _json_dump(out_json, doc)

    lines = ["# Pipeline report", ""]
    if "sweep" in sections:
        s = sections["sweep"]
        lines += [f"- Sweep: {s['n_seeds']} seeds, success rate "
                  f"{s['success_rate']:.3f}, terminations {s['terminations']}"]
        if "audit" in s:
            a = s["audit"]
            lines += [f"  - worst residual {a['max_g_residual']:.2e}, "
                      f"drift {a['hamiltonian_drift']:.2e}, replay "
                      f"{a['replay_miss']:.2e}, FOV margin {a['fov_margin']:.2e}"]
    if "dataset" in sections:
        d = sections["dataset"]
        lines += [f"- Dataset: {d.get('n_samples')} samples, stride "
                  f"{d.get('stride')}, grid {d.get('grid')}"]
    if "train" in sections:
        t = sections["train"]
        lines += [f"- Training: held-out RMSE {t['final_val_rmse']:.3e} "
                  f"(normalized), best epoch {t['best_epoch']}"]
    if "simulate" in sections:
        s = sections["simulate"]
        if s.get("no_intercept"):
            lines += [f"- Simulation: no intercept, miss {s['miss_distance']:.2f} m"]
        else:
            lines += [f"- Simulation: impact {s['impact_time']:.4f} s, "
                      f"sigma peak {math.degrees(s['sigma_peak']):.3f} deg, "
                      f"J {s['effort_J']:.4e} m^2/s^3"]
    if "compare" in sections:
        lines += ["- Comparison:"] + [f"  - {row}" for row in sections["compare"]]
    if "audit" in sections:
        a = sections["audit"]
        lines += [f"- Audit: {'PASS' if a['passed'] else 'FAIL'} "
                  f"({len(a['checks'])} checks)"]
    out_md = os.path.join(args.out, REPORT_MD)
    with open(out_md, "w") as fh:
        fh.write("\n".join(lines) + "\n")

    _update_manifest(args.out, "report", {}, None, [out_json, out_md],
                     time.perf_counter() - t0)
    print("\n".join(lines))
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="itcg",
        description="Impact-time guidance pipeline: extremal sweep, dataset, "
                    "network training, closed-loop simulation.")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name, fn, needs_plots in (
            ("sweep", cmd_sweep, False), ("dataset", cmd_dataset, False),
            ("train", cmd_train, False), ("simulate", cmd_simulate, True),
            ("compare", cmd_compare, True), ("audit", cmd_audit, False),
            ("report", cmd_report, False)):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="TOML config path")
        p.add_argument("--out", default="out", help="artifact directory")
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--seed", type=int, default=None,
                       help="override the training seed")
        if needs_plots:
            p.add_argument("--plots", action="store_true",
                           help="emit SVG figures")
        p.set_defaults(func=fn)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        os.makedirs(args.out, exist_ok=True)
        return args.func(args, cfg)
    except ConfigError as ex:
        print(f"config error: {ex}", file=sys.stderr)
        return 2
    except MissingArtifact as ex:
        print(f"missing artifact: {ex}", file=sys.stderr)
        return 3
    except ItcgError as ex:
        print(f"error: {ex}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
