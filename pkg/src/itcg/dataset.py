"""Supervised-learning samples distilled from extremal sweeps.

Each stored row maps the polar feedback state (range r, lead angle sigma,
time-to-go t_go) to the optimal turn rate u. Two reductions shrink the table:

* Mirror fold: the optimal command is odd in the lead angle,
  u(r, -sigma, t_go) = -u(r, sigma, t_go), so rows with sigma < 0 are stored
  as (r, -sigma, t_go, -u) and the sign is restored at query time. The file
  therefore contains only sigma in [0, sigma_max].
* Near-terminal cut: samples with t_go < 2 tau0 sit against the coordinate
  singularity at the impact point and carry u ~ 0; they are dropped.

Channel normalization maps each of r, sigma, t_go, u affinely onto [-1, 1].
The sigma and t_go extents are pinned to [0, sigma_max] and [0, t_bar] so a
retrained table keeps identical input semantics; r and u use data extents.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

import numpy as np

from . import __version__, geometry
from .errors import EmptySweep, IoError, Malformed

CSV_HEADER = "r,sigma,tgo,u"
CHANNELS = ("r", "sigma", "tgo", "u")
DEGENERATE_HALF_WIDTH = 1e-6


@dataclass(frozen=True, slots=True)
class Sample:
    r: float
    sigma: float
    t_go: float
    u: float


@dataclass(frozen=True)
class NormStats:
    """Per-channel affine maps onto [-1, 1]; lo/hi are length-4 (r, sigma, tgo, u)."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        if lo.shape != (4,) or hi.shape != (4,):
            raise ValueError("NormStats needs 4 channels")
        if not np.all(hi > lo):
            raise ValueError("each channel needs hi > lo")

    def normalize(self, rows: np.ndarray) -> np.ndarray:
        return 2.0 * (np.asarray(rows, dtype=float) - self.lo) / (self.hi - self.lo) - 1.0

    def denormalize(self, rows: np.ndarray) -> np.ndarray:
        return self.lo + 0.5 * (np.asarray(rows, dtype=float) + 1.0) * (self.hi - self.lo)

    def normalize_inputs(self, r, sigma, t_go):
        w = self.hi - self.lo
        return (2.0 * (r - self.lo[0]) / w[0] - 1.0,
                2.0 * (sigma - self.lo[1]) / w[1] - 1.0,
                2.0 * (t_go - self.lo[2]) / w[2] - 1.0)

    def denormalize_u(self, un):
        return self.lo[3] + 0.5 * (un + 1.0) * (self.hi[3] - self.lo[3])

    def to_dict(self) -> dict:
        return {"lo": [float(v) for v in self.lo], "hi": [float(v) for v in self.hi],
                "channels": list(CHANNELS)}

    @classmethod
    def from_dict(cls, d: dict) -> "NormStats":
        try:
            return cls(np.array(d["lo"], dtype=float), np.array(d["hi"], dtype=float))
        except (KeyError, TypeError, ValueError) as ex:
            raise Malformed(f"bad NormStats block: {ex}") from ex


@dataclass
class Dataset:
    samples: np.ndarray  # (n, 4) columns r, sigma, tgo, u
    norm: NormStats
    meta: dict

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        if self.samples.ndim != 2 or self.samples.shape[1] != 4:
            raise ValueError("samples must be (n, 4)")
        if len(self.samples) == 0:
            raise EmptySweep("dataset has no samples")

    def __len__(self):
        return len(self.samples)

    @property
    def inputs(self) -> np.ndarray:
        return self.samples[:, :3]

    @property
    def targets(self) -> np.ndarray:
        return self.samples[:, 3]


def polar_of_trajectory(traj) -> list:
    """(tau, r, sigma) rows recomputed from the stored Cartesian states."""
    out = []
    for i in range(len(traj)):
        p = geometry.to_polar(geometry.CartesianState(
            traj.Z[i, 0], traj.Z[i, 1], traj.Z[i, 2]))
        out.append((float(traj.tau[i]), p.r, p.sigma))
    return out


def extract_samples(traj, stride: int = 1) -> list[Sample]:
    """Every stride-th point, mirror-folded to sigma >= 0.

    Points with t_go below twice the seed offset (tau[0] is that offset by
    construction) are dropped.
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    tau_cut = 2.0 * float(traj.tau[0])
    out = []
    for i in range(0, len(traj), stride):
        t = float(traj.tau[i])
        if t < tau_cut:
            continue
        r = float(traj.r[i])
        s = float(traj.sigma[i])
        u = float(traj.U[i, 0])
        if s < 0.0:
            s, u = -s, -u
        out.append(Sample(r, s, t, u))
    return out


def build(trajs, stride: int, cfg, grid_desc: str = "") -> Dataset:
    """Fold a list of trajectories (None entries skipped) into one Dataset."""
    rows = []
    provenance = []
    for traj in trajs:
        if traj is None:
            continue
        kept = extract_samples(traj, stride)
        if not kept:
            continue
        provenance.append({"alpha": traj.seed.alpha, "beta": traj.seed.beta,
                           "n": len(kept)})
        rows.extend((s.r, s.sigma, s.t_go, s.u) for s in kept)
    if not rows:
        raise EmptySweep("no trajectory contributed samples")

    data = np.array(rows, dtype=float)

    def extent(col, fixed=None):
        if fixed is not None:
            return fixed
        lo, hi = float(np.min(col)), float(np.max(col))
        if hi - lo < 1e-12:
            half = max(abs(lo), abs(hi), DEGENERATE_HALF_WIDTH)
            mid = 0.5 * (lo + hi)
            return mid - half, mid + half
        return lo, hi

    r_lo, r_hi = extent(data[:, 0])
    s_lo, s_hi = extent(None, fixed=(0.0, cfg.sigma_max))
    t_lo, t_hi = extent(None, fixed=(0.0, cfg.t_bar))
    u_lo, u_hi = extent(data[:, 3])
    norm = NormStats(np.array([r_lo, s_lo, t_lo, u_lo]),
                     np.array([r_hi, s_hi, t_hi, u_hi]))
    meta = {
        "version": __version__,
        "sigma_max": cfg.sigma_max,
        "eps": cfg.eps,
        "t_bar": cfg.t_bar,
        "tau0": cfg.tau0,
        "stride": stride,
        "grid": grid_desc,
        "n_samples": len(data),
        "trajectories": provenance,
    }
    return Dataset(data, norm, meta)


def build_from_sweep(sweep_result, stride: int) -> Dataset:
    g = sweep_result.grid
    desc = (f"{g.n_alpha}x{g.n_beta} {g.spacing} alpha [{g.alpha_min}, "
            f"{g.alpha_bar}] beta [0, pi]")
    return build(sweep_result.trajectories, stride, sweep_result.cfg, desc)


def sidecar_path(path: str) -> str:
    base, ext = os.path.splitext(path)
    return (base if ext == ".csv" else path) + ".meta.json"


def save(ds: Dataset, path: str) -> None:
    try:
        with open(path, "w") as fh:
            fh.write(CSV_HEADER + "\n")
            for row in ds.samples:
                fh.write("%.17g,%.17g,%.17g,%.17g\n" % tuple(row))
        with open(sidecar_path(path), "w") as fh:
            json.dump({"norm": ds.norm.to_dict(), "meta": ds.meta}, fh,
                      indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as ex:
        raise IoError(f"cannot write dataset: {ex}") from ex


def load(path: str) -> Dataset:
    side = sidecar_path(path)
    if not os.path.exists(side):
        raise Malformed(f"missing sidecar {side}")
    try:
        with open(side) as fh:
            blob = json.load(fh)
    except OSError as ex:
        raise IoError(f"cannot read sidecar: {ex}") from ex
    except json.JSONDecodeError as ex:
        raise Malformed(f"sidecar is not valid JSON: {ex}") from ex
    if "norm" not in blob or "meta" not in blob:
        raise Malformed("sidecar lacks norm/meta blocks")
    norm = NormStats.from_dict(blob["norm"])

    rows = []
    try:
        fh = open(path)
    except OSError as ex:
        raise IoError(f"cannot read dataset: {ex}") from ex
    with fh:
        header = fh.readline().rstrip("\n")
        if header != CSV_HEADER:
            raise Malformed(f"line 1: expected header {CSV_HEADER!r}")
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 4:
                raise Malformed(f"line {lineno}: expected 4 fields, got {len(parts)}")
            try:
                rows.append([float(p) for p in parts])
            except ValueError as ex:
                raise Malformed(f"line {lineno}: {ex}") from ex
    if not rows:
        raise Malformed("dataset body is empty")
    return Dataset(np.array(rows, dtype=float), norm, blob["meta"])


def validate(ds: Dataset) -> None:
    """Raise Malformed if any stored row breaks the dataset invariants."""
    s = ds.samples
    sig_max = float(ds.meta.get("sigma_max", math.pi / 2))
    if np.any(s[:, 1] < 0.0) or np.any(s[:, 1] > sig_max + 1e-3):
        raise Malformed("sigma outside [0, sigma_max]")
    if np.any(s[:, 2] < s[:, 0] - 1e-9):
        raise Malformed("found t_go < r (unreachable sample)")
