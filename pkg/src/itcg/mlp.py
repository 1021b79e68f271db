"""Feedforward command map (r, sigma, t_go) -> u and its trainer.

Architecture is fixed small: two tanh hidden layers of 20 units and a linear
scalar output, operating entirely in normalized [-1, 1] coordinates; the
model carries the dataset's NormStats so callers query in physical units.
Training is mini-batch Adam on mean-squared error with a 90/10 split and
early stopping that keeps the best-validation parameters. Everything is
plain numpy and bitwise reproducible for a fixed seed.
"""

from __future__ import annotations

import json
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .dataset import Dataset, NormStats
from .errors import Diverged, IoError, Malformed, VersionMismatch

LAYER_SIZES = (3, 20, 20, 1)
MODEL_FORMAT_VERSION = 1

_IDENTITY_NORM = NormStats(np.full(4, -1.0), np.full(4, 1.0))


@dataclass
class MlpModel:
    weights: list        # [(3,20), (20,20), (20,1)] arrays
    biases: list         # [(20,), (20,), (1,)] arrays
    norm: NormStats
    diagnostics: dict = field(default_factory=lambda: {"stale_query": False})

    def __post_init__(self):
        shapes = [(w.shape, b.shape) for w, b in zip(self.weights, self.biases)]
        want = [((LAYER_SIZES[i], LAYER_SIZES[i + 1]), (LAYER_SIZES[i + 1],))
                for i in range(len(LAYER_SIZES) - 1)]
        if shapes != want:
            raise ValueError(f"parameter shapes {shapes} do not match {want}")
        for w, b in zip(self.weights, self.biases):
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError("non-finite parameters")

    def copy(self) -> "MlpModel":
        return MlpModel([w.copy() for w in self.weights],
                        [b.copy() for b in self.biases], self.norm)


@dataclass(frozen=True, slots=True)
class TrainConfig:
    seed: int = 0
    epochs: int = 200
    batch_size: int = 256
    learning_rate: float = 1e-2
    lr_decay: float = 0.995       # per-epoch multiplicative step-size schedule
    val_fraction: float = 0.1
    patience: int = 50            # stall epochs before early stop

    def __post_init__(self):
        if not 0.0 < self.val_fraction <= 0.5:
            raise ValueError("val_fraction must lie in (0, 0.5]")
        if self.epochs < 1 or self.batch_size < 1 or self.patience < 1:
            raise ValueError("epochs, batch_size, patience must be positive")
        if self.learning_rate <= 0.0 or not 0.0 < self.lr_decay <= 1.0:
            raise ValueError("bad step-size schedule")


@dataclass
class TrainReport:
    train_mse: list
    val_mse: list
    best_epoch: int
    final_val_rmse: float
    wall_time_s: float


def init(seed: int, norm: NormStats | None = None) -> MlpModel:
    """Fan-in-scaled symmetric uniform initialization, deterministic in seed."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for n_in, n_out in zip(LAYER_SIZES[:-1], LAYER_SIZES[1:]):
        bound = 1.0 / math.sqrt(n_in)
        weights.append(rng.uniform(-bound, bound, size=(n_in, n_out)))
        biases.append(np.zeros(n_out))
    return MlpModel(weights, biases, norm if norm is not None else _IDENTITY_NORM)


def forward_normalized(m: MlpModel, Xn: np.ndarray) -> np.ndarray:
    """Batch forward in normalized coordinates; Xn is (n, 3), returns (n,)."""
    h = np.tanh(Xn @ m.weights[0] + m.biases[0])
    h = np.tanh(h @ m.weights[1] + m.biases[1])
    return (h @ m.weights[2] + m.biases[2])[:, 0]


def forward(m: MlpModel, r: float, sigma: float, t_go: float) -> float:
    """Scalar command in physical normalized units (output denormalized)."""
    xn = m.norm.normalize_inputs(r, sigma, t_go)
    if max(abs(xn[0]), abs(xn[1]), abs(xn[2])) > 1.0 + 1e-9:
        m.diagnostics["stale_query"] = True
    h = np.tanh(xn @ m.weights[0] + m.biases[0])
    h = np.tanh(h @ m.weights[1] + m.biases[1])
    yn = float((h @ m.weights[2])[0]) + float(m.biases[2][0])
    return float(m.norm.denormalize_u(yn))


def _forward_cache(weights, biases, Xn):
    h1 = np.tanh(Xn @ weights[0] + biases[0])
    h2 = np.tanh(h1 @ weights[1] + biases[1])
    out = (h2 @ weights[2] + biases[2])[:, 0]
    return h1, h2, out


def _backprop(weights, biases, Xn, Yn):
    """Mean-squared-error loss and its parameter gradients on one batch."""
    n = len(Xn)
    h1, h2, out = _forward_cache(weights, biases, Xn)
    err = out - Yn
    loss = float(err @ err) / n
    # dL/dout = 2 err / n
    go = (2.0 / n) * err
    gW3 = h2.T @ go[:, None]
    gb3 = np.array([go.sum()])
    gh2 = go[:, None] * weights[2][:, 0]
    gz2 = gh2 * (1.0 - h2 * h2)
    gW2 = h1.T @ gz2
    gb2 = gz2.sum(axis=0)
    gh1 = gz2 @ weights[1].T
    gz1 = gh1 * (1.0 - h1 * h1)
    gW1 = Xn.T @ gz1
    gb1 = gz1.sum(axis=0)
    return loss, [gW1, gW2, gW3], [gb1, gb2, gb3]


def _mse(weights, biases, Xn, Yn) -> float:
    _, _, out = _forward_cache(weights, biases, Xn)
    d = out - Yn
    return float(d @ d) / len(Xn)


def train(ds: Dataset, cfg: TrainConfig = TrainConfig()) -> tuple[MlpModel, TrainReport]:
    """Fit the command map to a dataset; deterministic for a fixed seed."""
    t_start = time.perf_counter()
    rng = np.random.default_rng(cfg.seed)

    rows_n = ds.norm.normalize(ds.samples)
    Xn, Yn = rows_n[:, :3], rows_n[:, 3]
    n = len(Xn)
    perm = rng.permutation(n)
    n_val = max(1, int(round(cfg.val_fraction * n)))
    val_idx, tr_idx = perm[:n_val], perm[n_val:]
    Xt, Yt = Xn[tr_idx], Yn[tr_idx]
    Xv, Yv = Xn[val_idx], Yn[val_idx]

    model = init(cfg.seed, ds.norm)
    W, B = model.weights, model.biases
    mW = [np.zeros_like(w) for w in W]
    vW = [np.zeros_like(w) for w in W]
    mB = [np.zeros_like(b) for b in B]
    vB = [np.zeros_like(b) for b in B]
    beta1, beta2, adam_eps = 0.9, 0.999, 1e-8
    step = 0
    lr = cfg.learning_rate

    train_hist, val_hist = [], []
    best_val = math.inf
    best_epoch = -1
    best_W = [w.copy() for w in W]
    best_B = [b.copy() for b in B]
    stall = 0

    n_tr = len(Xt)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n_tr)
        for k0 in range(0, n_tr, cfg.batch_size):
            sel = order[k0:k0 + cfg.batch_size]
            loss, gW, gB = _backprop(W, B, Xt[sel], Yt[sel])
            if not math.isfinite(loss):
                raise Diverged(f"training loss non-finite at epoch {epoch}")
            step += 1
            c1 = 1.0 - beta1 ** step
            c2 = 1.0 - beta2 ** step
            for i in range(3):
                mW[i] = beta1 * mW[i] + (1 - beta1) * gW[i]
                vW[i] = beta2 * vW[i] + (1 - beta2) * gW[i] * gW[i]
                W[i] -= lr * (mW[i] / c1) / (np.sqrt(vW[i] / c2) + adam_eps)
                mB[i] = beta1 * mB[i] + (1 - beta1) * gB[i]
                vB[i] = beta2 * vB[i] + (1 - beta2) * gB[i] * gB[i]
                B[i] -= lr * (mB[i] / c1) / (np.sqrt(vB[i] / c2) + adam_eps)
        lr *= cfg.lr_decay

        tr_mse = _mse(W, B, Xt, Yt)
        va_mse = _mse(W, B, Xv, Yv)
        if not (math.isfinite(tr_mse) and math.isfinite(va_mse)):
            raise Diverged(f"epoch {epoch}: evaluation loss non-finite")
        train_hist.append(tr_mse)
        val_hist.append(va_mse)
        if va_mse < best_val:
            best_val = va_mse
            best_epoch = epoch
            for i in range(3):
                best_W[i][...] = W[i]
                best_B[i][...] = B[i]
            stall = 0
        else:
            stall += 1
            if stall >= cfg.patience:
                break

    model = MlpModel(best_W, best_B, ds.norm)
    report = TrainReport(train_hist, val_hist, best_epoch,
                         math.sqrt(best_val), time.perf_counter() - t_start)
    return model, report


def gradient_check(m: MlpModel, x_raw=None, y_raw=None, rng=None) -> float:
    """Backprop vs central finite differences on one squared-error sample.

    Returns the worst discrepancy relative to max(1, |gradient|); analytic
    gradients are exact, so anything above ~1e-8 indicates a defect.
    """
    if rng is None:
        rng = np.random.default_rng(1234)
    if x_raw is None:
        xn = rng.uniform(-1.0, 1.0, size=3)
    else:
        xn = np.array(m.norm.normalize_inputs(*x_raw))
    if y_raw is None:
        yn = float(rng.uniform(-1.0, 1.0))
    else:
        yn = float(2.0 * (y_raw - m.norm.lo[3]) / (m.norm.hi[3] - m.norm.lo[3]) - 1.0)

    Xn = xn[None, :]
    Yn = np.array([yn])
    _, gW, gB = _backprop(m.weights, m.biases, Xn, Yn)

    h = 1e-5
    worst = 0.0
    params = list(zip(m.weights, gW)) + list(zip(m.biases, gB))
    for arr, grad in params:
        flat = arr.reshape(-1)
        gflat = grad.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + h
            lp = _mse(m.weights, m.biases, Xn, Yn)
            flat[i] = keep - h
            lm = _mse(m.weights, m.biases, Xn, Yn)
            flat[i] = keep
            fd = (lp - lm) / (2.0 * h)
            rel = abs(fd - gflat[i]) / max(1.0, abs(fd), abs(gflat[i]))
            if rel > worst:
                worst = rel
    return worst


def save(m: MlpModel, path: str) -> None:
    doc = {
        "format_version": MODEL_FORMAT_VERSION,
        "layer_sizes": list(LAYER_SIZES),
        "activation": "tanh",
        "weights": [w.reshape(-1).tolist() for w in m.weights],
        "biases": [b.tolist() for b in m.biases],
        "norm": m.norm.to_dict(),
    }
    try:
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as ex:
        raise IoError(f"cannot write model: {ex}") from ex


def load(path: str) -> MlpModel:
    if not os.path.exists(path):
        raise IoError(f"no model file at {path}")
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as ex:
        raise IoError(f"cannot read model: {ex}") from ex
    except json.JSONDecodeError as ex:
        raise Malformed(f"model file is not valid JSON: {ex}") from ex
    if doc.get("format_version") != MODEL_FORMAT_VERSION:
        raise VersionMismatch(
            f"model format {doc.get('format_version')!r}, expected {MODEL_FORMAT_VERSION}")
    if tuple(doc.get("layer_sizes", ())) != LAYER_SIZES:
        raise Malformed(f"unsupported layer sizes {doc.get('layer_sizes')}")
    try:
        weights = []
        biases = []
        for i in range(len(LAYER_SIZES) - 1):
            shape = (LAYER_SIZES[i], LAYER_SIZES[i + 1])
            weights.append(np.array(doc["weights"][i], dtype=float).reshape(shape))
            biases.append(np.array(doc["biases"][i], dtype=float))
        norm = NormStats.from_dict(doc["norm"])
    except (KeyError, IndexError, TypeError, ValueError) as ex:
        raise Malformed(f"bad model document: {ex}") from ex
    return MlpModel(weights, biases, norm)
