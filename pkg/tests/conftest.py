"""Shared fixtures: default pipelines built once per session.

The closed-loop acceptance tests need a trained model per FOV half-angle,
each produced by the exact default chain (50x50 sweep, stride-8 dataset,
seed-0 / 200-epoch training). Building all three takes ~15 min on one
core, so the bundles are session-scoped and, when the environment variable
ITCG_TEST_CACHE points at a writable directory, pickled there and reused
across sessions. CI runs without the variable and builds from scratch.
"""

import math
import os
import pickle
import time

import pytest
from hypothesis import HealthCheck, settings

from itcg import dataset as ds
from itcg import extremal as ex
from itcg import mlp

settings.register_profile(
    "itcg", deadline=None, max_examples=50,
    suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("itcg")

CACHE_DIR = os.environ.get("ITCG_TEST_CACHE", "")

DEFAULT_TRAIN = mlp.TrainConfig()
DEFAULT_STRIDE = 8


def _cache_load(name):
    if not CACHE_DIR:
        return None
    path = os.path.join(CACHE_DIR, name)
    if not os.path.exists(path):
        return None
    with open(path, "rb") as fh:
        return pickle.load(fh)


def _cache_store(name, obj):
    if CACHE_DIR:
        with open(os.path.join(CACHE_DIR, name), "wb") as fh:
            pickle.dump(obj, fh)


def _pipeline(tag: str, sigma_max_deg: float) -> dict:
    cfg = ex.PropagationConfig(sigma_max=math.radians(sigma_max_deg))
    sweep_wall = None
    sweep = _cache_load(f"def_sweep{tag}.pkl")
    if sweep is None:
        t0 = time.time()
        sweep = ex.sweep(ex.SweepGrid(n_alpha=50, n_beta=50), cfg)
        sweep_wall = time.time() - t0
        sweep.report.pop("per_seed_audit", None)
        _cache_store(f"def_sweep{tag}.pkl", sweep)
    data = _cache_load(f"def8_ds{tag}.pkl")
    if data is None:
        data = ds.build_from_sweep(sweep, stride=DEFAULT_STRIDE)
        _cache_store(f"def8_ds{tag}.pkl", data)
    model = _cache_load(f"def8_model{tag}.pkl")
    trep = _cache_load(f"def8_trep{tag}.pkl")
    if model is None or trep is None:
        model, trep = mlp.train(data, DEFAULT_TRAIN)
        _cache_store(f"def8_model{tag}.pkl", model)
        _cache_store(f"def8_trep{tag}.pkl", trep)
    return {"cfg": cfg, "sweep": sweep, "data": data, "model": model,
            "trep": trep, "sweep_wall_s": sweep_wall}


@pytest.fixture(scope="session")
def pipe60():
    return _pipeline("60", 60.0)


@pytest.fixture(scope="session")
def pipe45():
    return _pipeline("45", 45.0)


@pytest.fixture(scope="session")
def pipe30():
    return _pipeline("30", 30.0)
