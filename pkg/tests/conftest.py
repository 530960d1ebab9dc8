import os
import tempfile

# Settings and the engine are read at import time
os.environ.setdefault("CHEMOLETHAL_DATABASE_URL", "sqlite://")
os.environ.setdefault("CHEMOLETHAL_OUTPUT_ROOT", tempfile.mkdtemp(prefix="chemolethal-runs-"))
os.environ.setdefault("CHEMOLETHAL_SWEEP_WORKERS", "1")
os.environ.setdefault("CHEMOLETHAL_LOG_LEVEL", "WARNING")

import pytest

from chemolethal.schemas import Grid, ModelParams, RunConfig


def coexistence_model(**overrides) -> dict:
    """Parameters whose stability gate holds: u* = 0.6, v* = 0.8"""
    model = dict(
        d1=1.0, d2=1.0, chi=1.0, r=1.0, mu=0.5, a=1.0, b=1.0, m=1.0, kappa=2.0,
        alpha=0.5, beta=0.25, tau=1, source={"kind": "constant", "amplitude": 0.2},
    )
    model.update(overrides)
    return model


def extinction_model(**overrides) -> dict:
    """fbar mu = 2 >= b r = 1: only the semi-coexistence state (0, 2)"""
    return coexistence_model(mu=1.0, source={"kind": "constant", "amplitude": 2.0}, **overrides)


def run_config(model: dict, tmp_path, **sections) -> RunConfig:
    data = {
        "model": model,
        "grid": {"dim": 1, "extents": [4.0], "cells": [32]},
        "control": {"t_end": 1.0},
        "initial": {"kind": "equilibrium", "offset": 0.1, "amplitude": 0.05},
        "output": {"directory": str(tmp_path / "out")},
    }
    for name, value in sections.items():
        data[name] = {**data.get(name, {}), **value} if isinstance(value, dict) else value
    return RunConfig.model_validate(data)


@pytest.fixture
def params() -> ModelParams:
    return ModelParams.model_validate(coexistence_model())


@pytest.fixture
def grid_1d() -> Grid:
    return Grid(dim=1, extents=(1.0,), cells=(32,))


@pytest.fixture
def grid_2d() -> Grid:
    return Grid(dim=2, extents=(1.0, 2.0), cells=(12, 16))
