import numpy as np
import pytest
from pydantic import ValidationError

from chemolethal.schemas import (
    Grid,
    InitialData,
    RunConfig,
    RunReport,
    SourceSpec,
    StepControl,
    SweepAxis,
    SweepSpec,
)

from conftest import coexistence_model, run_config


def test_config_round_trips(tmp_path):
    config = run_config(coexistence_model(), tmp_path)
    assert RunConfig.model_validate(config.model_dump()) == config
    assert RunConfig.model_validate_json(config.model_dump_json()) == config


def test_config_rejects_unknown_keys(tmp_path):
    data = run_config(coexistence_model(), tmp_path).model_dump()
    data["model"]["gamma"] = 1.0
    with pytest.raises(ValidationError, match="Extra inputs are not permitted"):
        RunConfig.model_validate(data)


def test_grid_geometry():
    grid = Grid(dim=2, extents=(1.0, 2.0), cells=(4, 8))
    assert grid.shape == (4, 8)
    assert grid.h == (0.25, 0.25)
    assert grid.cell_volume == pytest.approx(0.0625)
    assert grid.measure == 2.0
    np.testing.assert_allclose(grid.centers(0), [0.125, 0.375, 0.625, 0.875])
    x, y = grid.mesh()
    assert x.shape == y.shape == (4, 8)


@pytest.mark.parametrize(
    "data, message",
    [
        ({"dim": 3, "extents": [1, 1, 1], "cells": [4, 4, 4]}, "dim must be 1 or 2"),
        ({"dim": 1, "extents": [1.0], "cells": [2]}, "cells must be at least 3 per axis"),
        ({"dim": 2, "extents": [1.0], "cells": [4, 4]}, "one entry per axis"),
    ],
)
def test_grid_validation(data, message):
    with pytest.raises(ValidationError, match=message):
        Grid.model_validate(data)


def test_sources():
    grid = Grid(dim=1, extents=(1.0,), cells=(10,))
    periodic = SourceSpec(kind="time-periodic", amplitude=2.0, period=4.0)
    assert periodic.evaluate(grid, 1.0) == pytest.approx(np.full(10, 2.0))
    assert periodic.evaluate(grid, 3.0) == pytest.approx(np.zeros(10))
    assert periodic.mean() == 1.0
    bump = SourceSpec(kind="gaussian-bump", amplitude=1.0, center=(0.5,), width=0.2)
    values = bump.evaluate(grid, 0.0)
    assert values.max() <= 1.0 and values.min() > 0
    assert values[4] == pytest.approx(values[5])
    with pytest.raises(ValidationError, match="needs center and width"):
        SourceSpec(kind="gaussian-bump", amplitude=1.0)
    with pytest.raises(ValidationError, match="amplitude must be nonnegative"):
        SourceSpec(kind="constant", amplitude=-0.1)


def test_source_center_matches_grid(tmp_path):
    source = {"kind": "gaussian-bump", "amplitude": 1.0, "center": [0.5, 0.5], "width": 0.1}
    with pytest.raises(ValidationError, match="one coordinate per grid axis"):
        run_config(coexistence_model(source=source), tmp_path)


def test_step_control_bounds():
    with pytest.raises(ValidationError, match="dt_min <= dt_init <= dt_max"):
        StepControl(dt_init=1.0, dt_max=0.1)
    with pytest.raises(ValidationError, match="theta"):
        StepControl(theta=0.3)


def test_initial_data_stays_nonnegative():
    with pytest.raises(ValidationError, match="needs u_level"):
        InitialData(kind="perturbed")
    with pytest.raises(ValidationError, match="offset - amplitude"):
        InitialData(u_level=1.0, offset=-0.95, amplitude=0.1)


def test_sweep_axis_ranges():
    assert SweepAxis(name="beta", start=0.0, stop=1.0, count=5).points() == [0.0, 0.25, 0.5, 0.75, 1.0]
    assert SweepAxis(name="fbar", values=(0.1, 2.0)).points() == [0.1, 2.0]
    with pytest.raises(ValidationError, match="axis 'chi' has an empty range"):
        SweepAxis(name="chi", start=1.0, stop=0.0, count=3)
    with pytest.raises(ValidationError, match="axis 'chi' has an empty range"):
        SweepAxis(name="chi", start=0.0, stop=1.0, count=0)
    with pytest.raises(ValidationError, match="cannot sweep 'tau'"):
        SweepAxis(name="tau", values=(0, 1))


def test_sweep_spec(tmp_path):
    base = run_config(coexistence_model(), tmp_path)
    axes = [{"name": "beta", "start": 0.1, "stop": 0.5, "count": 3}, {"name": "chi", "values": [0.0, 1.0]}]
    spec = SweepSpec.model_validate({"axes": axes, "base": base.model_dump()})
    assert spec.total_runs == 6
    with pytest.raises(ValidationError, match="distinct"):
        SweepSpec.model_validate({"axes": [axes[0], axes[0]], "base": base.model_dump()})


def test_report_series_share_length():
    with pytest.raises(ValidationError, match="share its length"):
        RunReport(times=[0.0, 1.0], mass_series=[1.0])
    report = RunReport(times=[0.0], mass_series=[1.0])
    assert report.verdict("mass_bound") is None
