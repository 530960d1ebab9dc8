import pytest

from chemolethal import models
from chemolethal.database import SessionLocal, engine
from chemolethal.exceptions import ConfigError
from chemolethal.run_manager import RunManager
from chemolethal.schemas import PhasePoint, RunReport, SweepSpec

from conftest import coexistence_model, run_config


@pytest.fixture
def db():
    models.Base.metadata.create_all(bind=engine)
    session = SessionLocal()
    try:
        yield session
    finally:
        session.close()


def test_in_memory_registry(tmp_path):
    manager = RunManager()
    config = run_config(coexistence_model(), tmp_path)
    run_id = manager.start_run(config)
    assert manager.get_registry_info().active_runs == 1

    manager.finish_run(run_id, RunReport(), 0)
    info = manager.get_registry_info()
    assert info.active_runs == 0
    assert info.finished_by_kind == {"simulate": 1}

    # finishing twice is a no-op
    manager.finish_run(run_id, RunReport(), 0)
    assert manager.get_registry_info().finished_by_kind == {"simulate": 1}


def test_failed_run_is_persisted(tmp_path, db):
    manager = RunManager()
    run_id = manager.start_run(run_config(coexistence_model(), tmp_path), db=db)
    manager.fail_run(run_id, ConfigError("bad initial data"), 1, db=db)

    record = db.get(models.SimulationRun, run_id)
    assert record.status == "error"
    assert record.exit_code == 1
    assert record.detail == "bad initial data"
    assert manager.get_registry_info().finished_by_kind == {"failed": 1}


def test_finished_run_records_outcome(tmp_path, db):
    manager = RunManager()
    run_id = manager.start_run(run_config(coexistence_model(), tmp_path), db=db)
    report = RunReport(times=[0.0, 1.0], dist_inf_series=[0.1, 0.05], fitted_rate=0.8)
    manager.finish_run(run_id, report, 0, output_dir="out", outcome="bounded-no-convergence", db=db)

    record = db.get(models.SimulationRun, run_id)
    assert record.status == "completed"
    assert record.final_dist_inf == 0.05
    assert record.fitted_rate == 0.8
    assert record.outcome == "bounded-no-convergence"
    assert record.config["model"]["kappa"] == 2.0


def test_sweep_points_are_stored_in_order(tmp_path, db):
    manager = RunManager()
    spec = SweepSpec.model_validate(
        {
            "axes": [{"name": "chi", "values": [0.0, 1.0]}],
            "base": run_config(coexistence_model(), tmp_path).model_dump(mode="json"),
        }
    )
    sweep_id = manager.start_sweep(spec, db=db)
    points = [
        PhasePoint(index=i, coordinates={"chi": chi}, gate_pass=True, outcome="bounded-no-convergence")
        for i, chi in reversed(list(enumerate([0.0, 1.0])))
    ]
    manager.finish_sweep(sweep_id, points, phase_path="phase.csv", db=db)

    sweep = db.get(models.Sweep, sweep_id)
    assert sweep.status == "completed"
    assert sweep.point_count == 2
    assert [row.index for row in sweep.points] == [0, 1]
    assert manager.get_registry_info().active_sweeps == 0
