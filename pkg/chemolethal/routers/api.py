from pathlib import Path
from typing import List

from fastapi import APIRouter, Depends, HTTPException, status
from sqlalchemy.orm import Session

from .. import models, output, schemas
from ..database import get_db
from ..dependencies import get_output_root, get_run_manager
from ..exceptions import ChemotaxisError, OutputError, RegimeError
from ..experiments import classify_outcome, evaluate_gates, execute_run, run_sweep
from ..model import check_existence_gate, equilibria
from ..run_manager import RunManager

router = APIRouter()


def _bad_request(exc: Exception) -> HTTPException:
    return HTTPException(status_code=status.HTTP_400_BAD_REQUEST, detail=str(exc))


@router.post("/gates", response_model=schemas.GateSummary)
def check_gates(request: schemas.GateRequest):
    """
    Evaluate the parameter gates without simulating
    """
    params = request.model
    if params.m != 1:
        return schemas.GateSummary(existence=check_existence_gate(params, request.dim))
    try:
        eq = equilibria(params, grid=request.grid)
        gates = {gate.name: gate for gate in evaluate_gates(params, request.dim, eq)}
    except ChemotaxisError as exc:
        raise _bad_request(exc)
    return schemas.GateSummary(**gates)


@router.post("/equilibria", response_model=schemas.EquilibriumSet)
def get_equilibria(request: schemas.EquilibriaRequest):
    """
    Homogeneous steady states of a parameter set (m = 1 only)
    """
    try:
        return equilibria(request.model, grid=request.grid)
    except RegimeError as exc:
        raise HTTPException(status_code=status.HTTP_422_UNPROCESSABLE_ENTITY, detail=str(exc))
    except ChemotaxisError as exc:
        raise _bad_request(exc)


@router.post("/runs", response_model=schemas.RunSummary)
def create_run(
    config: schemas.RunConfig,
    db: Session = Depends(get_db),
    manager: RunManager = Depends(get_run_manager),
    output_root: Path = Depends(get_output_root),
):
    """
    Simulate one configuration; files go under the service output root
    """
    run_id = manager.start_run(config, kind="simulate", db=db)
    directory = output_root / run_id
    try:
        result = execute_run(config, directory=directory)
    except OutputError as exc:
        manager.fail_run(run_id, exc, exc.exit_code, db=db)
        raise HTTPException(status_code=status.HTTP_503_SERVICE_UNAVAILABLE, detail=str(exc))
    except ChemotaxisError as exc:
        manager.fail_run(run_id, exc, exc.exit_code, db=db)
        raise _bad_request(exc)

    report = result.report
    manager.finish_run(
        run_id,
        report,
        result.exit_code,
        output_dir=str(directory),
        outcome=classify_outcome(report, report.equilibria),
        db=db,
    )
    return schemas.RunSummary(
        run_id=run_id,
        exit_code=int(result.exit_code),
        output_dir=str(directory),
        digest=schemas.RunDigest.from_report(report),
    )


@router.get("/runs", response_model=List[schemas.RunRecord])
def get_runs(skip: int = 0, limit: int = 100, db: Session = Depends(get_db)):
    """
    Get recorded runs, newest first
    """
    return (
        db.query(models.SimulationRun)
        .order_by(models.SimulationRun.created_at.desc())
        .offset(skip)
        .limit(limit)
        .all()
    )


@router.get("/runs/{run_id}", response_model=schemas.RunRecord)
def get_run(run_id: str, db: Session = Depends(get_db)):
    """
    Get a specific run
    """
    if run := db.get(models.SimulationRun, run_id):
        return run
    raise HTTPException(status_code=status.HTTP_404_NOT_FOUND, detail="Run not found")


@router.post("/sweeps", response_model=schemas.SweepSummary)
def create_sweep(
    spec: schemas.SweepSpec,
    db: Session = Depends(get_db),
    manager: RunManager = Depends(get_run_manager),
    output_root: Path = Depends(get_output_root),
):
    """
    Run a parameter sweep and store its phase table
    """
    sweep_id = manager.start_sweep(spec, db=db)
    try:
        points = run_sweep(spec)
        phase_path = output.default_phase_path(output_root / sweep_id)
        output.write_phase_table(phase_path, [axis.name for axis in spec.axes], points)
    except ChemotaxisError as exc:
        manager.finish_sweep(sweep_id, [], status="failed", db=db)
        if isinstance(exc, OutputError):
            raise HTTPException(status_code=status.HTTP_503_SERVICE_UNAVAILABLE, detail=str(exc))
        raise _bad_request(exc)
    manager.finish_sweep(sweep_id, points, phase_path=str(phase_path), db=db)
    return schemas.SweepSummary(sweep_id=sweep_id, points=points)


def _get_sweep(sweep_id: str, db: Session) -> models.Sweep:
    if sweep := db.get(models.Sweep, sweep_id):
        return sweep
    raise HTTPException(status_code=status.HTTP_404_NOT_FOUND, detail="Sweep not found")


@router.get("/sweeps/{sweep_id}", response_model=schemas.SweepRecord)
def get_sweep(sweep_id: str, db: Session = Depends(get_db)):
    """
    Get a specific sweep
    """
    return _get_sweep(sweep_id, db)


@router.get("/sweeps/{sweep_id}/points", response_model=List[schemas.PhasePoint])
def get_sweep_points(sweep_id: str, db: Session = Depends(get_db)):
    """
    Get the phase points of a sweep in axis order
    """
    return _get_sweep(sweep_id, db).points


@router.get("/registry", response_model=schemas.RegistryInfo)
def get_registry(manager: RunManager = Depends(get_run_manager)):
    """
    Counts of active and finished work in this process
    """
    return manager.get_registry_info()
