import logging
import uuid
from collections import Counter
from datetime import datetime
from typing import Dict, Optional, Sequence

from sqlalchemy.orm import Session

from . import models, schemas

logger = logging.getLogger(__name__)


class RunManager:
    def __init__(self):
        # Runs in progress by run_id
        self.active_runs: Dict[str, dict] = {}

        # Sweeps in progress by sweep_id
        self.active_sweeps: Dict[str, dict] = {}

        # Finished work counted by kind ("simulate", "sweep", "failed")
        self.finished: Counter = Counter()

    def start_run(
        self,
        config: schemas.RunConfig,
        kind: str = "simulate",
        run_id: Optional[str] = None,
        db: Session = None,
    ) -> str:
        """Register a run and return its id"""
        if not run_id:
            run_id = str(uuid.uuid4())

        self.active_runs[run_id] = {"kind": kind, "started_at": datetime.now()}

        # If database session is provided, store the run record
        if db:
            db_run = models.SimulationRun(
                id=run_id,
                kind=kind,
                status="running",
                config=config.model_dump(mode="json"),
            )
            db.add(db_run)
            db.commit()

        logger.info("run %s registered (%s)", run_id, kind)
        return run_id

    def finish_run(
        self,
        run_id: str,
        report: schemas.RunReport,
        exit_code: int,
        output_dir: Optional[str] = None,
        outcome: Optional[str] = None,
        db: Session = None,
    ):
        """Mark a run finished and persist its scalar outcome"""
        metadata = self.active_runs.pop(run_id, None)
        if metadata is None:
            return
        self.finished[metadata["kind"]] += 1

        if db:
            if db_run := db.get(models.SimulationRun, run_id):
                db_run.status = report.status
                db_run.exit_code = int(exit_code)
                db_run.output_dir = output_dir
                db_run.fitted_rate = report.fitted_rate
                db_run.final_dist_inf = report.dist_inf_series[-1] if report.dist_inf_series else None
                db_run.outcome = outcome
                db_run.detail = report.detail or None
                db_run.finished_at = datetime.now()
                db.commit()

    def fail_run(self, run_id: str, error: Exception, exit_code: int, db: Session = None):
        """Mark a run that raised before producing a report"""
        if self.active_runs.pop(run_id, None) is None:
            return
        self.finished["failed"] += 1
        logger.warning("run %s failed: %s", run_id, error)

        if db:
            if db_run := db.get(models.SimulationRun, run_id):
                db_run.status = "error"
                db_run.exit_code = int(exit_code)
                db_run.detail = str(error)
                db_run.finished_at = datetime.now()
                db.commit()

    def start_sweep(self, spec: schemas.SweepSpec, sweep_id: Optional[str] = None, db: Session = None) -> str:
        """Register a sweep and return its id"""
        if not sweep_id:
            sweep_id = str(uuid.uuid4())

        self.active_sweeps[sweep_id] = {"points": spec.total_runs, "started_at": datetime.now()}

        if db:
            db_sweep = models.Sweep(
                id=sweep_id,
                status="running",
                spec=spec.model_dump(mode="json"),
                point_count=spec.total_runs,
            )
            db.add(db_sweep)
            db.commit()

        logger.info("sweep %s registered (%d points)", sweep_id, spec.total_runs)
        return sweep_id

    def finish_sweep(
        self,
        sweep_id: str,
        points: Sequence[schemas.PhasePoint],
        phase_path: Optional[str] = None,
        status: str = "completed",
        db: Session = None,
    ):
        """Mark a sweep finished and store its phase table"""
        if self.active_sweeps.pop(sweep_id, None) is None:
            return
        self.finished["sweep"] += 1

        if db:
            if db_sweep := db.get(models.Sweep, sweep_id):
                db_sweep.status = status
                db_sweep.phase_path = phase_path
                db_sweep.finished_at = datetime.now()
                for point in points:
                    db.add(
                        models.PhasePointRow(
                            sweep_id=sweep_id,
                            index=point.index,
                            coordinates=point.coordinates,
                            gate_pass=point.gate_pass,
                            outcome=point.outcome,
                            fitted_rate=point.fitted_rate,
                            final_dist_inf=point.final_dist_inf,
                            bounded=point.bounded,
                            detail=point.detail,
                        )
                    )
                db.commit()

    def get_registry_info(self) -> schemas.RegistryInfo:
        """Get information about active and finished work"""
        return schemas.RegistryInfo(
            active_runs=len(self.active_runs),
            active_sweeps=len(self.active_sweeps),
            finished_by_kind=dict(self.finished),
        )


# Global run manager instance
manager = RunManager()
