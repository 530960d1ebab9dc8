"""Command-line entry point: simulate, sweep, check-gates, equilibria, serve"""

import argparse
import json
import logging
import sys
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Type, TypeVar

from pydantic import BaseModel, ValidationError

from . import output
from .exceptions import ChemotaxisError, ConfigError, ExitCode, OutputError
from .experiments import classify_outcome, evaluate_gates, execute_run, run_sweep, steady_states
from .schemas import GateSummary, RunConfig, SweepSpec
from .settings import get_settings

logger = logging.getLogger(__name__)

ModelT = TypeVar("ModelT", bound=BaseModel)


def _load_mapping(path: Path) -> Dict[str, Any]:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}")
    try:
        if path.suffix == ".toml":
            return tomllib.loads(raw.decode())
        if path.suffix == ".json":
            return json.loads(raw)
    except (tomllib.TOMLDecodeError, json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"{path} is not valid {path.suffix[1:].upper()}: {exc}")
    raise ConfigError(f"{path}: configuration files must be .toml or .json")


def validation_message(exc: ValidationError) -> str:
    """First validation failure as '<field path>: <constraint>'"""
    error = exc.errors()[0]
    location = ".".join(str(part) for part in error["loc"])
    message = error["msg"].removeprefix("Value error, ")
    return f"{location}: {message}" if location else message


def _validate(model: Type[ModelT], data: Dict[str, Any]) -> ModelT:
    try:
        return model.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(validation_message(exc))


def parse_config(path: Path) -> RunConfig:
    """Load and fully validate a run configuration (TOML or JSON)"""
    return _validate(RunConfig, _load_mapping(path))


def parse_sweep_spec(path: Path) -> SweepSpec:
    return _validate(SweepSpec, _load_mapping(path))


def _with_overrides(
    config: RunConfig,
    out: Optional[Path] = None,
    seed: Optional[int] = None,
    snapshots: Optional[int] = None,
) -> RunConfig:
    data = config.model_dump()
    if out is not None:
        data["output"]["directory"] = Path(out)
    if seed is not None:
        data["initial"]["seed"] = seed
    if snapshots is not None:
        data["output"]["snapshots"] = snapshots
    return _validate(RunConfig, data)


def _recording_session():
    from . import models
    from .database import SessionLocal, engine

    models.Base.metadata.create_all(bind=engine)
    return SessionLocal()


def run(config: RunConfig, record: bool = False):
    """Simulate one configuration and write its files; returns the RunResult"""
    if not record:
        return execute_run(config)

    from .run_manager import manager

    with _recording_session() as db:
        run_id = manager.start_run(config, kind="simulate", db=db)
        try:
            result = execute_run(config)
        except ChemotaxisError as exc:
            manager.fail_run(run_id, exc, exc.exit_code, db=db)
            raise
        eq = result.report.equilibria
        manager.finish_run(
            run_id,
            result.report,
            result.exit_code,
            output_dir=str(config.output.directory),
            outcome=classify_outcome(result.report, eq),
            db=db,
        )
    return result


def run_sweep_cmd(
    spec_path: Path,
    out: Optional[Path] = None,
    seed: Optional[int] = None,
    workers: Optional[int] = None,
    record: bool = False,
) -> Path:
    """Run a sweep file and write phase.csv; returns the table path"""
    spec = parse_sweep_spec(spec_path)
    if seed is not None:
        spec = _validate(SweepSpec, {**spec.model_dump(), "seed": seed})
    phase_path = output.default_phase_path(out)
    output.ensure_writable(phase_path.parent)
    names = [axis.name for axis in spec.axes]

    if not record:
        points = run_sweep(spec, workers=workers)
        output.write_phase_table(phase_path, names, points)
        return phase_path

    from .run_manager import manager

    with _recording_session() as db:
        sweep_id = manager.start_sweep(spec, db=db)
        try:
            points = run_sweep(spec, workers=workers)
        except ChemotaxisError:
            manager.finish_sweep(sweep_id, [], status="failed", db=db)
            raise
        output.write_phase_table(phase_path, names, points)
        manager.finish_sweep(sweep_id, points, phase_path=str(phase_path), db=db)
    return phase_path


def gate_summary(config: RunConfig) -> GateSummary:
    eq, _ = steady_states(config.model, config.grid)
    gates = {gate.name: gate for gate in evaluate_gates(config.model, config.grid.dim, eq)}
    return GateSummary(**gates)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chemolethal",
        description="Simulator and verification harness for lethal-interaction chemotaxis",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    simulate = sub.add_parser("simulate", help="run one configuration")
    simulate.add_argument("config", type=Path)
    simulate.add_argument("--out", type=Path, help="output directory (overrides output.directory)")
    simulate.add_argument("--seed", type=int, help="seed of the initial perturbation")
    simulate.add_argument("--snapshots", type=int, help="number of field snapshots to write")
    simulate.add_argument("--record", action="store_true", help="persist the run in the database")

    sweep = sub.add_parser("sweep", help="run a parameter sweep and write phase.csv")
    sweep.add_argument("spec", type=Path)
    sweep.add_argument("--out", type=Path, help="directory for phase.csv")
    sweep.add_argument("--seed", type=int)
    sweep.add_argument("--workers", type=int, help="worker processes (1 runs inline)")
    sweep.add_argument("--record", action="store_true")

    gates = sub.add_parser("check-gates", help="print gate reports without simulating")
    gates.add_argument("config", type=Path)

    equilibria = sub.add_parser("equilibria", help="print the homogeneous steady states")
    equilibria.add_argument("config", type=Path)

    serve = sub.add_parser("serve", help="start the REST service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    return parser


def _dispatch(args: argparse.Namespace) -> int:
    if args.command == "simulate":
        config = _with_overrides(parse_config(args.config), args.out, args.seed, args.snapshots)
        result = run(config, record=args.record or get_settings().record_runs)
        report = result.report
        print(f"status: {report.status}  steps: {report.steps}  clamps: {report.clamp_count}")
        for verdict in report.verdicts:
            print(f"  {verdict.name:<12} {output.verdict_status(verdict):<5} {verdict.detail}")
        print(f"outputs: {config.output.directory}")
        return int(result.exit_code)

    if args.command == "sweep":
        path = run_sweep_cmd(args.spec, args.out, args.seed, args.workers, args.record or get_settings().record_runs)
        print(f"phase table: {path}")
        return int(ExitCode.OK)

    if args.command == "check-gates":
        print(gate_summary(parse_config(args.config)).model_dump_json(indent=2))
        return int(ExitCode.OK)

    if args.command == "equilibria":
        config = parse_config(args.config)
        eq, v_bar = steady_states(config.model, config.grid)
        if eq is None:
            print(json.dumps({"regime": None, "v_bar": v_bar, "detail": "no equilibrium analysis for m != 1"}))
        else:
            print(eq.model_dump_json(indent=2))
        return int(ExitCode.OK)

    if args.command == "serve":
        import uvicorn

        uvicorn.run("chemolethal.main:app", host=args.host, port=args.port)
        return int(ExitCode.OK)
    raise ConfigError(f"unknown command {args.command}")


def main(argv: Optional[Sequence[str]] = None) -> int:
    settings = get_settings()
    logging.basicConfig(
        level=settings.log_level.upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except ChemotaxisError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return int(exc.exit_code)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return int(OutputError.exit_code)
