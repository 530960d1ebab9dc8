"""Single-run orchestration, verdicts, outcome classification and sweeps"""

import itertools
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import ValidationError

from . import output
from .diagnostics import (
    ReportBuilder,
    dissipation_check,
    dist_inf,
    energy_monotone_check,
    fit_decay_rate,
    mass_bound_check,
)
from .discretization import wavenumbers_squared
from .exceptions import (
    ChemotaxisError,
    ConfigError,
    DivergenceError,
    ExitCode,
    InsufficientDataError,
    RegimeError,
    SolverError,
)
from .model import (
    check_existence_gate,
    check_extinction_gate,
    check_stability_gate,
    equilibria,
    predicted_decay_rate,
)
from .schemas import (
    EquilibriumSet,
    GateReport,
    Grid,
    ModelParams,
    Outcome,
    OutcomeThresholds,
    PhasePoint,
    RunConfig,
    RunReport,
    SourceSpec,
    SweepAxis,
    SweepSpec,
    Verdict,
)
from .settings import get_settings
from .solver import GROWTH_LIMIT, State, Stepper, initial_state, sample_times, simulate

logger = logging.getLogger(__name__)


@dataclass
class RunResult:
    config: RunConfig
    report: RunReport
    exit_code: ExitCode
    snapshots: List[State] = field(default_factory=list)
    final_state: Optional[State] = None


# ---------------------------------------------------------------------------
# Gates and verdicts
# ---------------------------------------------------------------------------


def steady_states(params: ModelParams, grid: Grid) -> Tuple[Optional[EquilibriumSet], float]:
    """Equilibria when they are defined (m = 1) and the semi-coexistence level v_bar"""
    try:
        eq = equilibria(params, grid=grid)
    except RegimeError:
        logger.info("m = %g: no coexistence analysis, tracking (0, fbar/b) only", params.m)
        return None, params.source.mean(grid) / params.b
    return eq, eq.v_bar


def evaluate_gates(params: ModelParams, dim: int, eq: Optional[EquilibriumSet]) -> List[GateReport]:
    gates = [check_existence_gate(params, dim)]
    if eq is not None:
        if eq.has_coexistence:
            gates.append(check_stability_gate(params, eq))
        gates.append(check_extinction_gate(params, eq.fbar))
    return gates


def _gate(gates: Sequence[GateReport], name: str) -> Optional[GateReport]:
    return next((g for g in gates if g.name == name), None)


def convergence_regime(
    params: ModelParams, eq: Optional[EquilibriumSet], gates: Sequence[GateReport]
) -> Optional[str]:
    """Regime whose convergence gate holds for these parameters, if any"""
    if eq is None or not params.source.is_constant:
        return None
    existence = _gate(gates, "existence")
    if existence is None or not existence.passed:
        return None
    stability = _gate(gates, "stability")
    if stability is not None and stability.passed and all(stability.conditions.values()):
        return "coexistence"
    extinction = _gate(gates, "extinction")
    if extinction is not None and extinction.passed and all(extinction.conditions.values()):
        return "semi-coexistence"
    return None


def evaluate_verdicts(
    config: RunConfig,
    report: RunReport,
    gates: Sequence[GateReport],
    regime: Optional[str],
    clamps: Tuple[int, int],
) -> List[Verdict]:
    checks = config.output.checks
    dt = report.dt_largest or 0.0
    verdicts: List[Verdict] = []

    if "gate" in checks:
        gate = _gate(gates, "existence")
        verdicts.append(Verdict(name="gate", passed=gate.passed, margin=gate.margin, value=gate.lhs, detail=gate.detail))

    if "mass_bound" in checks:
        verdicts.append(mass_bound_check(report))

    if "convergence" in checks:
        threshold = config.output.convergence_threshold
        if report.status != "completed":
            verdicts.append(Verdict(name="convergence", passed=False, detail=f"run stopped: {report.status}"))
        elif regime is None:
            verdicts.append(Verdict(name="convergence", passed=None, detail="no convergence gate holds"))
        else:
            distance = report.final_dist_coexistence if regime == "coexistence" else report.final_dist_semi
            verdicts.append(
                Verdict(
                    name="convergence",
                    passed=distance <= threshold,
                    margin=threshold - distance,
                    value=distance,
                    detail=f"final dist_inf to the {regime} state",
                )
            )

    if "lyapunov" in checks:
        if regime == "coexistence":
            verdicts.append(energy_monotone_check(report.times, report.E1_series, dt))
        elif regime == "semi-coexistence":
            verdicts.append(energy_monotone_check(report.times, report.E2_series, dt))
        else:
            verdicts.append(Verdict(name="lyapunov", passed=None, detail="no Lyapunov functional applies"))

    if "dissipation" in checks:
        if regime == "coexistence":
            verdicts.append(dissipation_check(report, config.model, dt))
        else:
            verdicts.append(Verdict(name="dissipation", passed=None, detail="coexistence regime only"))

    if "positivity" in checks:
        u_clamps, v_clamps = clamps
        verdicts.append(
            Verdict(
                name="positivity",
                passed=u_clamps == 0 and v_clamps == 0,
                value=float(u_clamps + v_clamps),
                detail=f"{u_clamps} u clamps, {v_clamps} v clamps",
            )
        )
    return verdicts


def exit_code_for(report: RunReport) -> ExitCode:
    if report.status != "completed":
        return ExitCode.DIVERGENCE
    if any(v.passed is False for v in report.verdicts):
        return ExitCode.CHECK_FAILED
    return ExitCode.OK


# ---------------------------------------------------------------------------
# Single runs
# ---------------------------------------------------------------------------


def _snapshot_indices(sample_count: int, snapshots: int) -> set:
    if snapshots <= 0:
        return set()
    return set(np.linspace(0, sample_count - 1, min(snapshots, sample_count)).round().astype(int).tolist())


def simulate_config(
    config: RunConfig,
    growth_limit: float = GROWTH_LIMIT,
    cg_max_iterations: Optional[int] = None,
) -> RunResult:
    """Run one configuration end to end and assemble its report.

    Divergence and solver failures end the trajectory early; the report then
    carries the samples recorded so far and the failure status.
    """
    params, grid, control = config.model, config.grid, config.control
    if cg_max_iterations is None:
        cg_max_iterations = get_settings().cg_max_iterations
    eq, v_bar = steady_states(params, grid)
    gates = evaluate_gates(params, grid.dim, eq)
    regime = convergence_regime(params, eq, gates)

    state0 = initial_state(config, eq, max_iter_factor=cg_max_iterations)
    builder = ReportBuilder(params, grid, eq, v_bar)
    stepper = Stepper(params, grid, control, growth_limit=growth_limit, cg_max_iterations=cg_max_iterations)

    sample_count = len(sample_times(0.0, control.t_end, config.output.sample_interval))
    wanted = _snapshot_indices(sample_count, config.output.snapshots)
    snapshots: List[State] = []

    def on_sample(state: State) -> None:
        if len(builder.times) in wanted:
            snapshots.append(state)
        builder.record(state)

    logger.info(
        "run start: dim=%d cells=%s tau=%d t_end=%g regime=%s",
        grid.dim, grid.cells, params.tau, control.t_end, regime or "none",
    )
    status, reason, detail = "completed", None, ""
    try:
        simulate(stepper, state0, control.t_end, config.output.sample_interval, on_sample)
    except DivergenceError as exc:
        status, reason, detail = "growth-indicator", exc.reason, str(exc)
        logger.warning("growth indicator: %s", exc)
    except SolverError as exc:
        status, detail = "solver-failure", str(exc)
        logger.warning("solver failure: %s", exc)

    report = builder.build()
    final = builder.last_state
    stats = stepper.stats
    update: Dict[str, object] = dict(
        gates=gates,
        status=status,
        growth_reason=reason,
        detail=detail,
        clamp_count=stats.clamp_count,
        v_clamp_count=stats.v_clamp_count,
        steps=stats.steps,
        dt_smallest=stats.dt_smallest,
        dt_largest=stats.dt_largest,
    )
    if final is not None:
        if eq is not None and eq.has_coexistence:
            update["final_dist_coexistence"] = dist_inf(final, eq.u_star, eq.v_star)
        update["final_dist_semi"] = dist_inf(final, 0.0, v_bar)
    rate = predicted_decay_rate(params, *builder.target, wavenumbers_squared(grid).ravel())
    update["predicted_rate"] = None if math.isnan(rate) else rate
    if status == "completed":
        try:
            fit = fit_decay_rate(report.times, report.modal_dist_series)
            update.update(fitted_rate=fit.rate, fit_residual=fit.residual, fit_window=(fit.window_start, fit.window_stop))
        except InsufficientDataError as exc:
            logger.info("no decay fit: %s", exc)
    report = report.model_copy(update=update)
    verdicts = evaluate_verdicts(config, report, gates, regime, (stats.clamp_count, stats.v_clamp_count))
    report = report.model_copy(update={"verdicts": verdicts})
    code = exit_code_for(report)
    logger.info(
        "run finish: status=%s steps=%d clamps=%d fitted_rate=%s exit=%d",
        status, stats.steps, stats.clamp_count, report.fitted_rate, int(code),
    )
    return RunResult(config=config, report=report, exit_code=code, snapshots=snapshots, final_state=final)


def execute_run(config: RunConfig, directory: Optional[Path] = None, **kwargs) -> RunResult:
    """Check the output directory, simulate, and write every output file"""
    directory = Path(directory) if directory is not None else Path(config.output.directory)
    output.ensure_writable(directory)
    result = simulate_config(config, **kwargs)
    output.write_run_outputs(directory, result.config, result.report, result.snapshots)
    return result


# ---------------------------------------------------------------------------
# Outcomes and sweeps
# ---------------------------------------------------------------------------


def classify_outcome(
    report: RunReport,
    eq: Optional[EquilibriumSet],
    thresholds: OutcomeThresholds = OutcomeThresholds(),
) -> Outcome:
    if report.status == "solver-failure":
        return "solver-failure"
    if report.status == "growth-indicator":
        return "growth-indicator"
    if report.sup_u_series and max(report.sup_u_series) > thresholds.growth_limit:
        return "growth-indicator"
    limit = thresholds.converged_dist
    if eq is not None and eq.has_coexistence and report.final_dist_coexistence is not None:
        if report.final_dist_coexistence <= limit:
            return "bounded-converged-coexistence"
    if report.final_dist_semi is not None and report.final_dist_semi <= limit:
        return "bounded-converged-extinction"
    return "bounded-no-convergence"


def bounded_check(report: RunReport, thresholds: OutcomeThresholds = OutcomeThresholds()) -> Optional[bool]:
    """sup u after ``bounded_after`` stays within ``bounded_factor`` times its early maximum"""
    if report.status == "growth-indicator":
        return False
    t = np.asarray(report.times)
    sup_u = np.asarray(report.sup_u_series)
    early = sup_u[t <= thresholds.early_window]
    late = sup_u[t > thresholds.bounded_after]
    if early.size == 0 or late.size == 0:
        return None
    return bool(late.max() <= thresholds.bounded_factor * early.max())


def axis_values(axis: SweepAxis) -> List[float]:
    return axis.points()


def _apply(base: RunConfig, coordinates: Dict[str, float], seed: int) -> RunConfig:
    model = base.model.model_dump()
    for name, value in coordinates.items():
        if name == "fbar":
            model["source"] = SourceSpec(kind="constant", amplitude=value).model_dump()
        else:
            model[name] = value
    data = base.model_dump()
    data["model"] = model
    data["initial"]["seed"] = seed
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(f"sweep point {coordinates}: {exc.errors()[0]['msg']}")


def build_point_configs(spec: SweepSpec) -> List[Tuple[int, Dict[str, float], Union[RunConfig, str]]]:
    """Every grid node in axis order, the first axis varying slowest.

    A node whose parameters fail validation carries the error message in
    place of its config, so the sweep records it instead of aborting.
    """
    names = [axis.name for axis in spec.axes]
    tasks = []
    for index, values in enumerate(itertools.product(*(axis_values(axis) for axis in spec.axes))):
        coordinates = dict(zip(names, values))
        try:
            config: Union[RunConfig, str] = _apply(spec.base, coordinates, spec.seed)
        except ConfigError as exc:
            config = str(exc)
        tasks.append((index, coordinates, config))
    return tasks


def run_point(
    task: Tuple[int, Dict[str, float], Union[RunConfig, str]],
    thresholds: OutcomeThresholds,
    cg_max_iterations: int,
) -> PhasePoint:
    """Simulate one sweep node; failures become data, never exceptions"""
    index, coordinates, config = task
    if isinstance(config, str):
        logger.warning("sweep point %d rejected: %s", index, config)
        return PhasePoint(index=index, coordinates=coordinates, gate_pass=False, outcome="solver-failure", detail=config)
    gate = check_existence_gate(config.model, config.grid.dim)
    try:
        result = simulate_config(config, growth_limit=thresholds.growth_limit, cg_max_iterations=cg_max_iterations)
    except ChemotaxisError as exc:
        logger.warning("sweep point %d failed before stepping: %s", index, exc)
        return PhasePoint(
            index=index, coordinates=coordinates, gate_pass=gate.passed, outcome="solver-failure", detail=str(exc)
        )
    report = result.report
    final = report.dist_inf_series[-1] if report.dist_inf_series else None
    return PhasePoint(
        index=index,
        coordinates=coordinates,
        gate_pass=gate.passed,
        outcome=classify_outcome(report, report.equilibria, thresholds),
        fitted_rate=report.fitted_rate,
        final_dist_inf=final,
        bounded=bounded_check(report, thresholds),
        detail=report.detail,
    )


def _run_task(args) -> PhasePoint:
    return run_point(*args)


def run_sweep(spec: SweepSpec, workers: Optional[int] = None, max_runs: Optional[int] = None) -> List[PhasePoint]:
    """One PhasePoint per node, in axis order regardless of completion order"""
    settings = get_settings()
    cap = settings.sweep_max_runs if max_runs is None else max_runs
    if spec.total_runs > cap:
        raise ConfigError(f"sweep has {spec.total_runs} runs; the cap is {cap}")
    workers = settings.sweep_workers if workers is None else workers
    tasks = [(task, spec.thresholds, settings.cg_max_iterations) for task in build_point_configs(spec)]
    logger.info("sweep start: %d points over %s", len(tasks), ", ".join(a.name for a in spec.axes))

    if workers == 1:
        points = [_run_task(task) for task in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            points = list(executor.map(_run_task, tasks))

    counts: Dict[str, int] = {}
    for point in points:
        counts[point.outcome] = counts.get(point.outcome, 0) + 1
    logger.info("sweep finish: %s", ", ".join(f"{k}={v}" for k, v in sorted(counts.items())))
    return points
