"""File outputs of runs and sweeps.

Floats are written with ``repr`` (snapshots with 17 significant digits) so every value parses back exactly.
"""

import csv
import logging
import os
from pathlib import Path
from typing import TYPE_CHECKING, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .exceptions import OutputError
from .schemas import Grid, PhasePoint, RunConfig, RunReport, Verdict

if TYPE_CHECKING:
    from .solver import State

logger = logging.getLogger(__name__)

SERIES_COLUMNS = ("t", "mass", "sup_u", "sup_v", "grad_v_sup", "E1", "E2", "f1", "f2", "dist_inf")

_SERIES_FIELDS = {
    "mass": "mass_series",
    "sup_u": "sup_u_series",
    "sup_v": "sup_v_series",
    "grad_v_sup": "grad_v_sup_series",
    "E1": "E1_series",
    "E2": "E2_series",
    "f1": "f1_series",
    "f2": "f2_series",
    "dist_inf": "dist_inf_series",
    "modal_dist": "modal_dist_series",
}


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def ensure_writable(directory: Path) -> Path:
    """Create ``directory`` if needed and fail early when it cannot be written"""
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OutputError(f"cannot create output directory {directory}: {exc}")
    if not directory.is_dir() or not os.access(directory, os.W_OK | os.X_OK):
        raise OutputError(f"output directory {directory} is not writable")
    return directory


def _write_rows(path: Path, header: Sequence[str], rows) -> None:
    try:
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)
    except OSError as exc:
        raise OutputError(f"failed to write {path}: {exc}")


def write_series(path: Path, report: RunReport) -> None:
    columns = [report.times] + [getattr(report, _SERIES_FIELDS[name]) for name in SERIES_COLUMNS[1:]]
    _write_rows(path, SERIES_COLUMNS, ([_fmt(x) for x in row] for row in zip(*columns)))


def read_series(path: Path) -> Dict[str, List[float]]:
    with open(path, newline="") as handle:
        reader = csv.DictReader(handle)
        data: Dict[str, List[float]] = {name: [] for name in reader.fieldnames}
        for row in reader:
            for name, value in row.items():
                data[name].append(float(value))
    return data


def verdict_status(verdict: Verdict) -> str:
    if verdict.passed is None:
        return "n/a"
    return "pass" if verdict.passed else "fail"


def write_verdicts(path: Path, verdicts: Sequence[Verdict]) -> None:
    rows = ([v.name, verdict_status(v), _fmt(v.margin), _fmt(v.value), v.detail] for v in verdicts)
    _write_rows(path, ("check", "status", "margin", "value", "detail"), rows)


def read_verdicts(path: Path) -> List[Dict[str, str]]:
    with open(path, newline="") as handle:
        return list(csv.DictReader(handle))


def write_snapshot(path: Path, values: np.ndarray, grid: Grid) -> None:
    """Flat cell values (C order) after a 2-line header: dims, extents"""
    header = "dims " + " ".join(str(n) for n in grid.cells) + "\nextents " + " ".join(_fmt(x) for x in grid.extents)
    try:
        # 17 significant digits round-trip every float64
        np.savetxt(path, np.asarray(values).ravel(), fmt="%.17g", header=header, comments="# ")
    except OSError as exc:
        raise OutputError(f"failed to write {path}: {exc}")


def read_snapshot(path: Path) -> Tuple[Tuple[int, ...], Tuple[float, ...], np.ndarray]:
    with open(path) as handle:
        dims = tuple(int(x) for x in handle.readline().split()[2:])
        extents = tuple(float(x) for x in handle.readline().split()[2:])
    values = np.loadtxt(path, comments="#", ndmin=1)
    return dims, extents, values.reshape(dims)


def write_plot_tables(directory: Path, report: RunReport, grid: Grid, snapshots: Sequence["State"]) -> None:
    """Long-format tables: series_long.csv and profiles_long.csv"""
    plot = ensure_writable(directory / "plot")
    series_rows = (
        [_fmt(t), name, _fmt(values[i])]
        for name, attr in _SERIES_FIELDS.items()
        for values in [getattr(report, attr)]
        for i, t in enumerate(report.times)
    )
    _write_rows(plot / "series_long.csv", ("t", "quantity", "value"), series_rows)

    axes = ("x",) if grid.dim == 1 else ("x", "y")
    coords = [c.ravel() for c in grid.mesh()]

    def profile_rows():
        for k, state in enumerate(snapshots):
            u, v = state.u.values.ravel(), state.v.values.ravel()
            for i in range(grid.size):
                yield [str(k), _fmt(state.t)] + [_fmt(c[i]) for c in coords] + [_fmt(u[i]), _fmt(v[i])]

    _write_rows(plot / "profiles_long.csv", ("snapshot", "t") + axes + ("u", "v"), profile_rows())


def write_run_outputs(
    directory: Path,
    config: RunConfig,
    report: RunReport,
    snapshots: Sequence["State"] = (),
) -> None:
    directory = ensure_writable(directory)
    write_series(directory / "series.csv", report)
    write_verdicts(directory / "verdicts.csv", report.verdicts)
    for k, state in enumerate(snapshots):
        write_snapshot(directory / f"u_{k}.csv", state.u.values, config.grid)
        write_snapshot(directory / f"v_{k}.csv", state.v.values, config.grid)
    write_plot_tables(directory, report, config.grid, snapshots)
    try:
        (directory / "report.json").write_text(report.model_dump_json(indent=2))
        (directory / "config.json").write_text(config.model_dump_json(indent=2))
    except OSError as exc:
        raise OutputError(f"failed to write the run summary in {directory}: {exc}")
    logger.info("wrote run outputs to %s", directory)


def phase_header(axis_names: Sequence[str]) -> Tuple[str, ...]:
    return tuple(axis_names) + ("gate_pass", "outcome", "fitted_rate", "final_dist_inf", "bounded")


def write_phase_table(path: Path, axis_names: Sequence[str], points: Sequence[PhasePoint]) -> None:
    ensure_writable(Path(path).parent)
    rows = (
        [_fmt(p.coordinates[name]) for name in axis_names]
        + [_fmt(p.gate_pass), p.outcome, _fmt(p.fitted_rate), _fmt(p.final_dist_inf), _fmt(p.bounded)]
        for p in points
    )
    _write_rows(Path(path), phase_header(axis_names), rows)
    logger.info("wrote %d phase points to %s", len(points), path)


def read_phase_table(path: Path) -> List[Dict[str, str]]:
    with open(path, newline="") as handle:
        return list(csv.DictReader(handle))


def default_phase_path(directory: Optional[Path]) -> Path:
    return Path(directory or ".") / "phase.csv"
