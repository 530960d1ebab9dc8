import math
from datetime import datetime
from pathlib import Path
from typing import Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    ValidationInfo,
    field_validator,
    model_validator,
)


class _Frozen(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid", allow_inf_nan=False)


# ---------------------------------------------------------------------------
# Model parameters
# ---------------------------------------------------------------------------

SourceKind = Literal["constant", "gaussian-bump", "time-periodic"]


class SourceSpec(_Frozen):
    """External chemical supply f(x, t), bounded by 0 <= f <= amplitude"""

    kind: SourceKind
    amplitude: float
    center: Optional[Tuple[float, ...]] = None
    width: Optional[float] = None
    period: Optional[float] = None

    @field_validator("amplitude")
    @classmethod
    def _nonnegative_amplitude(cls, value: float) -> float:
        if value < 0:
            raise ValueError("amplitude must be nonnegative")
        return value

    @model_validator(mode="after")
    def _shape_parameters(self) -> "SourceSpec":
        if self.kind == "gaussian-bump":
            if self.center is None or self.width is None:
                raise ValueError("gaussian-bump source needs center and width")
            if self.width <= 0:
                raise ValueError("width must be positive")
        if self.kind == "time-periodic" and (self.period is None or self.period <= 0):
            raise ValueError("time-periodic source needs a positive period")
        return self

    @property
    def is_constant(self) -> bool:
        return self.kind == "constant"

    def evaluate(self, grid: "Grid", t: float) -> np.ndarray:
        """Cell-center values at time t"""
        if self.kind == "constant":
            return np.full(grid.shape, self.amplitude)
        if self.kind == "time-periodic":
            level = 0.5 * self.amplitude * (1.0 + math.sin(2.0 * math.pi * t / self.period))
            return np.full(grid.shape, level)
        coords = grid.mesh()
        r2 = sum((x - c) ** 2 for x, c in zip(coords, self.center))
        return self.amplitude * np.exp(-r2 / (2.0 * self.width**2))

    def mean(self, grid: Optional["Grid"] = None) -> float:
        """Space-time mean used as the constant level fbar for equilibria"""
        if self.kind == "constant":
            return self.amplitude
        if self.kind == "time-periodic":
            return 0.5 * self.amplitude
        if grid is None:
            raise ValueError("the mean of a gaussian-bump source needs a grid")
        return float(np.mean(self.evaluate(grid, 0.0)))


class ModelParams(_Frozen):
    """Every coefficient and exponent of the lethal-interaction system.

    No field has a default: a configuration must spell out each symbol.
    """

    d1: float
    d2: float
    chi: float
    r: float
    mu: float
    a: float
    b: float
    m: float
    kappa: float
    alpha: float
    beta: float
    tau: int
    source: SourceSpec

    @field_validator("d1", "d2", "r", "mu", "a", "b", "m", "alpha", "beta")
    @classmethod
    def _positive(cls, value: float, info: ValidationInfo) -> float:
        if not value > 0:
            raise ValueError(f"{info.field_name} must be positive")
        return value

    @field_validator("chi")
    @classmethod
    def _nonnegative_chi(cls, value: float) -> float:
        if value < 0:
            raise ValueError("chi must be nonnegative")
        return value

    @field_validator("kappa")
    @classmethod
    def _kappa_above_one(cls, value: float) -> float:
        if not value > 1:
            raise ValueError("kappa must exceed 1")
        return value

    @field_validator("tau", mode="before")
    @classmethod
    def _tau_flag(cls, value):
        if value not in (0, 1) or isinstance(value, bool):
            raise ValueError("tau must be 0 or 1")
        return int(value)


# ---------------------------------------------------------------------------
# Grid
# ---------------------------------------------------------------------------


class Grid(_Frozen):
    """Uniform cell-centered mesh on [0, L1] (x [0, L2]) with Neumann closure"""

    dim: int
    extents: Tuple[float, ...]
    cells: Tuple[int, ...]

    @field_validator("dim")
    @classmethod
    def _supported_dim(cls, value: int) -> int:
        if value not in (1, 2):
            raise ValueError("dim must be 1 or 2")
        return value

    @model_validator(mode="after")
    def _axes(self) -> "Grid":
        if len(self.extents) != self.dim or len(self.cells) != self.dim:
            raise ValueError("extents and cells need one entry per axis")
        if any(n < 3 for n in self.cells):
            raise ValueError("cells must be at least 3 per axis")
        if any(not length > 0 for length in self.extents):
            raise ValueError("extents must be positive")
        return self

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(self.cells)

    @property
    def h(self) -> Tuple[float, ...]:
        return tuple(length / n for length, n in zip(self.extents, self.cells))

    @property
    def size(self) -> int:
        return int(np.prod(self.cells))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.h))

    @property
    def measure(self) -> float:
        return float(np.prod(self.extents))

    def centers(self, axis: int) -> np.ndarray:
        h = self.h[axis]
        return (np.arange(self.cells[axis]) + 0.5) * h

    def mesh(self) -> Tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*(self.centers(k) for k in range(self.dim)), indexing="ij"))


# ---------------------------------------------------------------------------
# Parameter gates and equilibria
# ---------------------------------------------------------------------------


class GateReport(_Frozen):
    name: str
    passed: bool
    margin: float
    lhs: float
    rhs: float
    conditions: Dict[str, bool] = Field(default_factory=dict)
    detail: str = ""


class GateSummary(BaseModel):
    existence: GateReport
    stability: Optional[GateReport] = None
    extinction: Optional[GateReport] = None


Regime = Literal["coexistence", "semi-coexistence"]


class EquilibriumSet(_Frozen):
    """Homogeneous steady states for a constant (or averaged) source fbar"""

    regime: Regime
    fbar: float
    fbar_is_mean: bool = False
    u_star: Optional[float] = None
    v_star: Optional[float] = None
    u_bar: float = 0.0
    v_bar: float

    @property
    def has_coexistence(self) -> bool:
        return self.u_star is not None

    @property
    def target(self) -> Tuple[float, float]:
        """Steady state a converging trajectory is expected to approach"""
        if self.has_coexistence:
            return self.u_star, self.v_star
        return self.u_bar, self.v_bar


# ---------------------------------------------------------------------------
# Run configuration
# ---------------------------------------------------------------------------


class StepControl(_Frozen):
    dt_init: float = 1e-3
    dt_min: float = 1e-10
    dt_max: float = 0.1
    cfl_safety: float = 0.9
    t_end: float = 100.0
    theta: float = 0.5
    growth: float = 1.5

    @model_validator(mode="after")
    def _bounds(self) -> "StepControl":
        if not 0 < self.dt_min <= self.dt_init <= self.dt_max:
            raise ValueError("step bounds must satisfy 0 < dt_min <= dt_init <= dt_max")
        if not 0 < self.cfl_safety < 1:
            raise ValueError("cfl_safety must lie in (0, 1)")
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")
        if not 0.5 <= self.theta <= 1:
            raise ValueError("theta must lie in [0.5, 1]")
        if self.growth < 1:
            raise ValueError("growth must be at least 1")
        return self


class InitialData(_Frozen):
    """u0 = level * (1 + offset + amplitude * xi(x)), xi a seeded cosine sum"""

    kind: Literal["perturbed", "equilibrium"] = "perturbed"
    u_level: Optional[float] = None
    v_level: Optional[float] = None
    offset: float = 0.0
    amplitude: float = 0.01
    modes: int = 3
    seed: int = 0

    @model_validator(mode="after")
    def _levels(self) -> "InitialData":
        if self.kind == "perturbed" and self.u_level is None:
            raise ValueError("perturbed initial data needs u_level")
        if self.u_level is not None and self.u_level < 0:
            raise ValueError("u_level must be nonnegative")
        if self.v_level is not None and self.v_level < 0:
            raise ValueError("v_level must be nonnegative")
        if not 0 <= self.amplitude < 1:
            raise ValueError("amplitude must lie in [0, 1)")
        if self.offset - self.amplitude <= -1:
            raise ValueError("offset - amplitude must exceed -1 to keep u0 nonnegative")
        if self.modes < 0:
            raise ValueError("modes must be nonnegative")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")
        return self


CheckName = Literal["gate", "mass_bound", "convergence", "lyapunov", "dissipation", "positivity"]

DEFAULT_CHECKS: Tuple[str, ...] = ("gate", "mass_bound", "convergence", "lyapunov")


class OutputSpec(_Frozen):
    directory: Path = Path("out")
    sample_interval: float = 0.1
    snapshots: int = 0
    checks: Tuple[CheckName, ...] = DEFAULT_CHECKS
    convergence_threshold: float = 1e-3

    @field_validator("sample_interval", "convergence_threshold")
    @classmethod
    def _positive(cls, value: float, info: ValidationInfo) -> float:
        if not value > 0:
            raise ValueError(f"{info.field_name} must be positive")
        return value

    @field_validator("snapshots")
    @classmethod
    def _snapshot_count(cls, value: int) -> int:
        if value < 0:
            raise ValueError("snapshots must be nonnegative")
        return value


class RunConfig(_Frozen):
    model: ModelParams
    grid: Grid
    control: StepControl = StepControl()
    initial: InitialData
    output: OutputSpec = OutputSpec()

    @model_validator(mode="after")
    def _consistent(self) -> "RunConfig":
        center = self.model.source.center
        if center is not None and len(center) != self.grid.dim:
            raise ValueError("source center needs one coordinate per grid axis")
        return self


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


class Verdict(BaseModel):
    """Outcome of one check; passed is None when the check does not apply"""

    name: str
    passed: Optional[bool]
    margin: Optional[float] = None
    value: Optional[float] = None
    detail: str = ""


RunStatus = Literal["completed", "growth-indicator", "solver-failure"]


class RunReport(BaseModel):
    times: List[float] = Field(default_factory=list)
    mass_series: List[float] = Field(default_factory=list)
    sup_u_series: List[float] = Field(default_factory=list)
    sup_v_series: List[float] = Field(default_factory=list)
    grad_v_sup_series: List[float] = Field(default_factory=list)
    E1_series: List[float] = Field(default_factory=list)
    E2_series: List[float] = Field(default_factory=list)
    f1_series: List[float] = Field(default_factory=list)
    f2_series: List[float] = Field(default_factory=list)
    dist_inf_series: List[float] = Field(default_factory=list)
    modal_dist_series: List[float] = Field(default_factory=list)

    mass_bound_M: float = math.nan
    fitted_rate: Optional[float] = None
    fit_residual: Optional[float] = None
    fit_window: Optional[Tuple[float, float]] = None
    predicted_rate: Optional[float] = None

    equilibria: Optional[EquilibriumSet] = None
    final_dist_coexistence: Optional[float] = None
    final_dist_semi: Optional[float] = None

    gates: List[GateReport] = Field(default_factory=list)
    verdicts: List[Verdict] = Field(default_factory=list)

    status: RunStatus = "completed"
    growth_reason: Optional[str] = None
    detail: str = ""
    clamp_count: int = 0
    v_clamp_count: int = 0
    steps: int = 0
    dt_smallest: Optional[float] = None
    dt_largest: Optional[float] = None

    @model_validator(mode="after")
    def _aligned(self) -> "RunReport":
        n = len(self.times)
        series = (
            self.mass_series, self.sup_u_series, self.sup_v_series, self.grad_v_sup_series,
            self.E1_series, self.E2_series, self.f1_series, self.f2_series,
            self.dist_inf_series, self.modal_dist_series,
        )
        if any(len(s) not in (0, n) for s in series):
            raise ValueError("every series must share its length with times")
        return self

    def verdict(self, name: str) -> Optional[Verdict]:
        return next((v for v in self.verdicts if v.name == name), None)


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------

Outcome = Literal[
    "bounded-converged-coexistence",
    "bounded-converged-extinction",
    "bounded-no-convergence",
    "growth-indicator",
    "solver-failure",
]

SWEEPABLE = (
    "d1", "d2", "chi", "r", "mu", "a", "b", "m", "kappa", "alpha", "beta", "fbar",
)


class OutcomeThresholds(_Frozen):
    converged_dist: float = 1e-3
    growth_limit: float = 1e6
    bounded_factor: float = 10.0
    bounded_after: float = 5.0
    early_window: float = 1.0


class SweepAxis(_Frozen):
    name: str
    start: Optional[float] = None
    stop: Optional[float] = None
    count: Optional[int] = None
    values: Optional[Tuple[float, ...]] = None

    @field_validator("name")
    @classmethod
    def _sweepable(cls, value: str) -> str:
        if value not in SWEEPABLE:
            raise ValueError(f"cannot sweep {value!r}; choose one of {', '.join(SWEEPABLE)}")
        return value

    @model_validator(mode="after")
    def _nonempty(self) -> "SweepAxis":
        if self.values is not None:
            if not self.values:
                raise ValueError(f"axis {self.name!r} has an empty range")
            return self
        if self.start is None or self.stop is None or self.count is None:
            raise ValueError(f"axis {self.name!r} needs values or start/stop/count")
        if self.count < 1 or self.start > self.stop:
            raise ValueError(f"axis {self.name!r} has an empty range")
        if self.count > 1 and self.start == self.stop:
            raise ValueError(f"axis {self.name!r} has an empty range")
        return self

    def points(self) -> List[float]:
        if self.values is not None:
            return [float(x) for x in self.values]
        return [float(x) for x in np.linspace(self.start, self.stop, self.count)]


class SweepSpec(_Frozen):
    axes: Tuple[SweepAxis, ...]
    base: RunConfig
    thresholds: OutcomeThresholds = OutcomeThresholds()
    seed: int = 0

    @field_validator("axes")
    @classmethod
    def _axis_count(cls, value: Tuple[SweepAxis, ...]) -> Tuple[SweepAxis, ...]:
        if not 1 <= len(value) <= 2:
            raise ValueError("a sweep takes one or two axes")
        names = [axis.name for axis in value]
        if len(set(names)) != len(names):
            raise ValueError("swept parameters must be distinct")
        return value

    @property
    def total_runs(self) -> int:
        return int(np.prod([len(axis.points()) for axis in self.axes]))


class PhasePoint(BaseModel):
    model_config = ConfigDict(from_attributes=True)

    index: int
    coordinates: Dict[str, float]
    gate_pass: bool
    outcome: Outcome
    fitted_rate: Optional[float] = None
    final_dist_inf: Optional[float] = None
    bounded: Optional[bool] = None
    detail: str = ""


# ---------------------------------------------------------------------------
# REST payloads and persisted records
# ---------------------------------------------------------------------------


class GateRequest(BaseModel):
    model: ModelParams
    dim: int = Field(ge=1)
    grid: Optional[Grid] = None


class EquilibriaRequest(BaseModel):
    model: ModelParams
    grid: Optional[Grid] = None


class RunDigest(BaseModel):
    """Scalar outcome of a run without its time series"""

    status: RunStatus
    growth_reason: Optional[str] = None
    steps: int = 0
    clamp_count: int = 0
    v_clamp_count: int = 0
    fitted_rate: Optional[float] = None
    fit_residual: Optional[float] = None
    predicted_rate: Optional[float] = None
    final_dist_coexistence: Optional[float] = None
    final_dist_semi: Optional[float] = None
    equilibria: Optional[EquilibriumSet] = None
    gates: List[GateReport] = Field(default_factory=list)
    verdicts: List[Verdict] = Field(default_factory=list)

    @classmethod
    def from_report(cls, report: RunReport) -> "RunDigest":
        return cls.model_validate(report.model_dump(include=set(cls.model_fields)))


class RunSummary(BaseModel):
    run_id: str
    exit_code: int
    output_dir: str
    digest: RunDigest


class RunRecord(BaseModel):
    model_config = ConfigDict(from_attributes=True)

    id: str
    kind: str
    status: str
    exit_code: Optional[int] = None
    output_dir: Optional[str] = None
    fitted_rate: Optional[float] = None
    final_dist_inf: Optional[float] = None
    outcome: Optional[str] = None
    detail: Optional[str] = None
    created_at: Optional[datetime] = None
    finished_at: Optional[datetime] = None


class SweepRecord(BaseModel):
    model_config = ConfigDict(from_attributes=True)

    id: str
    status: str
    point_count: int
    phase_path: Optional[str] = None
    created_at: Optional[datetime] = None
    finished_at: Optional[datetime] = None


class SweepSummary(BaseModel):
    sweep_id: str
    points: List[PhasePoint]


class RegistryInfo(BaseModel):
    active_runs: int
    active_sweeps: int
    finished_by_kind: Dict[str, int]
