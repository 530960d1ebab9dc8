"""Monitored quantities along a trajectory and the checks built on them"""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.fft import dctn

from .discretization import Field, gradient_sup, integrate, wavenumbers_squared
from .exceptions import InsufficientDataError, RegimeError
from .model import mode_jacobians
from .schemas import EquilibriumSet, Grid, ModelParams, RunReport, Verdict
from .solver import State

logger = logging.getLogger(__name__)

U_FLOOR = 1e-300
MASS_TOLERANCE = 1.01
MIN_FIT_SAMPLES = 8
_SERIES_BRANCH = 1e-4


# ---------------------------------------------------------------------------
# Energies and distances
# ---------------------------------------------------------------------------


def _entropy_density(u: np.ndarray, u_star: float) -> np.ndarray:
    """u - u* - u* ln(u/u*), with a series branch near u = u*"""
    u = np.maximum(u, U_FLOOR)
    w = (u - u_star) / u_star
    small = np.abs(w) < _SERIES_BRANCH
    direct = u - u_star - u_star * np.log(u / u_star)
    series = u_star * w**2 * (0.5 - w / 3.0 + w**2 / 4.0)
    return np.where(small, series, direct)


def lyapunov_E1(state: State, eq: EquilibriumSet, params: ModelParams) -> float:
    """a int(u - u* - u* ln(u/u*)) + tau (mu/2) int (v - v*)^2"""
    if not eq.has_coexistence:
        raise RegimeError("E1 needs the coexistence state")
    grid = state.grid
    value = params.a * integrate(Field(_entropy_density(state.u.values, eq.u_star), grid))
    if params.tau == 1:
        value += 0.5 * params.mu * integrate(Field((state.v.values - eq.v_star) ** 2, grid))
    return value


def lyapunov_E2(state: State, params: ModelParams, v_bar: float) -> float:
    """a int u + tau (mu/2) int (v - v_bar)^2"""
    value = params.a * integrate(state.u)
    if params.tau == 1:
        value += 0.5 * params.mu * integrate(Field((state.v.values - v_bar) ** 2, state.grid))
    return value


def dissipation_f1(state: State, eq: EquilibriumSet) -> float:
    if not eq.has_coexistence:
        raise RegimeError("f1 needs the coexistence state")
    du = (state.u.values - eq.u_star) ** 2
    dv = (state.v.values - eq.v_star) ** 2
    return integrate(Field(du + dv, state.grid))


def dissipation_f2(state: State, v_bar: float) -> float:
    return integrate(Field(state.u.values**2 + (state.v.values - v_bar) ** 2, state.grid))


def dist_inf(state: State, u_e: float, v_e: float) -> float:
    """||u - u_e||_inf + ||v - v_e||_inf"""
    return float(np.abs(state.u.values - u_e).max() + np.abs(state.v.values - v_e).max())


class ModalProjector:
    """Distance to a homogeneous state in the eigen-coordinates of each linear mode.

    Deviations are projected on the Neumann cosine modes (orthonormal DCT-II);
    per mode, the 2x2 coordinates are expressed in the eigenbasis of the mode
    Jacobian (real Jordan basis for a complex pair). Near the steady state the
    resulting norm decays as a clean exponential even when the approach
    oscillates. Defective or singular modes keep the identity basis.
    """

    def __init__(self, params: ModelParams, grid: Grid, u_e: float, v_e: float):
        self.params = params
        self.grid = grid
        self.u_e = u_e
        self.v_e = v_e
        k2 = wavenumbers_squared(grid).ravel()
        jac = mode_jacobians(params, u_e, v_e, k2)
        self._inverse = np.empty_like(jac)
        self.defective = 0
        for k in range(k2.size):
            self._inverse[k] = self._basis_inverse(jac[k])

    def _basis_inverse(self, jac: np.ndarray) -> np.ndarray:
        if not np.all(np.isfinite(jac)):
            self.defective += 1
            return np.eye(2)
        values, vectors = np.linalg.eig(jac)
        if np.iscomplexobj(values) and abs(values[0].imag) > 0:
            basis = np.column_stack([vectors[:, 0].real, vectors[:, 0].imag])
        else:
            basis = np.real(vectors)
        if abs(np.linalg.det(basis)) < 1e-8:
            self.defective += 1
            return np.eye(2)
        return np.linalg.inv(basis)

    def coordinates(self, state: State) -> np.ndarray:
        du = dctn(state.u.values - self.u_e, type=2, norm="ortho").ravel()
        if self.params.tau == 0:
            return du[:, None]
        dv = dctn(state.v.values - self.v_e, type=2, norm="ortho").ravel()
        return np.einsum("kij,kj->ki", self._inverse, np.column_stack([du, dv]))

    def distance(self, state: State) -> float:
        c = self.coordinates(state)
        return float(np.sqrt(self.grid.cell_volume * np.sum(c**2)))


def modal_distance(state: State, params: ModelParams, u_e: float, v_e: float) -> float:
    return ModalProjector(params, state.grid, u_e, v_e).distance(state)


# ---------------------------------------------------------------------------
# Decay-rate fitting
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DecayFit:
    rate: float
    residual: float
    window_start: float
    window_stop: float
    samples: int


def fit_decay_rate(times: Sequence[float], series: Sequence[float]) -> DecayFit:
    """Least-squares exponential rate over the final half of the usable window.

    Samples count as usable up to the first one that is non-finite or at or
    below 1e2 machine epsilon. The returned rate is minus the slope of
    log(series); positive means decay.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(series, dtype=float)
    floor = 1e2 * np.finfo(float).eps
    bad = ~np.isfinite(y) | (y <= floor)
    usable = int(np.argmax(bad)) if bad.any() else y.size
    if usable < 2:
        raise InsufficientDataError(f"only {usable} usable samples before the roundoff floor")
    midpoint = 0.5 * (t[0] + t[usable - 1])
    window = np.nonzero(t[:usable] >= midpoint)[0]
    if window.size < MIN_FIT_SAMPLES:
        raise InsufficientDataError(
            f"{window.size} samples in the fit window [{midpoint:.6g}, {t[usable - 1]:.6g}]; "
            f"need at least {MIN_FIT_SAMPLES}"
        )
    tw, logs = t[window], np.log(y[window])
    slope, intercept = np.polyfit(tw, logs, 1)
    residual = float(np.sqrt(np.mean((logs - (slope * tw + intercept)) ** 2)))
    return DecayFit(
        rate=float(-slope),
        residual=residual,
        window_start=float(tw[0]),
        window_stop=float(tw[-1]),
        samples=int(window.size),
    )


# ---------------------------------------------------------------------------
# Bounds and checks
# ---------------------------------------------------------------------------


def ode_comparison_bound(y0: float, A: float, B: float, p: float) -> float:
    """max{y0, (B/A)^(1/p)}: ceiling for y' + A y^p <= B and for y' <= y (B - A y^p)"""
    if A <= 0 or p <= 0:
        raise ValueError("comparison bound needs A > 0 and p > 0")
    return max(y0, (B / A) ** (1.0 / p))


def mass_comparison_bound(params: ModelParams, mass0: float, measure: float) -> float:
    """Mass ceiling from the logistic comparison: A = r / |Omega|^(kappa-1), B = r, p = kappa - 1"""
    return ode_comparison_bound(mass0, params.r / measure ** (params.kappa - 1.0), params.r, params.kappa - 1.0)


def mass_bound_check(report: RunReport) -> Verdict:
    """Every mass sample must stay within 1% of M = max{mass(0), |Omega|}"""
    bound = report.mass_bound_M
    if not report.mass_series:
        return Verdict(name="mass_bound", passed=None, detail="no mass samples")
    ratio = max(report.mass_series) / bound
    passed = ratio <= MASS_TOLERANCE
    return Verdict(
        name="mass_bound",
        passed=passed,
        margin=MASS_TOLERANCE - ratio,
        value=ratio,
        detail=f"worst mass / M = {ratio:.6g} (M = {bound:.6g})",
    )


def energy_monotone_check(
    times: Sequence[float],
    series: Sequence[float],
    dt: float,
    name: str = "lyapunov",
    skip_fraction: float = 0.05,
) -> Verdict:
    """Non-increase after the first 5% of the window, up to 10 dt max|dE/dt| per sample"""
    t = np.asarray(times, dtype=float)
    e = np.asarray(series, dtype=float)
    if e.size < 2 or not np.all(np.isfinite(e)):
        return Verdict(name=name, passed=None, detail="energy series unavailable")
    rates = np.abs(np.diff(e) / np.diff(t))
    slack = 10.0 * dt * float(rates.max())
    start = t[0] + skip_fraction * (t[-1] - t[0])
    tail = e[t >= start]
    worst = float(np.diff(tail).max()) if tail.size > 1 else 0.0
    return Verdict(
        name=name,
        passed=worst <= slack,
        margin=slack - worst,
        value=worst,
        detail=f"largest increase {worst:.3e} after t = {start:.6g} (slack {slack:.3e})",
    )


def dissipation_check(report: RunReport, params: ModelParams, dt: float) -> Verdict:
    """Measured E1 decrease against the dissipation bound min(a r, b mu) f1.

    Applies to kappa = 2 in the coexistence regime, where
    dE1/dt <= -a r int (u-u*)^2 - b mu int (v-v*)^2 <= -min(a r, b mu) f1.
    """
    t = np.asarray(report.times, dtype=float)
    e = np.asarray(report.E1_series, dtype=float)
    f = np.asarray(report.f1_series, dtype=float)
    if params.kappa != 2 or e.size < 2 or not np.all(np.isfinite(e)):
        return Verdict(name="dissipation", passed=None, detail="dissipation bound needs kappa = 2 and E1")
    coefficient = min(params.a * params.r, params.b * params.mu)
    dt_samples = np.diff(t)
    bound = -coefficient * 0.5 * (f[1:] + f[:-1]) * dt_samples
    slack = 10.0 * dt * float(np.abs(np.diff(e) / dt_samples).max())
    excess = np.diff(e) - 0.9 * bound
    worst = float(excess.max())
    return Verdict(
        name="dissipation",
        passed=worst <= slack,
        margin=slack - worst,
        value=worst,
        detail=f"coefficient {coefficient:.6g}; worst excess over the bound {worst:.3e}",
    )


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------


class ReportBuilder:
    """Collects every monitored series at the sample instants of one run"""

    def __init__(self, params: ModelParams, grid: Grid, eq: Optional[EquilibriumSet], v_bar: float):
        self.params = params
        self.grid = grid
        self.eq = eq
        self.v_bar = v_bar
        if eq is not None:
            self.target: Tuple[float, float] = eq.target
        else:
            self.target = (0.0, v_bar)
        self.projector = ModalProjector(params, grid, *self.target)
        if self.projector.defective:
            logger.debug("%d modes keep the identity basis", self.projector.defective)
        self.series: dict = {name: [] for name in RunReport.model_fields if name.endswith("_series")}
        self.times: List[float] = []
        self.last_state: Optional[State] = None

    def record(self, state: State) -> None:
        coexistence = self.eq is not None and self.eq.has_coexistence
        s = self.series
        self.times.append(float(state.t))
        s["mass_series"].append(integrate(state.u))
        s["sup_u_series"].append(state.u.max())
        s["sup_v_series"].append(state.v.max())
        s["grad_v_sup_series"].append(gradient_sup(state.v))
        s["E1_series"].append(lyapunov_E1(state, self.eq, self.params) if coexistence else math.nan)
        s["E2_series"].append(lyapunov_E2(state, self.params, self.v_bar))
        s["f1_series"].append(dissipation_f1(state, self.eq) if coexistence else math.nan)
        s["f2_series"].append(dissipation_f2(state, self.v_bar))
        s["dist_inf_series"].append(dist_inf(state, *self.target))
        s["modal_dist_series"].append(self.projector.distance(state))
        self.last_state = state

    __call__ = record

    def build(self) -> RunReport:
        mass0 = self.series["mass_series"][0] if self.times else math.nan
        return RunReport(
            times=list(self.times),
            mass_bound_M=max(mass0, self.grid.measure),
            equilibria=self.eq,
            **{name: list(values) for name, values in self.series.items()},
        )
