"""Time integration of the lethal-interaction system.

u is advanced explicitly (Heun). For tau = 1, v is advanced with a theta
scheme whose linear diffusion/decay part is implicit; for tau = 0, v is the
solution of the screened Poisson problem slaved to u. Implicit solves use
conjugate gradients in increment form, preconditioned by a sparse LU of the
operator; the stepper factorizes once per operator.
"""

import logging
from dataclasses import dataclass, replace
from typing import Callable, List, Optional, Tuple

import numpy as np
import scipy.sparse as sps
from scipy.sparse.linalg import LinearOperator, cg, splu

from .discretization import (
    Field,
    div_chemotactic_flux,
    div_nonlinear_diffusion,
    gradient_sup,
    laplacian_matrix,
    laplacian_neumann,
)
from .exceptions import ConfigError, DivergenceError, NegativeDensityError, RegimeError, SolverError
from .model import canonical_D, canonical_S_prime, chemical_kinetics, species_kinetics
from .schemas import EquilibriumSet, Grid, ModelParams, RunConfig, StepControl

logger = logging.getLogger(__name__)

CG_RTOL = 1e-11
ELLIPTIC_RESIDUAL = 1e-10
GROWTH_LIMIT = 1e6
_EPS = 1e-12


@dataclass(frozen=True)
class State:
    u: Field
    v: Field
    t: float = 0.0

    def __post_init__(self):
        if self.u.grid is not self.v.grid and self.u.grid != self.v.grid:
            raise ValueError("u and v must live on the same grid")
        if self.u.min() < 0:
            raise NegativeDensityError(f"u has negative cells (min {self.u.min():.3e})")
        if self.v.min() < 0:
            raise NegativeDensityError(f"v has negative cells (min {self.v.min():.3e})")

    @property
    def grid(self) -> Grid:
        return self.u.grid


@dataclass
class StepStats:
    """Running tallies of a trajectory; clamps are counted per cell"""

    clamp_count: int = 0
    v_clamp_count: int = 0
    steps: int = 0
    dt_smallest: Optional[float] = None
    dt_largest: Optional[float] = None

    def record(self, dt: float) -> None:
        self.steps += 1
        self.dt_smallest = dt if self.dt_smallest is None else min(self.dt_smallest, dt)
        self.dt_largest = dt if self.dt_largest is None else max(self.dt_largest, dt)


def rhs_u(state: State, params: ModelParams) -> Field:
    """d1 div(D(u) grad u) + chi div(S(u) grad v) + r u (1 - u^(kappa-1)) - mu u v"""
    u, v = state.u, state.v
    values = (
        params.d1 * div_nonlinear_diffusion(u, params.alpha).values
        + div_chemotactic_flux(u, v, params.beta, params.chi).values
        + species_kinetics(params, u.values, v.values)
    )
    return Field(values, state.grid)


def rhs_v(state: State, params: ModelParams, t: float) -> Field:
    """d2 lap(v) + a u^m - b v + f(x, t) for the fully parabolic system"""
    if params.tau != 1:
        raise RegimeError("rhs_v applies only to tau = 1; use solve_elliptic_v for tau = 0")
    f = params.source.evaluate(state.grid, t)
    values = params.d2 * laplacian_neumann(state.v).values + chemical_kinetics(
        params, state.u.values, state.v.values, f
    )
    return Field(values, state.grid)


def _cg_increment(operator, rhs: np.ndarray, maxiter: int, what: str, preconditioner=None) -> np.ndarray:
    if not np.any(rhs):
        return np.zeros_like(rhs)
    delta, info = cg(operator, rhs, rtol=CG_RTOL, atol=0.0, maxiter=maxiter, M=preconditioner)
    if info != 0:
        residual = float(np.linalg.norm(rhs - operator @ delta) / np.linalg.norm(rhs))
        logger.warning("CG did not converge for %s (info=%d, residual %.3e)", what, info, residual)
        raise SolverError(f"CG did not converge for {what} within {maxiter} iterations", residual=residual)
    return delta


def screened_operator(grid: Grid, params: ModelParams) -> sps.csr_matrix:
    """b I - d2 lap on flattened cell values"""
    return (params.b * sps.identity(grid.size, format="csr") - params.d2 * laplacian_matrix(grid)).tocsr()


def factorized_preconditioner(operator: sps.spmatrix) -> LinearOperator:
    """Sparse LU of ``operator`` applied as the CG preconditioner"""
    lu = splu(operator.tocsc())
    return LinearOperator(operator.shape, matvec=lu.solve, dtype=float)


def solve_elliptic_v(
    u: Field,
    params: ModelParams,
    t: float,
    guess: Optional[Field] = None,
    max_iter_factor: int = 20,
    operator: Optional[sps.csr_matrix] = None,
    preconditioner: Optional[LinearOperator] = None,
) -> Field:
    """Solve (b I - d2 lap) v = a u^m + f by CG, verified to relative residual 1e-10.

    Steppers pass a prebuilt ``operator`` and ``preconditioner``; one-off
    calls build both here.
    """
    grid = u.grid
    if u.min() < 0:
        raise NegativeDensityError(f"u has negative cells (min {u.min():.3e})")
    if operator is None:
        operator = screened_operator(grid, params)
    if preconditioner is None:
        preconditioner = factorized_preconditioner(operator)
    rhs = (params.a * u.values**params.m + params.source.evaluate(grid, t)).ravel()
    start = np.zeros(grid.size) if guess is None else guess.values.ravel()
    v = start + _cg_increment(
        operator, rhs - operator @ start, max_iter_factor * grid.size, "elliptic v", preconditioner
    )

    norm = np.linalg.norm(rhs)
    residual = float(np.linalg.norm(rhs - operator @ v) / norm) if norm > 0 else float(np.linalg.norm(v))
    if residual > ELLIPTIC_RESIDUAL:
        raise SolverError(f"elliptic solve residual {residual:.3e} exceeds {ELLIPTIC_RESIDUAL:g}", residual=residual)
    # roundoff may leave -1e-17 where the exact solution touches zero
    return Field(np.maximum(v, 0.0), grid)


class Stepper:
    """Adaptive integrator for one trajectory.

    Holds the step-size history and the clamp tallies; the fields themselves
    travel in immutable ``State`` values.
    """

    def __init__(
        self,
        params: ModelParams,
        grid: Grid,
        control: StepControl,
        stats: Optional[StepStats] = None,
        growth_limit: float = GROWTH_LIMIT,
        cg_max_iterations: int = 20,
    ):
        self.params = params
        self.grid = grid
        self.control = control
        self.stats = stats if stats is not None else StepStats()
        self.growth_limit = growth_limit
        self.max_iter_factor = cg_max_iterations
        self._dt_prev: Optional[float] = None
        self._h_min = min(grid.h)
        if params.tau == 1:
            self._identity = sps.identity(grid.size, format="csr")
            self._decay_diffusion = (params.d2 * laplacian_matrix(grid) - params.b * self._identity).tocsr()
            # theta-step operator and its factorization for the last step size used
            self._theta_dt: Optional[float] = None
            self._theta_system: Optional[Tuple[sps.csr_matrix, LinearOperator]] = None
        else:
            self._screened = screened_operator(grid, params)
            self._screened_pc = factorized_preconditioner(self._screened)

    # -- step size -----------------------------------------------------------

    def stable_dt(self, state: State) -> float:
        p, c = self.params, self.control
        u, v = state.u.values, state.v.values
        h2 = self._h_min**2
        dim = self.grid.dim
        limits = [
            c.cfl_safety * h2 / (2 * dim * p.d1 * float(canonical_D(u.max(), p.alpha))),
            c.cfl_safety / (p.r * float(u.max()) ** (p.kappa - 1.0) + p.mu * float(v.max()) + _EPS),
        ]
        if p.chi > 0:
            drift = p.chi * float(np.abs(canonical_S_prime(u, p.beta)).max()) * gradient_sup(state.v)
            limits.append(c.cfl_safety * self._h_min / (drift + _EPS))
        if p.tau == 1 and c.theta < 1:
            limits.append(c.cfl_safety / ((1.0 - c.theta) * (2 * dim * p.d2 / h2 + p.b)))
        dt = min(limits)
        return dt

    def next_dt(self, state: State) -> float:
        c = self.control
        dt = self.stable_dt(state)
        if dt < c.dt_min:
            raise DivergenceError(
                f"stable step {dt:.3e} fell below dt_min {c.dt_min:.3e} at t = {state.t:.6g}",
                reason="dt-underflow",
                t=state.t,
            )
        ceiling = c.dt_init if self._dt_prev is None else min(c.dt_max, self._dt_prev * c.growth)
        return min(dt, ceiling)

    # -- one step ------------------------------------------------------------

    def _clamp(self, values: np.ndarray, what: str, t: float) -> np.ndarray:
        if not np.all(np.isfinite(values)):
            raise DivergenceError(f"{what} became non-finite at t = {t:.6g}", reason="non-finite", t=t)
        negative = int(np.count_nonzero(values < 0))
        if negative:
            if what == "v":
                self.stats.v_clamp_count += negative
            else:
                self.stats.clamp_count += negative
            logger.warning("clamped %d negative %s cells at t = %.6g (min %.3e)", negative, what, t, values.min())
            values = np.maximum(values, 0.0)
        return values

    def _advance_v(self, state: State, u_pred: Field, dt: float) -> Field:
        """Theta step for tau = 1 in increment form"""
        p, theta = self.params, self.control.theta
        t_new = state.t + dt
        v_old = state.v.values.ravel()
        g_old = (p.a * state.u.values**p.m + p.source.evaluate(self.grid, state.t)).ravel()
        g_new = (p.a * u_pred.values**p.m + p.source.evaluate(self.grid, t_new)).ravel()
        rhs = dt * (self._decay_diffusion @ v_old + (1.0 - theta) * g_old + theta * g_new)
        operator, preconditioner = self._theta_operator(dt)
        delta = _cg_increment(operator, rhs, self.max_iter_factor * self.grid.size, "parabolic v", preconditioner)
        values = self._clamp((v_old + delta).reshape(self.grid.shape), "v", t_new)
        return Field(values, self.grid)

    def _theta_operator(self, dt: float) -> Tuple[sps.csr_matrix, LinearOperator]:
        if dt != self._theta_dt:
            operator = (self._identity - (self.control.theta * dt) * self._decay_diffusion).tocsr()
            self._theta_system = (operator, factorized_preconditioner(operator))
            self._theta_dt = dt
        return self._theta_system

    def _slaved_v(self, u: Field, t: float, guess: Field) -> Field:
        return solve_elliptic_v(
            u,
            self.params,
            t,
            guess=guess,
            max_iter_factor=self.max_iter_factor,
            operator=self._screened,
            preconditioner=self._screened_pc,
        )

    def step(self, state: State, dt_cap: Optional[float] = None) -> State:
        p = self.params
        dt_free = self.next_dt(state)
        dt = dt_free if dt_cap is None else min(dt_free, dt_cap)
        t_new = state.t + dt

        k1 = rhs_u(state, p).values
        u_pred = Field(self._clamp(state.u.values + dt * k1, "u", t_new), self.grid)
        if p.tau == 1:
            v_new = self._advance_v(state, u_pred, dt)
            v_pred = v_new
        else:
            v_pred = self._slaved_v(u_pred, t_new, state.v)
        k2 = rhs_u(State(u_pred, v_pred, t_new), p).values

        u_new = self._clamp(state.u.values + 0.5 * dt * (k1 + k2), "u", t_new)
        peak = float(u_new.max())
        if peak > self.growth_limit:
            raise DivergenceError(
                f"max u = {peak:.3e} exceeded the growth limit {self.growth_limit:.1e} at t = {t_new:.6g}",
                reason="growth-limit",
                t=t_new,
            )
        u_field = Field(u_new, self.grid)
        if p.tau == 0:
            v_new = self._slaved_v(u_field, t_new, v_pred)

        self._dt_prev = dt_free
        self.stats.record(dt)
        logger.debug("step %d: t = %.6g dt = %.3e max u = %.6g", self.stats.steps, t_new, dt, peak)
        return State(u_field, v_new, t_new)


def step(state: State, params: ModelParams, control: StepControl, stats: Optional[StepStats] = None) -> State:
    """Advance one adaptive step from ``state``; clamps accumulate in ``stats``"""
    return Stepper(params, state.grid, control, stats=stats).step(state)


def sample_times(t0: float, t_end: float, interval: float) -> List[float]:
    """Uniform sample instants from t0 that land exactly on t_end"""
    count = int(np.floor((t_end - t0) / interval + 1e-9))
    times = [t0 + k * interval for k in range(count + 1)]
    if t_end - times[-1] > 1e-9 * interval:
        times.append(t_end)
    else:
        times[-1] = t_end
    return times


def simulate(
    stepper: Stepper,
    state: State,
    t_end: float,
    interval: float,
    on_sample: Callable[[State], None],
) -> State:
    """Step from ``state`` to ``t_end``, handing the state at every sample time to ``on_sample``"""
    times = sample_times(state.t, t_end, interval)
    on_sample(state)
    for target in times[1:]:
        while state.t < target:
            state = stepper.step(state, dt_cap=target - state.t)
            if target - state.t <= 1e-12 * max(1.0, abs(target)):
                state = replace(state, t=target)
        on_sample(state)
    return state


# ---------------------------------------------------------------------------
# Initial data
# ---------------------------------------------------------------------------


def smooth_perturbation(grid: Grid, modes: int, seed: int) -> np.ndarray:
    """Seeded sum of Neumann cosine modes, scaled to max |xi| = 1"""
    if modes == 0:
        return np.zeros(grid.shape)
    rng = np.random.default_rng(seed)
    coords = grid.mesh()
    xi = np.zeros(grid.shape)
    if grid.dim == 1:
        (x,) = coords
        for j in range(1, modes + 1):
            xi += rng.normal() * np.cos(np.pi * j * x / grid.extents[0])
    else:
        x, y = coords
        for j in range(modes + 1):
            for k in range(modes + 1):
                if j == k == 0:
                    continue
                weight = rng.normal() / (1 + j + k)
                xi += weight * np.cos(np.pi * j * x / grid.extents[0]) * np.cos(np.pi * k * y / grid.extents[1])
    peak = np.abs(xi).max()
    return xi / peak if peak > 0 else xi


def initial_state(
    config: RunConfig,
    eq: Optional[EquilibriumSet] = None,
    max_iter_factor: int = 20,
) -> State:
    """u0 = level (1 + offset + amplitude xi); v0 slaved (tau = 0) or constant (tau = 1)"""
    params, grid, init = config.model, config.grid, config.initial
    if init.kind == "equilibrium":
        if eq is None:
            raise ConfigError("initial.kind = 'equilibrium' needs an equilibrium (m = 1)")
        u_level, v_level = eq.target
        if init.v_level is not None:
            v_level = init.v_level
    else:
        u_level = init.u_level
        v_level = init.v_level
        if v_level is None:
            fbar = eq.fbar if eq is not None else params.source.mean(grid)
            v_level = (params.a * u_level**params.m + fbar) / params.b

    xi = smooth_perturbation(grid, init.modes, init.seed)
    u0 = Field(np.maximum(u_level * (1.0 + init.offset + init.amplitude * xi), 0.0), grid)
    if params.tau == 0:
        v0 = solve_elliptic_v(u0, params, 0.0, max_iter_factor=max_iter_factor)
    else:
        v0 = Field.constant(grid, v_level)
    return State(u0, v0, 0.0)
