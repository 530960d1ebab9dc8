"""Parameters, canonical response functions, parameter gates and equilibria"""

import logging
from typing import Optional, Tuple

import numpy as np
from scipy.optimize import brentq

from .exceptions import ConfigError, DegenerateParametersError, RegimeError
from .schemas import EquilibriumSet, GateReport, Grid, ModelParams

logger = logging.getLogger(__name__)

RESIDUAL_TOLERANCE = 1e-12


def canonical_D(s, alpha: float):
    """Diffusivity (1 + s)^alpha"""
    return (1.0 + s) ** alpha


def canonical_S(s, beta: float):
    """Sensitivity s (1 + s)^beta, vanishing at s = 0"""
    return s * (1.0 + s) ** beta


def canonical_S_prime(s, beta: float):
    return (1.0 + s) ** beta + beta * s * (1.0 + s) ** (beta - 1.0)


def species_kinetics(params: ModelParams, u, v):
    """Logistic growth minus lethal interaction: r u (1 - u^(kappa-1)) - mu u v"""
    return params.r * u * (1.0 - u ** (params.kappa - 1.0)) - params.mu * u * v


def chemical_kinetics(params: ModelParams, u, v, f):
    return params.a * u**params.m - params.b * v + f


def reaction_rates(params: ModelParams, u, v, f):
    """Pointwise kinetics of both species, the spatially uniform limit of the system"""
    return species_kinetics(params, u, v), chemical_kinetics(params, u, v, f)


# ---------------------------------------------------------------------------
# Gates
# ---------------------------------------------------------------------------


def check_existence_gate(params: ModelParams, n: int) -> GateReport:
    """Global boundedness threshold: strict inequality against alpha + 2/n"""
    if n < 1:
        raise ConfigError("dimension n must be at least 1")
    rhs = params.alpha + 2.0 / n
    if params.tau == 1:
        lhs = params.beta + params.m
        form = "beta + m"
    else:
        lhs = max(params.beta, params.beta + params.m)
        form = "max(beta, beta + m)"
    passed = lhs < rhs
    return GateReport(
        name="existence",
        passed=passed,
        margin=rhs - lhs,
        lhs=lhs,
        rhs=rhs,
        conditions={"n": n >= 1},
        detail=f"tau = {params.tau}: {form} = {lhs:.6g} {'<' if passed else '>='} alpha + 2/n = {rhs:.6g}",
    )


def check_stability_gate(params: ModelParams, eq: EquilibriumSet) -> GateReport:
    """Coexistence stability: chi^2 < 4 d1 d2 mu / (a u*) and 2 beta <= alpha.

    ``conditions`` records the standing hypotheses (kappa >= 2, m = 1,
    fbar mu < b r); the verdict layer treats the gate as applicable only when
    all of them hold.
    """
    if not eq.has_coexistence:
        raise RegimeError("stability gate needs a coexistence state; the regime is semi-coexistence")
    bound = 4.0 * params.d1 * params.d2 * params.mu / (params.a * eq.u_star)
    lhs = params.chi**2
    sensitivity_ok = 2.0 * params.beta <= params.alpha
    passed = lhs < bound and sensitivity_ok
    return GateReport(
        name="stability",
        passed=passed,
        margin=min(bound - lhs, params.alpha - 2.0 * params.beta),
        lhs=lhs,
        rhs=bound,
        conditions={
            "kappa>=2": params.kappa >= 2,
            "m==1": params.m == 1,
            "fbar*mu<b*r": eq.fbar * params.mu < params.b * params.r,
            "2beta<=alpha": sensitivity_ok,
        },
        detail=f"chi^2 = {lhs:.6g} vs 4 d1 d2 mu / (a u*) = {bound:.6g}; "
        f"2 beta = {2 * params.beta:.6g} vs alpha = {params.alpha:.6g}",
    )


def check_extinction_gate(params: ModelParams, fbar: float) -> GateReport:
    """Semi-coexistence hypotheses: fbar mu >= b r, with kappa = 2 and m = 1"""
    lhs = fbar * params.mu
    rhs = params.b * params.r
    conditions = {"kappa==2": params.kappa == 2, "m==1": params.m == 1}
    passed = lhs >= rhs
    return GateReport(
        name="extinction",
        passed=passed,
        margin=lhs - rhs,
        lhs=lhs,
        rhs=rhs,
        conditions=conditions,
        detail=f"fbar mu = {lhs:.6g} vs b r = {rhs:.6g}",
    )


# ---------------------------------------------------------------------------
# Equilibria
# ---------------------------------------------------------------------------


def reaction_residuals(params: ModelParams, u: float, v: float, fbar: float) -> Tuple[float, float]:
    """Relative residuals of both algebraic steady-state relations.

    The species relation is divided through by u, so the trivial root u = 0
    has residual zero; each residual is scaled by the sum of its term magnitudes.
    """
    if u == 0:
        species = 0.0
    else:
        terms = (params.r, params.r * u ** (params.kappa - 1.0), params.mu * v)
        species = abs(terms[0] - terms[1] - terms[2]) / max(sum(terms), np.finfo(float).tiny)
    terms = (params.a * u**params.m, params.b * v, fbar)
    chemical = abs(terms[0] - terms[1] + terms[2]) / max(sum(terms), np.finfo(float).tiny)
    return species, chemical


def solve_coexistence(params: ModelParams, fbar: float) -> float:
    """Root of r (1 - u^(kappa-1)) = mu (a u + fbar) / b on (0, 1), bracketed then Newton-polished"""

    def g(u: float) -> float:
        return params.r * (1.0 - u ** (params.kappa - 1.0)) - params.mu * (params.a * u + fbar) / params.b

    def g_prime(u: float) -> float:
        return -params.r * (params.kappa - 1.0) * u ** (params.kappa - 2.0) - params.mu * params.a / params.b

    try:
        u = brentq(g, 0.0, 1.0, xtol=1e-16, rtol=4 * np.finfo(float).eps, maxiter=200)
    except ValueError as exc:
        raise DegenerateParametersError(f"no sign change of the coexistence relation on (0, 1): {exc}")
    for _ in range(3):
        slope = g_prime(u)
        if slope == 0:
            break
        nxt = u - g(u) / slope
        if not 0.0 < nxt < 1.0:
            break
        u = nxt
    return u


def equilibria(
    params: ModelParams,
    fbar: Optional[float] = None,
    grid: Optional[Grid] = None,
) -> EquilibriumSet:
    """Homogeneous steady states for the constant source level fbar.

    When fbar is omitted it is the mean of ``params.source`` and the result is
    flagged with ``fbar_is_mean`` unless the source is constant.
    """
    if params.m != 1:
        raise RegimeError(f"equilibrium analysis requires m = 1 (got m = {params.m})")
    fbar_is_mean = False
    if fbar is None:
        try:
            fbar = params.source.mean(grid)
        except ValueError as exc:
            raise ConfigError(str(exc))
        fbar_is_mean = not params.source.is_constant
    if fbar < 0:
        raise ConfigError("fbar must be nonnegative")

    v_bar = fbar / params.b
    if not params.b * params.r > fbar * params.mu:
        logger.debug("fbar mu >= b r: only the semi-coexistence state exists")
        return EquilibriumSet(regime="semi-coexistence", fbar=fbar, fbar_is_mean=fbar_is_mean, v_bar=v_bar)

    if params.kappa == 2:
        br = params.b * params.r
        u_star = (br - fbar * params.mu) / (br + params.a * params.mu)
    else:
        u_star = solve_coexistence(params, fbar)
    v_star = (params.a * u_star + fbar) / params.b

    species, chemical = reaction_residuals(params, u_star, v_star, fbar)
    if max(species, chemical) > RESIDUAL_TOLERANCE or not 0.0 < u_star < 1.0:
        raise DegenerateParametersError(
            f"coexistence state u* = {u_star!r} fails its residual check "
            f"(species {species:.3e}, chemical {chemical:.3e})"
        )
    return EquilibriumSet(
        regime="coexistence",
        fbar=fbar,
        fbar_is_mean=fbar_is_mean,
        u_star=u_star,
        v_star=v_star,
        v_bar=v_bar,
    )


# ---------------------------------------------------------------------------
# Linearization about a homogeneous state
# ---------------------------------------------------------------------------


def mode_jacobians(params: ModelParams, u_e: float, v_e: float, k2) -> np.ndarray:
    """2x2 Jacobian of the discretized system for each Neumann mode, shape (K, 2, 2)"""
    k2 = np.atleast_1d(np.asarray(k2, dtype=float))
    if u_e > 0 or params.m >= 1:
        production = params.a * params.m * u_e ** (params.m - 1.0)
    else:
        # a m u^(m-1) is unbounded at u = 0 when m < 1
        production = np.inf
    jac = np.empty((k2.size, 2, 2))
    jac[:, 0, 0] = (
        params.r * (1.0 - params.kappa * u_e ** (params.kappa - 1.0))
        - params.mu * v_e
        - params.d1 * canonical_D(u_e, params.alpha) * k2
    )
    jac[:, 0, 1] = -params.mu * u_e - params.chi * canonical_S(u_e, params.beta) * k2
    jac[:, 1, 0] = production
    jac[:, 1, 1] = -params.b - params.d2 * k2
    return jac


def linearized_spectrum(params: ModelParams, u_e: float, v_e: float, k2) -> np.ndarray:
    """Eigenvalues per mode: (K, 2) complex for tau = 1, (K,) real for tau = 0"""
    jac = mode_jacobians(params, u_e, v_e, k2)
    if params.tau == 1:
        if not np.all(np.isfinite(jac)):
            return np.full((jac.shape[0], 2), np.nan, dtype=complex)
        return np.linalg.eigvals(jac)
    slaved = params.b + params.d2 * np.atleast_1d(np.asarray(k2, dtype=float))
    with np.errstate(invalid="ignore"):
        return jac[:, 0, 0] + jac[:, 0, 1] * jac[:, 1, 0] / slaved


def predicted_decay_rate(params: ModelParams, u_e: float, v_e: float, k2) -> float:
    """Slowest linear decay rate -max Re(lambda); NaN when the linearization is singular"""
    spectrum = linearized_spectrum(params, u_e, v_e, k2)
    if not np.all(np.isfinite(spectrum)):
        return float("nan")
    return float(-np.max(np.real(spectrum)))
