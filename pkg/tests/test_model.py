import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from pydantic import ValidationError

from chemolethal.discretization import wavenumbers_squared
from chemolethal.exceptions import ConfigError, DegenerateParametersError, RegimeError
from chemolethal.model import (
    canonical_D,
    canonical_S,
    canonical_S_prime,
    check_existence_gate,
    check_extinction_gate,
    check_stability_gate,
    equilibria,
    linearized_spectrum,
    predicted_decay_rate,
    reaction_rates,
    reaction_residuals,
    solve_coexistence,
)
from chemolethal.schemas import Grid, ModelParams, SourceSpec

from conftest import coexistence_model, extinction_model


def test_canonical_functions():
    assert canonical_D(0.0, 0.7) == 1.0
    assert canonical_S(0.0, 2.0) == 0.0
    s = np.linspace(0.0, 3.0, 7)
    eps = 1e-7
    numeric = (canonical_S(s + eps, 0.4) - canonical_S(s - eps, 0.4)) / (2 * eps)
    np.testing.assert_allclose(canonical_S_prime(s + 0.0, 0.4), numeric, rtol=1e-6)


@pytest.mark.parametrize(
    "field, value, message",
    [
        ("kappa", 1.0, "kappa must exceed 1"),
        ("d1", 0.0, "d1 must be positive"),
        ("chi", -1.0, "chi must be nonnegative"),
        ("tau", 2, "tau must be 0 or 1"),
        ("r", 0.0, "r must be positive"),
    ],
)
def test_params_reject_out_of_range(field, value, message):
    with pytest.raises(ValidationError, match=message):
        ModelParams.model_validate(coexistence_model(**{field: value}))


def test_params_require_every_symbol():
    data = coexistence_model()
    del data["alpha"]
    with pytest.raises(ValidationError):
        ModelParams.model_validate(data)


def test_existence_gate_is_strict():
    params = ModelParams.model_validate(coexistence_model(alpha=1.0, beta=2.0, m=1.0))
    gate = check_existence_gate(params, 1)
    assert gate.lhs == 3.0 and gate.rhs == 3.0
    assert not gate.passed
    assert gate.margin == 0.0


def test_existence_gate_reference_parameters():
    params = ModelParams.model_validate(coexistence_model())
    gate = check_existence_gate(params, 1)
    assert gate.passed
    assert gate.margin == pytest.approx(2.5 - 1.25)
    with pytest.raises(ConfigError):
        check_existence_gate(params, 0)


@given(
    beta=st.floats(0.05, 3.0),
    m=st.floats(0.05, 3.0),
    alpha=st.floats(0.05, 3.0),
    n=st.integers(1, 3),
)
def test_existence_gate_monotone_in_beta(beta, m, alpha, n):
    params = ModelParams.model_validate(coexistence_model(beta=beta, m=m, alpha=alpha))
    gate = check_existence_gate(params, n)
    bigger = check_existence_gate(params.model_copy(update={"beta": beta + 0.5}), n)
    assert bigger.margin < gate.margin
    if not gate.passed:
        assert not bigger.passed


@settings(deadline=None)
@given(
    beta=st.floats(0.05, 3.0),
    m=st.floats(0.05, 3.0),
    alpha=st.floats(0.05, 3.0),
    n=st.integers(1, 2),
    tau=st.sampled_from([0, 1]),
)
def test_existence_gate_monotone_in_alpha_n_and_m(beta, m, alpha, n, tau):
    params = ModelParams.model_validate(coexistence_model(beta=beta, m=m, alpha=alpha, tau=tau))
    gate = check_existence_gate(params, n)
    assert check_existence_gate(params.model_copy(update={"alpha": alpha + 0.5}), n).margin > gate.margin
    assert check_existence_gate(params, n + 1).margin < gate.margin
    heavier = check_existence_gate(params.model_copy(update={"m": m + 0.5}), n)
    assert heavier.margin < gate.margin
    if not gate.passed:
        assert not heavier.passed


def test_existence_gate_records_tau_in_detail():
    gate = check_existence_gate(ModelParams.model_validate(coexistence_model(tau=0)), 1)
    assert gate.conditions == {"n": True}
    assert gate.detail.startswith("tau = 0: max(beta, beta + m)")


def test_coexistence_closed_form():
    eq = equilibria(ModelParams.model_validate(coexistence_model()))
    assert eq.regime == "coexistence"
    assert eq.u_star == pytest.approx(0.6, rel=1e-14)
    assert eq.v_star == pytest.approx(0.8, rel=1e-14)
    assert eq.v_bar == pytest.approx(0.2)
    assert eq.target == (eq.u_star, eq.v_star)


@settings(max_examples=100, deadline=None)
@given(
    r=st.floats(0.1, 10.0),
    b=st.floats(0.1, 10.0),
    a=st.floats(0.1, 10.0),
    mu=st.floats(0.1, 10.0),
    share=st.floats(0.0, 0.9),
)
def test_root_solve_matches_the_closed_form_at_kappa_two(r, b, a, mu, share):
    fbar = share * b * r / mu
    params = ModelParams.model_validate(coexistence_model(r=r, b=b, a=a, mu=mu))
    closed = (b * r - fbar * mu) / (b * r + a * mu)
    assert abs(solve_coexistence(params, fbar) - closed) <= 1e-12


def test_semi_coexistence_only():
    eq = equilibria(ModelParams.model_validate(extinction_model()))
    assert eq.regime == "semi-coexistence"
    assert not eq.has_coexistence
    assert eq.target == (0.0, 2.0)


def test_zero_source():
    eq = equilibria(ModelParams.model_validate(coexistence_model(source={"kind": "constant", "amplitude": 0.0})))
    assert eq.v_bar == 0.0
    assert eq.u_star == pytest.approx(1.0 / 1.5)


def test_equilibria_need_linear_production():
    with pytest.raises(RegimeError):
        equilibria(ModelParams.model_validate(coexistence_model(m=2.0)))


def test_gaussian_source_mean_needs_grid():
    source = {"kind": "gaussian-bump", "amplitude": 1.0, "center": [0.5], "width": 0.1}
    params = ModelParams.model_validate(coexistence_model(source=source))
    with pytest.raises(ConfigError):
        equilibria(params)
    eq = equilibria(params, grid=Grid(dim=1, extents=(1.0,), cells=(64,)))
    assert eq.fbar_is_mean
    assert 0 < eq.fbar < 1.0


@settings(max_examples=100, deadline=None)
@given(
    r=st.floats(0.1, 10.0),
    b=st.floats(0.1, 10.0),
    a=st.floats(0.1, 10.0),
    mu=st.floats(0.1, 10.0),
    share=st.floats(0.0, 0.9),
    kappa=st.sampled_from([2.0, 3.0, 4.0]),
)
def test_equilibrium_residuals(r, b, a, mu, share, kappa):
    fbar = share * b * r / mu
    model = coexistence_model(r=r, b=b, a=a, mu=mu, kappa=kappa, source={"kind": "constant", "amplitude": fbar})
    params = ModelParams.model_validate(model)
    eq = equilibria(params)
    assert 0.0 < eq.u_star < 1.0
    assert max(reaction_residuals(params, eq.u_star, eq.v_star, fbar)) <= 1e-12
    assert max(reaction_residuals(params, eq.u_bar, eq.v_bar, fbar)) <= 1e-12
    du, dv = reaction_rates(params, eq.u_star, eq.v_star, fbar)
    assert abs(du) <= 1e-12 * max(1.0, r) and abs(dv) <= 1e-12 * max(1.0, a, b * eq.v_star)


def test_residual_check_rejects_wrong_states():
    params = ModelParams.model_validate(coexistence_model())
    assert max(reaction_residuals(params, 0.5, 0.8, 0.2)) > 1e-3


def test_stability_gate():
    params = ModelParams.model_validate(coexistence_model())
    gate = check_stability_gate(params, equilibria(params))
    assert gate.passed
    assert gate.rhs == pytest.approx(4 * 0.5 / 0.6)
    assert all(gate.conditions.values())
    # 2 beta = alpha sits exactly on the boundary of the sensitivity condition
    assert gate.margin == pytest.approx(0.0, abs=1e-15)

    strong = params.model_copy(update={"chi": 2.0})
    assert not check_stability_gate(strong, equilibria(strong)).passed


def test_stability_gate_needs_coexistence():
    params = ModelParams.model_validate(extinction_model())
    with pytest.raises(RegimeError):
        check_stability_gate(params, equilibria(params))


def test_extinction_gate():
    params = ModelParams.model_validate(extinction_model())
    gate = check_extinction_gate(params, 2.0)
    assert gate.passed
    assert gate.margin == pytest.approx(1.0)
    assert gate.conditions == {"kappa==2": True, "m==1": True}
    assert not check_extinction_gate(params, 0.5).passed


def test_linearized_spectrum_homogeneous_mode():
    params = ModelParams.model_validate(coexistence_model())
    eigenvalues = linearized_spectrum(params, 0.6, 0.8, [0.0])[0]
    # trace -1.6, determinant 0.9
    assert np.sum(eigenvalues).real == pytest.approx(-1.6)
    assert np.prod(eigenvalues).real == pytest.approx(0.9)
    grid = Grid(dim=1, extents=(4.0,), cells=(32,))
    assert predicted_decay_rate(params, 0.6, 0.8, wavenumbers_squared(grid)) == pytest.approx(0.8)


def test_slaved_spectrum():
    params = ModelParams.model_validate(coexistence_model(tau=0))
    value = linearized_spectrum(params, 0.6, 0.8, [0.0])[0]
    assert value == pytest.approx(-0.9)


def test_singular_linearization_gives_nan():
    params = ModelParams.model_validate(coexistence_model(m=0.5))
    assert math.isnan(predicted_decay_rate(params, 0.0, 1.0, [0.0, 1.0]))


def test_degenerate_parameters():
    # kappa = 1 removes the logistic term, so nothing brackets a root on (0, 1)
    params = ModelParams.model_construct(**{**coexistence_model(kappa=1.0), "source": SourceSpec(kind="constant", amplitude=0.2)})
    with pytest.raises(DegenerateParametersError):
        equilibria(params)
