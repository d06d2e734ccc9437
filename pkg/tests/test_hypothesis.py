import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from chemopersist.core import Constant, GridDomain, ModelParams, Separable, TrigSum, TrigTerm
from chemopersist.errors import (
    DegenerateDenominator,
    EmptyConstantTable,
    HypothesisViolated,
    InvalidSpec,
    NotConstantCoefficients,
)
from chemopersist.hypothesis import (
    check_h1,
    check_h2,
    coefficient_extrema,
    constant_coeff_steady_state,
    h1_threshold,
    logistic_mass_envelope,
    logistic_solution,
    mass_bound_m_tilde,
    nonlocal_margin,
)

UNIT = GridDomain((1.0,), (32,))
SQUARE = GridDomain((1.0, 1.0), (16, 16))


def consts(a0, a1, a2):
    return (Constant(a0), Constant(a1), Constant(a2))


# -- extrema ------------------------------------------------------------------


def test_extrema_of_constant():
    e = coefficient_extrema(Constant(2.0), UNIT, (0.0, 5.0))
    assert e.a_inf == e.a_sup == 2.0


def test_extrema_spatial_sine_includes_boundary():
    a = TrigSum(2.0, (TrigTerm(1.0, space=(("sin", math.pi),)),))
    e = coefficient_extrema(a, UNIT)
    assert e.a_inf == pytest.approx(2.0, abs=1e-15)
    assert e.a_sup == pytest.approx(3.0, abs=1e-15)


def test_extrema_time_cosine():
    a = TrigSum(1.0, (TrigTerm(0.5, time="cos", omega=1.0),))
    e = coefficient_extrema(a, UNIT, (0.0, 2 * math.pi))
    assert e.a_inf == pytest.approx(0.5)
    assert e.a_sup == pytest.approx(1.5)
    assert np.all(e.a_inf <= e.a_inf_t) and np.all(e.a_sup_t <= e.a_sup)


def test_extrema_per_time_tables_bracket_global():
    a = Separable("1 + 0.3*sin(2*t)", "1 + 0.5*cos(pi*x)*cos(pi*y)")
    e = coefficient_extrema(a, SQUARE, (0.0, 4.0), n_time_samples=33)
    assert len(e.times) == 33
    assert np.all(e.a_inf_t >= e.a_inf) and np.all(e.a_sup_t <= e.a_sup)
    assert e.a_sup == pytest.approx(1.3 * 1.5, rel=1e-3)


# -- H2 -----------------------------------------------------------------------


def test_h2_direct_formula():
    r = check_h2(ModelParams(chi=4.0), consts(1.0, 2.0, 0.0), UNIT)
    assert r.satisfied
    assert r.margin_local == pytest.approx(1.0)
    assert r.margin_nonlocal == pytest.approx(2.0)


def test_h2_no_chemotaxis():
    r = check_h2(ModelParams(chi=0.0), consts(1.0, 1.0, 0.0), UNIT)
    assert r.satisfied and r.margin_local == 1.0


def test_h2_violated_in_2d():
    r = check_h2(ModelParams(chi=4.0, mu=2.0, dimension=2), consts(1.0, 1.0, 0.0), SQUARE)
    assert r.margin_local == pytest.approx(-3.0)
    assert not r.satisfied


def test_h2_flags_tau():
    r = check_h2(ModelParams(chi=1.0, tau=2.0), consts(1.0, 2.0, 0.0), UNIT)
    assert not r.satisfied
    assert r.margin_local > 0
    assert any("tau" in n for n in r.notes)


def test_h2_notes_nonpositive_growth():
    r = check_h2(ModelParams(chi=0.0), consts(-0.5, 1.0, 0.0), UNIT)
    assert any("a0_inf" in n for n in r.notes)


def test_nonlocal_margin_uses_negative_part():
    assert nonlocal_margin(consts(1.0, 1.0, -0.5), UNIT, (0.0, 0.0)) == pytest.approx(0.5)
    assert nonlocal_margin(consts(1.0, 1.0, 0.7), UNIT, (0.0, 0.0)) == pytest.approx(1.0)
    big = GridDomain((2.0, 1.5), (8, 8))
    assert nonlocal_margin(consts(1.0, 1.0, -0.2), big, (0.0, 0.0)) == pytest.approx(1.0 - 3.0 * 0.2)


def test_nonlocal_margin_is_infimum_over_time():
    a1 = TrigSum(1.0, (TrigTerm(0.5, time="cos", omega=1.0),))
    a2 = TrigSum(-0.25, (TrigTerm(-0.25, time="cos", omega=1.0),))
    m = nonlocal_margin((Constant(1.0), a1, a2), UNIT, (0.0, 2 * math.pi))
    # at t = pi: a1 = 0.5, a2 = 0  -> 0.5; at t = 0: a1 = 1.5, a2 = -0.5 -> 1.0
    assert m == pytest.approx(0.5, abs=1e-9)


@settings(max_examples=50, deadline=None)
@given(chi=st.floats(0.01, 10), mu=st.floats(0.01, 10), s=st.floats(0.1, 10))
def test_h2_margin_scaling_invariance(chi, mu, s):
    coeffs = consts(1.0, 3.0, 0.0)
    a = check_h2(ModelParams(chi=chi, mu=mu), coeffs, UNIT).margin_local
    b = check_h2(ModelParams(chi=s * chi, mu=mu / s), coeffs, UNIT).margin_local
    assert a == pytest.approx(b, rel=1e-12, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(a1=st.floats(0.01, 5), a2=st.floats(0, 5))
def test_h2_without_chemotaxis_is_satisfied(a1, a2):
    assert check_h2(ModelParams(chi=0.0), consts(1.0, a1, a2), UNIT).satisfied


# -- H1 -----------------------------------------------------------------------


def test_h1_threshold_formula():
    assert h1_threshold(ModelParams(chi=1.0), 1, [(2.0, 1.0)]) == pytest.approx(0.5)
    # ((q-1)/q) C^{1/(q+1)} mu^{1/(q+1)} |chi| with q=3, C=16, mu=1, chi=-2
    expected = (2.0 / 3.0) * 16.0**0.25 * 2.0
    assert h1_threshold(ModelParams(chi=-2.0), 1, [(3.0, 16.0), (2.0, 1e6)]) == pytest.approx(expected)


def test_h1_examples():
    r = check_h1(ModelParams(chi=1.0), consts(1.0, 1.0, 0.0), UNIT, c_gamma_table=[(2.0, 1.0)])
    assert r.satisfied and r.margin_local == pytest.approx(0.5)
    r = check_h1(ModelParams(chi=1.0), consts(1.0, 0.1, 0.0), UNIT, c_gamma_table=[(2.0, 1.0)])
    assert not r.satisfied and r.margin_local == pytest.approx(-0.4)
    r = check_h1(ModelParams(chi=0.0), consts(1.0, 1.0, 0.0), UNIT, c_gamma_table=[(5.0, 3.0)])
    assert r.satisfied and r.margin_local == 1.0
    assert any("user supplied" in n for n in r.notes)


def test_h1_requires_table_and_valid_q():
    with pytest.raises(EmptyConstantTable):
        check_h1(ModelParams(chi=1.0), consts(1.0, 1.0, 0.0), UNIT, c_gamma_table=[])
    with pytest.raises(InvalidSpec):
        h1_threshold(ModelParams(chi=1.0), 1, [(1.0, 1.0)])
    with pytest.raises(InvalidSpec):
        h1_threshold(ModelParams(chi=1.0, dimension=2), 2, [(1.0, 2.0)])
    with pytest.raises(InvalidSpec):
        h1_threshold(ModelParams(chi=1.0), 1, [(2.0, 0.0)])


# -- bounds -------------------------------------------------------------------


@pytest.mark.parametrize(
    "lengths,a,expected",
    [((1.0,), (1.0, 1.0, 0.0), 1.0), ((1.0,), (1.0, 1.0, -0.5), 2.0), ((2.0,), (3.0, 2.0, 0.0), 3.0)],
)
def test_mass_bound_examples(lengths, a, expected):
    d = GridDomain(lengths, (16,))
    b = mass_bound_m_tilde(consts(*a), d)
    assert b.m_tilde_1 == pytest.approx(expected)
    assert b.m1 == pytest.approx(expected + 1.0)


def test_mass_bound_requires_positive_margin():
    with pytest.raises(HypothesisViolated):
        mass_bound_m_tilde(consts(1.0, 1.0, -1.5), UNIT)


def test_logistic_examples():
    assert logistic_solution(1.0, 1.0, 1.0, 3.0) == pytest.approx(1.0)
    assert logistic_solution(2.0, 1.0, 1.0, math.log(2.0)) == pytest.approx(4.0 / 3.0)
    assert logistic_solution(0.0, 1.0, 1.0, 5.0) == 0.0
    env = logistic_mass_envelope(consts(1.0, 1.0, 0.0), UNIT, 2.0, math.log(2.0))
    assert env == pytest.approx(4.0 / 3.0)


@pytest.mark.parametrize("growth,crowding,m0", [(1.5, 0.7, 0.2), (1.5, 0.7, 5.0), (0.0, 0.5, 2.0), (-0.8, 0.3, 1.0)])
def test_logistic_matches_ode_solver(growth, crowding, m0):
    t = np.linspace(0, 6, 25)
    sol = solve_ivp(lambda _, y: y * (growth - crowding * y), (0, 6), [m0], t_eval=t, rtol=1e-11, atol=1e-13)
    np.testing.assert_allclose(logistic_solution(m0, growth, crowding, t), sol.y[0], rtol=1e-8)


@settings(max_examples=40, deadline=None)
@given(m0=st.floats(0.01, 10), a0=st.floats(0.1, 3), a1=st.floats(0.1, 3))
def test_envelope_monotone_and_limit(m0, a0, a1):
    coeffs = consts(a0, a1, 0.0)
    bounds = mass_bound_m_tilde(coeffs, UNIT)
    t = np.linspace(0, 10, 50)
    y = bounds.envelope(m0, t)
    dy = np.diff(y)
    if m0 < bounds.capacity:
        assert np.all(dy >= -1e-12)
    else:
        assert np.all(dy <= 1e-12)
    assert bounds.envelope(m0, 100.0 / a0) == pytest.approx(bounds.m_tilde_1, abs=1e-9)


def test_steady_state_examples():
    assert constant_coeff_steady_state(ModelParams(chi=1.0), consts(1.0, 1.0, 0.0), UNIT) == (1.0, 1.0)
    assert constant_coeff_steady_state(ModelParams(chi=1.0), consts(2.0, 1.0, 1.0), UNIT) == (1.0, 1.0)
    assert constant_coeff_steady_state(ModelParams(chi=1.0, mu=4.0, lambda_=2.0), consts(1.0, 1.0, 0.0), UNIT) == (1.0, 2.0)
    with pytest.raises(DegenerateDenominator):
        constant_coeff_steady_state(ModelParams(chi=1.0), consts(1.0, 1.0, -1.0), UNIT)
    with pytest.raises(NotConstantCoefficients):
        constant_coeff_steady_state(ModelParams(chi=1.0), (Separable("1+t", "1"), Constant(1), Constant(0)), UNIT)
