"""Slow-factor correction: B and D defining systems and the corrected control."""

import math

import numpy as np
import pytest

from conftest import make_params
from mstrade.errors import DegenerateGamma
from mstrade.model import MarketState
from mstrade.riccati import CoeffsA, control_rate, solve_constant_vol
from mstrade.sensitivity import (
    CoeffsAPrime,
    coeff_derivatives,
    default_step,
    second_derivatives_fd,
)
from mstrade.slow import (
    CoeffsB,
    CoeffsD,
    b_residuals,
    b_x_prime_fd,
    closed_form_B,
    corrected_control_slow,
    cross_check_B,
    d_residuals,
    gamma_normalizer,
    m2_apply,
    solve_B,
    solve_D,
    speed_aim_slow,
)

M_S, BETA_G, DELTA, RHO2 = 0.2, 0.25, 0.0625, 0.5


def sqrt_vol(z: float) -> float:
    return math.sqrt(z)


def g_of(z: float) -> float:
    return BETA_G * math.sqrt(z)


def slow_inputs(params, z):
    sigma = sqrt_vol(z)
    h = default_step(z)
    sigma_prime = (sqrt_vol(z + h) - sqrt_vol(z - h)) / (2.0 * h)
    coeffs = solve_constant_vol(params, z)
    prime = coeff_derivatives(params, sigma, sigma_prime, coeffs)
    return coeffs, prime


def test_b_vanishes_without_correlation(params):
    coeffs, prime = slow_inputs(params, 0.3)
    b = solve_B(params, coeffs, prime, g_of(0.3), rho2=0.0)
    assert np.all(b.as_array() == 0.0)


def test_b_vanishes_without_sensitivity(params):
    coeffs, _ = slow_inputs(params, 0.3)
    zero_prime = CoeffsAPrime(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    b = solve_B(params, coeffs, zero_prime, g_of(0.3), RHO2)
    assert np.all(b.as_array() == 0.0)


def test_b_residuals_at_reference_point(params):
    coeffs, prime = slow_inputs(params, 0.3)
    b = solve_B(params, coeffs, prime, g_of(0.3), RHO2)
    assert np.max(np.abs(b_residuals(params, coeffs, prime, g_of(0.3), RHO2, b))) < 1e-12


def test_closed_form_b_matches_linear_solve(params):
    for z in (0.1, 0.3, 0.6):
        coeffs, prime = slow_inputs(params, z)
        solved = solve_B(params, coeffs, prime, g_of(z), RHO2)
        closed = closed_form_B(params, coeffs, prime, g_of(z), RHO2)
        np.testing.assert_allclose(closed.as_array(), solved.as_array(), rtol=1e-10)
        diffs = cross_check_B(params, coeffs, prime, g_of(z), RHO2)
        assert max(diffs.values()) < 1e-8


def test_closed_form_b_degenerate_normalizer(params):
    # Coefficients chosen so the printed normalizer cancels exactly.
    a = CoeffsA(a_qq=0.0, a_ql=0.0, a_qx=0.1, a_ll=0.0, a_xl=0.0, a_xx=0.1, a_0=0.1)
    p = make_params(lam=0.0, beta=0.0, rho=0.0)
    assert abs(gamma_normalizer(p, a)) < 1e-12
    prime = CoeffsAPrime(1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0)
    with pytest.raises(DegenerateGamma):
        closed_form_B(p, a, prime, 0.1, RHO2)


def test_m2_apply_arithmetic():
    # g^2/2 * A'' + c * A' with g = 2, c = 3, A' = 5, A'' = 7 -> 2*7 + 15 = 29.
    assert m2_apply(2.0, 3.0, 5.0, 7.0) == pytest.approx(29.0)


def test_d_homogeneous_case(params):
    coeffs, _ = slow_inputs(params, 0.3)
    zero = CoeffsAPrime(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    d = solve_D(
        params, coeffs, zero, zero, CoeffsB(0.0, 0.0, 0.0),
        b_x_prime=0.0, c_z=M_S - 0.3, g_z=g_of(0.3), rho2=RHO2,
    )
    assert np.all(d.as_array() == 0.0)


def test_d_residuals_at_reference_point(params):
    z = 0.2
    coeffs, prime = slow_inputs(params, z)
    second = second_derivatives_fd(params, sqrt_vol, z)
    b = solve_B(params, coeffs, prime, g_of(z), RHO2)
    bxp = b_x_prime_fd(params, sqrt_vol, g_of, RHO2, z)
    d = solve_D(params, coeffs, prime, second, b, bxp, M_S - z, g_of(z), RHO2)
    res = d_residuals(params, coeffs, prime, second, b, bxp, M_S - z, g_of(z), RHO2, d)
    assert np.max(np.abs(res)) < 1e-10


def test_corrected_control_reduces_and_shifts(params):
    z = 0.3
    coeffs, prime = slow_inputs(params, z)
    b = solve_B(params, coeffs, prime, g_of(z), RHO2)
    state = MarketState(q=0.5, l=0.05, x=0.2)
    base = control_rate(params, coeffs, state)
    assert corrected_control_slow(params, coeffs, b, 0.0, state) == pytest.approx(base)
    # With positive correlation and sigma increasing in z the shift term is
    # negative: the corrected strategy trades more slowly.
    assert b.b_q + params.lam * b.b_l < 0.0
    assert corrected_control_slow(params, coeffs, b, DELTA, state) < base


def test_speed_aim_slow_identity(params):
    z = 0.4
    coeffs, prime = slow_inputs(params, z)
    b = solve_B(params, coeffs, prime, g_of(z), RHO2)
    state = MarketState(q=-0.7, l=0.02, x=1.3)
    speed, aim = speed_aim_slow(params, coeffs, b, DELTA, state)
    assert speed * (aim - state.q) == pytest.approx(
        corrected_control_slow(params, coeffs, b, DELTA, state), rel=1e-12
    )
