"""Slow-factor volatility correction.

With a slowly varying variance factor z, the value-function coefficients
become functions of z and two correction layers appear:

* order sqrt(delta): a linear value correction B_q q + B_l l + B_x x
  whose coefficients solve a 3x3 linear system forced by the coefficient
  z-derivatives through the correlation rho2 and the factor volatility
  g(z);
* order delta: a quadratic correction with coefficients D solving a 7x7
  linear system forced by the slow generator M2 = g^2/2 d^2/dz^2 + c d/dz
  applied to the base coefficients.

The defining systems are the ground truth here; the closed-form B
expressions are transcribed only as a cross-check (their Gamma(z)
normalizer carries an unresolved sign convention).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DegenerateGamma, DegenerateSpeed, SingularSystem
from .model import MarketParams, MarketState
from .riccati import CoeffsA, control_rate, solve_constant_vol
from .sensitivity import CoeffsAPrime, coeff_derivatives, default_step

CONDITION_LIMIT = 1e14
GAMMA_FLOOR = 1e-12


@dataclass(frozen=True)
class CoeffsB:
    """Coefficients of the linear first-order slow correction."""

    b_q: float
    b_l: float
    b_x: float

    def as_array(self) -> np.ndarray:
        return np.array([self.b_q, self.b_l, self.b_x])


@dataclass(frozen=True)
class CoeffsD:
    """Coefficients of the quadratic second-order slow correction."""

    d_qq: float
    d_ql: float
    d_qx: float
    d_ll: float
    d_xl: float
    d_xx: float
    d_0: float

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.d_qq, self.d_ql, self.d_qx, self.d_ll, self.d_xl, self.d_xx, self.d_0]
        )


def _shorthands(params: MarketParams, a: CoeffsA) -> tuple[float, float, float]:
    lam = params.lam
    cq = lam - a.a_qq + lam * a.a_ql
    h = a.a_ql + lam * a.a_ll
    cx = a.a_qx + lam * a.a_xl
    return cq, h, cx


def b_system(
    params: MarketParams,
    coeffs: CoeffsA,
    coeffs_prime: CoeffsAPrime,
    g_z: float,
    rho2: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Matrix and rhs of the 3x3 system defining (b_q, b_l, b_x)."""
    rho, K = params.rho, params.cost_k
    lam, beta, kap, eta = params.lam, params.beta, params.kappa, params.eta
    cq, h, cx = _shorthands(params, coeffs)
    force = math.sqrt(eta) * rho2 * g_z
    m = np.array(
        [
            [cq / K - rho, lam * cq / K, 0.0],
            [h / K, lam * h / K - (rho + beta), 0.0],
            [cx / K, lam * cx / K, -(rho + kap)],
        ]
    )
    rhs = -force * np.array([coeffs_prime.a_qx, coeffs_prime.a_xl, coeffs_prime.a_xx])
    return m, rhs


def b_residuals(
    params: MarketParams,
    coeffs: CoeffsA,
    coeffs_prime: CoeffsAPrime,
    g_z: float,
    rho2: float,
    b: CoeffsB,
) -> np.ndarray:
    """Residuals of the three defining equations at a candidate B."""
    m, rhs = b_system(params, coeffs, coeffs_prime, g_z, rho2)
    return m @ b.as_array() - rhs


def solve_B(
    params: MarketParams,
    coeffs: CoeffsA,
    coeffs_prime: CoeffsAPrime,
    g_z: float,
    rho2: float,
) -> CoeffsB:
    """Solve the defining 3x3 system for the first-order slow correction."""
    m, rhs = b_system(params, coeffs, coeffs_prime, g_z, rho2)
    cond = np.linalg.cond(m)
    if not np.isfinite(cond) or cond > CONDITION_LIMIT:
        raise SingularSystem(f"B system condition number {cond:.3e} exceeds limit")
    sol = np.linalg.solve(m, rhs)
    scale = max(float(np.max(np.abs(rhs))), 1e-14)
    resid = float(np.max(np.abs(m @ sol - rhs)))
    if resid > 1e-12 * scale:
        raise SingularSystem(f"B solve residual {resid:.3e} exceeds tolerance")
    return CoeffsB(*(float(v) for v in sol))


def gamma_normalizer(params: MarketParams, coeffs: CoeffsA) -> float:
    """The printed Gamma(z) normalizer of the closed-form B expressions."""
    rho, K = params.rho, params.cost_k
    lam, beta = params.lam, params.beta
    a = coeffs
    return (
        beta * lam
        - rho * a.a_qq
        - beta * a.a_qq
        + lam * rho
        - K * rho**2
        + beta * lam * a.a_ql
        + 2.0 * lam * rho * a.a_ql
        - K * beta * rho
        + lam**2 * rho * a.a_ll
    )


def closed_form_B(
    params: MarketParams,
    coeffs: CoeffsA,
    coeffs_prime: CoeffsAPrime,
    g_z: float,
    rho2: float,
) -> CoeffsB:
    """Printed closed forms for B; cross-check only, solve_B is authoritative."""
    rho, K = params.rho, params.cost_k
    lam, beta, kap, eta = params.lam, params.beta, params.kappa, params.eta
    a = coeffs
    ap = coeffs_prime
    gam_z = gamma_normalizer(params, coeffs)
    if abs(gam_z) < GAMMA_FLOOR:
        raise DegenerateGamma(f"closed-form normalizer {gam_z:.3e} below floor")
    pref = -math.sqrt(eta) * rho2 * g_z / gam_z
    b_q = pref * (
        ap.a_xl * lam**2
        - a.a_ql * ap.a_qx * lam
        - a.a_qq * ap.a_xl * lam
        + ap.a_qx * K * beta
        + ap.a_qx * K * rho
        - a.a_ll * ap.a_qx * lam**2
        + a.a_ql * ap.a_xl * lam**2
    )
    b_l = pref * (
        a.a_ql * ap.a_qx
        - ap.a_xl * lam
        + a.a_qq * ap.a_xl
        + a.a_ll * ap.a_qx * lam
        - a.a_ql * ap.a_xl * lam
        + ap.a_xl * K * rho
    )
    b_x = pref / (kap + rho) * (
        a.a_qx * ap.a_qx * beta
        + a.a_qq * ap.a_xx * beta
        + a.a_qx * ap.a_qx * rho
        + a.a_qq * ap.a_xx * rho
        - ap.a_xx * beta * lam
        - ap.a_xx * lam * rho
        + ap.a_xx * K * rho**2
        - a.a_ll * ap.a_xx * lam**2 * rho
        + a.a_xl * ap.a_xl * lam**2 * rho
        - a.a_ql * ap.a_xx * beta * lam
        + ap.a_qx * a.a_xl * beta * lam
        - 2.0 * a.a_ql * ap.a_xx * lam * rho
        + a.a_qx * ap.a_xl * lam * rho
        + ap.a_qx * a.a_xl * lam * rho
        + ap.a_xx * K * beta * rho
    )
    return CoeffsB(b_q=b_q, b_l=b_l, b_x=b_x)


def cross_check_B(
    params: MarketParams,
    coeffs: CoeffsA,
    coeffs_prime: CoeffsAPrime,
    g_z: float,
    rho2: float,
) -> dict[str, float]:
    """Relative disagreement between the closed forms and the linear solve.

    Returns per-component relative differences; callers decide whether a
    disagreement is within tolerance or becomes a discrepancy report.
    """
    solved = solve_B(params, coeffs, coeffs_prime, g_z, rho2).as_array()
    closed = closed_form_B(params, coeffs, coeffs_prime, g_z, rho2).as_array()
    denom = np.maximum(np.abs(solved), 1e-12)
    return dict(zip(("b_q", "b_l", "b_x"), np.abs(closed - solved) / denom))


def m2_apply(g_z: float, c_z: float, first: float, second: float) -> float:
    """Slow generator M2 applied to a coefficient: g^2/2 * A'' + c * A'."""
    return 0.5 * g_z**2 * second + c_z * first


def d_system(
    params: MarketParams,
    coeffs: CoeffsA,
    coeffs_prime: CoeffsAPrime,
    coeffs_second: CoeffsAPrime,
    b: CoeffsB,
    b_x_prime: float,
    c_z: float,
    g_z: float,
    rho2: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Matrix and rhs of the 7x7 system defining the order-delta coefficients.

    Unknown ordering: (d_qq, d_ql, d_qx, d_ll, d_xl, d_xx, d_0).
    """
    rho, K = params.rho, params.cost_k
    lam, beta, kap, eta = params.lam, params.beta, params.kappa, params.eta
    cq, h, cx = _shorthands(params, coeffs)

    a1 = coeffs_prime.as_array()
    a2 = coeffs_second.as_array()
    m2 = np.array([m2_apply(g_z, c_z, a1[i], a2[i]) for i in range(7)])
    m2_qq, m2_ql, m2_qx, m2_ll, m2_xl, m2_xx, m2_0 = m2

    m = np.zeros((7, 7))
    rhs = np.zeros(7)
    # q^2 term: (rho/2) d_qq - M2 a_qq - (d_qq - lam d_ql) cq / K = 0
    m[0, 0] = 0.5 * rho - cq / K
    m[0, 1] = lam * cq / K
    rhs[0] = m2_qq
    # q l term.
    m[1, 0] = -h / K
    m[1, 1] = lam * cq / K + lam * h / K - (rho + beta)
    m[1, 3] = lam**2 * cq / K
    rhs[1] = -2.0 * m2_ql
    # q x term.
    m[2, 0] = -cx / K
    m[2, 1] = lam * cx / K
    m[2, 2] = lam * cq / K - (kap + rho)
    m[2, 4] = lam * cq / K
    rhs[2] = -2.0 * m2_qx
    # l^2 term.
    m[3, 1] = h / K
    m[3, 3] = lam * h / K - (0.5 * rho + beta)
    rhs[3] = -m2_ll
    # x l term.
    m[4, 1] = cx / K
    m[4, 2] = h / K
    m[4, 3] = lam * cx / K
    m[4, 4] = lam * h / K - (kap + rho + beta)
    rhs[4] = -2.0 * m2_xl
    # x^2 term.
    m[5, 2] = cx / K
    m[5, 4] = lam * cx / K
    m[5, 5] = -(kap + 0.5 * rho)
    rhs[5] = -m2_xx
    # constant term.
    m[6, 5] = 0.5 * eta
    m[6, 6] = -rho
    bql = b.b_q + lam * b.b_l
    rhs[6] = -2.0 * m2_0 - bql**2 / (2.0 * K) - math.sqrt(eta) * g_z * rho2 * b_x_prime
    return m, rhs


def d_residuals(
    params: MarketParams,
    coeffs: CoeffsA,
    coeffs_prime: CoeffsAPrime,
    coeffs_second: CoeffsAPrime,
    b: CoeffsB,
    b_x_prime: float,
    c_z: float,
    g_z: float,
    rho2: float,
    d: CoeffsD,
) -> np.ndarray:
    m, rhs = d_system(
        params, coeffs, coeffs_prime, coeffs_second, b, b_x_prime, c_z, g_z, rho2
    )
    return m @ d.as_array() - rhs


def solve_D(
    params: MarketParams,
    coeffs: CoeffsA,
    coeffs_prime: CoeffsAPrime,
    coeffs_second: CoeffsAPrime,
    b: CoeffsB,
    b_x_prime: float,
    c_z: float,
    g_z: float,
    rho2: float,
) -> CoeffsD:
    """Solve the 7x7 order-delta system."""
    m, rhs = d_system(
        params, coeffs, coeffs_prime, coeffs_second, b, b_x_prime, c_z, g_z, rho2
    )
    cond = np.linalg.cond(m)
    if not np.isfinite(cond) or cond > CONDITION_LIMIT:
        raise SingularSystem(f"D system condition number {cond:.3e} exceeds limit")
    sol = np.linalg.solve(m, rhs)
    return CoeffsD(*(float(v) for v in sol))


def b_x_prime_fd(
    params: MarketParams,
    sigma_fn: Callable[[float], float],
    g_fn: Callable[[float], float],
    rho2: float,
    z: float,
    h: float | None = None,
) -> float:
    """Central finite difference of b_x over z (no printed derivative system)."""
    if h is None:
        h = default_step(z)

    def b_x_at(zz: float) -> float:
        sigma = sigma_fn(zz)
        step = default_step(zz)
        sigma_prime = (sigma_fn(zz + step) - sigma_fn(zz - step)) / (2.0 * step)
        coeffs = solve_constant_vol(params, sigma**2)
        prime = coeff_derivatives(params, sigma, sigma_prime, coeffs)
        return solve_B(params, coeffs, prime, g_fn(zz), rho2).b_x

    return (b_x_at(z + h) - b_x_at(z - h)) / (2.0 * h)


def corrected_control_slow(
    params: MarketParams, coeffs: CoeffsA, b: CoeffsB, delta: float, state: MarketState
) -> float:
    """Constant-vol control at sigma^2(z) plus the sqrt(delta) shift."""
    lam, K = params.lam, params.cost_k
    return control_rate(params, coeffs, state) + math.sqrt(delta) / K * (b.b_q + lam * b.b_l)


def speed_aim_slow(
    params: MarketParams, coeffs: CoeffsA, b: CoeffsB, delta: float, state: MarketState
) -> tuple[float, float]:
    """Slow-corrected tracking pair: speed unchanged, aim shifted additively."""
    lam, K = params.lam, params.cost_k
    a = coeffs
    den = a.a_qq - lam - lam * a.a_ql
    if den == 0.0:
        raise DegenerateSpeed("tracking speed is zero; aim portfolio undefined")
    speed = den / K
    aim_c = ((a.a_ql + lam * a.a_ll) * state.l + (a.a_qx + lam * a.a_xl) * state.x) / den
    aim = aim_c + math.sqrt(delta) * (b.b_q + lam * b.b_l) / den
    return speed, aim
