"""Fast-factor volatility correction.

A fast mean-reverting variance factor y adds a state-dependent term
phi(y) to the quadratic value function: v2 = -q^2 phi(y) / 2 with

    phi(y) = gamma * integral_0^inf P_t(sigma^2(y) - <sigma^2>) dt,

where P_t is the semigroup of the order-one factor process and <.> its
invariant mean.  The corrected trading rate subtracts (eps/K) q phi(y)
from the constant-volatility control solved at <sigma^2>.

Two factor models are supported: CIR variance (sigma^2(y) = y), where phi
has a one-line closed form, and exponential OU (sigma(y) = m e^y), where
the integral is computed by quadrature with a small-fluctuation
approximation available as a cheap substitute.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np
from scipy import integrate, special

from .errors import DegenerateSpeed, NonDecayingIntegrand
from .model import MarketParams, MarketState
from .riccati import CoeffsA, control_rate

DEFAULT_QUAD_TOL = 1e-10


def phi_cir(gamma: float, chi: float, mu: float, y: float) -> float:
    """Closed-form correction for CIR variance: (gamma/chi)(y - mu).

    The semigroup acts on y - mu as multiplication by exp(-chi t), so the
    defining integral evaluates exactly.
    """
    if not chi > 0.0:
        raise ValueError(f"chi must be positive, got {chi}")
    return gamma / chi * (y - mu)


def cir_integrand(chi: float, mu: float, y: float) -> Callable[[float], float]:
    """Semigroup integrand t -> E[sigma^2(Y_t) - <sigma^2> | Y_0 = y] for CIR."""

    def f(t: float) -> float:
        return math.exp(-chi * t) * (y - mu)

    return f


def expou_integrand(
    m: float, theta_r: float, sigma_hat: float, y: float
) -> Callable[[float], float]:
    """Semigroup integrand for the exponential OU model, sigma(y) = m e^y.

    E[m^2 e^{2Y_t} | Y_0 = y] follows from the Gaussian transition law of
    the OU factor; subtracting the invariant mean m^2 e^c with
    c = sigma_hat^2 / theta_r gives an exponentially decaying integrand.
    """
    c = sigma_hat**2 / theta_r

    def f(t: float) -> float:
        decay = math.exp(-theta_r * t)
        return m**2 * math.exp(c) * (math.exp(2.0 * y * decay - c * decay**2) - 1.0)

    return f


def phi_quadrature(
    gamma: float,
    semigroup_integrand: Callable[[float], float],
    horizon: float,
    tol: float = DEFAULT_QUAD_TOL,
) -> float:
    """Authoritative phi: adaptive quadrature of the defining integral.

    The horizon must be long enough that the integrand has decayed below
    tol; otherwise the truncated integral is unreliable and we refuse.
    """
    tail = abs(semigroup_integrand(horizon))
    if tail > tol:
        raise NonDecayingIntegrand(
            f"integrand magnitude {tail:.3e} at horizon {horizon} exceeds tolerance {tol}"
        )
    value, _ = integrate.quad(semigroup_integrand, 0.0, horizon, epsabs=tol, limit=200)
    return gamma * value


def upper_incomplete_gamma(a: float, z: float) -> float:
    """Gamma(a, z) = integral_z^inf t^{a-1} e^{-t} dt, valid for a >= 0."""
    if z < 0.0:
        raise ValueError(f"z must be non-negative, got {z}")
    if a == 0.0:
        return float(special.exp1(z)) if z > 0.0 else math.inf
    return float(special.gammaincc(a, z) * special.gamma(a))


def phi_expou_approx(
    gamma: float,
    m: float,
    theta_r: float,
    sigma_hat: float,
    y: float,
    alpha: float | None = None,
    k: float | None = None,
) -> float:
    """Small-fluctuation approximation of phi for the exponential OU model.

    Expanding the semigroup integrand to first order in y and integrating
    termwise gives, with c = k^2/alpha,

        phi ~ (gamma m^2 e^c / (2 alpha)) * (4 y I(c) - [g + ln c + Gamma(0, c)]),

    where I(c) = sqrt(pi) erf(sqrt(c)) / (2 sqrt(c)) (the lower incomplete
    gamma kernel, I(0) = 1) and g is the Euler-Mascheroni constant.  The
    bindings alpha = theta_r and k = sigma_hat follow from matching the
    exact OU semigroup; both are overridable for diagnostics.  phi_quadrature
    remains the authoritative evaluation.
    """
    if alpha is None:
        alpha = theta_r
    if k is None:
        k = sigma_hat
    if not alpha > 0.0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    c = k**2 / alpha
    if c <= 0.0:
        # Degenerate zero-fluctuation limit: I -> 1 and the bracket -> 0.
        return gamma * m**2 * 2.0 * y / alpha
    kernel = math.sqrt(math.pi) * math.erf(math.sqrt(c)) / (2.0 * math.sqrt(c))
    bracket = float(special.exp1(c)) + math.log(c) + np.euler_gamma
    return gamma * m**2 * math.exp(c) / (2.0 * alpha) * (4.0 * y * kernel - bracket)


def poisson_residual_cir(
    gamma: float, chi: float, psi: float, mu: float, y: float, q: float
) -> float:
    """Residual of the centering (Poisson) equation for the CIR closed form.

    With v2 = -(gamma / 2 chi)(y - mu) q^2 the generator
    L0 = (psi^2 y / 2) d^2/dy^2 + chi (mu - y) d/dy applied to v2 must
    equal (gamma/2)(y - mu) q^2.  v2 is linear in y so the diffusion term
    drops and the residual is identically zero; evaluating it numerically
    guards the transcription.
    """
    v2_y = -(gamma / (2.0 * chi)) * q**2
    v2_yy = 0.0
    lhs = 0.5 * psi**2 * y * v2_yy + chi * (mu - y) * v2_y
    return lhs - 0.5 * gamma * (y - mu) * q**2


def corrected_control_fast(
    params: MarketParams, base: CoeffsA, phi: float, epsilon: float, state: MarketState
) -> float:
    """Constant-vol control at the invariant variance minus (eps/K) q phi."""
    return control_rate(params, base, state) - epsilon / params.cost_k * state.q * phi


def speed_aim_fast(
    params: MarketParams, base: CoeffsA, phi: float, epsilon: float, state: MarketState
) -> tuple[float, float]:
    """Corrected tracking speed and aim; control = speed * (aim - q) exactly."""
    lam, K = params.lam, params.cost_k
    den = base.a_qq - lam - lam * base.a_ql + epsilon * phi
    if den == 0.0:
        raise DegenerateSpeed("corrected tracking speed is zero; aim undefined")
    speed = den / K
    aim = (
        (base.a_ql + lam * base.a_ll) * state.l + (base.a_qx + lam * base.a_xl) * state.x
    ) / den
    return speed, aim
