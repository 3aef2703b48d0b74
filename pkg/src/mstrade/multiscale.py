"""Combined fast and slow volatility corrections.

The joint variance specification is multiplicative, sigma^2(y, z) = y z,
with a fast CIR factor y averaging to mu, so the effective slow-scale
variance is sigma_bar^2(z) = mu z.  The combined control is the
constant-vol control at sigma_bar^2(z), shifted additively by the
sqrt(delta) slow term and multiplicatively in q by the fast term:

    u = u_c(z) + (sqrt(delta)/K)(b_q + lam b_l) - (eps/K) q phi(y, z).

The tracking-speed form defines aim := q + u / speed, which makes
speed * (aim - q) = u an exact identity; the literature's factored
decomposition (equivalent only to first order) is kept as a diagnostic.
"""

from __future__ import annotations

import math

from .errors import DegenerateSpeed
from .model import MarketParams, MarketState
from .riccati import CoeffsA, control_rate
from .slow import CoeffsB


def phi_multiscale_cir(gamma: float, chi: float, mu: float, y: float, z: float) -> float:
    """Fast correction for sigma^2(y, z) = y z: (gamma/chi) z (y - mu).

    z enters linearly because the semigroup acts on y alone and the
    centered variance is z (y - mu).
    """
    if not chi > 0.0:
        raise ValueError(f"chi must be positive, got {chi}")
    return gamma / chi * z * (y - mu)


def corrected_control_multiscale(
    params: MarketParams,
    base: CoeffsA,
    b: CoeffsB,
    phi: float,
    epsilon: float,
    delta: float,
    state: MarketState,
) -> float:
    """Both correction layers applied to the constant-vol control at sigma_bar^2(z)."""
    lam, K = params.lam, params.cost_k
    return (
        control_rate(params, base, state)
        + math.sqrt(delta) / K * (b.b_q + lam * b.b_l)
        - epsilon / K * state.q * phi
    )


def speed_aim_multiscale(
    params: MarketParams,
    base: CoeffsA,
    b: CoeffsB,
    phi: float,
    epsilon: float,
    delta: float,
    state: MarketState,
) -> tuple[float, float]:
    """Combined tracking pair with the exact identity speed * (aim - q) = control."""
    lam, K = params.lam, params.cost_k
    den = base.a_qq - lam - lam * base.a_ql + epsilon * phi
    if den == 0.0:
        raise DegenerateSpeed("combined tracking speed is zero; aim undefined")
    speed = den / K
    control = corrected_control_multiscale(params, base, b, phi, epsilon, delta, state)
    aim = state.q + control / speed
    return speed, aim


def printed_aim_decomposition(
    params: MarketParams,
    base: CoeffsA,
    b: CoeffsB,
    phi: float,
    epsilon: float,
    delta: float,
    state: MarketState,
) -> float:
    """Diagnostic: the factored aim (multiplicative fast factor on the
    constant-vol aim plus the additive slow shift), which matches the exact
    aim only to first order in the correction scales."""
    lam = params.lam
    den_c = base.a_qq - lam - lam * base.a_ql
    if den_c == 0.0:
        raise DegenerateSpeed("constant-vol tracking speed is zero")
    den_f = den_c + epsilon * phi
    if den_f == 0.0:
        raise DegenerateSpeed("combined tracking speed is zero")
    aim_c = (
        (base.a_ql + lam * base.a_ll) * state.l + (base.a_qx + lam * base.a_xl) * state.x
    ) / den_c
    return aim_c * (1.0 - epsilon * phi / den_c) + math.sqrt(delta) * (
        b.b_q + lam * b.b_l
    ) / den_f
