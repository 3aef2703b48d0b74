"""Exact solver for the constant-volatility coefficient system.

The value function is quadratic in (q, l, x) with seven coefficients
(a_qq, a_ql, a_qx, a_ll, a_xl, a_xx, a_0).  The coefficients solve seven
coupled algebraic equations: a nonlinear 3x3 core in (a_qq, a_ql, a_ll)
plus a linear tail.  The core is solved by Newton iteration seeded from
the small-impact series, with quartic elimination (companion-matrix roots)
as fallback and cross-check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSpeed, NoAdmissibleRoot, NonConvergence
from .model import MarketParams, MarketState

COEFF_NAMES = ("a_qq", "a_ql", "a_qx", "a_ll", "a_xl", "a_xx", "a_0")

NEWTON_MAX_ITER = 50
NEWTON_TOL = 1e-12
DEFAULT_RESIDUAL_TOL = 1e-10


@dataclass(frozen=True)
class CoeffsA:
    """Coefficients of the quadratic value-function ansatz."""

    a_qq: float
    a_ql: float
    a_qx: float
    a_ll: float
    a_xl: float
    a_xx: float
    a_0: float

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.a_qq, self.a_ql, self.a_qx, self.a_ll, self.a_xl, self.a_xx, self.a_0]
        )

    @classmethod
    def from_array(cls, a: np.ndarray) -> "CoeffsA":
        return cls(*(float(v) for v in a))


def residuals(params: MarketParams, sigma2: float, coeffs: CoeffsA) -> np.ndarray:
    """Left-hand sides of the seven coefficient equations, zero at a solution.

    The signal equation is written with the source term sign fixed so that
    its solution gives a positive signal loading a_qx (the sign consistent
    with the zero-impact closed form a_qx = 1/(kappa + rho + a_qq/K)).
    """
    rho, gam, K = params.rho, params.gamma, params.cost_k
    lam, beta, kap, eta = params.lam, params.beta, params.kappa, params.eta
    a = coeffs
    cq = lam - a.a_qq + lam * a.a_ql
    h = a.a_ql + lam * a.a_ll
    cx = a.a_qx + lam * a.a_xl
    return np.array(
        [
            0.5 * rho * a.a_qq - 0.5 * gam * sigma2 + cq**2 / (2.0 * K),
            h * cq / K - (beta + rho) * a.a_ql - beta,
            (rho + kap) * a.a_qx - cx * cq / K - 1.0,
            h**2 / (2.0 * K) - (0.5 * rho + beta) * a.a_ll,
            h * cx / K - (kap + beta + rho) * a.a_xl,
            cx**2 / (2.0 * K) - (0.5 * rho + kap) * a.a_xx,
            0.5 * eta * a.a_xx - rho * a.a_0,
        ]
    )


def residual_scales(params: MarketParams, sigma2: float, coeffs: CoeffsA) -> np.ndarray:
    """Per-equation scale max(1, |largest term|) for scaled residual norms."""
    rho, gam, K = params.rho, params.gamma, params.cost_k
    lam, beta, kap, eta = params.lam, params.beta, params.kappa, params.eta
    a = coeffs
    cq = lam - a.a_qq + lam * a.a_ql
    h = a.a_ql + lam * a.a_ll
    cx = a.a_qx + lam * a.a_xl
    terms = [
        (0.5 * rho * a.a_qq, 0.5 * gam * sigma2, cq**2 / (2.0 * K)),
        (h * cq / K, (beta + rho) * a.a_ql, beta),
        ((rho + kap) * a.a_qx, cx * cq / K, 1.0),
        (h**2 / (2.0 * K), (0.5 * rho + beta) * a.a_ll),
        (h * cx / K, (kap + beta + rho) * a.a_xl),
        (cx**2 / (2.0 * K), (0.5 * rho + kap) * a.a_xx),
        (0.5 * eta * a.a_xx, rho * a.a_0),
    ]
    return np.array([max(1.0, *(abs(t) for t in eq)) for eq in terms])


def scaled_residual_norm(params: MarketParams, sigma2: float, coeffs: CoeffsA) -> float:
    res = residuals(params, sigma2, coeffs)
    return float(np.max(np.abs(res) / residual_scales(params, sigma2, coeffs)))


def jacobian(params: MarketParams, coeffs: CoeffsA) -> np.ndarray:
    """Jacobian of ``residuals`` with respect to the seven coefficients.

    Column order matches COEFF_NAMES.  Also serves as the system matrix for
    the z-derivative linear solve in the sensitivity module.
    """
    rho, K = params.rho, params.cost_k
    lam, beta, kap, eta = params.lam, params.beta, params.kappa, params.eta
    a = coeffs
    cq = lam - a.a_qq + lam * a.a_ql
    h = a.a_ql + lam * a.a_ll
    cx = a.a_qx + lam * a.a_xl
    J = np.zeros((7, 7))
    # eq 1: qq, ql
    J[0, 0] = 0.5 * rho - cq / K
    J[0, 1] = lam * cq / K
    # eq 2: qq, ql, ll
    J[1, 0] = -h / K
    J[1, 1] = (cq + lam * h) / K - (beta + rho)
    J[1, 3] = lam * cq / K
    # eq 3: qq, ql, qx, xl
    J[2, 0] = cx / K
    J[2, 1] = -lam * cx / K
    J[2, 2] = (rho + kap) - cq / K
    J[2, 4] = -lam * cq / K
    # eq 4: ql, ll
    J[3, 1] = h / K
    J[3, 3] = lam * h / K - (0.5 * rho + beta)
    # eq 5: ql, ll, qx, xl
    J[4, 1] = cx / K
    J[4, 3] = lam * cx / K
    J[4, 2] = h / K
    J[4, 4] = lam * h / K - (kap + beta + rho)
    # eq 6: qx, xl, xx
    J[5, 2] = cx / K
    J[5, 4] = lam * cx / K
    J[5, 5] = -(0.5 * rho + kap)
    # eq 7: xx, a0
    J[6, 5] = 0.5 * eta
    J[6, 6] = -rho
    return J


def a_qq_zero_impact(params: MarketParams, sigma2: float) -> float:
    """Closed-form a_qq for lambda = beta = 0."""
    rho, gam, K = params.rho, params.gamma, params.cost_k
    return 0.5 * K * (math.sqrt(rho**2 + 4.0 * gam * sigma2 / K) - rho)


def zero_impact_solution(params: MarketParams, sigma2: float) -> CoeffsA:
    """Closed-form solution for lambda = beta = 0 (impact switched off)."""
    rho, K, kap, eta = params.rho, params.cost_k, params.kappa, params.eta
    a_qq = a_qq_zero_impact(params, sigma2)
    a_qx = 1.0 / (kap + rho + a_qq / K)
    a_xx = a_qx**2 / (K * (2.0 * kap + rho))
    a_0 = 0.5 * eta * a_xx / rho
    return CoeffsA(a_qq=a_qq, a_ql=0.0, a_qx=a_qx, a_ll=0.0, a_xl=0.0, a_xx=a_xx, a_0=a_0)


def _linear_tail(params: MarketParams, a_qq: float, a_ql: float, a_ll: float) -> CoeffsA:
    """Solve the remaining linear equations given the nonlinear core."""
    rho, K = params.rho, params.cost_k
    lam, beta, kap, eta = params.lam, params.beta, params.kappa, params.eta
    cq = lam - a_qq + lam * a_ql
    h = a_ql + lam * a_ll
    m = np.array(
        [
            [(rho + kap) - cq / K, -lam * cq / K],
            [h / K, lam * h / K - (kap + beta + rho)],
        ]
    )
    a_qx, a_xl = np.linalg.solve(m, np.array([1.0, 0.0]))
    cx = a_qx + lam * a_xl
    a_xx = cx**2 / (K * (rho + 2.0 * kap))
    a_0 = 0.5 * eta * a_xx / rho
    return CoeffsA(
        a_qq=float(a_qq), a_ql=float(a_ql), a_qx=float(a_qx),
        a_ll=float(a_ll), a_xl=float(a_xl), a_xx=float(a_xx), a_0=float(a_0),
    )


def _core_residuals_jac(params, sigma2, core):
    rho, gam, K = params.rho, params.gamma, params.cost_k
    lam, beta = params.lam, params.beta
    a_qq, a_ql, a_ll = core
    cq = lam - a_qq + lam * a_ql
    h = a_ql + lam * a_ll
    f = np.array(
        [
            0.5 * rho * a_qq - 0.5 * gam * sigma2 + cq**2 / (2.0 * K),
            h * cq / K - (beta + rho) * a_ql - beta,
            h**2 / (2.0 * K) - (0.5 * rho + beta) * a_ll,
        ]
    )
    J = np.array(
        [
            [0.5 * rho - cq / K, lam * cq / K, 0.0],
            [-h / K, (cq + lam * h) / K - (beta + rho), lam * cq / K],
            [0.0, h / K, lam * h / K - (0.5 * rho + beta)],
        ]
    )
    return f, J


def _core_scales(params, sigma2, core):
    rho, gam, K = params.rho, params.gamma, params.cost_k
    lam, beta = params.lam, params.beta
    a_qq, a_ql, a_ll = core
    cq = lam - a_qq + lam * a_ql
    h = a_ql + lam * a_ll
    return np.array(
        [
            max(1.0, abs(0.5 * rho * a_qq), abs(0.5 * gam * sigma2), cq**2 / (2.0 * K)),
            max(1.0, abs(h * cq / K), abs((beta + rho) * a_ql), beta),
            max(1.0, h**2 / (2.0 * K), abs((0.5 * rho + beta) * a_ll)),
        ]
    )


def _newton_core(params, sigma2, seed):
    core = np.asarray(seed, dtype=float).copy()
    for _ in range(NEWTON_MAX_ITER):
        f, J = _core_residuals_jac(params, sigma2, core)
        if np.max(np.abs(f) / _core_scales(params, sigma2, core)) < NEWTON_TOL:
            return core
        try:
            step = np.linalg.solve(J, f)
        except np.linalg.LinAlgError:
            return None
        core -= step
        if not np.all(np.isfinite(core)):
            return None
    f, _ = _core_residuals_jac(params, sigma2, core)
    if np.max(np.abs(f) / _core_scales(params, sigma2, core)) < NEWTON_TOL:
        return core
    return None


def _quartic_candidates(params: MarketParams, sigma2: float) -> list[tuple[float, float, float]]:
    """Enumerate (a_qq, a_ql, a_ll) candidates by eliminating down to a_ql.

    For lambda, beta > 0 the elimination yields a quartic in a_ql whose
    roots are found from the companion matrix.  Degenerate lambda = 0 or
    beta = 0 cases reduce to scalar quadratics.
    """
    rho, gam, K = params.rho, params.gamma, params.cost_k
    lam, beta = params.lam, params.beta
    gs2 = gam * sigma2

    if lam == 0.0 and beta == 0.0:
        a_qq = a_qq_zero_impact(params, sigma2)
        return [(a_qq, 0.0, 0.0), (-a_qq - K * rho, 0.0, 0.0)]

    if lam == 0.0:
        out = []
        for sign in (1.0, -1.0):
            a_qq = 0.5 * K * (sign * math.sqrt(rho**2 + 4.0 * gs2 / K) - rho)
            a_ql = -beta * K / (a_qq + K * (beta + rho))
            a_ll = a_ql**2 / (K * (rho + 2.0 * beta))
            out.append((a_qq, a_ql, a_ll))
        return out

    if beta == 0.0:
        # a_ql = a_ll = 0; a_qq solves a quadratic.
        disc = (K * rho - 2.0 * lam) ** 2 - 4.0 * (lam**2 - K * gs2)
        if disc < 0.0:
            return []
        root = math.sqrt(disc)
        out = []
        for sign in (1.0, -1.0):
            a_qq = 0.5 * ((2.0 * lam - K * rho) + sign * root)
            out.append((a_qq, 0.0, 0.0))
        return out

    # General case: quartic in a = a_ql.
    # p(a) = beta + (beta + rho) a ; c4 = K (rho + 2 beta)
    # N(a) = lam K p^2 + c4 a (gamma sigma^2 - rho lam (1 + a))
    # G(a) = N(a) / (c4 beta (1 + a)), with G = lam - a_qq + lam a_ql
    # Substituting G into the first equation and clearing denominators:
    # N^2 - K rho c4 beta (1+a) N + (K rho lam (1+a) - K gamma sigma^2) (c4 beta (1+a))^2 = 0
    c4 = K * (rho + 2.0 * beta)
    p = np.array([beta, beta + rho])  # ascending powers of a
    one_plus = np.array([1.0, 1.0])
    n_poly = np.polynomial.polynomial.polyadd(
        lam * K * np.polynomial.polynomial.polymul(p, p),
        np.polynomial.polynomial.polymul(
            np.array([0.0, c4]),
            np.polynomial.polynomial.polyadd(np.array([gs2]), -rho * lam * one_plus),
        ),
    )
    quartic = np.polynomial.polynomial.polyadd(
        np.polynomial.polynomial.polymul(n_poly, n_poly),
        -K * rho * c4 * beta * np.polynomial.polynomial.polymul(one_plus, n_poly),
    )
    tail = np.polynomial.polynomial.polymul(
        np.polynomial.polynomial.polyadd(K * rho * lam * one_plus, np.array([-K * gs2])),
        (c4 * beta) ** 2 * np.polynomial.polynomial.polymul(one_plus, one_plus),
    )
    quartic = np.polynomial.polynomial.polyadd(quartic, tail)

    roots = np.polynomial.polynomial.polyroots(quartic)
    out = []
    for r in roots:
        if abs(r.imag) > 1e-10 * max(1.0, abs(r.real)):
            continue
        a = float(r.real)
        denom = c4 * beta * (1.0 + a)
        if denom == 0.0:
            continue
        n_val = float(np.polynomial.polynomial.polyval(a, n_poly))
        g = n_val / denom
        if g == 0.0:
            continue
        a_qq = lam + lam * a - g
        h = K * (beta + (beta + rho) * a) / g
        a_ll = (h - a) / lam
        out.append((a_qq, a, a_ll))
    return out


def _series_seed(params: MarketParams, sigma2: float) -> np.ndarray:
    """Seed the Newton core from the second-order small-impact series at theta = 1."""
    from .impact_series import eval_series, expand_theta

    series = expand_theta(params, sigma2, order=2)
    approx = eval_series(series, 1.0)
    return np.array([approx.a_qq, approx.a_ql, approx.a_ll])


def solve_constant_vol(
    params: MarketParams, sigma2: float, residual_tol: float = DEFAULT_RESIDUAL_TOL
) -> CoeffsA:
    """Solve the seven-equation coefficient system at variance sigma2.

    The admissible solution has a_qq > 0 and positive tracking speed
    (a_qq - lambda - lambda*a_ql > 0).  Raises NoAdmissibleRoot when no
    real candidate qualifies and NonConvergence when Newton polishing
    cannot reach the tolerance.
    """
    if not sigma2 > 0.0:
        raise ValueError(f"sigma2 must be positive, got {sigma2}")
    lam = params.lam

    if lam == 0.0 and params.beta == 0.0:
        return zero_impact_solution(params, sigma2)

    def is_admissible(c: np.ndarray) -> bool:
        return c[0] > 0.0 and (c[0] - lam - lam * c[1]) > 0.0

    candidates: list[np.ndarray] = []
    core = _newton_core(params, sigma2, _series_seed(params, sigma2))
    if core is not None:
        candidates.append(core)
    if core is None or not is_admissible(core):
        # Fallback: enumerate all elimination roots and polish each.
        for cand in _quartic_candidates(params, sigma2):
            polished = _newton_core(params, sigma2, np.array(cand))
            if polished is not None:
                candidates.append(polished)
    if not candidates:
        raise NonConvergence(
            f"Newton failed to converge for sigma2={sigma2} from series seed "
            "and from all elimination roots"
        )

    base = zero_impact_solution(params, sigma2)
    admissible = [c for c in candidates if is_admissible(c)]
    if not admissible:
        raise NoAdmissibleRoot(
            f"no candidate with a_qq > 0 and positive tracking speed at sigma2={sigma2}"
        )
    core = min(admissible, key=lambda c: abs(c[0] - base.a_qq) + abs(c[1]) + abs(c[2]))

    coeffs = _linear_tail(params, *core)
    if scaled_residual_norm(params, sigma2, coeffs) > residual_tol:
        raise NonConvergence(
            f"solution residual exceeds tolerance {residual_tol} at sigma2={sigma2}"
        )
    return coeffs


def elimination_polynomial(params: MarketParams, sigma2: float) -> np.ndarray:
    """Ascending coefficients of the quartic in a_ql used by the fallback path.

    Only defined for lambda > 0 and beta > 0.
    """
    rho, gam, K = params.rho, params.gamma, params.cost_k
    lam, beta = params.lam, params.beta
    if lam == 0.0 or beta == 0.0:
        raise ValueError("elimination quartic requires lambda > 0 and beta > 0")
    c4 = K * (rho + 2.0 * beta)
    pp = np.polynomial.polynomial
    p = np.array([beta, beta + rho])
    one_plus = np.array([1.0, 1.0])
    n_poly = pp.polyadd(
        lam * K * pp.polymul(p, p),
        pp.polymul(np.array([0.0, c4]), pp.polyadd(np.array([gam * sigma2]), -rho * lam * one_plus)),
    )
    quartic = pp.polyadd(
        pp.polymul(n_poly, n_poly), -K * rho * c4 * beta * pp.polymul(one_plus, n_poly)
    )
    tail = pp.polymul(
        pp.polyadd(K * rho * lam * one_plus, np.array([-K * gam * sigma2])),
        (c4 * beta) ** 2 * pp.polymul(one_plus, one_plus),
    )
    return pp.polyadd(quartic, tail)


def control_rate(params: MarketParams, coeffs: CoeffsA, state: MarketState) -> float:
    """Optimal trading rate at the given state."""
    lam, K = params.lam, params.cost_k
    a = coeffs
    return (
        (lam - a.a_qq + lam * a.a_ql) * state.q
        + (a.a_ql + lam * a.a_ll) * state.l
        + (a.a_qx + lam * a.a_xl) * state.x
    ) / K


def aim_and_speed(params: MarketParams, coeffs: CoeffsA, state: MarketState) -> tuple[float, float]:
    """Tracking speed and aim portfolio; control = speed * (aim - q)."""
    lam, K = params.lam, params.cost_k
    a = coeffs
    den = a.a_qq - lam - lam * a.a_ql
    if den == 0.0:
        raise DegenerateSpeed("tracking speed is zero; aim portfolio undefined")
    speed = den / K
    aim = ((a.a_ql + lam * a.a_ll) * state.l + (a.a_qx + lam * a.a_xl) * state.x) / den
    return speed, aim
