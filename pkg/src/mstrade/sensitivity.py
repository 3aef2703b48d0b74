"""z-derivatives of the value-function coefficients.

When the variance depends on a slow factor z, each coefficient becomes a
function of z.  Differentiating the seven coefficient equations in z gives
a linear system M(z) a'(z) = b(z) whose matrix is exactly the Jacobian of
the residuals and whose right-hand side carries the gamma*sigma*sigma'
source from the variance term.  Second derivatives come from central
finite differences of the exact solver (no printed second-derivative
system exists).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import SingularSystem
from .model import MarketParams
from .riccati import CoeffsA, jacobian, solve_constant_vol

CONDITION_LIMIT = 1e14


@dataclass(frozen=True)
class CoeffsAPrime:
    """z-derivative (or second derivative) of each value-function coefficient."""

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
    def from_array(cls, a: np.ndarray) -> "CoeffsAPrime":
        return cls(*(float(v) for v in a))


def default_step(z: float) -> float:
    """Default finite-difference step, scaled to the evaluation point."""
    return 1e-5 * max(1.0, abs(z))


def assemble_derivative_system(
    params: MarketParams,
    coeffs: CoeffsA,
    sigma: float,
    sigma_prime: float,
    printed_rhs: bool = False,
) -> tuple[np.ndarray, np.ndarray]:
    """Matrix and right-hand side of the derivative system M a' = b.

    ``coeffs`` must solve the coefficient equations at variance sigma^2.
    The rhs first component is gamma*sigma*sigma' (chain rule on the
    variance term); ``printed_rhs`` switches to the half-strength variant
    kept for diagnostics only.
    """
    m = jacobian(params, coeffs)
    b = np.zeros(7)
    b[0] = params.gamma * sigma * sigma_prime
    if printed_rhs:
        b[0] *= 0.5
    return m, b


def solve_derivatives(matrix: np.ndarray, rhs: np.ndarray) -> CoeffsAPrime:
    """Solve M a' = b, guarding against near-singular systems."""
    cond = np.linalg.cond(matrix)
    if not np.isfinite(cond) or cond > CONDITION_LIMIT:
        raise SingularSystem(f"derivative system condition number {cond:.3e} exceeds limit")
    sol = np.linalg.solve(matrix, rhs)
    scale = max(float(np.max(np.abs(rhs))), 1e-14)
    resid = float(np.max(np.abs(matrix @ sol - rhs)))
    if resid > 1e-12 * scale:
        raise SingularSystem(f"derivative solve residual {resid:.3e} exceeds tolerance")
    return CoeffsAPrime.from_array(sol)


def coeff_derivatives(
    params: MarketParams, sigma: float, sigma_prime: float, coeffs: CoeffsA | None = None
) -> CoeffsAPrime:
    """Convenience wrapper: solve the base system then the derivative system."""
    if coeffs is None:
        coeffs = solve_constant_vol(params, sigma**2)
    m, b = assemble_derivative_system(params, coeffs, sigma, sigma_prime)
    return solve_derivatives(m, b)


def fd_derivatives(
    params: MarketParams, sigma_fn: Callable[[float], float], z: float, h: float | None = None
) -> CoeffsAPrime:
    """Central finite difference of the exact solver over z (oracle path)."""
    if h is None:
        h = default_step(z)
    hi = solve_constant_vol(params, sigma_fn(z + h) ** 2).as_array()
    lo = solve_constant_vol(params, sigma_fn(z - h) ** 2).as_array()
    return CoeffsAPrime.from_array((hi - lo) / (2.0 * h))


def second_derivatives_fd(
    params: MarketParams, sigma_fn: Callable[[float], float], z: float, h: float | None = None
) -> CoeffsAPrime:
    """Central second difference of the exact solver over z."""
    if h is None:
        # Second differences lose more precision; use a wider default step.
        h = 1e-4 * max(1.0, abs(z))
    hi = solve_constant_vol(params, sigma_fn(z + h) ** 2).as_array()
    mid = solve_constant_vol(params, sigma_fn(z) ** 2).as_array()
    lo = solve_constant_vol(params, sigma_fn(z - h) ** 2).as_array()
    return CoeffsAPrime.from_array((hi - 2.0 * mid + lo) / h**2)
