"""Monte Carlo comparison of corrected and baseline trading strategies.

The exogenous states (signal x, volatility factors y and z, price p) are
simulated once per path and shared by both strategies; only the position
q and the impact level l differ between them.  This common-random-numbers
setup makes the per-path gain (corrected minus baseline PnL) a low-noise
estimator, and makes the gain exactly zero when the strategies coincide.

Realized PnL is mark-to-market on the traded price minus instantaneous
costs: d(PnL) = q (dP + dl) - (K/2) u^2 dt.  The risk penalty
(gamma/2) sigma^2 q^2 belongs to the control objective, not to realized
PnL; a penalty-adjusted variant is tracked alongside so either reading is
available.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import interpolate, stats

from .errors import ConfigError, UnstableStep
from .model import (
    ConstantVol,
    FastCIR,
    FastExpOU,
    MarketParams,
    MarketState,
    Multiscale,
    SlowCIR,
    VolSpec,
)
from .riccati import CoeffsA, solve_constant_vol
from .sensitivity import coeff_derivatives
from .slow import solve_B

OVERFLOW_GUARD = 1e8
DEFAULT_Z_NODES = 200


@dataclass(frozen=True)
class SimConfig:
    """Simulation controls; dt and horizon must give an integer step count."""

    horizon_years: float = 2.0
    dt: float = 1.0 / 2520.0
    n_paths: int = 10_000
    seed: int = 0
    w_ref: float = 100.0

    def n_steps(self) -> int:
        steps = self.horizon_years / self.dt
        rounded = round(steps)
        if self.dt <= 0.0 or abs(steps - rounded) > 1e-9 * max(1.0, abs(steps)):
            raise ConfigError(
                f"horizon {self.horizon_years} is not an integer multiple of dt {self.dt}"
            )
        if self.n_paths < 2:
            raise ConfigError(f"n_paths must be at least 2, got {self.n_paths}")
        if not self.w_ref > 0.0:
            raise ConfigError(f"w_ref must be positive, got {self.w_ref}")
        return int(rounded)


@dataclass(frozen=True)
class PnLStats:
    """Sample statistics of a per-path PnL vector, in currency and bps of w_ref."""

    mean: float
    std: float
    ci95_lo: float
    ci95_hi: float
    mean_bps: float
    std_bps: float
    ci95_lo_bps: float
    ci95_hi_bps: float


def pnl_stats(per_path_values: np.ndarray, w_ref: float) -> PnLStats:
    """Mean, sample std (ddof=1) and normal-approximation 95% interval."""
    values = np.asarray(per_path_values, dtype=float)
    n = values.size
    if n < 2:
        raise ValueError(f"need at least 2 values, got {n}")
    mean = float(np.mean(values))
    std = float(np.std(values, ddof=1))
    half = 1.96 * std / math.sqrt(n)
    to_bps = 1e4 / w_ref
    return PnLStats(
        mean=mean,
        std=std,
        ci95_lo=mean - half,
        ci95_hi=mean + half,
        mean_bps=mean * to_bps,
        std_bps=std * to_bps,
        ci95_lo_bps=(mean - half) * to_bps,
        ci95_hi_bps=(mean + half) * to_bps,
    )


def pnl_increment(
    params: MarketParams, q: float, u: float, dP: float, dl: float, dt: float
) -> float:
    """One-step realized PnL: position marked on the traded price minus cost."""
    return q * (dP + dl) - 0.5 * params.cost_k * u**2 * dt


def step_dynamics(
    params: MarketParams,
    vol: VolSpec,
    state: MarketState,
    u: float,
    increments: tuple[float, float, float, float],
    dt: float,
) -> MarketState:
    """Single Euler step of the joint system (scalar; the engine vectorizes this).

    ``increments`` are the Brownian increments (dw_signal, dw_fast,
    dw_slow, db_price) over dt, already correlated as required.
    """
    dw0, dw1, dw2, db = increments
    lam, beta = params.lam, params.beta
    kap, eta = params.kappa, params.eta
    model = vol.model

    sig2 = _sigma2_scalar(model, state.y, state.z)
    dP = state.x * dt + math.sqrt(max(sig2, 0.0)) * db
    q = state.q + u * dt
    l = state.l + (lam * u - beta * state.l) * dt
    x = state.x - kap * state.x * dt + math.sqrt(eta) * dw0

    y, z = state.y, state.z
    if isinstance(model, (FastCIR, Multiscale)):
        f = model if isinstance(model, FastCIR) else model.fast
        if f.epsilon > 0.0:
            yp = max(y, 0.0)
            y = (
                y
                + f.chi / f.epsilon * (f.mu - yp) * dt
                + f.psi / math.sqrt(f.epsilon) * math.sqrt(yp) * dw1
            )
    elif isinstance(model, FastExpOU) and model.epsilon > 0.0:
        y = y - model.theta_r / model.epsilon * y * dt + model.sigma_hat / math.sqrt(model.epsilon) * dw1
    if isinstance(model, (SlowCIR, Multiscale)):
        s = model if isinstance(model, SlowCIR) else model.slow
        zp = max(z, 0.0)
        z = z + s.delta * (s.m_s - zp) * dt + math.sqrt(s.delta) * s.beta_g * math.sqrt(zp) * dw2

    return MarketState(q=q, l=l, x=x, y=y, z=z, p=state.p + dP, t=state.t + dt)


def _sigma2_scalar(model, y: float, z: float) -> float:
    if isinstance(model, ConstantVol):
        return model.sigma**2
    if isinstance(model, FastCIR):
        return max(y, 0.0)
    if isinstance(model, FastExpOU):
        return model.m**2 * math.exp(2.0 * y)
    if isinstance(model, SlowCIR):
        return max(z, 0.0)
    if isinstance(model, Multiscale):
        return max(y, 0.0) * max(z, 0.0)
    raise TypeError(f"unsupported volatility model {type(model).__name__}")


def _sigma2_array(model, y: np.ndarray, z: np.ndarray) -> np.ndarray:
    if isinstance(model, ConstantVol):
        return np.full_like(y, model.sigma**2)
    if isinstance(model, FastCIR):
        return np.maximum(y, 0.0)
    if isinstance(model, FastExpOU):
        return model.m**2 * np.exp(2.0 * y)
    if isinstance(model, SlowCIR):
        return np.maximum(z, 0.0)
    if isinstance(model, Multiscale):
        return np.maximum(y, 0.0) * np.maximum(z, 0.0)
    raise TypeError(f"unsupported volatility model {type(model).__name__}")


class ConstantCoeffStrategy:
    """Linear feedback control from a fixed coefficient set."""

    def __init__(self, params: MarketParams, coeffs: CoeffsA):
        lam, K = params.lam, params.cost_k
        self.cq = (lam - coeffs.a_qq + lam * coeffs.a_ql) / K
        self.h = (coeffs.a_ql + lam * coeffs.a_ll) / K
        self.cx = (coeffs.a_qx + lam * coeffs.a_xl) / K

    def controls(self, q, l, x, y, z):
        return self.cq * q + self.h * l + self.cx * x


class FastCorrectedStrategy(ConstantCoeffStrategy):
    """Constant-coefficient control minus the fast-factor term (eps/K) q phi(y)."""

    def __init__(self, params: MarketParams, coeffs: CoeffsA, vol_model, gamma: float):
        super().__init__(params, coeffs)
        self.model = vol_model
        self.gamma = gamma
        self.eps_over_k = vol_model.epsilon / params.cost_k

    def _phi(self, y, z):
        m = self.model
        if isinstance(m, FastCIR):
            return self.gamma / m.chi * (y - m.mu)
        # Exponential OU: small-fluctuation approximation, vectorized.
        c = m.sigma_hat**2 / m.theta_r
        if c <= 0.0:
            return self.gamma * m.m**2 * 2.0 * y / m.theta_r
        from scipy import special

        kernel = math.sqrt(math.pi) * math.erf(math.sqrt(c)) / (2.0 * math.sqrt(c))
        bracket = float(special.exp1(c)) + math.log(c) + np.euler_gamma
        return (
            self.gamma * m.m**2 * math.exp(c) / (2.0 * m.theta_r)
            * (4.0 * y * kernel - bracket)
        )

    def controls(self, q, l, x, y, z):
        return super().controls(q, l, x, y, z) - self.eps_over_k * q * self._phi(y, z)


class SlowTableStrategy:
    """z-dependent feedback control from interpolated coefficient tables.

    Tables hold the three control loadings and the sqrt(delta) shift term
    (b_q + lam b_l) on a z grid; monotone cubic interpolation keeps the
    per-step cost flat across path counts.  ``fast`` optionally adds the
    multiscale fast-factor term.
    """

    def __init__(
        self,
        params: MarketParams,
        z_nodes: np.ndarray,
        coeff_rows: np.ndarray,
        bql_row: np.ndarray,
        delta: float,
        fast: FastCIR | None = None,
        gamma: float = 0.0,
    ):
        self.interp_cq = interpolate.PchipInterpolator(z_nodes, coeff_rows[0])
        self.interp_h = interpolate.PchipInterpolator(z_nodes, coeff_rows[1])
        self.interp_cx = interpolate.PchipInterpolator(z_nodes, coeff_rows[2])
        self.interp_bql = interpolate.PchipInterpolator(z_nodes, bql_row)
        self.sqrt_delta_over_k = math.sqrt(delta) / params.cost_k
        self.z_lo = float(z_nodes[0])
        self.z_hi = float(z_nodes[-1])
        self.fast = fast
        self.gamma = gamma
        self.eps_over_k = (fast.epsilon / params.cost_k) if fast is not None else 0.0

    def controls(self, q, l, x, y, z):
        zc = np.clip(z, self.z_lo, self.z_hi)
        u = (
            self.interp_cq(zc) * q
            + self.interp_h(zc) * l
            + self.interp_cx(zc) * x
            + self.sqrt_delta_over_k * self.interp_bql(zc)
        )
        if self.fast is not None:
            phi = self.gamma / self.fast.chi * np.maximum(z, 0.0) * (y - self.fast.mu)
            u = u - self.eps_over_k * q * phi
        return u


def slow_z_grid(slow_model: SlowCIR, z0: float, n_nodes: int = DEFAULT_Z_NODES) -> np.ndarray:
    """z grid spanning the factor's stationary bulk, widened to cover z0."""
    shape = 2.0 * slow_model.m_s / slow_model.beta_g**2
    scale = slow_model.beta_g**2 / 2.0
    lo = float(stats.gamma.ppf(0.001, shape, scale=scale))
    hi = float(stats.gamma.ppf(0.999, shape, scale=scale))
    lo = max(min(lo, 0.5 * z0), 1e-4)
    hi = max(hi, 1.5 * z0)
    return np.linspace(lo, hi, n_nodes)


def build_slow_tables(
    params: MarketParams,
    slow_model: SlowCIR,
    rho2: float,
    z_nodes: np.ndarray,
    variance_of_z=None,
):
    """Per-node solves of A(z), A'(z) and B(z); returns rows for SlowTableStrategy.

    ``variance_of_z`` maps z to the effective variance (identity for the
    pure slow model, mu*z for the multiscale specification).
    """
    if variance_of_z is None:
        variance_of_z = lambda z: z
    lam, K = params.lam, params.cost_k
    coeff_rows = np.zeros((3, z_nodes.size))
    bql_row = np.zeros(z_nodes.size)
    for i, z in enumerate(z_nodes):
        sig2 = variance_of_z(z)
        sigma = math.sqrt(sig2)
        step = 1e-6 * max(1.0, abs(z))
        sigma_prime = (
            math.sqrt(variance_of_z(z + step)) - math.sqrt(variance_of_z(z - step))
        ) / (2.0 * step)
        coeffs = solve_constant_vol(params, sig2)
        prime = coeff_derivatives(params, sigma, sigma_prime, coeffs)
        g_z = slow_model.beta_g * math.sqrt(max(z, 0.0))
        b = solve_B(params, coeffs, prime, g_z, rho2)
        coeff_rows[0, i] = (lam - coeffs.a_qq + lam * coeffs.a_ql) / K
        coeff_rows[1, i] = (coeffs.a_ql + lam * coeffs.a_ll) / K
        coeff_rows[2, i] = (coeffs.a_qx + lam * coeffs.a_xl) / K
        bql_row[i] = b.b_q + lam * b.b_l
    return coeff_rows, bql_row


def build_strategies(params: MarketParams, vol: VolSpec, state0: MarketState):
    """Baseline (volatility-blind) and corrected strategy pair for a VolSpec.

    The baseline strategy ignores the stochastic factors: it uses the
    constant-volatility coefficients at the effective variance implied by
    the initial state.  When the correction scales are zero the corrected
    strategy IS the baseline object, so both produce bitwise-identical
    controls.
    """
    model = vol.model
    if isinstance(model, ConstantVol):
        coeffs = solve_constant_vol(params, model.sigma**2)
        base = ConstantCoeffStrategy(params, coeffs)
        return base, base

    if isinstance(model, (FastCIR, FastExpOU)):
        coeffs = solve_constant_vol(params, model.mean_variance())
        base = ConstantCoeffStrategy(params, coeffs)
        if model.epsilon == 0.0:
            return base, base
        return base, FastCorrectedStrategy(params, coeffs, model, params.gamma)

    if isinstance(model, SlowCIR):
        z0 = state0.z
        coeffs0 = solve_constant_vol(params, z0)
        base = ConstantCoeffStrategy(params, coeffs0)
        if model.delta == 0.0:
            return base, base
        z_nodes = slow_z_grid(model, z0)
        rows, bql = build_slow_tables(params, model, vol.rho2, z_nodes)
        return base, SlowTableStrategy(params, z_nodes, rows, bql, model.delta)

    if isinstance(model, Multiscale):
        z0 = state0.z
        mu = model.fast.mu
        coeffs0 = solve_constant_vol(params, mu * z0)
        base = ConstantCoeffStrategy(params, coeffs0)
        if model.fast.epsilon == 0.0 and model.slow.delta == 0.0:
            return base, base
        z_nodes = slow_z_grid(model.slow, z0)
        rows, bql = build_slow_tables(
            params, model.slow, vol.rho2, z_nodes, variance_of_z=lambda z: mu * z
        )
        fast = model.fast if model.fast.epsilon > 0.0 else None
        return base, SlowTableStrategy(
            params, z_nodes, rows, bql, model.slow.delta, fast=fast, gamma=params.gamma
        )

    raise TypeError(f"unsupported volatility model {type(model).__name__}")


@dataclass(frozen=True)
class SimResult:
    """Comparison statistics; gain = corrected - baseline per path."""

    gain: PnLStats
    baseline: PnLStats
    corrected: PnLStats
    gain_risk_adjusted: PnLStats
    gain_objective: PnLStats
    per_path_gain: np.ndarray


def _correlation_cholesky(vol: VolSpec) -> np.ndarray:
    corr = np.array(
        [
            [1.0, vol.rho1, vol.rho2],
            [vol.rho1, 1.0, vol.rho12],
            [vol.rho2, vol.rho12, 1.0],
        ]
    )
    return np.linalg.cholesky(corr)


def simulate_compare(
    params: MarketParams,
    vol: VolSpec,
    config: SimConfig,
    state0: MarketState,
    strategies=None,
) -> SimResult:
    """Run both strategies on shared noise and compare realized PnL.

    ``strategies`` overrides the default (baseline, corrected) pair; any
    object with a ``controls(q, l, x, y, z)`` method qualifies.
    """
    n_steps = config.n_steps()
    n = config.n_paths
    dt = config.dt
    sqrt_dt = math.sqrt(dt)
    lam, beta = params.lam, params.beta
    kap, eta_ = params.kappa, params.eta
    K, gam = params.cost_k, params.gamma
    model = vol.model

    if strategies is None:
        strategies = build_strategies(params, vol, state0)
    base_strat, corr_strat = strategies

    rng = np.random.default_rng(config.seed)
    chol = _correlation_cholesky(vol)
    sqrt_eta = math.sqrt(eta_)

    x = np.full(n, float(state0.x))
    y = np.full(n, float(state0.y))
    z = np.full(n, float(state0.z))
    q_b = np.full(n, float(state0.q))
    l_b = np.full(n, float(state0.l))
    q_c = np.full(n, float(state0.q))
    l_c = np.full(n, float(state0.l))
    pnl_b = np.zeros(n)
    pnl_c = np.zeros(n)
    pen_b = np.zeros(n)
    pen_c = np.zeros(n)
    obj_b = np.zeros(n)
    obj_c = np.zeros(n)

    is_fast_cir = isinstance(model, (FastCIR, Multiscale))
    is_fast_ou = isinstance(model, FastExpOU)
    is_slow = isinstance(model, (SlowCIR, Multiscale))
    fast = model.fast if isinstance(model, Multiscale) else (model if is_fast_cir else None)
    slow_m = model.slow if isinstance(model, Multiscale) else (model if is_slow else None)

    for step in range(n_steps):
        normals = rng.standard_normal((4, n))
        dw = (chol @ normals[:3]) * sqrt_dt
        db = normals[3] * sqrt_dt

        sig2 = _sigma2_array(model, y, z)
        dP = x * dt + np.sqrt(sig2) * db
        discount = math.exp(-params.rho * step * dt)

        for qs, ls, pnl, pen, obj, strat in (
            (q_b, l_b, pnl_b, pen_b, obj_b, base_strat),
            (q_c, l_c, pnl_c, pen_c, obj_c, corr_strat),
        ):
            u = strat.controls(qs, ls, x, y, z)
            dl = (lam * u - beta * ls) * dt
            inc = qs * (dP + dl) - 0.5 * K * u**2 * dt
            risk = 0.5 * gam * sig2 * qs**2 * dt
            pnl += inc
            pen += risk
            obj += discount * (inc - risk)
            qs += u * dt
            ls += dl

        x += -kap * x * dt + sqrt_eta * dw[0]
        # A zero time scale switches the expansion off; the factor is frozen.
        if is_fast_cir and fast.epsilon > 0.0:
            yp = np.maximum(y, 0.0)
            y = (
                y
                + fast.chi / fast.epsilon * (fast.mu - yp) * dt
                + fast.psi / math.sqrt(fast.epsilon) * np.sqrt(yp) * dw[1]
            )
        elif is_fast_ou and model.epsilon > 0.0:
            y = (
                y
                - model.theta_r / model.epsilon * y * dt
                + model.sigma_hat / math.sqrt(model.epsilon) * dw[1]
            )
        if is_slow:
            zp = np.maximum(z, 0.0)
            z = (
                z
                + slow_m.delta * (slow_m.m_s - zp) * dt
                + math.sqrt(slow_m.delta) * slow_m.beta_g * np.sqrt(zp) * dw[2]
            )

        peak = max(
            float(np.max(np.abs(x))),
            float(np.max(np.abs(q_b))),
            float(np.max(np.abs(q_c))),
            float(np.max(np.abs(y))) if y.size else 0.0,
        )
        if peak > OVERFLOW_GUARD:
            raise UnstableStep(
                f"state magnitude {peak:.3e} exceeds overflow guard; reduce dt"
            )

    gain = pnl_c - pnl_b
    gain_adj = (pnl_c - pen_c) - (pnl_b - pen_b)
    w = config.w_ref
    return SimResult(
        gain=pnl_stats(gain, w),
        baseline=pnl_stats(pnl_b, w),
        corrected=pnl_stats(pnl_c, w),
        gain_risk_adjusted=pnl_stats(gain_adj, w),
        gain_objective=pnl_stats(obj_c - obj_b, w),
        per_path_gain=gain,
    )


def sweep_initial_z(
    params: MarketParams,
    vol: VolSpec,
    config: SimConfig,
    state0: MarketState,
    z0_values,
) -> list[tuple[float, SimResult]]:
    """Re-run the comparison over initial slow-factor levels (same seed each run)."""
    out = []
    for z0 in z0_values:
        state = MarketState(
            q=state0.q, l=state0.l, x=state0.x, y=state0.y, z=float(z0), p=state0.p
        )
        out.append((float(z0), simulate_compare(params, vol, config, state)))
    return out
