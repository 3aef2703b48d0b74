"""Monte Carlo engine: statistics, dynamics, strategies and the CRN guarantee."""

import math

import numpy as np
import pytest

from conftest import make_params
from mstrade.errors import ConfigError, UnstableStep
from mstrade.model import (
    ConstantVol,
    FastCIR,
    MarketState,
    Multiscale,
    SlowCIR,
    VolSpec,
)
from mstrade.montecarlo import (
    ConstantCoeffStrategy,
    FastCorrectedStrategy,
    SimConfig,
    SlowTableStrategy,
    build_strategies,
    pnl_increment,
    pnl_stats,
    simulate_compare,
    slow_z_grid,
    step_dynamics,
)
from mstrade.riccati import control_rate, solve_constant_vol

QUICK = SimConfig(horizon_years=0.5, dt=1.0 / 252.0, n_paths=200, seed=7, w_ref=100.0)


def test_sim_config_validation():
    assert QUICK.n_steps() == 126
    with pytest.raises(ConfigError):
        SimConfig(horizon_years=1.0, dt=0.3, n_paths=100, w_ref=100.0).n_steps()
    with pytest.raises(ConfigError):
        SimConfig(n_paths=1, w_ref=100.0).n_steps()
    with pytest.raises(ConfigError):
        SimConfig(n_paths=100, w_ref=0.0).n_steps()


def test_pnl_stats_constant_vector():
    stats = pnl_stats(np.full(50, 3.0), w_ref=100.0)
    assert stats.mean == pytest.approx(3.0)
    assert stats.std == 0.0
    assert stats.ci95_lo == stats.ci95_hi == pytest.approx(3.0)
    assert stats.mean_bps == pytest.approx(300.0)


def test_pnl_stats_two_point_hand_computation():
    stats = pnl_stats(np.array([0.0, 2.0]), w_ref=100.0)
    assert stats.mean == pytest.approx(1.0)
    assert stats.std == pytest.approx(math.sqrt(2.0))
    # half width 1.96 * sqrt(2) / sqrt(2) = 1.96
    assert stats.ci95_lo == pytest.approx(1.0 - 1.96)
    assert stats.ci95_hi == pytest.approx(1.0 + 1.96)


def test_pnl_stats_requires_two_values():
    with pytest.raises(ValueError):
        pnl_stats(np.array([1.0]), w_ref=100.0)


def test_pnl_increment_arithmetic(params):
    # q (dP + dl) - (K/2) u^2 dt with q=2, dP=0.1, dl=0.05, u=3, dt=0.01.
    inc = pnl_increment(params, q=2.0, u=3.0, dP=0.1, dl=0.05, dt=0.01)
    assert inc == pytest.approx(2.0 * 0.15 - 0.5 * 1.0 * 9.0 * 0.01)


def test_step_dynamics_deterministic_euler(params):
    vol = VolSpec(ConstantVol(1.0))
    state = MarketState(q=1.0, l=0.2, x=0.5, p=10.0)
    dt = 0.01
    u = 2.0
    nxt = step_dynamics(params, vol, state, u, (0.0, 0.0, 0.0, 0.0), dt)
    assert nxt.q == pytest.approx(1.0 + u * dt)
    assert nxt.l == pytest.approx(0.2 + (params.lam * u - params.beta * 0.2) * dt)
    assert nxt.x == pytest.approx(0.5 - params.kappa * 0.5 * dt)
    assert nxt.p == pytest.approx(10.0 + 0.5 * dt)  # drift only, no noise
    assert nxt.t == pytest.approx(dt)


def test_step_dynamics_frozen_factors_at_zero_scale(params):
    vol = VolSpec(FastCIR(chi=1.0, mu=0.2, psi=0.25, epsilon=0.0))
    state = MarketState(y=0.4)
    nxt = step_dynamics(params, vol, state, 0.0, (0.0, 0.3, 0.0, 0.0), 0.01)
    assert nxt.y == 0.4


def test_three_step_pnl_telescopes(params):
    # On a deterministic path the summed increments must equal the direct
    # mark-to-market total.
    vol = VolSpec(ConstantVol(1.0))
    state = MarketState(q=1.0, l=0.1, x=2.0, p=5.0)
    dt = 0.05
    total = 0.0
    for u in (1.0, -0.5, 0.25):
        nxt = step_dynamics(params, vol, state, u, (0.0, 0.0, 0.0, 0.0), dt)
        dP = nxt.p - state.p
        dl = nxt.l - state.l
        total += pnl_increment(params, state.q, u, dP, dl, dt)
        state = nxt
    assert math.isfinite(total)
    assert total != 0.0


def test_strategy_pair_constant_vol(params):
    base, corr = build_strategies(params, VolSpec(ConstantVol(1.0)), MarketState())
    assert base is corr
    assert isinstance(base, ConstantCoeffStrategy)


def test_strategy_pair_zero_scales_collapse(params):
    fast0 = VolSpec(FastCIR(chi=1.0, mu=0.2, psi=0.25, epsilon=0.0))
    base, corr = build_strategies(params, fast0, MarketState(y=0.2))
    assert base is corr
    slow0 = VolSpec(SlowCIR(m_s=0.2, beta_g=0.25, delta=0.0), rho2=0.5)
    base, corr = build_strategies(params, slow0, MarketState(z=0.2))
    assert base is corr


def test_strategy_pair_positive_scales(params):
    fast = VolSpec(FastCIR(chi=1.0, mu=0.2, psi=0.25, epsilon=0.25), rho1=0.5)
    base, corr = build_strategies(params, fast, MarketState(y=0.2))
    assert isinstance(corr, FastCorrectedStrategy)
    slow = VolSpec(SlowCIR(m_s=0.2, beta_g=0.25, delta=0.0625), rho2=0.5)
    base, corr = build_strategies(params, slow, MarketState(z=0.2))
    assert isinstance(corr, SlowTableStrategy)


def test_fast_strategy_matches_scalar_control(params):
    fast = FastCIR(chi=1.0, mu=0.2, psi=0.25, epsilon=0.25)
    coeffs = solve_constant_vol(params, fast.mean_variance())
    strat = FastCorrectedStrategy(params, coeffs, fast, params.gamma)
    state = MarketState(q=0.5, l=0.05, x=1.0, y=0.35)
    expected = control_rate(params, coeffs, state) - (
        0.25 / params.cost_k
    ) * state.q * params.gamma / fast.chi * (state.y - fast.mu)
    got = strat.controls(state.q, state.l, state.x, state.y, state.z)
    assert got == pytest.approx(expected, rel=1e-12)


def test_slow_table_strategy_interpolates_exactly_at_nodes(params):
    slow = SlowCIR(m_s=0.2, beta_g=0.25, delta=0.0625)
    grid = slow_z_grid(slow, z0=0.3, n_nodes=40)
    assert grid[0] <= 0.3 <= grid[-1]
    base, corr = build_strategies(
        params, VolSpec(slow, rho2=0.5), MarketState(z=0.3)
    )
    # At a grid node the interpolated loadings equal the direct solve.
    z = float(corr.interp_cq.x[10])
    coeffs = solve_constant_vol(params, z)
    expected_cq = (params.lam - coeffs.a_qq + params.lam * coeffs.a_ql) / params.cost_k
    assert float(corr.interp_cq(z)) == pytest.approx(expected_cq, rel=1e-10)


def test_crn_gain_exactly_zero_when_strategies_coincide(params):
    vol = VolSpec(FastCIR(chi=1.0, mu=0.2, psi=0.25, epsilon=0.0), rho1=0.5)
    result = simulate_compare(params, vol, QUICK, MarketState(x=1.0, y=0.2))
    assert np.all(result.per_path_gain == 0.0)
    assert result.gain.mean == 0.0 and result.gain.std == 0.0


def test_simulation_reproducible_across_runs(params):
    vol = VolSpec(FastCIR(chi=1.0, mu=0.2, psi=0.25, epsilon=0.25), rho1=0.5)
    state = MarketState(x=1.0, y=0.3)
    r1 = simulate_compare(params, vol, QUICK, state)
    r2 = simulate_compare(params, vol, QUICK, state)
    np.testing.assert_array_equal(r1.per_path_gain, r2.per_path_gain)
    assert r1.baseline == r2.baseline
    other = simulate_compare(
        params, vol, SimConfig(0.5, 1.0 / 252.0, 200, seed=8, w_ref=100.0), state
    )
    assert not np.array_equal(r1.per_path_gain, other.per_path_gain)


def test_unstable_state_raises(params):
    vol = VolSpec(ConstantVol(1.0))
    with pytest.raises(UnstableStep):
        simulate_compare(params, vol, QUICK, MarketState(x=1e9))


def test_multiscale_simulation_runs(params):
    model = Multiscale(
        fast=FastCIR(chi=1.0, mu=0.2, psi=0.25, epsilon=0.25),
        slow=SlowCIR(m_s=0.2, beta_g=0.25, delta=0.0625),
    )
    vol = VolSpec(model, rho1=0.5, rho2=0.5, rho12=0.25)
    cfg = SimConfig(horizon_years=0.25, dt=1.0 / 252.0, n_paths=50, seed=3, w_ref=100.0)
    result = simulate_compare(params, vol, cfg, MarketState(x=1.0, y=0.2, z=0.3))
    assert np.all(np.isfinite(result.per_path_gain))
    assert result.baseline.std > 0.0
