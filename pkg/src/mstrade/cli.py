"""Command-line front end.

Each subcommand reads a flat key=value config, runs one module and writes
a CSV with 12-significant-digit formatting so repeated runs with the same
config produce byte-identical files.  ``--plot`` additionally renders a
PNG figure next to the CSV.  Module errors map to distinct exit codes
(see errors.py); argparse usage errors exit with its native status.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import math
import sys

import numpy as np

from . import impact_series, riccati, sensitivity, slow
from .errors import ConfigError, MstradeError
from .fast import phi_cir, phi_expou_approx, speed_aim_fast
from .model import (
    ConstantVol,
    FastCIR,
    FastExpOU,
    FullConfig,
    MarketState,
    Multiscale,
    SlowCIR,
    load_config,
    validate,
)
from .montecarlo import SimConfig, simulate_compare, sweep_initial_z

DEFAULT_THETA_GRID = (0.2, 0.1, 0.05, 0.025)
DEFAULT_Z_GRID = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6)
DEFAULT_Y_GRID = (0.1, 0.2, 0.3, 0.4)


def _fmt(value: float) -> str:
    return "%.12g" % value


def _parse_grid(text: str) -> tuple[float, ...]:
    try:
        values = tuple(float(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise ConfigError(f"grid {text!r} is not a comma-separated list of numbers") from None
    if not values:
        raise ConfigError("grid is empty")
    return values


def _read_config(path: str) -> FullConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    config = load_config(text)
    report = validate(config.params, config.vol)
    if not report.valid:
        lines = "; ".join(f"{issue.field}: {issue.message}" for issue in report.issues)
        raise ConfigError(f"invalid config: {lines}")
    return config


def _write_rows(out: str | None, header: list[str], rows: list[list[float | str]]) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([cell if isinstance(cell, str) else _fmt(cell) for cell in row])
    data = buf.getvalue()
    if out is None:
        sys.stdout.write(data)
    else:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(data)


def _constant_sigma2(config: FullConfig) -> float:
    model = config.vol.model
    if not isinstance(model, ConstantVol):
        raise ConfigError("this command requires vol_model = constant")
    return model.sigma**2


def _slow_variance_fn(config: FullConfig):
    """Map z to the effective variance for z-parameterized commands."""
    model = config.vol.model
    if isinstance(model, SlowCIR):
        return model, lambda z: z
    if isinstance(model, Multiscale):
        return model.slow, lambda z: model.fast.mu * z
    raise ConfigError("this command requires vol_model = slow_cir or multiscale")


def cmd_solve(config: FullConfig, args) -> tuple[list[str], list[list]]:
    sigma2 = _constant_sigma2(config)
    coeffs = riccati.solve_constant_vol(config.params, sigma2)
    res = float(np.max(np.abs(riccati.residuals(config.params, sigma2, coeffs))))
    header = ["sigma2", "a_qq", "a_ll", "a_xx", "a_ql", "a_qx", "a_xl", "a_0", "max_residual"]
    row = [
        sigma2, coeffs.a_qq, coeffs.a_ll, coeffs.a_xx,
        coeffs.a_ql, coeffs.a_qx, coeffs.a_xl, coeffs.a_0, res,
    ]
    return header, [row]


def cmd_expand(config: FullConfig, args) -> tuple[list[str], list[list]]:
    sigma2 = _constant_sigma2(config)
    thetas = _parse_grid(args.theta_grid) if args.theta_grid else DEFAULT_THETA_GRID
    series = impact_series.expand_theta(config.params, sigma2, order=2)
    header = [
        "theta", "coefficient_name", "order0", "order1", "order2",
        "series_value", "exact_value", "normalized_error",
    ]
    rows: list[list] = []
    o0, o1, o2 = series.order0.as_array(), series.order1.as_array(), series.order2.as_array()
    for theta in thetas:
        scaled = dataclasses.replace(
            config.params, lam=theta * config.params.lam, beta=theta * config.params.beta
        )
        exact = riccati.solve_constant_vol(scaled, sigma2)
        approx = impact_series.eval_series(series, theta)
        err = impact_series.normalized_error(approx, exact)
        approx_arr, exact_arr = approx.as_array(), exact.as_array()
        for i, name in enumerate(riccati.COEFF_NAMES):
            rows.append(
                [theta, name, o0[i], o1[i], o2[i], approx_arr[i], exact_arr[i], err[i]]
            )
    return header, rows


def cmd_sensitivity(config: FullConfig, args) -> tuple[list[str], list[list]]:
    _, var_fn = _slow_variance_fn(config)
    zs = _parse_grid(args.z_grid) if args.z_grid else DEFAULT_Z_GRID
    sigma_fn = lambda z: math.sqrt(var_fn(z))
    header = ["z", "coefficient_name", "derivative_linear_solve", "derivative_fd", "normalized_error"]
    rows: list[list] = []
    for z in zs:
        sigma = sigma_fn(z)
        step = sensitivity.default_step(z)
        sigma_prime = (sigma_fn(z + step) - sigma_fn(z - step)) / (2.0 * step)
        linear = sensitivity.coeff_derivatives(config.params, sigma, sigma_prime).as_array()
        fd = sensitivity.fd_derivatives(config.params, sigma_fn, z).as_array()
        err = np.abs(linear - fd) / np.maximum(np.abs(fd), 1e-12)
        for i, name in enumerate(riccati.COEFF_NAMES):
            rows.append([z, name, linear[i], fd[i], err[i]])
    return header, rows


def cmd_fast_correction(config: FullConfig, args) -> tuple[list[str], list[list]]:
    model = config.vol.model
    if not isinstance(model, (FastCIR, FastExpOU)):
        raise ConfigError("this command requires vol_model = fast_cir or fast_expou")
    ks = _parse_grid(args.k_grid) if args.k_grid else (config.params.cost_k,)
    ys = _parse_grid(args.y_grid) if args.y_grid else DEFAULT_Y_GRID
    state = MarketState(q=config.q0, l=config.l0, x=config.x0)
    header = ["k", "y", "speed_base", "speed_corrected", "aim_base", "aim_corrected"]
    rows: list[list] = []
    for k in ks:
        params = dataclasses.replace(config.params, cost_k=k)
        base = riccati.solve_constant_vol(params, model.mean_variance())
        speed_b, aim_b = riccati.aim_and_speed(params, base, state)
        for y in ys:
            if isinstance(model, FastCIR):
                phi = phi_cir(params.gamma, model.chi, model.mu, y)
            else:
                phi = phi_expou_approx(
                    params.gamma, model.m, model.theta_r, model.sigma_hat, y
                )
            speed_c, aim_c = speed_aim_fast(params, base, phi, model.epsilon, state)
            rows.append([k, y, speed_b, speed_c, aim_b, aim_c])
    return header, rows


def cmd_slow_correction(config: FullConfig, args) -> tuple[list[str], list[list]]:
    slow_model, var_fn = _slow_variance_fn(config)
    zs = _parse_grid(args.z_grid) if args.z_grid else DEFAULT_Z_GRID
    state = MarketState(q=config.q0, l=config.l0, x=config.x0)
    header = ["z", "sigma_z", "b_q", "b_l", "b_x", "aim_base", "aim_corrected"]
    rows: list[list] = []
    for z in zs:
        sigma = math.sqrt(var_fn(z))
        step = sensitivity.default_step(z)
        sigma_prime = (
            math.sqrt(var_fn(z + step)) - math.sqrt(var_fn(z - step))
        ) / (2.0 * step)
        coeffs = riccati.solve_constant_vol(config.params, sigma**2)
        prime = sensitivity.coeff_derivatives(config.params, sigma, sigma_prime, coeffs)
        g_z = slow_model.beta_g * math.sqrt(z)
        b = slow.solve_B(config.params, coeffs, prime, g_z, config.vol.rho2)
        _, aim_b = riccati.aim_and_speed(config.params, coeffs, state)
        _, aim_c = slow.speed_aim_slow(config.params, coeffs, b, slow_model.delta, state)
        rows.append([z, sigma, b.b_q, b.b_l, b.b_x, aim_b, aim_c])
    return header, rows


def _sim_config(config: FullConfig) -> SimConfig:
    if config.w_ref is None:
        raise ConfigError("missing required key 'w_ref' (bps reference wealth)")
    return SimConfig(
        horizon_years=config.horizon_years,
        dt=config.dt,
        n_paths=config.n_paths,
        seed=config.seed,
        w_ref=config.w_ref,
    )


def cmd_simulate(config: FullConfig, args) -> tuple[list[str], list[list]]:
    sim = _sim_config(config)
    result = simulate_compare(config.params, config.vol, sim, config.initial_state())
    header = ["strategy", "mean", "std", "ci_lo", "ci_hi", "mean_bps", "std_bps"]
    rows: list[list] = []
    for name, stats in (
        ("baseline", result.baseline),
        ("corrected", result.corrected),
        ("gain", result.gain),
        ("gain_risk_adjusted", result.gain_risk_adjusted),
        ("gain_objective", result.gain_objective),
    ):
        rows.append(
            [name, stats.mean, stats.std, stats.ci95_lo, stats.ci95_hi,
             stats.mean_bps, stats.std_bps]
        )
    return header, rows


def cmd_sweep(config: FullConfig, args) -> tuple[list[str], list[list]]:
    _slow_variance_fn(config)  # reject non-slow models early
    sim = _sim_config(config)
    z0s = _parse_grid(args.z_grid) if args.z_grid else DEFAULT_Z_GRID
    results = sweep_initial_z(config.params, config.vol, sim, config.initial_state(), z0s)
    header = [
        "z0", "mean_bps", "std_bps", "ci_lo_bps", "ci_hi_bps",
        "gain_mean_bps", "gain_objective_bps",
    ]
    rows: list[list] = []
    for z0, result in results:
        c = result.corrected
        rows.append(
            [z0, c.mean_bps, c.std_bps, c.ci95_lo_bps, c.ci95_hi_bps,
             result.gain.mean_bps, result.gain_objective.mean_bps]
        )
    return header, rows


_COMMANDS = {
    "solve": cmd_solve,
    "expand": cmd_expand,
    "sensitivity": cmd_sensitivity,
    "fast-correction": cmd_fast_correction,
    "slow-correction": cmd_slow_correction,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
}

_EXIT_CODE_DOC = """\
exit codes:
  0  success
  1  unclassified error
  2  config parse/validation error
  3  no admissible root of the coefficient system
  4  solver failed to converge
  5  singular correction linear system
  6  degenerate tracking speed
  7  unstable simulation step
  8  quadrature integrand not decayed at horizon
"""


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mstrade",
        description="Optimal trading with transaction costs, decaying impact and "
        "multiscale stochastic volatility.",
        epilog=_EXIT_CODE_DOC,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="path to key=value config file")
        p.add_argument("--out", default=None, help="output CSV path (default: stdout)")
        p.add_argument(
            "--plot", action="store_true",
            help="also render a PNG figure next to the CSV (requires --out)",
        )
        p.add_argument("--theta-grid", default=None, help="comma-separated thetas")
        p.add_argument("--z-grid", default=None, help="comma-separated z values")
        p.add_argument("--y-grid", default=None, help="comma-separated y values")
        p.add_argument("--k-grid", default=None, help="comma-separated cost values")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _read_config(args.config)
        header, rows = _COMMANDS[args.command](config, args)
        _write_rows(args.out, header, rows)
        if args.plot:
            if args.out is None:
                raise ConfigError("--plot requires --out")
            from . import plots

            plots.render(args.command, header, rows, args.out)
    except MstradeError as exc:
        print(f"mstrade: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
