"""Model parameters, volatility specifications and configuration parsing.

All types are frozen dataclasses: immutable after construction and safe to
share across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import ConfigError


@dataclass(frozen=True)
class MarketParams:
    """Scalar model constants.

    rho     discount rate (1/time, > 0)
    gamma   risk aversion (1/wealth, >= 0)
    cost_k  instantaneous cost coefficient K (cost*time/shares^2, > 0)
    lam     impact magnitude lambda (price/shares, >= 0)
    beta    impact decay rate (1/time, >= 0)
    kappa   signal mean-reversion rate (1/time, > 0)
    eta     signal variance rate (> 0)
    """

    rho: float
    gamma: float
    cost_k: float
    lam: float
    beta: float
    kappa: float
    eta: float


@dataclass(frozen=True)
class ConstantVol:
    sigma: float


@dataclass(frozen=True)
class FastCIR:
    """Fast CIR variance factor: sigma^2(y) = y, reverting to mu at rate chi/epsilon."""

    chi: float
    mu: float
    psi: float
    epsilon: float

    def mean_variance(self) -> float:
        return self.mu


@dataclass(frozen=True)
class FastExpOU:
    """Fast exponential-OU volatility: sigma(y) = m * exp(y), OU factor rate theta_r/epsilon."""

    m: float
    theta_r: float
    sigma_hat: float
    epsilon: float

    def stationary_variance(self) -> float:
        return self.sigma_hat**2 / (2.0 * self.theta_r)

    def mean_variance(self) -> float:
        return self.m**2 * math.exp(2.0 * self.stationary_variance())


@dataclass(frozen=True)
class SlowCIR:
    """Slow CIR variance factor: sigma^2(z) = z, drift delta*(m_s - z), vol sqrt(delta)*beta_g*sqrt(z)."""

    m_s: float
    beta_g: float
    delta: float


@dataclass(frozen=True)
class Multiscale:
    """Joint specification sigma^2(y, z) = y * z, so sigma_bar^2(z) = mu * z."""

    fast: FastCIR
    slow: SlowCIR


VolModel = ConstantVol | FastCIR | FastExpOU | SlowCIR | Multiscale


@dataclass(frozen=True)
class VolSpec:
    model: VolModel
    rho1: float = 0.0
    rho2: float = 0.0
    rho12: float = 0.0


@dataclass(frozen=True)
class MarketState:
    """Snapshot of the simulated market.

    q: position (shares); l: accumulated price impact (price units);
    x: signal level (price/time); y, z: volatility factors; p: unaffected
    price; t: time (years).
    """

    q: float = 0.0
    l: float = 0.0
    x: float = 0.0
    y: float = 0.0
    z: float = 0.0
    p: float = 0.0
    t: float = 0.0


@dataclass(frozen=True)
class ValidationIssue:
    field: str
    message: str


@dataclass(frozen=True)
class ValidationReport:
    issues: tuple[ValidationIssue, ...] = ()
    warnings: tuple[ValidationIssue, ...] = ()

    @property
    def valid(self) -> bool:
        return not self.issues


def correlation_determinant(rho1: float, rho2: float, rho12: float) -> float:
    """Determinant of the 3x3 correlation matrix of the factor Brownian drivers."""
    return 1.0 + 2.0 * rho1 * rho2 * rho12 - rho1**2 - rho2**2 - rho12**2


def validate(params: MarketParams, vol: VolSpec) -> ValidationReport:
    """Check parameter ranges, correlation positive-definiteness and Feller conditions.

    Pure function: returns a report and never raises. An empty ``issues``
    tuple means the configuration is valid. ``warnings`` flags cases where
    the simplified Feller variant (without the mean-reversion factor)
    disagrees with the standard one.
    """
    issues: list[ValidationIssue] = []
    warnings: list[ValidationIssue] = []

    for name in ("rho", "cost_k", "kappa", "eta"):
        value = getattr(params, name)
        if not value > 0.0:
            issues.append(ValidationIssue(name, f"{name} must be strictly positive, got {value}"))
    for name in ("gamma", "lam", "beta"):
        value = getattr(params, name)
        if value < 0.0:
            issues.append(ValidationIssue(name, f"{name} must be non-negative, got {value}"))

    for name in ("rho1", "rho2", "rho12"):
        value = getattr(vol, name)
        if not -1.0 < value < 1.0:
            issues.append(ValidationIssue(name, "correlation out of open interval (-1, 1)"))
    if all(-1.0 < getattr(vol, n) < 1.0 for n in ("rho1", "rho2", "rho12")):
        det = correlation_determinant(vol.rho1, vol.rho2, vol.rho12)
        if det <= 0.0:
            issues.append(
                ValidationIssue(
                    "rho12", f"correlation matrix not positive definite (determinant {det:g})"
                )
            )

    def check_cir(prefix: str, rate: float, mean: float, volvol: float, scale: float) -> None:
        if not scale > 0.0:
            issues.append(ValidationIssue(f"{prefix} time scale", "time scale must be positive"))
        if not rate > 0.0:
            issues.append(ValidationIssue(f"{prefix} rate", "mean-reversion rate must be positive"))
        if not mean > 0.0:
            issues.append(ValidationIssue(f"{prefix} mean", "long-run level must be positive"))
        if rate > 0.0 and mean > 0.0:
            standard = volvol**2 < 2.0 * rate * mean
            simplified = volvol**2 < 2.0 * mean
            if not standard:
                issues.append(
                    ValidationIssue(
                        f"{prefix} vol-of-vol",
                        f"Feller condition violated: {volvol}^2 >= 2*{rate}*{mean}",
                    )
                )
            if standard != simplified:
                warnings.append(
                    ValidationIssue(
                        f"{prefix} vol-of-vol",
                        "standard Feller condition and its rate-free variant disagree",
                    )
                )

    model = vol.model
    if isinstance(model, ConstantVol):
        if not model.sigma > 0.0:
            issues.append(ValidationIssue("sigma", "volatility must be positive"))
    if isinstance(model, (FastCIR, Multiscale)):
        fast = model if isinstance(model, FastCIR) else model.fast
        check_cir("fast", fast.chi, fast.mu, fast.psi, fast.epsilon)
    if isinstance(model, FastExpOU):
        if not model.theta_r > 0.0:
            issues.append(ValidationIssue("theta_r", "mean-reversion rate must be positive"))
        if not model.epsilon > 0.0:
            issues.append(ValidationIssue("epsilon", "time scale must be positive"))
        if not model.m > 0.0:
            issues.append(ValidationIssue("m_scale", "volatility scale must be positive"))
    if isinstance(model, (SlowCIR, Multiscale)):
        slow = model if isinstance(model, SlowCIR) else model.slow
        # The slow factor's unscaled drift is (m_s - z), so its rate is 1.
        check_cir("slow", 1.0, slow.m_s, slow.beta_g, slow.delta)

    return ValidationReport(tuple(issues), tuple(warnings))


@dataclass(frozen=True)
class FullConfig:
    params: MarketParams
    vol: VolSpec
    q0: float = 0.0
    l0: float = 0.0
    x0: float = 0.0
    y0: float | None = None
    z0: float | None = None
    horizon_years: float = 2.0
    dt: float = 1.0 / 2520.0
    n_paths: int = 10_000
    seed: int = 0
    w_ref: float | None = None

    def initial_state(self) -> MarketState:
        y0, z0 = self.y0, self.z0
        model = self.vol.model
        if y0 is None:
            if isinstance(model, (FastCIR, FastExpOU)):
                y0 = model.mu if isinstance(model, FastCIR) else 0.0
            elif isinstance(model, Multiscale):
                y0 = model.fast.mu
            else:
                y0 = 0.0
        if z0 is None:
            if isinstance(model, SlowCIR):
                z0 = model.m_s
            elif isinstance(model, Multiscale):
                z0 = model.slow.m_s
            else:
                z0 = 0.0
        return MarketState(q=self.q0, l=self.l0, x=self.x0, y=y0, z=z0)


_KNOWN_KEYS = {
    "rho", "gamma", "cost_k", "lambda", "beta", "kappa", "eta",
    "vol_model", "sigma", "chi", "mu", "psi", "epsilon",
    "m_scale", "theta_r", "sigma_hat", "m_s", "beta_g", "delta",
    "rho1", "rho2", "rho12",
    "q0", "l0", "x0", "y0", "z0",
    "horizon_years", "dt", "n_paths", "seed", "w_ref",
}

_REQUIRED_KEYS = ("rho", "gamma", "cost_k", "lambda", "beta", "kappa", "eta", "vol_model")

_VOL_MODEL_KEYS = {
    "constant": ("sigma",),
    "fast_cir": ("chi", "mu", "psi", "epsilon"),
    "fast_expou": ("m_scale", "theta_r", "sigma_hat", "epsilon"),
    "slow_cir": ("m_s", "beta_g", "delta"),
    "multiscale": ("chi", "mu", "psi", "epsilon", "m_s", "beta_g", "delta"),
}


def load_config(text: str) -> FullConfig:
    """Parse a flat ``key = value`` document into a FullConfig.

    Lines starting with ``#`` (or blank) are ignored; inline comments are
    allowed after the value. Unknown keys are rejected. Raises ConfigError
    with a line number on parse failures and with the key name when a
    required key is missing.
    """
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line.strip()!r}")
        key, value = (part.strip() for part in stripped.split("=", 1))
        if key not in _KNOWN_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in raw:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        if not value:
            raise ConfigError(f"line {lineno}: empty value for key {key!r}")
        raw[key] = value

    for key in _REQUIRED_KEYS:
        if key not in raw:
            raise ConfigError(f"missing required key {key!r}")

    def as_float(key: str) -> float:
        try:
            return float(raw[key])
        except ValueError:
            raise ConfigError(f"key {key!r}: not a number: {raw[key]!r}") from None

    def as_int(key: str) -> int:
        try:
            return int(raw[key])
        except ValueError:
            raise ConfigError(f"key {key!r}: not an integer: {raw[key]!r}") from None

    params = MarketParams(
        rho=as_float("rho"),
        gamma=as_float("gamma"),
        cost_k=as_float("cost_k"),
        lam=as_float("lambda"),
        beta=as_float("beta"),
        kappa=as_float("kappa"),
        eta=as_float("eta"),
    )

    vol_model = raw["vol_model"]
    if vol_model not in _VOL_MODEL_KEYS:
        raise ConfigError(
            f"key 'vol_model': unknown model {vol_model!r}; "
            f"expected one of {sorted(_VOL_MODEL_KEYS)}"
        )
    for key in _VOL_MODEL_KEYS[vol_model]:
        if key not in raw:
            raise ConfigError(f"missing required key {key!r} for vol_model={vol_model}")

    model: VolModel
    if vol_model == "constant":
        model = ConstantVol(sigma=as_float("sigma"))
    elif vol_model == "fast_cir":
        model = FastCIR(
            chi=as_float("chi"), mu=as_float("mu"),
            psi=as_float("psi"), epsilon=as_float("epsilon"),
        )
    elif vol_model == "fast_expou":
        model = FastExpOU(
            m=as_float("m_scale"), theta_r=as_float("theta_r"),
            sigma_hat=as_float("sigma_hat"), epsilon=as_float("epsilon"),
        )
    elif vol_model == "slow_cir":
        model = SlowCIR(m_s=as_float("m_s"), beta_g=as_float("beta_g"), delta=as_float("delta"))
    else:
        model = Multiscale(
            fast=FastCIR(
                chi=as_float("chi"), mu=as_float("mu"),
                psi=as_float("psi"), epsilon=as_float("epsilon"),
            ),
            slow=SlowCIR(m_s=as_float("m_s"), beta_g=as_float("beta_g"), delta=as_float("delta")),
        )

    vol = VolSpec(
        model=model,
        rho1=as_float("rho1") if "rho1" in raw else 0.0,
        rho2=as_float("rho2") if "rho2" in raw else 0.0,
        rho12=as_float("rho12") if "rho12" in raw else 0.0,
    )

    kwargs: dict[str, float | int] = {}
    for key, attr in (
        ("q0", "q0"), ("l0", "l0"), ("x0", "x0"), ("y0", "y0"), ("z0", "z0"),
        ("horizon_years", "horizon_years"), ("dt", "dt"), ("w_ref", "w_ref"),
    ):
        if key in raw:
            kwargs[attr] = as_float(key)
    if "n_paths" in raw:
        kwargs["n_paths"] = as_int("n_paths")
    if "seed" in raw:
        kwargs["seed"] = as_int("seed")

    return FullConfig(params=params, vol=vol, **kwargs)
