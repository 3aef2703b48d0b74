"""Optimal dynamic trading with transaction costs, decaying price impact
and multiscale stochastic volatility."""

from .errors import (
    ConfigError,
    DegenerateGamma,
    DegenerateSpeed,
    MstradeError,
    NoAdmissibleRoot,
    NonConvergence,
    NonDecayingIntegrand,
    SingularSystem,
    UnstableStep,
)
from .model import (
    ConstantVol,
    FastCIR,
    FastExpOU,
    FullConfig,
    MarketParams,
    MarketState,
    Multiscale,
    SlowCIR,
    VolSpec,
    load_config,
    validate,
)
from .riccati import CoeffsA, aim_and_speed, control_rate, solve_constant_vol

__all__ = [
    "CoeffsA",
    "ConfigError",
    "ConstantVol",
    "DegenerateGamma",
    "DegenerateSpeed",
    "FastCIR",
    "FastExpOU",
    "FullConfig",
    "MarketParams",
    "MarketState",
    "MstradeError",
    "Multiscale",
    "NoAdmissibleRoot",
    "NonConvergence",
    "NonDecayingIntegrand",
    "SingularSystem",
    "SlowCIR",
    "UnstableStep",
    "VolSpec",
    "aim_and_speed",
    "control_rate",
    "load_config",
    "solve_constant_vol",
    "validate",
]

__version__ = "0.1.0"
