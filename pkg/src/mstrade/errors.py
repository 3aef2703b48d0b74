"""Exception types shared across the package, with CLI exit codes."""


class MstradeError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(MstradeError):
    """Malformed or incomplete configuration."""

    exit_code = 2


class NoAdmissibleRoot(MstradeError):
    """No real root of the coefficient system satisfies the selection rule."""

    exit_code = 3


class NonConvergence(MstradeError):
    """Newton refinement failed to reach the residual tolerance."""

    exit_code = 4


class SingularSystem(MstradeError):
    """A linear system required by a correction term is numerically singular."""

    exit_code = 5


class DegenerateSpeed(MstradeError):
    """Tracking speed denominator is zero; aim portfolio undefined."""

    exit_code = 6


class DegenerateGamma(DegenerateSpeed):
    """Closed-form denominator of the slow first-order correction vanishes."""


class UnstableStep(MstradeError):
    """A simulated state exceeded the overflow guard (time step too coarse)."""

    exit_code = 7


class NonDecayingIntegrand(MstradeError):
    """Quadrature integrand has not decayed below tolerance at the horizon."""

    exit_code = 8
