"""Exception hierarchy shared across the simulator."""


class RssimError(Exception):
    """Base class for all simulator errors."""


class ConfigError(RssimError):
    """Invalid configuration value, unknown config key, or malformed document."""


class InfeasibleGeometryError(ConfigError):
    """UE placement cannot satisfy the minimum-distance constraint."""


class NumericalError(RssimError):
    """A numerical contract was violated (non-PD factorization, bad denominator, ...)."""


class InvalidWeightsError(RssimError):
    """Common-precoder weights give a non-positive normalization or infeasible direction."""
