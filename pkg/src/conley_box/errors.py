"""Exception types shared across the package."""


class ConleyBoxError(Exception):
    """Base class for all package errors."""


class ConfigError(ConleyBoxError):
    """A run configuration or parameter set is invalid."""


class GridCapacityError(ConleyBoxError):
    """Requested grid exceeds the configured box-count cap."""


class WindowExhaustedError(ConleyBoxError):
    """A cocycle evaluation needs noise symbols outside the sampled window."""


class UnsupportedDimensionError(ConleyBoxError):
    """Operation only defined for a specific state-space dimension."""
