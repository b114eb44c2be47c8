"""Exception types shared across the package."""


class SimError(Exception):
    """Base class for all simulator errors."""


class GraphInputError(SimError):
    """Malformed input file or inconsistent input data."""


class ConfigError(SimError):
    """Invalid configuration, plan, or layer setup."""


class CapacityError(SimError):
    """On-chip resource limits exceeded for the requested partition."""
