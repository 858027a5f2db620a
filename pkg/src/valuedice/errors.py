"""Exception types shared across the package."""


class NumericalError(RuntimeError):
    """A numerical routine produced an unusable result (bad solve, non-finite values)."""


class ConfigError(ValueError):
    """An experiment configuration is malformed or inconsistent."""
