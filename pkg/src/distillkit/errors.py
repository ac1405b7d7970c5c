"""Exception hierarchy shared across the package."""


class DistillkitError(Exception):
    pass


class ConfigError(DistillkitError, ValueError):
    """Invalid configuration, shapes, or parameters (CLI exit code 2)."""


class ShapeError(ConfigError):
    pass


class DomainError(DistillkitError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class DataError(DistillkitError, ValueError):
    """Malformed or inconsistent data (labels, class indices, manifests)."""


class FormatError(DataError):
    """Unreadable or unsupported file."""


class StateError(DistillkitError, RuntimeError):
    """Operation called in the wrong state, e.g. backward before forward."""


class NonFiniteError(DistillkitError, FloatingPointError):
    pass
