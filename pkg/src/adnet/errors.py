"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Input violates an operation's precondition."""


class DimensionError(ValidationError):
    """Tensor shapes are incompatible."""


class ConfigError(ValidationError):
    """A configuration value is out of range or inconsistent."""


class FormatError(IOError):
    """A file on disk is missing, truncated or malformed."""
