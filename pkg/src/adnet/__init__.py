"""Two-stream audio-visual CNN for commercial detection, implemented from scratch on numpy."""

from adnet.errors import ConfigError, DimensionError, FormatError, ValidationError

__version__ = "0.1.0"

__all__ = ["ConfigError", "DimensionError", "FormatError", "ValidationError", "__version__"]
