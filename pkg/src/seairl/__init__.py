"""Multi-task adversarial imitation with sub-task codes and situational
empowerment, at desk scale (numpy only)."""

from .config import TrainConfig, parse_config, preset
from .errors import ConfigError, FormatError, NumericError, SeairlError, UsageError

__version__ = "0.1.0"

__all__ = ["TrainConfig", "parse_config", "preset", "ConfigError", "FormatError", "NumericError",
           "SeairlError", "UsageError", "__version__"]
