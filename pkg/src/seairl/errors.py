"""Exception categories shared by the library and the command line."""


class SeairlError(Exception):
    """Base class; `category` is the machine-parsable tag printed by the CLI."""

    category = "error"


class ConfigError(SeairlError, ValueError):
    category = "config"


class NumericError(SeairlError, ArithmeticError):
    category = "numeric"


class UsageError(SeairlError, RuntimeError):
    category = "usage"


class FormatError(SeairlError, ValueError):
    category = "format"
