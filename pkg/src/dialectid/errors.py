"""Shared exception types; the CLI maps them onto its exit codes."""


class ShapeError(ValueError):
    """Dimension mismatch between arrays that are contractually shape-bound."""


class ConfigError(ValueError):
    """Invalid configuration value or unknown configuration key."""


class FormatError(ValueError):
    """Malformed input file; the message names the offending line or field."""


class NumericError(ArithmeticError):
    """NaN or infinity produced where finite values are required."""
