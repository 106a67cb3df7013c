"""Exception types shared across the package."""


class DataError(Exception):
    """Malformed or inconsistent input data (files, tables, datasets)."""


class ConfigError(Exception):
    """Invalid experiment configuration."""


class NumericError(Exception):
    """Training produced non-finite values."""
