"""Exception types shared across the package.

The CLI maps these to exit codes: ConfigError -> 2, DataError -> 3,
NumericError -> 4.
"""


class ConfigError(Exception):
    """Invalid configuration value or inconsistent option combination."""


class DataError(Exception):
    """Malformed input data: bad files, dangling ids, integrity violations."""


class NumericError(Exception):
    """A computation produced NaN/Inf or otherwise left the finite domain."""
