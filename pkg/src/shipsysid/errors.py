"""Exception taxonomy shared across the package.

The CLI maps these to process exit codes: ConfigError -> 2, DataError -> 3,
DivergenceError -> 4.  Anything else escaping a command is a bug.
"""


class ConfigError(Exception):
    """Malformed or inconsistent configuration (bad file, unknown key, bad value)."""


class DataError(Exception):
    """Malformed or unusable input data (bad CSV, short trajectory, empty dataset)."""


class DivergenceError(Exception):
    """A numerical computation produced non-finite values."""
