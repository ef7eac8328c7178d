"""Exception types shared across the package.

Exit-code mapping used by the CLI: ConfigurationError -> 1,
DataFormatError -> 2, NumericalError -> 3.
"""


class GenRetError(Exception):
    """Base class for all package errors."""


class ConfigurationError(GenRetError):
    """Invalid configuration or usage (bad counts, out-of-order stages, ...)."""


class DataFormatError(GenRetError):
    """Malformed or inconsistent input data (parse errors, dangling ids, ...)."""


class NumericalError(GenRetError):
    """Numerical failure such as a non-finite loss during training."""
