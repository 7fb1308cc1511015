"""Exception hierarchy shared across the package.

Each class maps to one CLI exit code so command wrappers can translate
failures uniformly (config -> 2, I/O or format -> 3, numeric -> 4,
sampler divergence -> 5).
"""


class EipError(Exception):
    """Base class for all package-specific failures."""

    exit_code = 1
    category = "error"


class ConfigError(EipError):
    exit_code = 2
    category = "config"


class DataFormatError(EipError):
    exit_code = 3
    category = "io"


class NumericFailure(EipError):
    """Raised when a loss, gradient, or update stops being finite."""

    exit_code = 4
    category = "numeric"

    def __init__(self, message, step=None, batch_index=None):
        super().__init__(message)
        self.step = step
        self.batch_index = batch_index


class SamplerDivergence(EipError):
    """Raised when a sampler produces a non-finite intermediate state."""

    exit_code = 5
    category = "sampler"

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step
