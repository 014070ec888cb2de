"""Exception types shared across the package.

The CLI maps these onto distinct exit codes, so the split between
configuration, input/parsing, and runtime failures matters.
"""


class DrmrecError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(DrmrecError):
    """Invalid configuration: bad key, bad value, or inconsistent combination."""


class ParseError(DrmrecError):
    """Malformed input data file."""

    def __init__(self, message, path=None, line=None):
        loc = ""
        if path is not None:
            loc = f"{path}: "
            if line is not None:
                loc = f"{path}:{line}: "
        super().__init__(f"{loc}{message}")
        self.path = path
        self.line = line


class EmptyDatasetError(ParseError):
    """Input parsed fine but contains zero interactions."""


class ModelFormatError(DrmrecError):
    """Model file has a bad magic, version, or inconsistent payload size."""


class TrainingError(DrmrecError):
    """Runtime failure while fitting (bad sample space, non-finite update)."""


class EvaluationError(DrmrecError):
    """Evaluation cannot proceed, e.g. no user passes the eligibility rule."""
