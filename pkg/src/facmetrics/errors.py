"""Exception hierarchy shared across the pipeline.

Exit-code mapping used by the CLI: InputError -> 2, NumericalError -> 3,
StageMissingError -> 4.
"""


class FacmetricsError(Exception):
    """Base class for all package errors."""


class InputError(FacmetricsError):
    """Malformed or rejected input data or configuration."""


class MalformedDOIError(InputError):
    """DOI text that cannot be canonicalized."""


class CacheError(InputError):
    """Cache file with bad magic, version, or digest."""


class NumericalError(FacmetricsError):
    """Numerical failure: non-convergence, rank deficiency, separation."""


class StageMissingError(FacmetricsError):
    """A pipeline stage output required by a command is absent."""
