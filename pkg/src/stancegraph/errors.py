"""Exception types shared across the package.

Every domain error derives from StanceGraphError so callers can catch one
base class; the CLI maps subclasses to distinct exit codes.
"""


class StanceGraphError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(StanceGraphError):
    """A configuration value or combination of values is invalid."""


class RecordError(StanceGraphError):
    """An input record could not be parsed.

    Carries the 1-based line number of the offending record when known.
    """

    def __init__(self, message: str, line_no: int | None = None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


class DegenerateHashtag(StanceGraphError):
    """Hashtag normalization produced an empty string."""


class EmptyCorpus(StanceGraphError):
    """No tweets survived parsing or filtering."""


class ShapeError(StanceGraphError):
    """Matrix or vector dimensions do not line up."""


class EmptyChannel(StanceGraphError):
    """A graph channel was requested but has no mass (e.g. all-zero weights)."""


class NumericsError(StanceGraphError):
    """A non-finite value appeared where finite numbers are required."""


class EmptyEligibleSet(StanceGraphError):
    """No users qualify for the requested split."""


class EmptyEvaluation(StanceGraphError):
    """An evaluation was requested over an empty set of predictions."""


class BoundsError(StanceGraphError):
    """A requested size exceeds what the data provides."""
