"""Exception hierarchy shared by every module of the toolkit."""

from __future__ import annotations


class PoseEvalError(Exception):
    """Base class for all toolkit errors."""


class InputError(PoseEvalError):
    """Bad input data (files, records). Maps to CLI exit status 1."""


class ConfigError(PoseEvalError):
    """Bad configuration (metric names, grids, flags). Maps to CLI exit status 2."""


# --- pose model -------------------------------------------------------------


class MalformedFile(InputError, ValueError):
    """A file violates its documented grammar.

    ``location`` is a human-readable position such as ``"byte 17"`` or
    ``"line 3"``.
    """

    def __init__(self, message: str, location: str | None = None, path: str | None = None):
        self.location = location
        self.path = path
        where = ", ".join(p for p in (path, location) if p)
        super().__init__(f"{message} ({where})" if where else message)


class DimensionMismatch(InputError, ValueError):
    pass


class NonFiniteValue(InputError, ValueError):
    pass


class IoFailure(InputError, OSError):
    pass


class UnknownComponent(ConfigError, KeyError):
    def __str__(self) -> str:  # KeyError quotes its argument otherwise
        return str(self.args[0]) if self.args else ""


class IndexOutOfRange(ConfigError, IndexError):
    pass


# --- preprocessing ----------------------------------------------------------


class NoHandComponent(InputError, ValueError):
    pass


class InvalidFps(ConfigError, ValueError):
    pass


class DegenerateSkeleton(InputError, ValueError):
    pass


# --- distances --------------------------------------------------------------


class ShapeMismatch(InputError, ValueError):
    pass


class EmptySequence(InputError, ValueError):
    pass


class IncompatibleSelections(InputError, ValueError):
    pass


# --- embeddings / external scores -------------------------------------------


class SourceMismatch(InputError, ValueError):
    pass


class ZeroVector(InputError, ValueError):
    pass


class InconsistentDimension(MalformedFile):
    pass


class DuplicateSegment(MalformedFile):
    pass


# --- text metrics -----------------------------------------------------------


class EmptyBatch(InputError, ValueError):
    pass


# --- retrieval --------------------------------------------------------------


class NoRelevant(InputError, ValueError):
    pass


class InsufficientDistractors(InputError, ValueError):
    """Raised only when no pool can be built at all (fewer than two glosses).

    A pool that merely falls short of the 1:4 ratio is recorded on the pool
    instead.
    """


# --- statistics -------------------------------------------------------------


class LengthMismatch(InputError, ValueError):
    pass


class DegenerateVariance(InputError, ValueError):
    pass


class EmptyJoin(InputError, ValueError):
    pass


class InsufficientRaters(InputError, ValueError):
    pass


class NoRepeats(InputError, ValueError):
    pass


# --- grid -------------------------------------------------------------------


class EmptyAxis(ConfigError, ValueError):
    pass


class ParseError(ConfigError, ValueError):
    """A canonical variant name failed to parse; ``position`` is a char offset."""

    def __init__(self, message: str, text: str, position: int):
        self.text = text
        self.position = position
        super().__init__(f"{message} at position {position} in {text!r}")

