"""Exception hierarchy shared by every module.

The CLI maps these onto exit statuses, so new error kinds should subclass
one of the three top-level categories below.
"""

from __future__ import annotations


class DysmoothError(Exception):
    """Base class for all library errors."""

    exit_code = 4
    kind = "error"

    def to_dict(self) -> dict:
        return {"error": self.kind, "message": str(self)}


class ValidationError(DysmoothError, ValueError):
    """Bad input: malformed files, out-of-range arguments, off-domain points."""

    exit_code = 2
    kind = "validation"


class CapacityError(DysmoothError):
    """Request exceeds a desk-scale cap (dimension, level, order)."""

    exit_code = 3
    kind = "capacity"


class InvariantError(DysmoothError, AssertionError):
    """An internal invariant failed. Always a bug, or a counterexample."""

    exit_code = 4
    kind = "invariant"


class FormatError(ValidationError):
    kind = "format"


class DomainError(ValidationError):
    kind = "domain"


class BoundsError(ValidationError):
    kind = "bounds"


class ResolutionError(ValidationError):
    kind = "resolution"


class ArityError(ValidationError):
    kind = "arity"


class LevelTooCoarseError(ValidationError):
    kind = "level-too-coarse"


class RangeError(ValidationError):
    kind = "range"


class InsufficientDataError(ValidationError):
    kind = "insufficient-data"
