"""Exception hierarchy shared across the package."""

from __future__ import annotations


class GeoperturbError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(GeoperturbError, ValueError):
    """An input value violates a documented constraint."""


class ParseError(ValidationError):
    """A row of an input file could not be parsed."""

    def __init__(self, path, line: int, message: str):
        self.path = str(path)
        self.line = line
        super().__init__(f"{self.path}:{line}: {message}")


class OutsideCoverageError(GeoperturbError):
    """A planar point does not fall inside any block."""

    def __init__(self, x: float, y: float):
        self.x = x
        self.y = y
        super().__init__(f"point ({x:.3f}, {y:.3f}) is outside block coverage")


class ZeroDensityError(GeoperturbError):
    """Population density is zero, so no donut radius exists."""

    def __init__(self, point_id=None):
        self.point_id = point_id
        where = f" for point {point_id!r}" if point_id is not None else ""
        super().__init__(f"population density is zero{where}; radius undefined")


class BoundaryRejectionError(GeoperturbError):
    """Resampling never produced a candidate inside coverage."""

    def __init__(self, point_id, attempts: int):
        self.point_id = point_id
        self.attempts = attempts
        super().__init__(
            f"no candidate for point {point_id!r} fell inside coverage "
            f"after {attempts} attempts"
        )


class DomainError(GeoperturbError, ValueError):
    """Argument lies outside the domain of a numerical function."""


class InsufficientDataError(GeoperturbError, ValueError):
    """Too few usable samples for the requested computation."""


class ConvergenceError(GeoperturbError, ArithmeticError):
    """An iterative solver failed to converge.

    Attributes:
        trace: the sequence of iterates visited before giving up.
    """

    def __init__(self, message: str, trace=()):
        self.trace = list(trace)
        super().__init__(f"{message} (last iterates: {self.trace[-5:]})")


class InvalidModelError(GeoperturbError, ValueError):
    """A fitted distribution cannot be used as a radial prior."""


class EmptyInputError(GeoperturbError, ValueError):
    """A metric was asked to summarise zero records."""
