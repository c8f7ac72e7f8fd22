"""Exception hierarchy shared by all modules.

Each class carries a ``category`` string and the CLI exit code that the
category maps to.
"""

from __future__ import annotations


class CornerError(Exception):
    category = "solver"
    exit_code = 4


class ConfigError(CornerError):
    category = "parse"
    exit_code = 2


class PreconditionError(CornerError):
    category = "precondition"
    exit_code = 3


class GeometryError(PreconditionError):
    pass


class DomainError(PreconditionError):
    pass


class ResolutionError(PreconditionError):
    pass


class DataError(PreconditionError):
    pass


class UsageError(PreconditionError):
    pass


class CompatibilityError(PreconditionError):
    pass


class WeightSelectionError(PreconditionError):
    """A contour line or weight hits the pencil spectrum."""

    def __init__(self, message, eigenvalue=None):
        super().__init__(message)
        self.eigenvalue = eigenvalue


class NearSpectrumError(WeightSelectionError):
    def __init__(self, message, eigenvalue=None, distance=None):
        super().__init__(message, eigenvalue)
        self.distance = distance


class RegularizationError(PreconditionError):
    pass


class SolverError(CornerError):
    category = "solver"
    exit_code = 4


class TruncationError(SolverError):
    pass


class AssemblyError(SolverError):
    pass


class FitError(SolverError):
    pass


class ToleranceError(CornerError):
    category = "tolerance-failure"
    exit_code = 5
