"""Exception and warning types shared across the package."""


class HullOptError(Exception):
    """Base class for all package errors."""


class InvalidGridError(HullOptError, ValueError):
    pass


class InvalidDimensionError(HullOptError, ValueError):
    pass


class DegenerateHullError(HullOptError, ValueError):
    pass


class GridMismatchError(HullOptError, ValueError):
    pass


class InsufficientParentsError(HullOptError, ValueError):
    pass


class FitError(HullOptError, ValueError):
    pass


class EvaluationError(HullOptError, ArithmeticError):
    pass


class CoverageError(HullOptError, ValueError):
    pass


class UndefinedLossError(HullOptError, ValueError):
    pass


class ProvenanceError(HullOptError):
    """Artifacts from different pipeline runs were mixed."""


class FormatError(HullOptError, ValueError):
    """A file is missing its header or carries an unsupported version."""


class RankDeficiencyWarning(UserWarning):
    pass


class ExtrapolationWarning(UserWarning):
    pass
