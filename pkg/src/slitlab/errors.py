"""Exception types shared across the package.

Every raised condition gets its own class so callers (and the CLI) can
distinguish bad input (exit code 2) from numerical failure (exit code 1).
"""


class SlitLabError(Exception):
    """Base class for all package errors."""


class ValidationError(SlitLabError):
    """Bad user input: violated invariants, malformed configs, bad flags."""


# -- geometry ---------------------------------------------------------------

class InvalidDomain(ValidationError):
    pass


class InvalidSlit(ValidationError):
    pass


class SlitTooCloseToBoundary(ValidationError):
    pass


class MeshQualityFailure(SlitLabError):
    pass


# -- fem --------------------------------------------------------------------

class DegenerateTriangle(SlitLabError):
    pass


class IndexOutOfRange(ValidationError):
    pass


class NotPositiveDefinite(SlitLabError):
    pass


class DimensionMismatch(ValidationError):
    pass


# -- eigensolve ---------------------------------------------------------------

class ConvergenceFailure(SlitLabError):
    pass


class ShiftHitsEigenvalue(SlitLabError):
    pass


# -- capacity -----------------------------------------------------------------

class EmptySlit(ValidationError):
    pass


class MeshMismatch(ValidationError):
    pass


class NotOrthonormal(ValidationError):
    pass


class ZeroCapacity(SlitLabError):
    pass


# -- asymptotics ----------------------------------------------------------------

class EpsOutOfRange(ValidationError):
    pass


class ZeroFunction(ValidationError):
    pass


class NonHarmonicLeading(SlitLabError):
    pass


class OrderTooHigh(ValidationError):
    pass


class GramNotSPD(ValidationError):
    pass


class ProbingOrderTooSmall(SlitLabError):
    pass


class InconsistentBasis(ValidationError):
    pass


class TangentCase(ValidationError):
    pass


class BadTangencyOrder(ValidationError):
    pass


# -- analytic reference ------------------------------------------------------

class UnsupportedShape(ValidationError):
    pass


class PointOutsideDomain(ValidationError):
    pass


class NoInteriorNodalCircle(ValidationError):
    pass


# -- experiments ---------------------------------------------------------------

class TooFewPoints(SlitLabError):
    pass


class ConfigError(ValidationError):
    pass
