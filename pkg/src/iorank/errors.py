"""Exception hierarchy.

Input problems derive from :class:`ValidationError` (CLI exit code 2),
numerical breakdowns from :class:`NumericalError` (exit code 3).
"""


class IorankError(Exception):
    pass


class ValidationError(IorankError, ValueError):
    pass


class NumericalError(IorankError, ArithmeticError):
    pass


# matrix validation
class NonSquare(ValidationError):
    pass


class NegativeEntry(ValidationError):
    pass


class NonzeroDiagonal(ValidationError):
    pass


class ZeroRow(ValidationError):
    pass


class RowSumViolation(ValidationError):
    pass


class ParseError(ValidationError):
    pass


class InvalidP(ValidationError):
    pass


# influence / link graphs
class SelfLoopOnly(ValidationError):
    pass


# missing data
class SpecMismatch(ValidationError):
    pass


class DegenerateRow(ValidationError):
    pass


class InvalidDelta(ValidationError):
    pass


# constructions
class InvalidK(ValidationError):
    pass


# chains
class NotAPartition(ValidationError):
    pass


class BackEdge(ValidationError):
    pass


class SkipEdge(ValidationError):
    pass


class InvalidIndices(ValidationError):
    pass


class NotWeaklyCoupled(ValidationError):
    pass


# numerical
class SingularSystem(NumericalError):
    pass


class NoConvergence(NumericalError):
    pass


class CouplingTooStrong(NumericalError):
    pass


class AllMissingRow(NumericalError):
    pass
