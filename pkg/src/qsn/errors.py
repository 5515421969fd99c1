"""Exception hierarchy.

Two families matter to the CLI: :class:`ValidationError` subclasses describe
bad inputs (exit code 2) and :class:`NumericalGuardError` subclasses mean a
numerical safeguard tripped (exit code 3).
"""


class QsnError(Exception):
    pass


class ValidationError(QsnError, ValueError):
    """Input violates a contract."""


class NumericalGuardError(QsnError, ArithmeticError):
    """A numerical safeguard (leakage, truncation, budget...) tripped."""


# -- tensor core --
class IllegalGeneratorForSite(ValidationError):
    pass


class TruncationTooSmall(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


class DimensionCapExceeded(ValidationError):
    pass


class NotHermitian(ValidationError):
    pass


class InvalidState(ValidationError):
    pass


# -- probes --
class OddFermionCount(ValidationError):
    pass


class IncompatibleProbe(ValidationError):
    pass


class NonBosonicSite(ValidationError):
    pass


class TailMassTooLarge(NumericalGuardError):
    pass


class TruncationLeakage(NumericalGuardError):
    pass


# -- channels --
class PSDViolation(ValidationError):
    pass


class NonDiagonalGenerator(ValidationError):
    pass


class CholeskyFailure(NumericalGuardError):
    pass


class BudgetExceeded(NumericalGuardError):
    pass


# -- metrology --
class NonCommutingGenerators(ValidationError):
    pass


class NotOrthogonal(ValidationError):
    pass


class NotRankOne(ValidationError):
    pass


class DegenerateDerivative(NumericalGuardError):
    pass


class ProbabilityOutOfRange(ValidationError):
    pass


# -- gaussian --
class NotSymplectic(ValidationError):
    pass


# -- echo --
class ZeroTraceVH(ValidationError):
    pass


class SaturatedCounts(NumericalGuardError):
    pass


class CircuitProbeMismatch(ValidationError):
    pass


# -- scenario --
class ParseError(ValidationError):
    def __init__(self, message, line=None, column=None):
        super().__init__(message)
        self.line = line
        self.column = column
