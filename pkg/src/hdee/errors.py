"""Exception types raised across the package."""


class HdeeError(Exception):
    """Base class for all package errors."""


class InputError(HdeeError, ValueError):
    """Invalid user-facing input (shapes, values, configuration)."""


class NonFiniteInput(InputError):
    pass


class DimensionMismatch(InputError):
    pass


class TooLarge(InputError):
    pass


class BadSpec(InputError):
    pass


class BadAlpha(InputError):
    pass


class OutOfRange(InputError):
    pass


class UnsupportedModel(InputError):
    pass


class TooFewSamples(InputError):
    pass


class DegenerateData(InputError):
    pass


class NumericalError(HdeeError, ArithmeticError):
    """A numerical degeneracy encountered while fitting."""


class InfeasibleProgram(NumericalError):
    pass


class DegenerateProjection(NumericalError):
    pass


class NegativeVariance(NumericalError):
    pass


class NotPositiveDefinite(NumericalError):
    pass


class Unstable(NumericalError):
    pass


class AllReplicatesFailed(HdeeError):
    pass
