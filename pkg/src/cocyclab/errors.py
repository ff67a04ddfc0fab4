"""Exception hierarchy.

Input problems derive from :class:`InvalidInput` (a ``ValueError``), numerical
breakdowns from :class:`NumericalFailure`.  The CLI maps the two families to
exit codes 2 and 3.
"""


class CocycleLabError(Exception):
    """Base class for all package errors."""


class InvalidInput(CocycleLabError, ValueError):
    pass


class OutOfHorizon(InvalidInput):
    pass


class MissingSplitting(InvalidInput):
    pass


class HorizonTooShort(InvalidInput):
    pass


class NotPeriodic(InvalidInput):
    """A universal quantifier was requested over an aperiodic index set."""


class SplittingGapViolation(InvalidInput):
    pass


class NumericalFailure(CocycleLabError, ArithmeticError):
    pass


class OverflowGuard(NumericalFailure):
    """A window product is outside double range; only its logs are valid."""


class ClusterAmbiguity(NumericalFailure):
    def __init__(self, message, gap=None):
        super().__init__(message)
        self.gap = gap


class BandEdgeAmbiguity(NumericalFailure):
    pass


class ParityViolation(NumericalFailure):
    pass


class FlagAlignmentError(NumericalFailure):
    pass


class SymplecticMismatch(NumericalFailure):
    pass


class CertificationFailure(NumericalFailure):
    def __init__(self, message, violations=()):
        super().__init__(message)
        self.violations = list(violations)


class StallDetected(CocycleLabError):
    """The greedy witness could not be extended before the horizon.

    Carries the partial :class:`~cocyclab.classify.BunchingVerdict` as
    ``verdict``; this is evidence against forward bunching, not a bug.
    """

    def __init__(self, message, verdict=None):
        super().__init__(message)
        self.verdict = verdict
