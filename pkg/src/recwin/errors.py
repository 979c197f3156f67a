"""Exception taxonomy shared across the package.

Data validation errors map to CLI exit code 3, numerical failures to 4.
"""


class RecwinError(Exception):
    """Base class for all package-specific errors."""


class DataValidationError(RecwinError):
    """Input data violates a structural invariant."""


class NonMonotoneTimes(DataValidationError):
    pass


class EventAfterFollowUp(DataValidationError):
    pass


class NegativeTime(DataValidationError):
    pass


class DeathAfterCensor(DataValidationError):
    pass


class DuplicateSubjectId(DataValidationError):
    pass


class GapOrOverlapInIntervals(DataValidationError):
    pass


class MissingColumn(DataValidationError):
    pass


class MultipleDeathRows(DataValidationError):
    pass


class EmptyArm(DataValidationError):
    pass


class AllStrataSingleArm(DataValidationError):
    pass


class HorizonMismatch(DataValidationError):
    pass


class EmptyInput(DataValidationError):
    pass


class NumericalError(RecwinError):
    """A computation could not be carried out at the given inputs."""


class DegenerateWR(NumericalError):
    """Zero wins or zero losses: the win ratio and its variance are undefined."""


class NonFiniteLikelihood(NumericalError):
    pass


class InvalidParams(NumericalError):
    pass


class MissingSE(NumericalError):
    pass


class SingularHessian(NumericalError):
    pass


class RankDeficientContrast(NumericalError):
    pass


class SingularBlock(NumericalError):
    pass


class NonFiniteScore(NumericalError):
    pass


class NullHR(NumericalError):
    """Hazard ratio of 1 gives a zero denominator in the event-count formula."""


class NullEffect(NumericalError):
    pass


class NoFeasibleN(NumericalError):
    """No grid point reached the target power at controlled type-I error."""
