"""Exception types shared across the estimation toolkit."""


class DomainError(ValueError):
    """An argument lies outside the domain of a kinetic function."""


class NumericalError(RuntimeError):
    """Base class for numerical failures (mapped to CLI exit code 2)."""


class IntegrationDivergedError(NumericalError):
    pass


class SingularInnovationError(NumericalError):
    pass


class RiccatiDivergedError(NumericalError):
    pass


class FilterDivergedError(NumericalError):
    """A filter produced non-finite values.

    ``partial`` holds whatever output was assembled before the failure so
    callers can still flush it to disk.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial
