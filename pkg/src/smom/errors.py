"""Exception hierarchy shared across the package."""


class SmomError(Exception):
    """Base class for all package errors."""


class NotSPD(SmomError):
    """A matrix expected to be symmetric positive definite is not (numerically)."""


class DomainViolation(SmomError):
    pass


class DegenerateBasis(SmomError):
    pass


class RetractionFailure(SmomError):
    pass


class InvalidShape(SmomError):
    pass


class DomainMismatch(SmomError):
    pass


class MissingJacobian(SmomError):
    pass


class MissingFisherScore(SmomError):
    pass


class SingularSystem(SmomError):
    pass


class DegenerateData(SmomError):
    pass


class NoConvergence(SmomError):
    pass


class BoundViolation(SmomError):
    """Rejection sampler observed an acceptance ratio above one."""


class ConfigError(SmomError):
    pass
