"""Exception hierarchy shared by all impactset modules."""


class ImpactSetError(Exception):
    """Base class for every error raised by this package."""


class DimensionMismatch(ImpactSetError, ValueError):
    pass


class NotSPD(ImpactSetError, ValueError):
    """The mass matrix failed a Cholesky factorization."""


class NotPenetrating(ImpactSetError, ValueError):
    """An impact was requested for a velocity that is not penetrating."""


class NoActiveContact(ImpactSetError, ValueError):
    pass


class EmptyActiveSet(ImpactSetError, RuntimeError):
    pass


class InternalError(ImpactSetError, RuntimeError):
    pass


class NonTermination(ImpactSetError, RuntimeError):
    """Raised when an impact resolution exceeds its simulation-time budget.

    The partial trajectory is kept on ``trajectory`` for diagnosis.
    """

    def __init__(self, message, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory


class SchemaError(ImpactSetError, ValueError):
    """A scene document does not match the expected schema."""

    def __init__(self, field, reason):
        super().__init__(f"{field}: {reason}")
        self.field = field
        self.reason = reason
