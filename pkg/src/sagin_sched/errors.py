"""Exception hierarchy shared by all modules."""


class SaginError(Exception):
    """Base class for simulator errors."""


class ParameterError(SaginError, ValueError):
    """An argument is outside the domain of the operation."""


class ScenarioError(SaginError, ValueError):
    """A scenario file or derived scenario quantity is invalid."""


class SchedulerError(SaginError, RuntimeError):
    """A scheduler was driven in an invalid order (e.g. hold before switch)."""


class BoundsError(SaginError, ValueError):
    """An oracle instance exceeds the enumeration bounds."""


class VerificationError(SaginError, RuntimeError):
    """A produced schedule violates the problem constraints."""

    def __init__(self, message, violations=()):
        super().__init__(message)
        self.violations = list(violations)
