"""Exception types raised across the package."""


class QuadliftError(Exception):
    """Base class for all package errors."""


class InvalidStateError(QuadliftError):
    """State or argument violates a documented invariant."""


class SingularConfigurationError(QuadliftError):
    """The coupled acceleration system is numerically singular."""


class AllocationError(QuadliftError):
    """The wrench distribution map is rank deficient."""


class DegenerateAllocationError(QuadliftError):
    """A distributed cable force is too small to define a direction."""


class DegenerateAttitudeError(QuadliftError):
    """A thrust vector is too small to define a quadrotor attitude."""


class CertificationError(QuadliftError):
    """Gain certification failed; carries the tightest failing condition."""

    def __init__(self, message, failing_condition=None, report=None):
        super().__init__(message)
        self.failing_condition = failing_condition
        self.report = report


class NumericalBlowupError(QuadliftError):
    """Integration produced NaN/Inf; carries the failing step index."""

    def __init__(self, message, step=None, time=None):
        super().__init__(message)
        self.step = step
        self.time = time


class ConfigError(QuadliftError):
    """Scenario configuration failed validation; carries the field name."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field
