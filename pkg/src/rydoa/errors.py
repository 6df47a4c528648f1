class RydoaError(Exception):
    """Base class for all library errors."""


class InvalidInput(RydoaError, ValueError):
    pass


class ConfigError(RydoaError, ValueError):
    pass


class InsufficientInformation(RydoaError):
    """The spectrum does not carry enough peaks to fix the angle."""


class DegeneratePlan(RydoaError):
    pass


class DegenerateGeometry(RydoaError):
    pass


class DegenerateSteadyState(RydoaError):
    def __init__(self, msg, kernel_dim=None, singular_values=None):
        super().__init__(msg)
        self.kernel_dim = kernel_dim
        self.singular_values = singular_values


class DerivativeUnstable(RydoaError):
    def __init__(self, msg, coarse=None, fine=None):
        super().__init__(msg)
        self.coarse = coarse
        self.fine = fine


class InconsistentMeasurements(UserWarning):
    """Least-squares residual too large; a sign assignment is likely wrong."""
