"""Exception types raised across the package."""


class DimensionError(ValueError):
    """Operator or factor shapes do not match the Hilbert space."""


class NotHermitianError(ValueError):
    """A matrix that must be Hermitian is not, beyond tolerance."""


class ClosureError(RuntimeError):
    """An operator set fails to close under commutation with H."""


class IntegrationError(RuntimeError):
    """Time integration aborted, e.g. norm or trace drift."""


class ConvergenceError(RuntimeError):
    """A maximum-entropy fit did not converge or the target is infeasible."""
