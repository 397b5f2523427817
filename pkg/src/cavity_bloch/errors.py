"""Exception types shared across the package."""


class CavityBlochError(Exception):
    """Base class for all package errors."""


class ParameterError(CavityBlochError, ValueError):
    """Invalid system parameters or configuration.

    Carries the full list of violations so a caller can report every
    problem at once instead of fixing them one by one.
    """

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class ConvergenceError(CavityBlochError, RuntimeError):
    """An iterative solve failed to reach its tolerance."""


class IntegrationError(CavityBlochError, RuntimeError):
    """A time integration violated an invariant (norm drift, step underflow)."""


class ResourceError(CavityBlochError, RuntimeError):
    """A computation would exceed its declared memory budget."""
