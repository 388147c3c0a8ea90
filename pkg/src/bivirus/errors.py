"""Exception types shared across the package."""

from __future__ import annotations


class BivirusError(Exception):
    """Base class for all package-specific failures."""


class InvalidMatrixError(BivirusError, ValueError):
    """Input matrix violates a structural requirement (shape, sign, parse)."""


class ReducibleMatrixError(BivirusError):
    """A matrix required to be irreducible is not.

    Carries the strongly connected components of its nonzero pattern so
    callers can report exactly how the graph falls apart.
    """

    def __init__(self, message: str, components: list[list[int]] | None = None):
        super().__init__(message)
        self.components = components or []


class SubthresholdError(BivirusError):
    """Infection matrix has spectral radius at or below 1: no endemic state."""

    def __init__(self, message: str, spectral_radius: float):
        super().__init__(message)
        self.spectral_radius = spectral_radius


class EigenConvergenceError(BivirusError):
    """Eigenvalue iteration failed to reach the requested residual."""

    def __init__(self, message: str, iterations: int = 0, residual: float = float("nan")):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


class ConvergenceError(BivirusError):
    """A nonlinear solve ran out of iterations before hitting tolerance."""

    def __init__(self, message: str, iterations: int = 0, residual: float = float("nan")):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


class StateSpaceError(BivirusError):
    """State left the admissible region by more than the drift tolerance."""


class StepSizeError(BivirusError):
    """Adaptive integrator drove the step size below the representable floor."""


class ConstructionError(BivirusError):
    """Layer design failed; ``attempts`` holds the per-attempt diagnostics."""

    def __init__(self, message: str, attempts: list[dict] | None = None):
        super().__init__(message)
        self.attempts = attempts or []
