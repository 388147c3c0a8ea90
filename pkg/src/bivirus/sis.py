"""Endemic equilibrium of a single-virus SIS network.

For an irreducible infection matrix with spectral radius above 1 the system
``x' = -x + (I - diag(x)) A x`` has a unique equilibrium with every entry in
(0, 1), reached from the all-ones start by the monotone fixed-point map
``x <- Ax / (1 + Ax)``.  The fixed point can crawl near the epidemic
threshold, so a damped Newton polish finishes the job once the iterates are
in its basin.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, ReducibleMatrixError, SubthresholdError
from .linalg import as_square_array, is_irreducible, spectral_radius, strongly_connected_components

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 100_000

# Residual at which the fixed-point phase hands over to Newton.
_POLISH_HANDOFF = 1e-6
_NEWTON_MAX_ITER = 60
_NEWTON_MAX_HALVINGS = 60


@dataclass(frozen=True)
class EndemicEquilibrium:
    """Converged endemic state with the residual actually achieved."""

    x_bar: np.ndarray
    residual: float
    iterations: int
    polish_iterations: int


def equilibrium_residual(A, x) -> float:
    """Infinity norm of ``[-I + (I - diag(x)) A] x``.

    Zero exactly at the healthy state and at the endemic equilibrium;
    meaningful for ``0 <= x <= 1`` entrywise.
    """
    arr = as_square_array(A, "infection matrix")
    vec = np.asarray(x, dtype=float)
    if vec.shape != (arr.shape[0],):
        raise ValueError(f"state has shape {vec.shape}, expected ({arr.shape[0]},)")
    return float(np.max(np.abs(-vec + (1.0 - vec) * (arr @ vec))))


def fixed_point_step(A, x) -> np.ndarray:
    """One application of ``x <- Ax / (1 + Ax)``."""
    arr = as_square_array(A, "infection matrix")
    ax = arr @ np.asarray(x, dtype=float)
    return ax / (1.0 + ax)


def _newton_polish(arr: np.ndarray, x: np.ndarray, tol: float):
    """Damped Newton on g(x) = -x + (I - diag(x)) A x, halving steps on stall."""
    res = equilibrium_residual(arr, x)
    steps = 0
    n = arr.shape[0]
    eye = np.eye(n)
    for _ in range(_NEWTON_MAX_ITER):
        if res < tol:
            break
        ax = arr @ x
        g = -x + (1.0 - x) * ax
        jac = -eye + (1.0 - x)[:, None] * arr - np.diag(ax)
        try:
            step = np.linalg.solve(jac, -g)
        except np.linalg.LinAlgError:
            break
        t = 1.0
        for _ in range(_NEWTON_MAX_HALVINGS):
            trial = x + t * step
            trial_res = equilibrium_residual(arr, trial)
            if trial_res < res:
                x, res = trial, trial_res
                break
            t *= 0.5
        else:
            break
        steps += 1
    return x, res, steps


def endemic_equilibrium(
    A,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    polish: bool = True,
) -> EndemicEquilibrium:
    """Unique endemic equilibrium of the single-virus system.

    Starts the fixed-point map from the all-ones vector (iterates are then
    entrywise non-increasing and stay in (0, 1)); optionally switches to a
    damped Newton polish once the residual is small.  Rejects reducible and
    subthreshold inputs outright rather than returning a silent zero vector.
    """
    arr = as_square_array(A, "infection matrix")
    if not is_irreducible(arr):
        comps = strongly_connected_components(arr)
        raise ReducibleMatrixError(
            f"infection matrix is reducible ({len(comps)} strongly connected components)",
            components=comps,
        )
    rho = spectral_radius(arr)
    if rho <= 1.0:
        raise SubthresholdError(
            f"spectral radius {rho:.6g} <= 1: no endemic equilibrium exists",
            spectral_radius=rho,
        )

    x = np.ones(arr.shape[0])
    res = np.inf
    iterations = 0
    target = _POLISH_HANDOFF if polish else tol
    for it in range(1, max_iter + 1):
        ax = arr @ x
        x = ax / (1.0 + ax)
        iterations = it
        res = equilibrium_residual(arr, x)
        if res < target:
            break

    polish_steps = 0
    if polish and res >= tol:
        x, res, polish_steps = _newton_polish(arr, x, tol)

    if res >= tol:
        raise ConvergenceError(
            f"endemic equilibrium stalled at residual {res:.3e} "
            f"after {iterations} fixed-point and {polish_steps} Newton iterations",
            iterations=iterations, residual=res,
        )
    if np.any(x <= 0.0) or np.any(x >= 1.0):
        raise ConvergenceError(
            "endemic equilibrium left the open unit box", iterations=iterations, residual=res
        )
    return EndemicEquilibrium(
        x_bar=x, residual=res, iterations=iterations, polish_iterations=polish_steps
    )
