"""Spectral and structural primitives for nonnegative and Metzler matrices.

Everything downstream rests on four facts about an irreducible nonnegative
matrix: its dominant eigenvalue is real, simple, and positive; the matching
left/right eigenvectors can be taken entrywise positive; irreducibility is a
property of the zero pattern alone; and shrinking the matrix by a positive
sub-unity diagonal strictly shrinks the dominant eigenvalue.  This module
computes those objects and certifies the matrix classes (irreducible,
Metzler, nonsingular M-matrix) the rest of the package relies on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EigenConvergenceError, InvalidMatrixError, ReducibleMatrixError

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 10_000

# Dense eigensolver fallback is only attempted up to this size.
DENSE_FALLBACK_MAX_N = 512

# Slack when asserting strict positivity of computed eigenvectors.
POSITIVITY_MARGIN = 1e-12


def as_square_array(m, name: str = "matrix") -> np.ndarray:
    """Coerce input to a float64 square 2-D array with finite entries."""
    if isinstance(m, ContactMatrix):
        return m.entries
    arr = np.asarray(m, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise InvalidMatrixError(f"{name} must be square, got shape {arr.shape}")
    if arr.shape[0] < 1:
        raise InvalidMatrixError(f"{name} must have at least one row")
    if not np.all(np.isfinite(arr)):
        raise InvalidMatrixError(f"{name} contains non-finite entries")
    return arr


class ContactMatrix:
    """Nonnegative square matrix of infection rates with cached metadata.

    Wraps a dense array, validates nonnegativity on construction, and caches
    the two properties queried repeatedly downstream (irreducibility and
    spectral radius).  The underlying array is frozen; treat instances as
    immutable values.
    """

    __slots__ = ("_m", "labels", "_irreducible", "_radius")

    def __init__(self, entries, labels: list[str] | None = None):
        arr = as_square_array(entries, "contact matrix")
        neg = np.argwhere(arr < 0.0)
        if neg.size:
            i, j = neg[0]
            raise InvalidMatrixError(
                f"contact matrix has negative entry {arr[i, j]!r} at ({i}, {j})"
            )
        arr = arr.copy()
        arr.setflags(write=False)
        self._m = arr
        if labels is not None and len(labels) != arr.shape[0]:
            raise InvalidMatrixError(
                f"{len(labels)} labels for {arr.shape[0]} nodes"
            )
        self.labels = list(labels) if labels is not None else None
        self._irreducible: bool | None = None
        self._radius: float | None = None

    @property
    def entries(self) -> np.ndarray:
        return self._m

    @property
    def n(self) -> int:
        return self._m.shape[0]

    @property
    def irreducible(self) -> bool:
        if self._irreducible is None:
            self._irreducible = is_irreducible(self._m)
        return self._irreducible

    @property
    def spectral_radius(self) -> float:
        if self._radius is None:
            self._radius = spectral_radius(self._m)
        return self._radius

    def __repr__(self) -> str:
        return f"ContactMatrix(n={self.n})"


def contact_matrix(m) -> ContactMatrix:
    """Return ``m`` as a ContactMatrix, wrapping raw arrays on the fly."""
    return m if isinstance(m, ContactMatrix) else ContactMatrix(m)


@dataclass(frozen=True)
class PerronData:
    """Dominant eigenvalue with strictly positive left/right eigenvectors.

    ``normalization`` records which scaling convention was applied:
    ``"left_dot_right"`` (left @ right == 1) or ``"left_dot_reference"``
    (left @ r == 1 for the caller-supplied reference vector).
    """

    eigenvalue: float
    left: np.ndarray
    right: np.ndarray
    normalization: str
    residual_left: float
    residual_right: float
    iterations: int
    method: str


def _adjacency_lists(pattern: np.ndarray) -> list[list[int]]:
    return [list(np.nonzero(row)[0]) for row in pattern]


def strongly_connected_components(m) -> list[list[int]]:
    """Strongly connected components of the nonzero pattern (Kosaraju).

    Components are returned sorted by smallest member, members ascending,
    so error listings are deterministic.  Works purely on structure; entry
    magnitudes are irrelevant.
    """
    arr = as_square_array(m)
    n = arr.shape[0]
    pattern = arr != 0.0
    adj = _adjacency_lists(pattern)
    radj = _adjacency_lists(pattern.T)

    # Pass 1: order vertices by DFS finish time (iterative).
    visited = np.zeros(n, dtype=bool)
    order: list[int] = []
    for start in range(n):
        if visited[start]:
            continue
        stack = [(start, iter(adj[start]))]
        visited[start] = True
        while stack:
            node, it = stack[-1]
            advanced = False
            for nxt in it:
                if not visited[nxt]:
                    visited[nxt] = True
                    stack.append((nxt, iter(adj[nxt])))
                    advanced = True
                    break
            if not advanced:
                order.append(node)
                stack.pop()

    # Pass 2: collect components on the reversed graph in reverse finish order.
    visited[:] = False
    components: list[list[int]] = []
    for start in reversed(order):
        if visited[start]:
            continue
        comp = [start]
        visited[start] = True
        stack = [start]
        while stack:
            node = stack.pop()
            for nxt in radj[node]:
                if not visited[nxt]:
                    visited[nxt] = True
                    comp.append(nxt)
                    stack.append(nxt)
        components.append(sorted(comp))
    components.sort(key=lambda c: c[0])
    return components


def is_irreducible(m) -> bool:
    """True iff the nonzero pattern is strongly connected.

    Purely structural: tested on the directed graph of nonzero entries,
    never through numerics.  A 1x1 matrix counts as irreducible.
    """
    arr = as_square_array(m)
    if arr.shape[0] == 1:
        return True
    return len(strongly_connected_components(arr)) == 1


def _dense_spectrum(arr: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.eigvals(arr)
    except np.linalg.LinAlgError as exc:
        raise EigenConvergenceError(
            f"dense eigensolver did not converge on {arr.shape[0]}x{arr.shape[0]} input: {exc}"
        ) from exc


def _power_dominant(arr: np.ndarray, tol: float, max_iter: int):
    """Dominant eigenpair of a nonnegative matrix by shifted power iteration.

    Iterates on ``arr + I`` (primitive whenever ``arr`` is irreducible, which
    kills period-2 oscillation) and returns ``(eigenvalue, vector, iterations,
    residual)`` for ``arr`` itself.  Raises EigenConvergenceError if the
    requested residual is not met.
    """
    n = arr.shape[0]
    shifted = arr + np.eye(n)
    v = np.full(n, 1.0 / n)
    lam_s = 0.0
    res = np.inf
    for it in range(1, max_iter + 1):
        w = shifted @ v
        norm = w.sum()  # 1-norm: iterates stay nonnegative
        if norm <= 0.0 or not np.isfinite(norm):
            raise EigenConvergenceError(
                "power iteration collapsed (zero or non-finite iterate)",
                iterations=it, residual=float("inf"),
            )
        v = w / norm
        lam_s = norm
        res = float(np.max(np.abs(shifted @ v - lam_s * v)))
        if res < tol:
            lam = lam_s - 1.0
            return lam, v / np.max(v), it, res
    raise EigenConvergenceError(
        f"power iteration stalled after {max_iter} iterations (residual {res:.3e})",
        iterations=max_iter, residual=res,
    )


def _power_pair(arr: np.ndarray, tol: float, max_iter: int):
    """Left/right dominant vectors plus the two-sided Rayleigh eigenvalue.

    The two-sided quotient squares away the first-order eigenvalue error
    left by the vector iteration, which one-sided estimates cannot do for
    nonsymmetric input.
    """
    lam_r, right, it_r, _ = _power_dominant(arr, tol, max_iter)
    _, left, it_l, _ = _power_dominant(arr.T, tol, max_iter)
    denom = float(left @ right)
    if denom <= 0.0:
        raise EigenConvergenceError(
            "left/right dominant vectors nearly orthogonal; eigenvalue ill-conditioned",
            iterations=it_r + it_l,
        )
    lam = float((left @ (arr @ right)) / denom)
    return lam, left, right, it_r + it_l


def spectral_radius(m, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> float:
    """Largest eigenvalue modulus.

    Nonnegative input goes through shifted power iteration (the dominant
    eigenvalue is then the Perron root); anything else, or a stalled power
    iteration on a matrix of moderate size, falls back to the dense solver.
    """
    arr = as_square_array(m)
    if np.all(arr >= 0.0):
        try:
            lam, left, right, _ = _power_pair(arr, 0.01 * tol, max_iter)
            res = max(
                float(np.max(np.abs(arr @ right - lam * right))),
                float(np.max(np.abs(arr.T @ left - lam * left))),
            )
            if res <= tol:
                return lam
        except EigenConvergenceError:
            pass
        if arr.shape[0] > DENSE_FALLBACK_MAX_N:
            raise EigenConvergenceError(
                f"power iteration failed and n={arr.shape[0]} exceeds the dense "
                f"fallback bound {DENSE_FALLBACK_MAX_N}",
                iterations=max_iter,
            )
    return float(np.max(np.abs(_dense_spectrum(arr))))


def spectral_abscissa(m) -> float:
    """Largest real part over the spectrum; negative means Hurwitz."""
    arr = as_square_array(m)
    return float(np.max(_dense_spectrum(arr).real))


def _dense_perron(arr: np.ndarray):
    """Dominant eigenpair via the dense solver, sign-fixed to positive."""
    vals, vecs = np.linalg.eig(arr)
    idx = int(np.argmax(vals.real))
    lam = float(vals[idx].real)
    v = vecs[:, idx].real
    v = v * np.sign(v[int(np.argmax(np.abs(v)))])
    return lam, v / np.max(np.abs(v))


def perron_vectors(
    m,
    require_irreducible: bool = True,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    normalize_left_to: np.ndarray | None = None,
) -> PerronData:
    """Dominant eigenvalue and strictly positive left/right eigenvectors.

    By default the pair is scaled so ``left @ right == 1``.  Passing a
    positive reference vector through ``normalize_left_to`` instead rescales
    the left vector so ``left @ r == 1`` (the convention the construction
    step needs, with the endemic equilibrium as reference); the right vector
    keeps its max-entry-1 scaling in both cases.

    Raises ReducibleMatrixError when ``require_irreducible`` is set and the
    pattern is not strongly connected, EigenConvergenceError when neither
    the power iteration nor the dense fallback reaches ``tol``.
    """
    arr = as_square_array(m)
    if np.any(arr < 0.0):
        raise InvalidMatrixError("Perron vectors require a nonnegative matrix")
    if require_irreducible and not is_irreducible(arr):
        comps = strongly_connected_components(arr)
        raise ReducibleMatrixError(
            f"matrix is reducible ({len(comps)} strongly connected components)",
            components=comps,
        )

    def _residuals(lam, left, right):
        return (
            float(np.max(np.abs(arr.T @ left - lam * left))),
            float(np.max(np.abs(arr @ right - lam * right))),
        )

    method = "power"
    iterations = 0
    lam = left = right = None
    try:
        lam, left, right, iterations = _power_pair(arr, 0.01 * tol, max_iter)
        res_l, res_r = _residuals(lam, left, right)
    except EigenConvergenceError:
        res_l = res_r = np.inf
    if max(res_l, res_r) > tol:
        if arr.shape[0] > DENSE_FALLBACK_MAX_N:
            raise EigenConvergenceError(
                f"eigenpair residual {max(res_l, res_r):.3e} exceeds tolerance and "
                f"n={arr.shape[0]} is beyond the dense fallback bound",
                iterations=iterations, residual=max(res_l, res_r),
            )
        method = "dense"
        lam, right = _dense_perron(arr)
        _, left = _dense_perron(arr.T)
        lam = float((left @ (arr @ right)) / (left @ right))
        res_l, res_r = _residuals(lam, left, right)
        if max(res_l, res_r) > tol:
            raise EigenConvergenceError(
                f"eigenpair residual {max(res_l, res_r):.3e} exceeds tolerance "
                "even with the dense solver",
                iterations=iterations, residual=max(res_l, res_r),
            )
    if np.min(right) < -POSITIVITY_MARGIN or np.min(left) < -POSITIVITY_MARGIN:
        raise EigenConvergenceError(
            "dominant eigenvectors are not entrywise positive "
            "(matrix may be effectively reducible)",
            iterations=iterations,
            residual=float(min(np.min(right), np.min(left))),
        )

    if normalize_left_to is not None:
        r = np.asarray(normalize_left_to, dtype=float)
        if r.shape != (arr.shape[0],) or np.any(r <= 0.0):
            raise InvalidMatrixError("reference vector must be strictly positive, length n")
        left = left / (left @ r)
        normalization = "left_dot_reference"
    else:
        left = left / (left @ right)
        normalization = "left_dot_right"

    return PerronData(
        eigenvalue=lam,
        left=left,
        right=right,
        normalization=normalization,
        residual_left=res_l,
        residual_right=res_r,
        iterations=iterations,
        method=method,
    )


def is_nonsingular_m_matrix(f) -> bool:
    """True iff ``-f`` is Metzler and every eigenvalue of ``f`` has Re > 0.

    Such matrices are invertible with entrywise-positive inverse when
    irreducible, which is exactly what the construction step needs before
    solving against the shift operator.
    """
    arr = as_square_array(f)
    off = arr - np.diag(np.diag(arr))
    if np.any(off > 0.0):
        return False
    return bool(np.min(_dense_spectrum(arr).real) > 0.0)
