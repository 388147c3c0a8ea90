"""Coupled two-virus SIS dynamics: right-hand side, Jacobian, integration.

State lives in the region where both infection vectors are nonnegative and
their sum stays at or below one per node; the flow keeps that region
invariant, so any numerical excursion is integrator noise.  The integrator
is an embedded Dormand-Prince 5(4) pair with proportional step control, a
per-step drift check that clamps roundoff-size negatives and aborts on
anything larger, and an early stop once the vector field has settled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import StateSpaceError, StepSizeError
from .linalg import ContactMatrix, contact_matrix

DRIFT_TOL = 1e-8
UNDECIDED = "undecided"

# Dormand-Prince 5(4) tableau (FSAL: the propagated stage doubles as the
# first stage of the next step; stage times are irrelevant, the field is
# autonomous).
_A = np.zeros((7, 7))
_A[1, :1] = [1 / 5]
_A[2, :2] = [3 / 40, 9 / 40]
_A[3, :3] = [44 / 45, -56 / 15, 32 / 9]
_A[4, :4] = [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]
_A[5, :5] = [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]
_A[6, :6] = [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_ERR = np.array(
    [71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40]
)

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 10.0


@dataclass(frozen=True)
class StateVector:
    """Per-node infection fractions for the two viruses."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.atleast_1d(np.asarray(self.x, dtype=float)).copy()
        y = np.atleast_1d(np.asarray(self.y, dtype=float)).copy()
        if x.shape != y.shape or x.ndim != 1:
            raise ValueError(f"mismatched state shapes {x.shape} and {y.shape}")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    def delta_violation(self) -> float:
        """How far the state pokes out of the admissible region (0 if inside)."""
        return float(
            max(0.0, -np.min(self.x), -np.min(self.y), np.max(self.x + self.y) - 1.0)
        )

    def in_delta(self, tol: float = 0.0) -> bool:
        return self.delta_violation() <= tol

    def flat(self) -> np.ndarray:
        return np.concatenate((self.x, self.y))

    @classmethod
    def from_flat(cls, z: np.ndarray) -> "StateVector":
        z = np.asarray(z, dtype=float)
        n = z.shape[0] // 2
        return cls(z[:n], z[n:])


@dataclass(frozen=True)
class BivirusSystem:
    """Two infection layers plus the timescale multiplier on virus 1.

    Both layers must be irreducible with spectral radius above 1, so each
    virus alone would persist; those are the standing assumptions under
    which the survival-versus-survival question is posed.
    """

    A: ContactMatrix
    B: ContactMatrix
    gamma: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "A", contact_matrix(self.A))
        object.__setattr__(self, "B", contact_matrix(self.B))
        if self.A.n != self.B.n:
            raise ValueError(f"layer sizes differ: {self.A.n} vs {self.B.n}")
        if not self.gamma > 0.0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        for name, layer in (("first", self.A), ("second", self.B)):
            if not layer.irreducible:
                raise ValueError(f"{name} layer is not strongly connected")
            if layer.spectral_radius <= 1.0:
                raise ValueError(
                    f"{name} layer has spectral radius "
                    f"{layer.spectral_radius:.6g} <= 1"
                )

    @property
    def n(self) -> int:
        return self.A.n

    def with_gamma(self, gamma: float) -> "BivirusSystem":
        return replace(self, gamma=gamma)


def _flat_rhs(sys: BivirusSystem):
    """Vector field on the stacked state, with an evaluation counter."""
    a = sys.A.entries
    b = sys.B.entries
    gamma = sys.gamma
    n = sys.n
    counter = [0]

    def f(z: np.ndarray) -> np.ndarray:
        counter[0] += 1
        x = z[:n]
        y = z[n:]
        s = 1.0 - x - y
        out = np.empty(2 * n)
        out[:n] = gamma * (s * (a @ x) - x)
        out[n:] = s * (b @ y) - y
        return out

    return f, counter


def rhs(sys: BivirusSystem, state: StateVector) -> tuple[np.ndarray, np.ndarray]:
    """Time derivatives (dx, dy) at a state inside the admissible region."""
    if not state.in_delta(DRIFT_TOL):
        raise StateSpaceError(
            f"state outside the admissible region by {state.delta_violation():.3e}"
        )
    s = 1.0 - state.x - state.y
    dx = sys.gamma * (s * (sys.A.entries @ state.x) - state.x)
    dy = s * (sys.B.entries @ state.y) - state.y
    return dx, dy


def _jacobian_raw(a: np.ndarray, b: np.ndarray, gamma: float, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Jacobian blocks without any region validation (root-finders need this)."""
    n = x.shape[0]
    s = 1.0 - x - y
    ax = a @ x
    by = b @ y
    eye = np.eye(n)
    j_xx = gamma * (-eye + s[:, None] * a - np.diag(ax))
    j_xy = -gamma * np.diag(ax)
    j_yx = -np.diag(by)
    j_yy = -eye + s[:, None] * b - np.diag(by)
    return np.block([[j_xx, j_xy], [j_yx, j_yy]])


def jacobian(sys: BivirusSystem, state: StateVector) -> np.ndarray:
    """Analytic Jacobian of the stacked vector field, shape (2n, 2n)."""
    if not state.in_delta(DRIFT_TOL):
        raise StateSpaceError(
            f"state outside the admissible region by {state.delta_violation():.3e}"
        )
    return _jacobian_raw(sys.A.entries, sys.B.entries, sys.gamma, state.x, state.y)


@dataclass(frozen=True)
class IntegrationControls:
    """Tunable knobs of the adaptive integrator."""

    rtol: float = 1e-9
    atol: float = 1e-9
    max_step: float = math.inf
    first_step: float | None = None
    # Clamp negatives above -drift_tol to zero; abort on anything worse.
    drift_tol: float = DRIFT_TOL
    # Stop early once ||rhs||_inf stays below settle_norm this many steps.
    settle_norm: float = 1e-10
    settle_steps: int = 3
    # Stop early on proximity to any of these flat states (basin sweeps pass
    # the stable equilibria here); 0 disables.
    stop_points: tuple = ()
    stop_tol: float = 0.0
    record: bool = True


@dataclass
class IntegrationDiagnostics:
    accepted: int = 0
    rejected: int = 0
    nfev: int = 0
    clamped: int = 0
    converged: bool = False
    final_rhs_norm: float = math.nan


@dataclass
class Trajectory:
    """Accepted integration steps: times, stacked states, diagnostics."""

    times: np.ndarray
    states: np.ndarray
    n: int
    diagnostics: IntegrationDiagnostics = field(default_factory=IntegrationDiagnostics)

    def state(self, idx: int) -> StateVector:
        return StateVector.from_flat(self.states[idx])

    @property
    def final(self) -> StateVector:
        return self.state(-1)

    def to_csv(self, path) -> None:
        """Write ``t,x_1..x_n,y_1..y_n`` rows, one per accepted step."""
        cols = ["t"] + [f"x_{i + 1}" for i in range(self.n)] + [
            f"y_{i + 1}" for i in range(self.n)
        ]
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(",".join(cols) + "\n")
            for t, row in zip(self.times, self.states):
                fh.write(",".join(f"{v:.17g}" for v in [t, *row]) + "\n")


def _initial_step(f, z0, f0, t_end, rtol, atol):
    """Hairer-style starting step guess for the 5th-order pair."""
    scale = atol + rtol * np.abs(z0)
    d0 = float(np.sqrt(np.mean((z0 / scale) ** 2)))
    d1 = float(np.sqrt(np.mean((f0 / scale) ** 2)))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, t_end)
    z1 = z0 + h0 * f0
    f1 = f(z1)
    d2 = float(np.sqrt(np.mean(((f1 - f0) / scale) ** 2))) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1, t_end)


def _enforce_region(z: np.ndarray, n: int, drift_tol: float, t: float):
    """Clamp roundoff negatives to zero; abort on real excursions."""
    clamped = False
    zmin = float(np.min(z))
    if zmin < 0.0:
        if zmin <= -drift_tol:
            raise StateSpaceError(
                f"component {zmin:.3e} below zero at t={t:.6g} exceeds drift tolerance"
            )
        z = np.maximum(z, 0.0)
        clamped = True
    overshoot = float(np.max(z[:n] + z[n:]) - 1.0)
    if overshoot > drift_tol:
        raise StateSpaceError(
            f"x+y exceeds 1 by {overshoot:.3e} at t={t:.6g}, beyond drift tolerance"
        )
    return z, clamped


def integrate(
    sys: BivirusSystem,
    s0: StateVector,
    t_end: float = 1e4,
    controls: IntegrationControls | None = None,
) -> Trajectory:
    """Integrate from ``s0`` to ``t_end`` with adaptive error control.

    Every accepted step is checked against the admissible region: negative
    components above ``-drift_tol`` are clamped to zero, larger violations
    raise StateSpaceError.  Integration ends early once the vector field
    norm has stayed below ``settle_norm`` for ``settle_steps`` accepted
    steps, which long-horizon runs hit well before ``t_end``.
    """
    if controls is None:
        controls = IntegrationControls()
    if not t_end > 0.0:
        raise ValueError(f"t_end must be positive, got {t_end}")
    if not s0.in_delta(controls.drift_tol):
        raise StateSpaceError(
            f"initial state outside the admissible region by {s0.delta_violation():.3e}"
        )

    n = sys.n
    f, nfev = _flat_rhs(sys)
    z = np.maximum(s0.flat(), 0.0)
    t = 0.0
    k1 = f(z)

    diag = IntegrationDiagnostics()
    times = [t]
    states = [z.copy()]

    h = controls.first_step or _initial_step(f, z, k1, t_end, controls.rtol, controls.atol)
    h = min(h, controls.max_step)
    settled = 0
    k = np.empty((7, z.shape[0]))

    while t < t_end:
        h = min(h, t_end - t)
        if h < 1e-14 * max(1.0, abs(t)):
            raise StepSizeError(
                f"step size underflow at t={t:.6g} "
                f"({diag.accepted} accepted, {diag.rejected} rejected steps)"
            )

        k[0] = k1
        for i in range(1, 6):
            k[i] = f(z + h * (_A[i, :i] @ k[:i]))
        z_new = z + h * (_A[6, :6] @ k[:6])  # B5 weights equal the last tableau row
        k[6] = f(z_new)  # FSAL stage
        err_vec = h * (_ERR @ k)
        scale = controls.atol + controls.rtol * np.maximum(np.abs(z), np.abs(z_new))
        err = float(np.sqrt(np.mean((err_vec / scale) ** 2)))

        if err > 1.0:
            diag.rejected += 1
            h *= max(_MIN_FACTOR, _SAFETY * err ** -0.2)
            continue

        z_new, clamped = _enforce_region(z_new, n, controls.drift_tol, t + h)
        t += h
        z = z_new
        # Copy the FSAL stage: row 6 is rewritten by the next step's stage
        # evaluations, including ones that end up rejected.
        k1 = f(z) if clamped else k[6].copy()
        if clamped:
            diag.clamped += 1
        diag.accepted += 1
        if controls.record:
            times.append(t)
            states.append(z.copy())

        rhs_norm = float(np.max(np.abs(k1)))
        settled = settled + 1 if rhs_norm < controls.settle_norm else 0
        if settled >= controls.settle_steps:
            diag.converged = True
            break
        if controls.stop_tol > 0.0 and any(
            float(np.max(np.abs(z - p))) < controls.stop_tol for p in controls.stop_points
        ):
            diag.converged = True
            break

        factor = _MAX_FACTOR if err == 0.0 else min(_MAX_FACTOR, _SAFETY * err ** -0.2)
        h = min(h * max(_MIN_FACTOR, factor), controls.max_step)

    if not controls.record:
        times.append(t)
        states.append(z.copy())
    diag.nfev = nfev[0]
    diag.final_rhs_norm = float(np.max(np.abs(k1)))
    return Trajectory(
        times=np.asarray(times), states=np.asarray(states), n=n, diagnostics=diag
    )


@dataclass(frozen=True)
class Classification:
    """Outcome label plus the distance to every candidate equilibrium."""

    label: str
    distances: tuple[tuple[str, float], ...]


def classify_limit(traj: Trajectory, equilibria, tol: float = 1e-3) -> Classification:
    """Match the trajectory endpoint to the nearest equilibrium within tol.

    ``equilibria`` is any sequence of objects exposing ``kind`` and
    ``point`` (a StateVector).  Returns the matched kind, or ``undecided``
    with the full distance table when nothing is close enough.
    """
    end = traj.final.flat()
    distances = []
    best_label, best_dist = UNDECIDED, math.inf
    for eq in equilibria:
        dist = float(np.max(np.abs(end - eq.point.flat())))
        distances.append((eq.kind, dist))
        if dist < best_dist:
            best_label, best_dist = eq.kind, dist
    label = best_label if best_dist <= tol else UNDECIDED
    return Classification(label=label, distances=tuple(distances))
