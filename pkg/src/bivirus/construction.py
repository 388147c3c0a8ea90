"""Design of the second infection layer so that either virus can win.

Given one layer with an endemic regime, this module builds a competitor
layer whose survival equilibrium is a small, controlled shift of the first
one, placed so that *both* survival equilibria of the coupled system are
locally exponentially stable.  The pipeline:

1. Perturb one row of the given layer along a direction orthogonal to its
   endemic equilibrium.  The perturbed matrix keeps the same equilibrium
   but acquires a distinct left null vector, which is what makes the next
   step solvable.
2. Map both left null vectors through the inverse of the shift operator
   ``F = (I - diag(x_bar))^-2 - B'`` (a nonsingular M-matrix, entrywise
   positive inverse).  Pick an index pair separating the two mapped
   vectors, a ratio ``alpha`` strictly between the separation bounds, and
   a magnitude ``beta`` small enough to keep everything nonnegative.
3. Realize the designed source vector ``s`` with a two-entry correction
   ``delta_B`` satisfying ``delta_B @ x_bar = F @ delta_x = s`` exactly.
4. Verify both invasion radii fall below 1 with margin; shrink the
   correction magnitude geometrically and retry if not.

Every intermediate quantity is kept in a ConstructionRecord for audit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .analysis import check_survival_stability
from .dynamics import BivirusSystem
from .errors import ConstructionError, InvalidMatrixError
from .linalg import ContactMatrix, contact_matrix, is_nonsingular_m_matrix, perron_vectors
from .sis import endemic_equilibrium

_ORTHOGONALITY_TOL = 1e-12
_EXACTNESS_TOL = 1e-10
_PARALLEL_TOL = 1e-9
_STABILITY_MARGIN = 1e-7


@dataclass(frozen=True)
class ConstructionConfig:
    """Design knobs of the layer construction.

    ``z_spec`` may be None (automatic index pair), a pair ``(k, j)`` for
    the default two-entry direction, or an explicit length-n vector.
    ``epsilon`` of None means half its nonnegativity bound.  ``alpha_rule``
    places alpha inside its feasible open interval on a log scale (0.5 is
    the geometric mean of the endpoints).  On failed verification the beta
    fraction is multiplied by ``shrink_factor`` and the pipeline reruns, up
    to ``retune_limit`` attempts in total; epsilon stays put, because the
    stabilizing effect scales like epsilon*beta while the destabilizing
    curvature scales like beta^2, so only the ratio beta/epsilon matters
    and shrinking both together would never repair it.
    """

    i: int | None = None
    z_spec: object = None
    epsilon: float | None = None
    beta_fraction: float = 0.1
    alpha_rule: float = 0.5
    retune_limit: int = 10
    shrink_factor: float = 0.5

    def __post_init__(self):
        if self.epsilon is not None and not self.epsilon > 0.0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if not 0.0 < self.beta_fraction < 1.0:
            raise ValueError(f"beta_fraction must lie in (0, 1), got {self.beta_fraction}")
        if not 0.0 < self.alpha_rule < 1.0:
            raise ValueError(f"alpha_rule must lie in (0, 1), got {self.alpha_rule}")
        if self.retune_limit < 1:
            raise ValueError(f"retune_limit must be >= 1, got {self.retune_limit}")
        if not 0.0 < self.shrink_factor < 1.0:
            raise ValueError(f"shrink_factor must lie in (0, 1), got {self.shrink_factor}")


@dataclass
class ConstructionRecord:
    """Every intermediate of a successful construction, for audit."""

    i: int
    z: np.ndarray
    epsilon: float
    b_prime: np.ndarray
    u: np.ndarray
    v: np.ndarray
    f_matrix: np.ndarray
    u_tilde: np.ndarray
    v_tilde: np.ndarray
    j: int
    k: int
    p: int
    q: int
    alpha: float
    alpha_interval: tuple[float, float]
    beta: float
    s: np.ndarray
    delta_x: np.ndarray
    delta_b: np.ndarray
    b: np.ndarray
    x_bar: np.ndarray
    predicted_y_bar: np.ndarray
    sign_margins: tuple[float, float]
    exactness: float
    invasion_radius_virus1: float
    invasion_radius_virus2: float
    attempts: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        def conv(v):
            if isinstance(v, np.ndarray):
                return v.tolist()
            if isinstance(v, (np.integer,)):
                return int(v)
            if isinstance(v, (np.floating,)):
                return float(v)
            if isinstance(v, tuple):
                return [conv(x) for x in v]
            return v

        return {name: conv(getattr(self, name)) for name in self.__dataclass_fields__}

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)


def default_z(A, x_bar: np.ndarray, k: int, j: int, i: int | None = None) -> np.ndarray:
    """Two-entry direction orthogonal to the equilibrium: z[k]=1, z[j]<0.

    The negative entry sits where row ``i`` (defaults to ``k``) of the layer
    is positive, so a small row perturbation along z cannot create a
    negative matrix entry.
    """
    arr = contact_matrix(A).entries
    x_bar = np.asarray(x_bar, dtype=float)
    n = arr.shape[0]
    if k == j:
        raise ValueError("indices k and j must differ")
    if not (0 <= k < n and 0 <= j < n):
        raise ValueError(f"indices ({k}, {j}) out of range for n={n}")
    row = k if i is None else i
    if arr[row, j] <= 0.0:
        raise InvalidMatrixError(
            f"negative direction entry at column {j} needs a positive entry "
            f"in row {row}, but entry ({row}, {j}) is zero"
        )
    z = np.zeros(n)
    z[k] = 1.0
    z[j] = -x_bar[k] / x_bar[j]
    return z


def epsilon_bound(A, i: int, z: np.ndarray) -> float:
    """Largest row-perturbation size keeping the matrix nonnegative."""
    arr = contact_matrix(A).entries
    neg = np.nonzero(z < 0.0)[0]
    if neg.size == 0:
        return float("inf")
    return float(np.min(arr[i, neg] / np.abs(z[neg])))


def make_b_prime(A, x_bar: np.ndarray, i: int, z: np.ndarray, epsilon: float) -> ContactMatrix:
    """Rank-one row perturbation sharing the endemic equilibrium of ``A``.

    Requires z orthogonal to the equilibrium (so the equilibrium carries
    over exactly), negative z entries only over positive entries of row
    ``i``, and epsilon strictly below the nonnegativity bound.  The result
    keeps the zero pattern (hence irreducibility) and stays supercritical.
    """
    base = contact_matrix(A)
    arr = base.entries
    x_bar = np.asarray(x_bar, dtype=float)
    z = np.asarray(z, dtype=float)
    n = arr.shape[0]
    if z.shape != (n,):
        raise ValueError(f"direction has shape {z.shape}, expected ({n},)")
    if not np.any(z):
        raise ValueError("direction vector is zero")
    ortho = abs(float(z @ x_bar))
    if ortho > _ORTHOGONALITY_TOL:
        raise InvalidMatrixError(
            f"direction not orthogonal to the equilibrium (z @ x_bar = {ortho:.3e})"
        )
    for m in np.nonzero(z < 0.0)[0]:
        if arr[i, m] <= 0.0:
            raise InvalidMatrixError(
                f"negative direction entry at column {m} over zero entry ({i}, {m})"
            )
    bound = epsilon_bound(arr, i, z)
    if not 0.0 < epsilon < bound:
        ratios = np.where(z < 0.0, arr[i] / np.where(z < 0.0, np.abs(z), 1.0), np.inf)
        m = int(np.argmin(ratios))
        raise InvalidMatrixError(
            f"epsilon {epsilon:.6g} outside (0, {bound:.6g}); entry ({i}, {m}) "
            "would leave nonnegativity first"
        )

    out = arr.copy()
    out[i] = out[i] + epsilon * z
    result = ContactMatrix(out, labels=base.labels)

    residual = float(np.max(np.abs(x_bar - (1.0 - x_bar) * (out @ x_bar))))
    if residual > 1e-12:
        raise ConstructionError(
            f"perturbed layer does not share the equilibrium (residual {residual:.3e})"
        )
    if not result.irreducible:
        raise ConstructionError("perturbed layer lost strong connectivity")
    if result.spectral_radius <= 1.0:
        raise ConstructionError(
            f"perturbed layer went subcritical (radius {result.spectral_radius:.6g})"
        )
    return result


def left_null_vector(layer, x_bar: np.ndarray) -> np.ndarray:
    """Left null vector of ``-I + (I - diag(x_bar)) M``, scaled to u @ x_bar = 1.

    Exists, is unique up to scale, and is entrywise positive because the
    rescaled layer ``(I - diag(x_bar)) M`` is irreducible nonnegative with
    dominant eigenvalue exactly 1 (the equilibrium itself is the right
    eigenvector).
    """
    arr = contact_matrix(layer).entries
    x_bar = np.asarray(x_bar, dtype=float)
    scaled = (1.0 - x_bar)[:, None] * arr
    data = perron_vectors(scaled, normalize_left_to=x_bar)
    if abs(data.eigenvalue - 1.0) > 1e-8:
        raise ConstructionError(
            f"rescaled layer should have unit dominant eigenvalue, got {data.eigenvalue!r}"
        )
    return data.left


@dataclass(frozen=True)
class PerturbationChoice:
    """Outputs of the index/ratio/magnitude selection step."""

    f_matrix: np.ndarray
    u_tilde: np.ndarray
    v_tilde: np.ndarray
    j: int
    k: int
    alpha: float
    alpha_interval: tuple[float, float]
    p: int
    q: int
    beta: float


def _pick_positive_column(row_vals: np.ndarray, exclude: set[int]) -> int:
    """Largest positive entry, preferring columns untouched by earlier edits."""
    masked = np.where(row_vals > 0.0, row_vals, -np.inf)
    preferred = masked.copy()
    for col in exclude:
        preferred[col] = -np.inf
    pick = preferred if np.max(preferred) > -np.inf else masked
    if np.max(pick) == -np.inf:
        raise ConstructionError("row has no positive entry to perturb")
    return int(np.argmax(pick))


def select_perturbation(
    b_prime,
    x_bar: np.ndarray,
    u: np.ndarray,
    v: np.ndarray,
    beta_fraction: float = 0.1,
    alpha_rule: float = 0.5,
    touched_row: int | None = None,
    touched_cols: tuple[int, ...] = (),
) -> PerturbationChoice:
    """Choose the index pair, ratio, target columns, and magnitude.

    The mapped functionals come from solving against the transposed shift
    operator; the index pair maximizes their ratio separation (wider
    separation gives a wider feasible alpha interval and a better stability
    margin).  Raises ConstructionError when the separation is numerically
    absent, i.e. the two left null vectors are parallel.
    """
    bp = contact_matrix(b_prime).entries
    x_bar = np.asarray(x_bar, dtype=float)
    n = bp.shape[0]

    f_matrix = np.diag((1.0 - x_bar) ** -2) - bp
    if not is_nonsingular_m_matrix(f_matrix):
        raise ConstructionError("shift operator failed the nonsingular M-matrix certificate")

    weight = x_bar / (1.0 - x_bar)
    u_tilde = np.linalg.solve(f_matrix.T, weight * u)
    v_tilde = np.linalg.solve(f_matrix.T, weight * v)
    if np.min(u_tilde) <= 0.0 or np.min(v_tilde) <= 0.0:
        raise ConstructionError("mapped functionals are not entrywise positive")

    ratio_u = u_tilde[:, None] / u_tilde[None, :]   # ratio_u[j, k] = u~_j / u~_k
    ratio_v = v_tilde[:, None] / v_tilde[None, :]
    separation = ratio_u / ratio_v
    np.fill_diagonal(separation, -np.inf)
    flat = int(np.argmax(separation))
    j, k = divmod(flat, n)
    if separation[j, k] <= 1.0 + _PARALLEL_TOL:
        raise ConstructionError(
            "left null vectors are numerically parallel: no index pair separates "
            f"the mapped functionals (best separation {separation[j, k]:.3e})"
        )

    lo = u_tilde[k] / u_tilde[j]
    hi = v_tilde[k] / v_tilde[j]
    alpha = float(lo ** (1.0 - alpha_rule) * hi ** alpha_rule)

    exclude_j = set(touched_cols) if touched_row == j else set()
    exclude_k = set(touched_cols) if touched_row == k else set()
    p = _pick_positive_column(bp[j], exclude_j)
    q = _pick_positive_column(bp[k], exclude_k)
    beta = float(beta_fraction * bp[k, q] * x_bar[q])

    return PerturbationChoice(
        f_matrix=f_matrix,
        u_tilde=u_tilde,
        v_tilde=v_tilde,
        j=int(j),
        k=int(k),
        alpha=alpha,
        alpha_interval=(float(lo), float(hi)),
        p=p,
        q=q,
        beta=beta,
    )


def compute_delta(
    f_matrix: np.ndarray,
    j: int,
    k: int,
    alpha: float,
    beta: float,
    u_tilde: np.ndarray,
    v_tilde: np.ndarray,
):
    """Source vector and equilibrium shift: s two-entried, delta_x = F^-1 s.

    Asserts the two defining sign conditions (positive against the first
    mapped functional, negative against the second); their margins are
    returned for telemetry.  A failure signals a bad index or ratio choice
    upstream, not a numerical accident here.
    """
    if not beta > 0.0:
        raise ValueError(f"beta must be positive, got {beta}")
    if j == k:
        raise ValueError("indices j and k must differ")
    n = f_matrix.shape[0]
    s = np.zeros(n)
    s[k] = -beta
    s[j] = alpha * beta
    delta_x = np.linalg.solve(f_matrix, s)
    # One refinement pass keeps F @ delta_x = s down at roundoff level.
    delta_x += np.linalg.solve(f_matrix, s - f_matrix @ delta_x)

    margin_u = float(u_tilde @ s)
    margin_v = float(v_tilde @ s)
    if margin_u <= 0.0 or margin_v >= 0.0:
        raise ConstructionError(
            f"sign conditions violated (u-side {margin_u:.3e}, v-side {margin_v:.3e}); "
            "index or ratio selection is inconsistent"
        )
    return s, delta_x, (margin_u, margin_v)


def predict_y_bar(x_bar: np.ndarray, delta_x: np.ndarray) -> np.ndarray:
    """First-order prediction of the competitor's endemic equilibrium."""
    return np.asarray(x_bar, dtype=float) + np.asarray(delta_x, dtype=float)


def _resolve_pattern(arr: np.ndarray, cfg: ConstructionConfig, x_bar: np.ndarray):
    """Materialize (i, z) from the config, choosing defaults deterministically."""
    n = arr.shape[0]
    spec = cfg.z_spec
    if spec is None:
        i = 0 if cfg.i is None else int(cfg.i)
        k = i
        # The nonnegativity bound on epsilon is arr[i, j] * x_bar[j] / x_bar[k];
        # maximize it, since the achievable stability margin scales with it.
        headroom = arr[i] * x_bar
        headroom[k] = -np.inf
        j = int(np.argmax(headroom))
        if arr[i, j] <= 0.0:
            raise ConstructionError(f"row {i} has no off-diagonal positive entry")
        z = default_z(arr, x_bar, k, j, i=i)
    elif isinstance(spec, tuple) and len(spec) == 2 and all(isinstance(v, (int, np.integer)) for v in spec):
        k, j = int(spec[0]), int(spec[1])
        i = k if cfg.i is None else int(cfg.i)
        z = default_z(arr, x_bar, k, j, i=i)
    else:
        z = np.asarray(spec, dtype=float)
        if cfg.i is None:
            raise ValueError("an explicit direction vector requires the row index i")
        i = int(cfg.i)
    return i, z


def construct_b(A, cfg: ConstructionConfig | None = None) -> tuple[ContactMatrix, ConstructionRecord]:
    """Build the competitor layer with both survival equilibria stable.

    Runs the perturb/select/correct pipeline and verifies the two invasion
    radii; on failure the design magnitudes shrink geometrically and the
    pipeline reruns, up to ``cfg.retune_limit`` attempts.  Raises
    ConstructionError with the per-attempt diagnostic trail when the budget
    is exhausted.
    """
    cfg = cfg or ConstructionConfig()
    base = contact_matrix(A)
    arr = base.entries
    n = base.n
    if n < 2:
        raise ConstructionError("construction needs at least two nodes")

    # The equilibrium must be converged below make_b_prime's sharing check
    # (1e-12); the achievable floor grows with n.
    x_bar = endemic_equilibrium(base, tol=max(1e-13, n * 5e-16)).x_bar
    i, z = _resolve_pattern(arr, cfg, x_bar)
    bound = epsilon_bound(arr, i, z)
    if cfg.epsilon is not None and not cfg.epsilon < bound:
        raise InvalidMatrixError(
            f"configured epsilon {cfg.epsilon:.6g} is not below the "
            f"nonnegativity bound {bound:.6g}"
        )
    eps0 = cfg.epsilon if cfg.epsilon is not None else 0.5 * bound
    u = left_null_vector(arr, x_bar)
    touched_cols = tuple(int(c) for c in np.nonzero(z)[0])

    # The direction perturbation stays fixed across retunes: only the
    # two-entry correction needs to shrink (its stabilizing effect is
    # linear in beta, its destabilizing one quadratic), and the perturbed
    # base depends only on epsilon, so it is built once.
    epsilon = eps0
    b_prime = make_b_prime(arr, x_bar, i, z, epsilon)
    v = left_null_vector(b_prime, x_bar)

    attempts: list[dict] = []
    for attempt in range(cfg.retune_limit):
        beta_fraction = cfg.beta_fraction * cfg.shrink_factor ** attempt
        telemetry: dict = {"attempt": attempt, "epsilon": epsilon, "beta_fraction": beta_fraction}
        try:
            choice = select_perturbation(
                b_prime, x_bar, u, v,
                beta_fraction=beta_fraction,
                alpha_rule=cfg.alpha_rule,
                touched_row=i,
                touched_cols=touched_cols,
            )
            s, delta_x, margins = compute_delta(
                choice.f_matrix, choice.j, choice.k, choice.alpha, choice.beta,
                choice.u_tilde, choice.v_tilde,
            )

            delta_b = np.zeros((n, n))
            delta_b[choice.k, choice.q] = -choice.beta / x_bar[choice.q]
            delta_b[choice.j, choice.p] = choice.alpha * choice.beta / x_bar[choice.p]
            b = ContactMatrix(b_prime.entries + delta_b, labels=base.labels)

            exactness = float(
                max(
                    np.max(np.abs(delta_b @ x_bar - s)),
                    np.max(np.abs(choice.f_matrix @ delta_x - s)),
                )
            )
            telemetry.update(alpha=choice.alpha, beta=choice.beta, exactness=exactness)
            if exactness > _EXACTNESS_TOL:
                raise ConstructionError(f"correction identity drifted to {exactness:.3e}")
            if not b.irreducible:
                raise ConstructionError("designed layer lost strong connectivity")
            if b.spectral_radius <= 1.0:
                raise ConstructionError(
                    f"designed layer went subcritical (radius {b.spectral_radius:.6g})"
                )

            check = check_survival_stability(BivirusSystem(base, b))
            telemetry.update(
                invasion_radius_virus1=check.invasion_radius_virus1,
                invasion_radius_virus2=check.invasion_radius_virus2,
            )
            stable = (
                check.invasion_radius_virus1 < 1.0 - _STABILITY_MARGIN
                and check.invasion_radius_virus2 < 1.0 - _STABILITY_MARGIN
            )
            if not stable:
                raise ConstructionError(
                    "verification failed: invasion radii "
                    f"({check.invasion_radius_virus1:.9f}, {check.invasion_radius_virus2:.9f})"
                )
        except (ConstructionError, ValueError) as exc:
            telemetry["error"] = str(exc)
            attempts.append(telemetry)
            continue

        record = ConstructionRecord(
            i=i,
            z=z,
            epsilon=epsilon,
            b_prime=b_prime.entries.copy(),
            u=u,
            v=v,
            f_matrix=choice.f_matrix,
            u_tilde=choice.u_tilde,
            v_tilde=choice.v_tilde,
            j=choice.j,
            k=choice.k,
            p=choice.p,
            q=choice.q,
            alpha=choice.alpha,
            alpha_interval=choice.alpha_interval,
            beta=choice.beta,
            s=s,
            delta_x=delta_x,
            delta_b=delta_b,
            b=b.entries.copy(),
            x_bar=x_bar,
            predicted_y_bar=predict_y_bar(x_bar, delta_x),
            sign_margins=margins,
            exactness=exactness,
            invasion_radius_virus1=check.invasion_radius_virus1,
            invasion_radius_virus2=check.invasion_radius_virus2,
            attempts=attempts + [telemetry],
        )
        return b, record

    raise ConstructionError(
        f"no stable design within {cfg.retune_limit} attempts", attempts=attempts
    )
