"""Equilibrium census and stability verdicts for the two-virus system.

Besides the healthy state, the system can rest at two survival equilibria
(one virus endemic, the other extinct) and possibly at interior coexistence
points.  Survival stability has a clean test: the extinct virus's linearized
growth factor at the resident equilibrium, an invasion spectral radius, must
be below 1.  Verdicts here are computed from the full Jacobian spectrum, and
the invasion radii are reported alongside so the two characterizations can
be checked against each other.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np

from . import dynamics
from .dynamics import BivirusSystem, StateVector
from .errors import ConvergenceError
from .linalg import spectral_radius
from .sis import endemic_equilibrium

logger = logging.getLogger(__name__)

KIND_HEALTHY = "healthy"
KIND_VIRUS1 = "virus1_survival"
KIND_VIRUS2 = "virus2_survival"
KIND_COEXISTENCE = "coexistence"

VERDICT_STABLE = "stable"
VERDICT_UNSTABLE = "unstable"
VERDICT_MARGINAL = "marginal"

# Strict inequalities get this much slack before a verdict flips to marginal.
MARGINAL_BAND = 1e-7

# Equilibria are reported only if the vector field vanishes this well.
EQUILIBRIUM_RHS_TOL = 1e-8

_DEDUP_TOL = 1e-6
_INTERIOR_MARGIN = 1e-8
_NEWTON_MAX_ITER = 200
_NEWTON_MAX_HALVINGS = 60


@dataclass(frozen=True)
class EquilibriumReport:
    """One equilibrium: location, spectrum, verdict, invasion radii."""

    kind: str
    point: StateVector
    jac_spectrum: np.ndarray
    verdict: str
    rhs_norm: float
    key_radii: dict[str, float] | None = None

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "x": self.point.x.tolist(),
            "y": self.point.y.tolist(),
            "spectrum": [[float(v.real), float(v.imag)] for v in self.jac_spectrum],
            "verdict": self.verdict,
            "rhs_norm": self.rhs_norm,
            "key_radii": self.key_radii,
        }


def save_reports(reports: list[EquilibriumReport], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump([r.to_dict() for r in reports], fh, indent=2)


@dataclass(frozen=True)
class StabilityCheck:
    """Invasion radii governing the two survival equilibria.

    ``invasion_radius_virus1`` is the growth factor of virus 1 introduced at
    the virus-2 equilibrium; below 1 means virus 1 cannot invade and the
    virus-2 survival state is locally exponentially stable.  Symmetrically
    for ``invasion_radius_virus2``.
    """

    invasion_radius_virus1: float
    invasion_radius_virus2: float
    both_stable: bool
    x_bar: np.ndarray
    y_bar: np.ndarray
    verdict_virus1_survival: str
    verdict_virus2_survival: str


def radius_verdict(radius: float, band: float = MARGINAL_BAND) -> str:
    """Stability verdict from an invasion radius against the threshold 1."""
    if radius < 1.0 - band:
        return VERDICT_STABLE
    if radius > 1.0 + band:
        return VERDICT_UNSTABLE
    return VERDICT_MARGINAL


def abscissa_verdict(sigma: float, band: float = MARGINAL_BAND) -> str:
    if sigma < -band:
        return VERDICT_STABLE
    if sigma > band:
        return VERDICT_UNSTABLE
    return VERDICT_MARGINAL


def check_survival_stability(sys: BivirusSystem) -> StabilityCheck:
    """Invasion radii at both survival equilibria plus the joint verdict."""
    x_bar = endemic_equilibrium(sys.A).x_bar
    y_bar = endemic_equilibrium(sys.B).x_bar
    rho_1 = spectral_radius((1.0 - y_bar)[:, None] * sys.A.entries)
    rho_2 = spectral_radius((1.0 - x_bar)[:, None] * sys.B.entries)
    v1 = radius_verdict(rho_2)  # (x_bar, 0) is governed by virus 2's radius
    v2 = radius_verdict(rho_1)
    return StabilityCheck(
        invasion_radius_virus1=rho_1,
        invasion_radius_virus2=rho_2,
        both_stable=(v1 == VERDICT_STABLE and v2 == VERDICT_STABLE),
        x_bar=x_bar,
        y_bar=y_bar,
        verdict_virus1_survival=v1,
        verdict_virus2_survival=v2,
    )


def default_seed_grid(
    x_bar: np.ndarray, y_bar: np.ndarray, n_random: int = 20, seed: int = 0
) -> list[StateVector]:
    """Interior seeds: scaled combinations of the survival points plus noise.

    The deterministic part places seeds along convex-combination rays toward
    both survival equilibria, where connecting orbits tend to run; the
    random part covers everything else.
    """
    seeds = []
    fractions = (0.2, 0.4, 0.6, 0.8)
    for c1 in fractions:
        for c2 in fractions:
            x = c1 * x_bar
            y = c2 * y_bar
            if np.max(x + y) < 1.0 - _INTERIOR_MARGIN:
                seeds.append(StateVector(x, y))
    rng = np.random.default_rng(seed)
    n = x_bar.shape[0]
    for _ in range(n_random):
        u = rng.uniform(size=n)
        v = rng.uniform(size=n)
        fold = u + v > 1.0
        u[fold], v[fold] = 1.0 - u[fold], 1.0 - v[fold]
        seeds.append(StateVector(0.01 + 0.96 * u, 0.01 + 0.96 * v))
    return seeds


def _newton_equilibrium(sys1: BivirusSystem, z0: np.ndarray, tol: float):
    """Damped Newton on the stacked vector field; returns (root, ok)."""
    f, _ = dynamics._flat_rhs(sys1)
    z = z0.copy()
    res = float(np.max(np.abs(f(z))))
    for _ in range(_NEWTON_MAX_ITER):
        if res < tol:
            return z, True
        if not np.all(np.isfinite(z)) or np.max(np.abs(z)) > 10.0:
            return z, False
        n = sys1.n
        jac = dynamics._jacobian_raw(
            sys1.A.entries, sys1.B.entries, sys1.gamma, z[:n], z[n:]
        )
        try:
            step = np.linalg.solve(jac, -f(z))
        except np.linalg.LinAlgError:
            return z, False
        t = 1.0
        for _ in range(_NEWTON_MAX_HALVINGS):
            trial = z + t * step
            trial_res = float(np.max(np.abs(f(trial))))
            if trial_res < res:
                z, res = trial, trial_res
                break
            t *= 0.5
        else:
            return z, False
    return z, res < tol


def find_coexistence(
    sys: BivirusSystem,
    seeds: list[StateVector] | None = None,
    tol: float = 1e-10,
    counters: dict | None = None,
) -> list[EquilibriumReport]:
    """Interior equilibria found by damped Newton from each seed.

    Root-finding runs on the unit-timescale system (the equilibrium set does
    not depend on the timescale multiplier); verdicts are then taken at the
    system's actual timescale.  Non-convergent seeds are dropped and counted,
    converged roots outside the open interior are discarded, and duplicates
    within 1e-6 are merged, smallest-coordinate representative first, so the
    result does not depend on seed order.
    """
    sys1 = sys if sys.gamma == 1.0 else sys.with_gamma(1.0)
    if seeds is None:
        x_bar = endemic_equilibrium(sys.A).x_bar
        y_bar = endemic_equilibrium(sys.B).x_bar
        seeds = default_seed_grid(x_bar, y_bar)

    n = sys.n
    roots = []
    dropped = 0
    for s in seeds:
        z, ok = _newton_equilibrium(sys1, s.flat(), tol)
        if not ok:
            dropped += 1
            continue
        x, y = z[:n], z[n:]
        interior = (
            np.all(x > _INTERIOR_MARGIN)
            and np.all(y > _INTERIOR_MARGIN)
            and np.all(x + y < 1.0 - _INTERIOR_MARGIN)
        )
        if interior:
            roots.append(z)
        else:
            dropped += 1
    if counters is not None:
        counters.update(seeds=len(seeds), converged=len(seeds) - dropped, dropped=dropped)
    logger.debug("coexistence search: %d seeds, %d dropped", len(seeds), dropped)

    roots.sort(key=lambda z: tuple(z))
    unique: list[np.ndarray] = []
    for z in roots:
        if all(np.max(np.abs(z - u)) >= _DEDUP_TOL for u in unique):
            unique.append(z)

    reports = []
    for z in unique:
        point = StateVector(z[:n], z[n:])
        jac = dynamics.jacobian(sys, point)
        spectrum = np.linalg.eigvals(jac)
        dx, dy = dynamics.rhs(sys, point)
        reports.append(
            EquilibriumReport(
                kind=KIND_COEXISTENCE,
                point=point,
                jac_spectrum=spectrum,
                verdict=abscissa_verdict(float(np.max(spectrum.real))),
                rhs_norm=float(max(np.max(np.abs(dx)), np.max(np.abs(dy)))),
            )
        )
    return reports


def _report_at(sys: BivirusSystem, point: StateVector, kind: str, key_radii=None) -> EquilibriumReport:
    jac = dynamics.jacobian(sys, point)
    spectrum = np.linalg.eigvals(jac)
    dx, dy = dynamics.rhs(sys, point)
    rhs_norm = float(max(np.max(np.abs(dx)), np.max(np.abs(dy))))
    if rhs_norm >= EQUILIBRIUM_RHS_TOL:
        raise ConvergenceError(
            f"claimed {kind} equilibrium has rhs norm {rhs_norm:.3e}",
            residual=rhs_norm,
        )
    return EquilibriumReport(
        kind=kind,
        point=point,
        jac_spectrum=spectrum,
        verdict=abscissa_verdict(float(np.max(spectrum.real))),
        rhs_norm=rhs_norm,
        key_radii=key_radii,
    )


def full_report(
    sys: BivirusSystem, seeds: list[StateVector] | None = None, seed: int = 0
) -> list[EquilibriumReport]:
    """Census of all equilibria: healthy, both survival, found coexistence.

    Verdicts come from the Jacobian spectrum at the system's timescale; the
    survival reports also carry the invasion radius that characterizes the
    same property, so the two routes stay independently checkable.  The
    coexistence census is a seed-grid heuristic and makes no completeness
    claim.
    """
    check = check_survival_stability(sys)
    n = sys.n
    zeros = np.zeros(n)

    reports = [
        _report_at(sys, StateVector(zeros, zeros), KIND_HEALTHY),
        _report_at(
            sys,
            StateVector(check.x_bar, zeros),
            KIND_VIRUS1,
            key_radii={"invasion_radius_virus2": check.invasion_radius_virus2},
        ),
        _report_at(
            sys,
            StateVector(zeros, check.y_bar),
            KIND_VIRUS2,
            key_radii={"invasion_radius_virus1": check.invasion_radius_virus1},
        ),
    ]
    if seeds is None:
        seeds = default_seed_grid(check.x_bar, check.y_bar, seed=seed)
    reports.extend(find_coexistence(sys, seeds))
    return reports
