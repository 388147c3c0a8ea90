"""Reproducible experiment drivers: basin sweeps and bundled case studies.

The sweep grids two-node initial states under a per-node infection budget,
integrates every cell, and labels it by the equilibrium reached; cells are
independent, so they fan out over worker processes and are reassembled by
index, making the result deterministic for a fixed spec.  Case studies
bundle the full pipeline (ingest, design, analyze, simulate) on either the
built-in two-node system, a seeded synthetic large network, or a
user-supplied matrix.
"""

from __future__ import annotations

import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from types import SimpleNamespace

import numpy as np

from .analysis import EquilibriumReport, StabilityCheck, check_survival_stability, full_report, save_reports
from .construction import ConstructionRecord, construct_b
from .dynamics import (
    UNDECIDED,
    BivirusSystem,
    Classification,
    IntegrationControls,
    StateVector,
    Trajectory,
    classify_limit,
    integrate,
)
from .errors import BivirusError
from .linalg import ContactMatrix
from .netio import RawNetwork, save_matrix, threshold_and_normalize

# Two-node demo layers: a symmetric base and a designed competitor for
# which both survival outcomes are locally stable.
TWO_NODE_A = np.array([[3.2, 2.0], [2.0, 3.2]])
TWO_NODE_B = np.array([[4.2, 0.312], [6.1318, 2.2]])


@dataclass(frozen=True)
class SweepSpec:
    """Grid description for a two-node basin-of-attraction sweep.

    Every cell starts with ``x_i(0) + y_i(0) == budget`` per node; the two
    free coordinates are the virus-1 levels on each node.
    """

    resolution: int = 150
    budget: float = 0.01
    gamma: float = 1.0
    t_end: float = 1e4
    classify_tol: float = 1e-3
    rtol: float = 1e-9
    atol: float = 1e-9

    def __post_init__(self):
        if self.resolution < 2:
            raise ValueError(f"resolution must be >= 2, got {self.resolution}")
        if not 0.0 < self.budget < 1.0:
            raise ValueError(f"budget must lie in (0, 1), got {self.budget}")


@dataclass
class SweepResult:
    """Outcome labels on the grid plus per-label counts and timing."""

    x1_values: np.ndarray
    x2_values: np.ndarray
    labels: np.ndarray  # labels[i1, i2]
    counts: dict[str, int]
    wall_time: float
    spec: SweepSpec

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("x1_0,x2_0,label\n")
            for i1, x1 in enumerate(self.x1_values):
                for i2, x2 in enumerate(self.x2_values):
                    fh.write(f"{x1:.17g},{x2:.17g},{self.labels[i1, i2]}\n")

    def summary_dict(self) -> dict:
        return {
            "resolution": int(self.spec.resolution),
            "budget": self.spec.budget,
            "gamma": self.spec.gamma,
            "t_end": self.spec.t_end,
            "classify_tol": self.spec.classify_tol,
            "counts": dict(self.counts),
            "wall_time_s": self.wall_time,
        }

    def save_summary(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.summary_dict(), fh, indent=2)


def _budget_grid(budget: float, resolution: int) -> tuple[np.ndarray, np.ndarray]:
    """Grid values whose complements sum back to the budget exactly."""
    xs = np.linspace(0.0, budget, resolution)
    ys = budget - xs
    xs = budget - ys  # re-round so xs + ys == budget bitwise
    return xs, ys


def _equilibria_payload(reports: list[EquilibriumReport]) -> list[tuple[str, list, list, str]]:
    return [(r.kind, r.point.x.tolist(), r.point.y.tolist(), r.verdict) for r in reports]


def _classify_cell(sys, x0, y0, targets, t_end, tol, controls) -> str:
    try:
        traj = integrate(sys, StateVector(x0, y0), t_end, controls)
        return classify_limit(traj, targets, tol).label
    except BivirusError:
        return UNDECIDED


def _sweep_chunk(args) -> tuple[int, list[str]]:
    (a, b, gamma, xs, ys, i1, payload, t_end, tol, rtol, atol) = args
    sys = BivirusSystem(ContactMatrix(a), ContactMatrix(b), gamma)
    targets = [
        SimpleNamespace(kind=kind, point=StateVector(np.asarray(x), np.asarray(y)))
        for kind, x, y, _verdict in payload
    ]
    # Cells may stop as soon as they are classifiably close to a *stable*
    # equilibrium; unstable ones (the saddle a boundary cell skirts) do not
    # qualify, so near-boundary passes cannot end a run prematurely.
    stable_points = tuple(
        np.concatenate((np.asarray(x), np.asarray(y)))
        for _kind, x, y, verdict in payload
        if verdict == "stable"
    )
    controls = IntegrationControls(
        rtol=rtol, atol=atol, record=False,
        stop_points=stable_points, stop_tol=0.5 * tol,
    )
    labels = []
    for i2 in range(xs.shape[0]):
        x0 = np.array([xs[i1], xs[i2]])
        y0 = np.array([ys[i1], ys[i2]])
        labels.append(_classify_cell(sys, x0, y0, targets, t_end, tol, controls))
    return i1, labels


def basin_sweep(
    sys: BivirusSystem,
    spec: SweepSpec,
    threads: int | None = None,
    equilibria: list[EquilibriumReport] | None = None,
) -> SweepResult:
    """Label every grid cell by the equilibrium its trajectory reaches.

    Only defined for two-node systems (the grid spans the two virus-1
    coordinates).  The spec's timescale overrides the system's.  Cell
    failures become ``undecided`` labels instead of aborting the sweep.
    """
    if sys.n != 2:
        raise ValueError(f"basin sweep requires a two-node system, got n={sys.n}")
    sys = sys.with_gamma(spec.gamma)
    if equilibria is None:
        equilibria = full_report(sys)
    payload = _equilibria_payload(equilibria)

    xs, ys = _budget_grid(spec.budget, spec.resolution)
    started = time.perf_counter()
    grid = np.empty((spec.resolution, spec.resolution), dtype="<U16")

    tasks = [
        (sys.A.entries, sys.B.entries, sys.gamma, xs, ys, i1, payload,
         spec.t_end, spec.classify_tol, spec.rtol, spec.atol)
        for i1 in range(spec.resolution)
    ]
    workers = threads if threads is not None else min(os.cpu_count() or 1, 8)
    if workers <= 1:
        results = map(_sweep_chunk, tasks)
        for i1, labels in results:
            grid[i1, :] = labels
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for i1, labels in pool.map(_sweep_chunk, tasks, chunksize=4):
                grid[i1, :] = labels

    labels_seen, counts = np.unique(grid, return_counts=True)
    return SweepResult(
        x1_values=xs,
        x2_values=xs.copy(),
        labels=grid,
        counts={str(label): int(cnt) for label, cnt in zip(labels_seen, counts)},
        wall_time=time.perf_counter() - started,
        spec=spec,
    )


def scaled_initial_conditions(
    n: int, x_scale: float, y_scale: float, seed: int | None = None
) -> StateVector:
    """Random per-node split of infection between the viruses.

    Draws p, q uniform on (0, 1) and sets ``x_i = x_scale * p_i / (p_i+q_i)``,
    ``y_i = y_scale * q_i / (p_i+q_i)``; with scales at most 1 and not both 1
    the per-node sum stays below 1.
    """
    rng = np.random.default_rng(seed)
    p = rng.uniform(size=n)
    q = rng.uniform(size=n)
    total = p + q
    return StateVector(x_scale * p / total, y_scale * q / total)


def random_initial_conditions(n: int, c: float, seed: int | None = None) -> StateVector:
    """Uniform split with virus 2 scaled down by ``c``: x_i + y_i < 1 for c < 1."""
    if not 0.0 < c <= 1.0:
        raise ValueError(f"scale c must lie in (0, 1], got {c}")
    return scaled_initial_conditions(n, 1.0, c, seed)


def synthetic_mobility(n: int = 107, seed: int = 0, sigma: float = 2.5) -> RawNetwork:
    """Dense positive flow matrix with entries spanning orders of magnitude."""
    rng = np.random.default_rng(seed)
    return RawNetwork(rng.lognormal(mean=0.0, sigma=sigma, size=(n, n)))


@dataclass
class CaseStudyResult:
    """Everything a scenario produced, ready to serialize."""

    name: str
    system: BivirusSystem
    stability: StabilityCheck
    reports: list[EquilibriumReport]
    trajectories: dict[str, tuple[Trajectory, Classification]] = field(default_factory=dict)
    construction: tuple[ContactMatrix, ConstructionRecord] | None = None
    sweep: SweepResult | None = None
    notes: dict = field(default_factory=dict)

    def outcomes(self) -> dict[str, str]:
        return {name: cls.label for name, (_, cls) in self.trajectories.items()}

    def write_artifacts(self, outdir) -> list[str]:
        """Write matrices, reports, trajectories, and summaries; return paths."""
        out = Path(outdir)
        out.mkdir(parents=True, exist_ok=True)
        written = []

        def record(path):
            written.append(str(path))
            return path

        save_matrix(self.system.A, record(out / "a_matrix.csv"))
        save_matrix(self.system.B, record(out / "b_matrix.csv"))
        save_reports(self.reports, record(out / "equilibria.json"))
        with open(record(out / "stability.json"), "w", encoding="utf-8") as fh:
            json.dump(
                {
                    "invasion_radius_virus1": self.stability.invasion_radius_virus1,
                    "invasion_radius_virus2": self.stability.invasion_radius_virus2,
                    "both_stable": self.stability.both_stable,
                    "verdict_virus1_survival": self.stability.verdict_virus1_survival,
                    "verdict_virus2_survival": self.stability.verdict_virus2_survival,
                },
                fh,
                indent=2,
            )
        outcomes = {}
        for name, (traj, cls) in self.trajectories.items():
            traj.to_csv(record(out / f"trajectory_{name}.csv"))
            outcomes[name] = {"label": cls.label, "distances": list(cls.distances)}
        if outcomes:
            with open(record(out / "outcomes.json"), "w", encoding="utf-8") as fh:
                json.dump(outcomes, fh, indent=2)
        if self.construction is not None:
            designed, rec = self.construction
            save_matrix(designed, record(out / "designed_b.csv"))
            rec.save(record(out / "construction_record.json"))
        if self.sweep is not None:
            self.sweep.to_csv(record(out / "sweep.csv"))
            self.sweep.save_summary(record(out / "sweep_summary.json"))
        if self.notes:
            with open(record(out / "notes.json"), "w", encoding="utf-8") as fh:
                json.dump(self.notes, fh, indent=2)
        return written


def _simulate_pair(system, ic_sets, t_end, tol, targets):
    trajectories = {}
    controls = IntegrationControls()
    for name, state in ic_sets:
        traj = integrate(system, state, t_end, controls)
        trajectories[name] = (traj, classify_limit(traj, targets, tol))
    return trajectories


def _two_node_case(gamma=1.0, t_end=1e4, classify_tol=1e-3, sweep_resolution=None,
                   threads=None, design=True) -> CaseStudyResult:
    system = BivirusSystem(ContactMatrix(TWO_NODE_A), ContactMatrix(TWO_NODE_B), gamma)
    stability = check_survival_stability(system)
    reports = full_report(system)
    ic_sets = [
        ("initial_state_1", StateVector([0.1, 0.1], [0.05, 0.05])),
        ("initial_state_2", StateVector([0.09, 0.09], [0.06, 0.06])),
    ]
    trajectories = _simulate_pair(system, ic_sets, t_end, classify_tol, reports)
    construction = construct_b(ContactMatrix(TWO_NODE_A)) if design else None
    sweep = None
    if sweep_resolution is not None:
        sweep = basin_sweep(
            system, SweepSpec(resolution=sweep_resolution, gamma=gamma, t_end=t_end),
            threads=threads,
        )
    return CaseStudyResult(
        name="two_node",
        system=system,
        stability=stability,
        reports=reports,
        trajectories=trajectories,
        construction=construction,
        sweep=sweep,
    )


def _pipeline_case(name, raw, *, kappa, row_sum, gamma, t_end, classify_tol,
                   seed, ic_scales, construction_cfg) -> CaseStudyResult:
    """Shared ingest -> design -> analyze -> simulate pipeline."""
    layer_a = threshold_and_normalize(raw, kappa=kappa, row_sum=row_sum)
    designed, record = construct_b(layer_a, construction_cfg)
    system = BivirusSystem(layer_a, designed, gamma)
    stability = check_survival_stability(system)
    # Healthy plus the two survival equilibria; no interior census at scale.
    reports = full_report(system, seeds=[])
    ic_sets = []
    for idx, (x_scale, y_scale) in enumerate(ic_scales, start=1):
        state = scaled_initial_conditions(system.n, x_scale, y_scale, seed + idx)
        ic_sets.append((f"initial_set_{idx}", state))
    trajectories = _simulate_pair(system, ic_sets, t_end, classify_tol, reports)
    return CaseStudyResult(
        name=name,
        system=system,
        stability=stability,
        reports=reports,
        trajectories=trajectories,
        construction=(designed, record),
        notes={"kappa": kappa, "row_sum": row_sum, "seed": seed, "ic_scales": list(map(list, ic_scales))},
    )


def run_case_study(name: str, params: dict | None = None) -> CaseStudyResult:
    """Run a named scenario end to end and return the artifact bundle.

    ``two_node``: the bundled demo pair, the two bistability simulations,
    a fresh construction, and optionally a sweep (``sweep_resolution``).
    ``large_synthetic``: a seeded dense random flow network (default 107
    nodes) through the full ingest/design/simulate pipeline with two
    contrasting initial-condition sets, each favoring one virus tenfold.
    ``user_supplied``: the same pipeline on a matrix loaded by the caller
    (pass ``raw`` as a RawNetwork or ``path`` to a file).
    """
    params = dict(params or {})
    if name == "two_node":
        return _two_node_case(**params)
    if name == "large_synthetic":
        n = params.pop("n", 107)
        seed = params.pop("seed", 0)
        sigma = params.pop("sigma", 2.5)
        raw = synthetic_mobility(n, seed=seed, sigma=sigma)
        return _pipeline_case(
            "large_synthetic",
            raw,
            kappa=params.pop("kappa", 5e-5),
            row_sum=params.pop("row_sum", 2.0),
            gamma=params.pop("gamma", 1.0),
            t_end=params.pop("t_end", 1e4),
            # Designed layers sit very close to neutral competition, so the
            # losing virus's tail decays at the (tiny) stability margin; the
            # basins separate by ~10x long before the tail empties out.
            classify_tol=params.pop("classify_tol", 0.08),
            seed=seed,
            ic_scales=params.pop("ic_scales", ((1.0, 0.1), (0.1, 1.0))),
            construction_cfg=params.pop("construction_cfg", None),
        )
    if name == "user_supplied":
        raw = params.pop("raw", None)
        if raw is None:
            from .netio import load_matrix

            raw = load_matrix(params.pop("path"))
        seed = params.pop("seed", 0)
        return _pipeline_case(
            "user_supplied",
            raw,
            kappa=params.pop("kappa", 0.0),
            row_sum=params.pop("row_sum", 2.0),
            gamma=params.pop("gamma", 1.0),
            t_end=params.pop("t_end", 1e4),
            classify_tol=params.pop("classify_tol", 0.08),
            seed=seed,
            ic_scales=params.pop("ic_scales", ((1.0, 0.1), (0.1, 1.0))),
            construction_cfg=params.pop("construction_cfg", None),
        )
    raise ValueError(f"unknown case study {name!r}")
