"""Command-line entry point tying ingestion, design, analysis, and sweeps.

Every run materializes its configuration into a manifest written to the
output directory before any computation starts; ``bivirus rerun`` replays a
manifest and reproduces the numeric artifacts bit for bit on the same
build.  Human-readable summaries go to stdout, machine artifacts only into
the output directory.  Exit codes: 0 success, 1 input or validation error,
2 procedure-level failure (exhausted retuning, reducibility after
thresholding, instability verdicts).
"""

from __future__ import annotations

import hashlib
import json
import os
import sys
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import click
import numpy as np

from . import __version__
from .analysis import check_survival_stability, full_report, save_reports
from .construction import ConstructionConfig, construct_b
from .dynamics import BivirusSystem, IntegrationControls, StateVector, classify_limit, integrate
from .errors import (
    BivirusError,
    ConstructionError,
    InvalidMatrixError,
    ReducibleMatrixError,
    StateSpaceError,
)
from .experiments import SweepSpec, basin_sweep
from .linalg import ContactMatrix
from .netio import load_matrix, save_matrix, threshold_and_normalize

_ENV_OUT = "BIVIRUS_OUT"

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_PROCEDURE = 2


@dataclass
class RunManifest:
    """Resolved configuration of one CLI run, written before computing."""

    subcommand: str
    version: str
    config: dict
    inputs: dict[str, str]
    seed: int | None = None
    artifacts: list[str] = field(default_factory=list)
    created_utc: str = ""

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(asdict(self), fh, indent=2)

    @classmethod
    def load(cls, path) -> "RunManifest":
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        return cls(**doc)


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(65536), b""):
            digest.update(block)
    return digest.hexdigest()


def _outdir(out: str | None, subcommand: str) -> Path:
    base = out or os.environ.get(_ENV_OUT) or f"bivirus_out/{subcommand}"
    path = Path(base)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _start_run(subcommand: str, config: dict, inputs: list[str], outdir: Path,
               artifacts: list[str], seed: int | None = None) -> RunManifest:
    manifest = RunManifest(
        subcommand=subcommand,
        version=__version__,
        config=config,
        inputs={p: _sha256(p) for p in inputs},
        seed=seed,
        artifacts=artifacts,
        created_utc=datetime.now(timezone.utc).isoformat(),
    )
    manifest.save(outdir / "manifest.json")
    return manifest


def _load_contact(path) -> ContactMatrix:
    raw = load_matrix(path)
    return ContactMatrix(raw.entries, labels=raw.labels)


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _parse_vector(text: str, n: int, name: str) -> np.ndarray:
    try:
        vec = np.array([float(tok) for tok in text.split(",")])
    except ValueError as exc:
        raise InvalidMatrixError(f"{name}: {exc}") from exc
    if vec.shape != (n,):
        raise InvalidMatrixError(f"{name} has {vec.shape[0]} entries, expected {n}")
    return vec


@click.group()
@click.version_option(version=__version__, prog_name="bivirus")
def main():
    """Competing SIS epidemics: analyze, simulate, sweep, and design layers."""


# ---------------------------------------------------------------- construct

def _run_construct(config: dict, outdir: Path) -> int:
    layer_a = _load_contact(config["a_matrix"])
    cfg = ConstructionConfig(
        i=config.get("i"),
        z_spec=tuple(config["z_pair"]) if config.get("z_pair") else None,
        epsilon=config.get("epsilon"),
        beta_fraction=config.get("beta_fraction", 0.1),
        alpha_rule=config.get("alpha_rule", 0.5),
        retune_limit=config.get("retune_limit", 10),
        shrink_factor=config.get("shrink_factor", 0.5),
    )
    fmt = config.get("format", "csv")
    try:
        designed, record = construct_b(layer_a, cfg)
    except ConstructionError as exc:
        with open(outdir / "diagnostics.json", "w", encoding="utf-8") as fh:
            json.dump({"error": str(exc), "attempts": exc.attempts}, fh, indent=2)
        click.echo(f"construction failed: {exc}", err=True)
        click.echo(f"diagnostics written to {outdir / 'diagnostics.json'}")
        return EXIT_PROCEDURE

    save_matrix(designed, outdir / f"b_matrix.{fmt}", fmt)
    record.save(outdir / "construction_record.json")
    with open(outdir / "stability.json", "w", encoding="utf-8") as fh:
        json.dump(
            {
                "invasion_radius_virus1": record.invasion_radius_virus1,
                "invasion_radius_virus2": record.invasion_radius_virus2,
                "attempts": len(record.attempts),
            },
            fh,
            indent=2,
        )
    click.echo(
        f"constructed layer in {len(record.attempts)} attempt(s): "
        f"invasion radii ({record.invasion_radius_virus1:.9f}, "
        f"{record.invasion_radius_virus2:.9f}), both below 1"
    )
    click.echo(f"artifacts in {outdir}")
    return EXIT_OK


@main.command("construct")
@click.option("--a-matrix", "a_matrix", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--i", type=int, default=None, help="Row index receiving the direction perturbation.")
@click.option("--z-k", type=int, default=None, help="Positive index of the default direction.")
@click.option("--z-j", type=int, default=None, help="Negative index of the default direction.")
@click.option("--epsilon", type=float, default=None, help="Row perturbation size (default: half its bound).")
@click.option("--beta-fraction", type=float, default=0.1, show_default=True)
@click.option("--alpha-rule", type=float, default=0.5, show_default=True)
@click.option("--retune-limit", type=int, default=10, show_default=True)
@click.option("--shrink-factor", type=float, default=0.5, show_default=True)
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="csv", show_default=True)
@click.option("--out", type=click.Path(file_okay=False), default=None, help=f"Output directory (default ${_ENV_OUT}).")
def cmd_construct(a_matrix, i, z_k, z_j, epsilon, beta_fraction, alpha_rule,
                  retune_limit, shrink_factor, fmt, out):
    """Design a competitor layer with both survival outcomes stable."""
    if (z_k is None) != (z_j is None):
        _fail(EXIT_INPUT, "--z-k and --z-j must be given together")
    outdir = _outdir(out, "construct")
    config = {
        "a_matrix": a_matrix,
        "i": i,
        "z_pair": [z_k, z_j] if z_k is not None else None,
        "epsilon": epsilon,
        "beta_fraction": beta_fraction,
        "alpha_rule": alpha_rule,
        "retune_limit": retune_limit,
        "shrink_factor": shrink_factor,
        "format": fmt,
    }
    _start_run("construct", config, [a_matrix], outdir,
               [f"b_matrix.{fmt}", "construction_record.json", "stability.json"])
    try:
        code = _run_construct(config, outdir)
    except (BivirusError, ValueError) as exc:
        _fail(EXIT_INPUT, str(exc))
    sys.exit(code)


# ------------------------------------------------------------------ analyze

def _run_analyze(config: dict, outdir: Path) -> int:
    layer_a = _load_contact(config["a"])
    layer_b = _load_contact(config["b"])
    system = BivirusSystem(layer_a, layer_b, config.get("gamma", 1.0))
    reports = full_report(system, seed=config.get("seed", 0))
    check = check_survival_stability(system)

    save_reports(reports, outdir / "report.json")
    with open(outdir / "stability.json", "w", encoding="utf-8") as fh:
        json.dump(
            {
                "invasion_radius_virus1": check.invasion_radius_virus1,
                "invasion_radius_virus2": check.invasion_radius_virus2,
                "both_stable": check.both_stable,
                "verdict_virus1_survival": check.verdict_virus1_survival,
                "verdict_virus2_survival": check.verdict_virus2_survival,
            },
            fh,
            indent=2,
        )

    click.echo(
        f"invasion radius of virus 1 at the virus-2 equilibrium: "
        f"{check.invasion_radius_virus1:.6f}"
    )
    click.echo(
        f"invasion radius of virus 2 at the virus-1 equilibrium: "
        f"{check.invasion_radius_virus2:.6f}"
    )
    for rep in reports:
        click.echo(f"  {rep.kind:18s} verdict={rep.verdict}")
    click.echo(f"artifacts in {outdir}")
    return EXIT_OK if check.both_stable else EXIT_PROCEDURE


@main.command("analyze")
@click.option("--a", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--b", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--gamma", type=float, default=1.0, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True, help="Seed for interior equilibrium seeds.")
@click.option("--out", type=click.Path(file_okay=False), default=None)
def cmd_analyze(a, b, gamma, seed, out):
    """Equilibrium census and stability verdicts; exit 0 iff both survival states are stable."""
    outdir = _outdir(out, "analyze")
    config = {"a": a, "b": b, "gamma": gamma, "seed": seed}
    _start_run("analyze", config, [a, b], outdir, ["report.json", "stability.json"], seed=seed)
    try:
        code = _run_analyze(config, outdir)
    except (BivirusError, ValueError) as exc:
        _fail(EXIT_INPUT, str(exc))
    sys.exit(code)


# ----------------------------------------------------------------- simulate

def _run_simulate(config: dict, outdir: Path) -> int:
    layer_a = _load_contact(config["a"])
    layer_b = _load_contact(config["b"])
    system = BivirusSystem(layer_a, layer_b, config.get("gamma", 1.0))
    x0 = _parse_vector(config["x0"], system.n, "--x0")
    y0 = _parse_vector(config["y0"], system.n, "--y0")
    state = StateVector(x0, y0)
    if not state.in_delta(0.0):
        raise StateSpaceError(
            f"initial state violates the region by {state.delta_violation():.3e} "
            "(needs x >= 0, y >= 0, x + y <= 1)"
        )

    reports = full_report(system, seed=config.get("seed", 0))
    traj = integrate(system, state, config.get("t_end", 1e4), IntegrationControls())
    outcome = classify_limit(traj, reports, config.get("tol", 1e-3))

    traj.to_csv(outdir / "trajectory.csv")
    with open(outdir / "outcome.json", "w", encoding="utf-8") as fh:
        json.dump(
            {
                "label": outcome.label,
                "distances": [[k, d] for k, d in outcome.distances],
                "t_final": float(traj.times[-1]),
                "converged": traj.diagnostics.converged,
            },
            fh,
            indent=2,
        )
    if config.get("plot", True):
        from . import plots

        plots.plot_trajectory(traj, outdir / "trajectory.png", title=f"outcome: {outcome.label}")
        if system.n == 2:
            plots.plot_phase_portrait([("run", traj)], outdir / "phase.png", equilibria=reports)
    click.echo(f"outcome: {outcome.label} (t_final={traj.times[-1]:.6g})")
    click.echo(f"artifacts in {outdir}")
    return EXIT_OK


@main.command("simulate")
@click.option("--a", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--b", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--x0", required=True, help="Comma-separated initial virus-1 fractions.")
@click.option("--y0", required=True, help="Comma-separated initial virus-2 fractions.")
@click.option("--gamma", type=float, default=1.0, show_default=True)
@click.option("--t-end", type=float, default=1e4, show_default=True)
@click.option("--tol", type=float, default=1e-3, show_default=True, help="Classification distance.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--plot/--no-plot", default=True, show_default=True)
@click.option("--out", type=click.Path(file_okay=False), default=None)
def cmd_simulate(a, b, x0, y0, gamma, t_end, tol, seed, plot, out):
    """Integrate one trajectory and classify which virus survives."""
    outdir = _outdir(out, "simulate")
    config = {"a": a, "b": b, "x0": x0, "y0": y0, "gamma": gamma,
              "t_end": t_end, "tol": tol, "seed": seed, "plot": plot}
    _start_run("simulate", config, [a, b], outdir, ["trajectory.csv", "outcome.json"], seed=seed)
    try:
        code = _run_simulate(config, outdir)
    except (BivirusError, ValueError) as exc:
        _fail(EXIT_INPUT, str(exc))
    sys.exit(code)


# -------------------------------------------------------------------- sweep

def _run_sweep(config: dict, outdir: Path) -> int:
    layer_a = _load_contact(config["a"])
    layer_b = _load_contact(config["b"])
    system = BivirusSystem(layer_a, layer_b)
    spec = SweepSpec(
        resolution=config.get("resolution", 150),
        budget=config.get("budget", 0.01),
        gamma=config.get("gamma", 1.0),
        t_end=config.get("t_end", 1e4),
        classify_tol=config.get("tol", 1e-3),
    )
    result = basin_sweep(system, spec, threads=config.get("threads"))
    result.to_csv(outdir / "sweep.csv")
    result.save_summary(outdir / "sweep_summary.json")
    if config.get("plot", True):
        from . import plots

        plots.plot_sweep(result, outdir / "sweep.png",
                         title=f"gamma={spec.gamma}, budget={spec.budget}")
    click.echo("label counts: " + ", ".join(f"{k}={v}" for k, v in sorted(result.counts.items())))
    click.echo(f"wall time: {result.wall_time:.1f}s; artifacts in {outdir}")
    return EXIT_OK


@main.command("sweep")
@click.option("--a", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--b", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--resolution", type=int, default=150, show_default=True)
@click.option("--budget", type=float, default=0.01, show_default=True)
@click.option("--gamma", type=float, default=1.0, show_default=True)
@click.option("--t-end", type=float, default=1e4, show_default=True)
@click.option("--tol", type=float, default=1e-3, show_default=True)
@click.option("--threads", type=int, default=None, help="Worker process cap.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--plot/--no-plot", default=True, show_default=True)
@click.option("--out", type=click.Path(file_okay=False), default=None)
def cmd_sweep(a, b, resolution, budget, gamma, t_end, tol, threads, seed, plot, out):
    """Basin-of-attraction sweep over a two-node initial-state grid."""
    outdir = _outdir(out, "sweep")
    config = {"a": a, "b": b, "resolution": resolution, "budget": budget,
              "gamma": gamma, "t_end": t_end, "tol": tol, "threads": threads,
              "seed": seed, "plot": plot}
    _start_run("sweep", config, [a, b], outdir, ["sweep.csv", "sweep_summary.json"], seed=seed)
    try:
        code = _run_sweep(config, outdir)
    except (BivirusError, ValueError) as exc:
        _fail(EXIT_INPUT, str(exc))
    sys.exit(code)


# ------------------------------------------------------------------- ingest

def _run_ingest(config: dict, outdir: Path) -> int:
    raw = load_matrix(config["raw"])
    fmt = config.get("format", "csv")
    try:
        matrix = threshold_and_normalize(
            raw,
            kappa=config.get("kappa", 0.0),
            row_sum=config.get("row_sum", 2.0),
            keep_diagonal=config.get("keep_diagonal", True),
        )
    except ReducibleMatrixError as exc:
        with open(outdir / "ingest_report.json", "w", encoding="utf-8") as fh:
            json.dump({"error": str(exc), "components": exc.components}, fh, indent=2)
        click.echo(f"ingestion failed: {exc}", err=True)
        for comp in exc.components:
            click.echo(f"  component: {comp}", err=True)
        return EXIT_PROCEDURE

    # Count entries removed by the threshold against the normalized raw.
    sums = raw.entries.sum(axis=1)
    normalized_raw = raw.entries * (config.get("row_sum", 2.0) / sums)[:, None]
    zeroed = int(np.count_nonzero((normalized_raw > 0.0) & (matrix.entries == 0.0)))

    save_matrix(matrix, outdir / f"normalized.{fmt}", fmt)
    with open(outdir / "ingest_report.json", "w", encoding="utf-8") as fh:
        json.dump(
            {
                "n": matrix.n,
                "kappa": config.get("kappa", 0.0),
                "row_sum": config.get("row_sum", 2.0),
                "entries_zeroed": zeroed,
                "irreducible": True,
                "positive": bool(np.all(matrix.entries > 0.0)),
                "spectral_radius": matrix.spectral_radius,
            },
            fh,
            indent=2,
        )
    click.echo(
        f"normalized {matrix.n}x{matrix.n} matrix: {zeroed} entries zeroed, "
        "strongly connected"
    )
    click.echo(f"artifacts in {outdir}")
    return EXIT_OK


@main.command("ingest")
@click.option("--raw", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--kappa", type=float, default=0.0, show_default=True, help="Entry threshold after normalization.")
@click.option("--row-sum", type=float, default=2.0, show_default=True)
@click.option("--keep-diagonal/--drop-diagonal", default=True, show_default=True)
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="csv", show_default=True)
@click.option("--out", type=click.Path(file_okay=False), default=None)
def cmd_ingest(raw, kappa, row_sum, keep_diagonal, fmt, out):
    """Normalize and threshold a raw network into a contact matrix."""
    outdir = _outdir(out, "ingest")
    config = {"raw": raw, "kappa": kappa, "row_sum": row_sum,
              "keep_diagonal": keep_diagonal, "format": fmt}
    _start_run("ingest", config, [raw], outdir, [f"normalized.{fmt}", "ingest_report.json"])
    try:
        code = _run_ingest(config, outdir)
    except (BivirusError, ValueError) as exc:
        _fail(EXIT_INPUT, str(exc))
    sys.exit(code)


# -------------------------------------------------------------------- rerun

_RUNNERS = {
    "construct": _run_construct,
    "analyze": _run_analyze,
    "simulate": _run_simulate,
    "sweep": _run_sweep,
    "ingest": _run_ingest,
}


@main.command("rerun")
@click.option("--manifest", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", type=click.Path(file_okay=False), default=None)
def cmd_rerun(manifest, out):
    """Replay a recorded run; reproduces its numeric artifacts bit for bit."""
    loaded = RunManifest.load(manifest)
    if loaded.subcommand not in _RUNNERS:
        _fail(EXIT_INPUT, f"manifest subcommand {loaded.subcommand!r} is not replayable")
    outdir = _outdir(out, f"rerun-{loaded.subcommand}")
    for path, digest in loaded.inputs.items():
        if not Path(path).exists():
            _fail(EXIT_INPUT, f"recorded input {path} no longer exists")
        if _sha256(path) != digest:
            _fail(EXIT_INPUT, f"recorded input {path} changed since the original run")
    _start_run(loaded.subcommand, loaded.config, list(loaded.inputs), outdir,
               loaded.artifacts, seed=loaded.seed)
    try:
        code = _RUNNERS[loaded.subcommand](loaded.config, outdir)
    except (BivirusError, ValueError) as exc:
        _fail(EXIT_INPUT, str(exc))
    sys.exit(code)


if __name__ == "__main__":
    main()
