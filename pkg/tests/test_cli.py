import json

import numpy as np
import pytest
from click.testing import CliRunner

from bivirus.cli import main
from bivirus.netio import save_matrix

from conftest import TWO_NODE_A, TWO_NODE_B


@pytest.fixture()
def runner():
    return CliRunner()


@pytest.fixture()
def matrix_files(tmp_path):
    a_path = tmp_path / "a.csv"
    b_path = tmp_path / "b.csv"
    save_matrix(TWO_NODE_A, a_path)
    save_matrix(TWO_NODE_B, b_path)
    return str(a_path), str(b_path)


def write_matrix(tmp_path, name, arr):
    path = tmp_path / name
    save_matrix(np.asarray(arr, dtype=float), path)
    return str(path)


class TestConstructCommand:
    def test_success_writes_artifacts(self, runner, matrix_files, tmp_path):
        a_path, _ = matrix_files
        out = tmp_path / "out"
        result = runner.invoke(main, ["construct", "--a-matrix", a_path, "--out", str(out)])
        assert result.exit_code == 0, result.output
        stability = json.loads((out / "stability.json").read_text())
        assert stability["invasion_radius_virus1"] < 1.0
        assert stability["invasion_radius_virus2"] < 1.0
        assert (out / "b_matrix.csv").exists()
        assert (out / "construction_record.json").exists()
        assert (out / "manifest.json").exists()

    def test_reducible_input_is_input_error(self, runner, tmp_path):
        path = write_matrix(tmp_path, "reducible.csv", [[2.0, 1.0], [0.0, 2.0]])
        result = runner.invoke(main, ["construct", "--a-matrix", path, "--out", str(tmp_path / "o")])
        assert result.exit_code == 1
        assert "reducible" in result.stderr

    def test_subthreshold_input_reports_radius(self, runner, tmp_path):
        path = write_matrix(tmp_path, "weak.csv", [[0.5, 0.2], [0.2, 0.5]])
        result = runner.invoke(main, ["construct", "--a-matrix", path, "--out", str(tmp_path / "o")])
        assert result.exit_code == 1
        assert "0.7" in result.stderr

    def test_retune_exhaustion_exits_2_with_diagnostics(self, runner, matrix_files, tmp_path):
        a_path, _ = matrix_files
        out = tmp_path / "out"
        result = runner.invoke(
            main,
            ["construct", "--a-matrix", a_path, "--out", str(out),
             "--beta-fraction", "0.999", "--retune-limit", "1"],
        )
        assert result.exit_code == 2
        # Manifest was written before the failure, diagnostics after it.
        assert (out / "manifest.json").exists()
        diag = json.loads((out / "diagnostics.json").read_text())
        assert diag["attempts"]


class TestAnalyzeCommand:
    def test_two_node_exit_zero(self, runner, matrix_files, tmp_path):
        a_path, b_path = matrix_files
        out = tmp_path / "out"
        result = runner.invoke(main, ["analyze", "--a", a_path, "--b", b_path, "--out", str(out)])
        assert result.exit_code == 0, result.output
        assert "0.927" in result.output
        assert "0.943" in result.output
        report = json.loads((out / "report.json").read_text())
        assert [r["kind"] for r in report] == [
            "healthy", "virus1_survival", "virus2_survival", "coexistence",
        ]

    def test_identical_layers_marginal_nonzero_exit(self, runner, matrix_files, tmp_path):
        a_path, _ = matrix_files
        result = runner.invoke(
            main, ["analyze", "--a", a_path, "--b", a_path, "--out", str(tmp_path / "o")]
        )
        assert result.exit_code == 2
        assert "marginal" in result.output

    def test_gamma_invariant_radii(self, runner, matrix_files, tmp_path):
        a_path, b_path = matrix_files
        radii = []
        for idx, gamma in enumerate(("1.0", "1.2")):
            out = tmp_path / f"out{idx}"
            result = runner.invoke(
                main,
                ["analyze", "--a", a_path, "--b", b_path, "--gamma", gamma, "--out", str(out)],
            )
            assert result.exit_code == 0
            doc = json.loads((out / "stability.json").read_text())
            radii.append((doc["invasion_radius_virus1"], doc["invasion_radius_virus2"]))
        assert radii[0] == radii[1]

    def test_load_failure_is_input_error(self, runner, tmp_path):
        path = write_matrix(tmp_path, "bad.csv", [[1.0, 2.0], [3.0, 4.0]])
        result = runner.invoke(
            main, ["analyze", "--a", path, "--b", str(tmp_path / "nope.csv"), "--out", str(tmp_path / "o")]
        )
        assert result.exit_code == 2  # click path validation
        assert "nope.csv" in result.stderr


class TestSimulateCommand:
    def test_winner_classified_and_plotted(self, runner, matrix_files, tmp_path):
        a_path, b_path = matrix_files
        out = tmp_path / "out"
        result = runner.invoke(
            main,
            ["simulate", "--a", a_path, "--b", b_path,
             "--x0", "0.1,0.1", "--y0", "0.05,0.05", "--t-end", "400", "--out", str(out)],
        )
        assert result.exit_code == 0, result.output
        outcome = json.loads((out / "outcome.json").read_text())
        assert outcome["label"] == "virus1_survival"
        header = (out / "trajectory.csv").read_text().splitlines()[0]
        assert header == "t,x_1,x_2,y_1,y_2"
        assert (out / "trajectory.png").exists()
        assert (out / "phase.png").exists()

    def test_second_initial_state_other_winner(self, runner, matrix_files, tmp_path):
        a_path, b_path = matrix_files
        out = tmp_path / "out"
        result = runner.invoke(
            main,
            ["simulate", "--a", a_path, "--b", b_path,
             "--x0", "0.09,0.09", "--y0", "0.06,0.06", "--t-end", "400",
             "--no-plot", "--out", str(out)],
        )
        assert result.exit_code == 0
        assert json.loads((out / "outcome.json").read_text())["label"] == "virus2_survival"
        assert not (out / "trajectory.png").exists()

    def test_state_outside_region_rejected(self, runner, matrix_files, tmp_path):
        a_path, b_path = matrix_files
        result = runner.invoke(
            main,
            ["simulate", "--a", a_path, "--b", b_path,
             "--x0", "0.8,0.1", "--y0", "0.3,0.1", "--out", str(tmp_path / "o")],
        )
        assert result.exit_code == 1
        assert "x + y" in result.stderr

    def test_outcome_recorded_per_timescale(self, runner, matrix_files, tmp_path):
        # A virus-2-heavy start; the label is recorded for each timescale.
        a_path, b_path = matrix_files
        labels = {}
        for gamma in ("1.0", "1.2"):
            out = tmp_path / f"g{gamma}"
            result = runner.invoke(
                main,
                ["simulate", "--a", a_path, "--b", b_path,
                 "--x0", "0.05,0.05", "--y0", "0.2,0.2", "--gamma", gamma,
                 "--t-end", "400", "--no-plot", "--out", str(out)],
            )
            assert result.exit_code == 0
            labels[gamma] = json.loads((out / "outcome.json").read_text())["label"]
        assert set(labels.values()) <= {"virus1_survival", "virus2_survival"}

    def test_inputs_never_mutated(self, runner, matrix_files, tmp_path):
        a_path, b_path = matrix_files
        before = (open(a_path, "rb").read(), open(b_path, "rb").read())
        runner.invoke(
            main, ["analyze", "--a", a_path, "--b", b_path, "--out", str(tmp_path / "o")]
        )
        assert (open(a_path, "rb").read(), open(b_path, "rb").read()) == before


class TestSweepCommand:
    def test_small_grid(self, runner, matrix_files, tmp_path):
        a_path, b_path = matrix_files
        out = tmp_path / "out"
        result = runner.invoke(
            main,
            ["sweep", "--a", a_path, "--b", b_path, "--resolution", "8",
             "--threads", "2", "--out", str(out)],
        )
        assert result.exit_code == 0, result.output
        summary = json.loads((out / "sweep_summary.json").read_text())
        assert summary["counts"].get("virus1_survival", 0) > 0
        assert summary["counts"].get("virus2_survival", 0) > 0
        assert sum(summary["counts"].values()) == 64
        assert (out / "sweep.csv").exists()
        assert (out / "sweep.png").exists()

    def test_three_node_rejected(self, runner, tmp_path):
        rng = np.random.default_rng(3)
        m = rng.uniform(0.4, 1.0, size=(3, 3)) + np.eye(3)
        a_path = write_matrix(tmp_path, "a3.csv", m)
        b_path = write_matrix(tmp_path, "b3.csv", m * 1.1)
        result = runner.invoke(
            main, ["sweep", "--a", a_path, "--b", b_path, "--out", str(tmp_path / "o")]
        )
        assert result.exit_code == 1
        assert "two-node" in result.stderr


class TestIngestCommand:
    def test_passthrough_normalization(self, runner, tmp_path):
        rng = np.random.default_rng(83)
        raw_path = write_matrix(tmp_path, "raw.csv", rng.uniform(0.5, 2.0, size=(6, 6)))
        out = tmp_path / "out"
        result = runner.invoke(
            main, ["ingest", "--raw", raw_path, "--kappa", "0", "--out", str(out)]
        )
        assert result.exit_code == 0, result.output
        from bivirus import load_matrix

        normalized = load_matrix(out / "normalized.csv")
        np.testing.assert_allclose(normalized.entries.sum(axis=1), 2.0, atol=1e-12)
        report = json.loads((out / "ingest_report.json").read_text())
        assert report["entries_zeroed"] == 0
        assert report["irreducible"] is True

    def test_threshold_reported(self, runner, tmp_path):
        rng = np.random.default_rng(89)
        raw_path = write_matrix(tmp_path, "raw.csv", rng.lognormal(sigma=2.5, size=(40, 40)))
        out = tmp_path / "out"
        result = runner.invoke(
            main, ["ingest", "--raw", raw_path, "--kappa", "5e-4", "--out", str(out)]
        )
        assert result.exit_code == 0
        report = json.loads((out / "ingest_report.json").read_text())
        assert report["entries_zeroed"] > 0
        assert report["positive"] is False

    def test_overthreshold_exits_2_with_components(self, runner, tmp_path):
        raw_path = write_matrix(tmp_path, "raw.csv", [[1.0, 1e-8], [1e-8, 1.0]])
        out = tmp_path / "out"
        result = runner.invoke(
            main, ["ingest", "--raw", raw_path, "--kappa", "0.5", "--out", str(out)]
        )
        assert result.exit_code == 2
        assert "component" in result.stderr
        report = json.loads((out / "ingest_report.json").read_text())
        assert report["components"] == [[0], [1]]


class TestManifestRerun:
    def test_rerun_reproduces_numeric_artifacts(self, runner, matrix_files, tmp_path):
        a_path, b_path = matrix_files
        first = tmp_path / "first"
        result = runner.invoke(
            main,
            ["sweep", "--a", a_path, "--b", b_path, "--resolution", "5",
             "--threads", "1", "--no-plot", "--out", str(first)],
        )
        assert result.exit_code == 0
        second = tmp_path / "second"
        result = runner.invoke(
            main, ["rerun", "--manifest", str(first / "manifest.json"), "--out", str(second)]
        )
        assert result.exit_code == 0, result.output
        assert (first / "sweep.csv").read_bytes() == (second / "sweep.csv").read_bytes()

    def test_rerun_detects_changed_input(self, runner, matrix_files, tmp_path):
        a_path, b_path = matrix_files
        first = tmp_path / "first"
        result = runner.invoke(
            main,
            ["analyze", "--a", a_path, "--b", b_path, "--out", str(first)],
        )
        assert result.exit_code == 0
        with open(a_path, "a") as fh:
            fh.write("\n")
        result = runner.invoke(
            main, ["rerun", "--manifest", str(first / "manifest.json"), "--out", str(tmp_path / "x")]
        )
        assert result.exit_code == 1
        assert "changed" in result.stderr

    def test_manifest_contains_resolved_config(self, runner, matrix_files, tmp_path):
        a_path, b_path = matrix_files
        out = tmp_path / "out"
        runner.invoke(
            main,
            ["simulate", "--a", a_path, "--b", b_path, "--x0", "0.1,0.1",
             "--y0", "0.05,0.05", "--t-end", "50", "--no-plot", "--out", str(out)],
        )
        doc = json.loads((out / "manifest.json").read_text())
        assert doc["subcommand"] == "simulate"
        assert doc["config"]["t_end"] == 50.0
        assert doc["config"]["gamma"] == 1.0
        assert len(doc["inputs"]) == 2
        for digest in doc["inputs"].values():
            assert len(digest) == 64
