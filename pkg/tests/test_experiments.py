import numpy as np
import pytest

from bivirus import SweepSpec, basin_sweep, random_initial_conditions, run_case_study
from bivirus.dynamics import UNDECIDED
from bivirus.experiments import (
    _budget_grid,
    scaled_initial_conditions,
    synthetic_mobility,
)
from bivirus.netio import RawNetwork, save_matrix


class TestBudgetGrid:
    @pytest.mark.parametrize("budget", [0.01, 0.1, 0.37])
    @pytest.mark.parametrize("resolution", [2, 50, 150])
    def test_pairs_sum_exactly(self, budget, resolution):
        xs, ys = _budget_grid(budget, resolution)
        assert xs.shape == (resolution,)
        assert np.all(xs + ys == budget)
        assert xs[0] == 0.0
        assert ys[-1] == 0.0
        assert np.all(np.diff(xs) > 0)


class TestBasinSweep:
    def test_two_regions_present(self, two_node_system):
        result = basin_sweep(two_node_system, SweepSpec(resolution=10), threads=1)
        assert result.counts.get("virus1_survival", 0) > 0
        assert result.counts.get("virus2_survival", 0) > 0
        assert sum(result.counts.values()) == 100

    def test_edge_faces_classify_by_surviving_virus(self, two_node_system):
        result = basin_sweep(two_node_system, SweepSpec(resolution=8), threads=1)
        # Last row/column index has x_i(0) = budget, hence y_i(0) = 0.
        assert result.labels[-1, -1] == "virus1_survival"
        assert result.labels[0, 0] == "virus2_survival"

    def test_deterministic_across_worker_counts(self, two_node_system):
        spec = SweepSpec(resolution=6)
        serial = basin_sweep(two_node_system, spec, threads=1)
        parallel = basin_sweep(two_node_system, spec, threads=2)
        assert np.array_equal(serial.labels, parallel.labels)
        assert serial.counts == parallel.counts

    def test_bistable_designed_system_has_both_regions(self, two_node_a):
        # Local stability of both survival states implies both basins carry
        # grid cells, also for a freshly designed competitor layer.
        from bivirus import BivirusSystem, ContactMatrix, construct_b

        designed, record = construct_b(two_node_a)
        sys = BivirusSystem(ContactMatrix(two_node_a), designed)
        result = basin_sweep(sys, SweepSpec(resolution=6), threads=1)
        assert result.counts.get("virus1_survival", 0) > 0
        assert result.counts.get("virus2_survival", 0) > 0

    def test_requires_two_nodes(self):
        rng = np.random.default_rng(5)
        from bivirus import BivirusSystem, ContactMatrix

        m = rng.uniform(0.4, 1.0, size=(3, 3)) + np.eye(3)
        sys3 = BivirusSystem(ContactMatrix(m), ContactMatrix(m * 1.1))
        with pytest.raises(ValueError, match="two-node"):
            basin_sweep(sys3, SweepSpec(resolution=4), threads=1)

    def test_short_horizon_yields_undecided(self, two_node_system):
        result = basin_sweep(
            two_node_system, SweepSpec(resolution=4, t_end=1e-3), threads=1
        )
        assert result.counts.get(UNDECIDED, 0) == 16

    def test_csv_and_summary(self, two_node_system, tmp_path):
        result = basin_sweep(two_node_system, SweepSpec(resolution=5), threads=1)
        csv_path = tmp_path / "sweep.csv"
        result.to_csv(csv_path)
        lines = csv_path.read_text().splitlines()
        assert lines[0] == "x1_0,x2_0,label"
        assert len(lines) == 26
        summary = result.summary_dict()
        assert summary["resolution"] == 5
        assert sum(summary["counts"].values()) == 25

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            SweepSpec(resolution=1)
        with pytest.raises(ValueError):
            SweepSpec(budget=1.5)


class TestInitialConditions:
    def test_deterministic_for_fixed_seed(self):
        a = random_initial_conditions(10, 0.1, seed=42)
        b = random_initial_conditions(10, 0.1, seed=42)
        np.testing.assert_array_equal(a.x, b.x)
        np.testing.assert_array_equal(a.y, b.y)

    def test_different_seeds_differ(self):
        a = random_initial_conditions(10, 0.1, seed=1)
        b = random_initial_conditions(10, 0.1, seed=2)
        assert np.any(a.x != b.x)

    def test_construction_identity(self):
        # x_i + y_i / c == 1 pins the per-node split construction.
        for c in (0.1, 0.5, 1.0):
            s = random_initial_conditions(50, c, seed=3)
            np.testing.assert_allclose(s.x + s.y / c, np.ones(50), rtol=1e-12)
            assert np.all(s.x > 0) and np.all(s.x < 1)
            assert np.all(s.y > 0) and np.all(s.y < c)

    def test_budget_below_one(self):
        s = random_initial_conditions(200, 0.5, seed=4)
        assert np.all(s.x + s.y < 1.0)

    def test_scale_bounds_checked(self):
        with pytest.raises(ValueError):
            random_initial_conditions(5, 0.0, seed=0)
        with pytest.raises(ValueError):
            random_initial_conditions(5, 1.2, seed=0)

    def test_scaled_variant_favoring_second_virus(self):
        s = scaled_initial_conditions(20, 0.1, 1.0, seed=5)
        np.testing.assert_allclose(s.x / 0.1 + s.y, np.ones(20), rtol=1e-12)


class TestSyntheticMobility:
    def test_positive_and_seeded(self):
        a = synthetic_mobility(30, seed=9)
        b = synthetic_mobility(30, seed=9)
        assert np.all(a.entries > 0)
        assert np.array_equal(a.entries, b.entries)

    def test_entries_span_orders_of_magnitude(self):
        raw = synthetic_mobility(107, seed=0)
        assert raw.entries.max() / raw.entries.min() > 1e4


class TestCaseStudies:
    def test_two_node_bundle(self):
        result = run_case_study("two_node")
        assert result.stability.both_stable
        assert result.stability.invasion_radius_virus1 == pytest.approx(0.9276, abs=1e-3)
        assert result.stability.invasion_radius_virus2 == pytest.approx(0.9436, abs=1e-3)
        outcomes = result.outcomes()
        assert outcomes["initial_state_1"] == "virus1_survival"
        assert outcomes["initial_state_2"] == "virus2_survival"
        kinds = [r.kind for r in result.reports]
        assert kinds == ["healthy", "virus1_survival", "virus2_survival", "coexistence"]
        designed, record = result.construction
        assert record.invasion_radius_virus1 < 1 - 1e-7
        assert record.invasion_radius_virus2 < 1 - 1e-7

    def test_user_supplied_pipeline(self, tmp_path):
        rng = np.random.default_rng(13)
        raw = RawNetwork(rng.uniform(0.2, 1.5, size=(4, 4)))
        path = tmp_path / "raw.csv"
        save_matrix(raw, path)
        result = run_case_study(
            "user_supplied", {"path": str(path), "kappa": 0.0, "seed": 3}
        )
        assert result.stability.both_stable
        outcomes = result.outcomes()
        assert outcomes["initial_set_1"] == "virus1_survival"
        assert outcomes["initial_set_2"] == "virus2_survival"

    def test_two_node_with_sweep(self):
        result = run_case_study(
            "two_node", {"sweep_resolution": 5, "design": False, "threads": 1}
        )
        assert result.sweep is not None
        assert sum(result.sweep.counts.values()) == 25

    def test_unknown_name_rejected(self):
        with pytest.raises(ValueError, match="unknown case study"):
            run_case_study("mystery")

    def test_artifact_writer(self, tmp_path):
        result = run_case_study("two_node", {"t_end": 100.0, "design": False})
        written = result.write_artifacts(tmp_path)
        names = {p.split("/")[-1] for p in written}
        assert {"a_matrix.csv", "b_matrix.csv", "equilibria.json",
                "stability.json", "outcomes.json"} <= names
        assert (tmp_path / "trajectory_initial_state_1.csv").exists()

    def test_reducible_user_matrix_fails_before_simulation(self, tmp_path):
        m = np.array([[1.0, 1.0, 0.0], [0.5, 1.0, 0.0], [0.1, 0.1, 1.0]])
        path = tmp_path / "raw.csv"
        save_matrix(m, path)
        from bivirus import ReducibleMatrixError

        with pytest.raises(ReducibleMatrixError):
            run_case_study("user_supplied", {"path": str(path), "kappa": 0.0})
