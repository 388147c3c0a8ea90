import json

import numpy as np
import pytest

from bivirus import (
    ContactMatrix,
    InvalidMatrixError,
    ReducibleMatrixError,
    endemic_equilibrium,
    load_matrix,
    save_matrix,
    threshold_and_normalize,
)
from bivirus.netio import RawNetwork


class TestLoadMatrix:
    def test_csv_two_node(self, tmp_path):
        path = tmp_path / "a.csv"
        path.write_text("3.2,2\n2,3.2\n")
        raw = load_matrix(path)
        np.testing.assert_array_equal(raw.entries, [[3.2, 2.0], [2.0, 3.2]])
        assert raw.labels is None

    def test_csv_with_header_labels(self, tmp_path):
        path = tmp_path / "a.csv"
        path.write_text("north,south\n3.2,2\n2,3.2\n")
        raw = load_matrix(path)
        assert raw.labels == ["north", "south"]

    def test_ragged_csv_names_row(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("1,2\n3\n")
        with pytest.raises(InvalidMatrixError, match="row 2"):
            load_matrix(path)

    def test_nonsquare_csv(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("1,2,3\n4,5,6\n")
        with pytest.raises(InvalidMatrixError, match="not square"):
            load_matrix(path)

    def test_negative_entry_rejected_with_location(self, tmp_path):
        path = tmp_path / "neg.csv"
        path.write_text("1,2\n-3,4\n")
        with pytest.raises(InvalidMatrixError, match=r"\(1, 0\)"):
            load_matrix(path)

    def test_json_round(self, tmp_path):
        path = tmp_path / "m.json"
        path.write_text(json.dumps({"n": 2, "rows": [[1.5, 0.25], [2.0, 0.0]]}))
        raw = load_matrix(path)
        np.testing.assert_array_equal(raw.entries, [[1.5, 0.25], [2.0, 0.0]])

    def test_json_n_mismatch(self, tmp_path):
        path = tmp_path / "m.json"
        path.write_text(json.dumps({"n": 3, "rows": [[1.0, 0.0], [0.0, 1.0]]}))
        with pytest.raises(InvalidMatrixError, match="n=3"):
            load_matrix(path)

    def test_json_missing_rows(self, tmp_path):
        path = tmp_path / "m.json"
        path.write_text(json.dumps({"n": 2}))
        with pytest.raises(InvalidMatrixError, match="rows"):
            load_matrix(path)

    def test_format_inferred_from_suffix(self, tmp_path):
        path = tmp_path / "m.json"
        path.write_text(json.dumps({"rows": [[1.0]]}))
        assert load_matrix(path).n == 1


class TestSaveMatrix:
    def test_json_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(61)
        m = ContactMatrix(rng.uniform(size=(5, 5)))
        path = tmp_path / "m.json"
        save_matrix(m, path)
        loaded = load_matrix(path)
        assert np.array_equal(loaded.entries, m.entries)

    def test_csv_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(67)
        m = rng.uniform(size=(4, 4))
        path = tmp_path / "m.csv"
        save_matrix(m, path)
        # 17 significant digits reproduce doubles exactly.
        assert np.array_equal(load_matrix(path).entries, m)

    def test_labels_preserved(self, tmp_path):
        m = ContactMatrix([[1.0, 2.0], [3.0, 4.0]], labels=["a", "b"])
        for name in ("m.csv", "m.json"):
            path = tmp_path / name
            save_matrix(m, path)
            assert load_matrix(path).labels == ["a", "b"]

    def test_unwritable_path_raises(self, tmp_path):
        with pytest.raises(OSError):
            save_matrix(np.eye(2), tmp_path / "missing_dir" / "m.csv")


class TestThresholdAndNormalize:
    def test_pure_normalization_gives_flat_equilibrium(self):
        rng = np.random.default_rng(71)
        raw = RawNetwork(rng.uniform(0.5, 4.0, size=(9, 9)))
        m = threshold_and_normalize(raw, kappa=0.0, row_sum=2.0)
        np.testing.assert_allclose(m.entries.sum(axis=1), 2.0, atol=1e-12)
        eq = endemic_equilibrium(m)
        np.testing.assert_allclose(eq.x_bar, 0.5 * np.ones(9), atol=1e-9)

    def test_threshold_sparsifies_but_keeps_connectivity(self):
        rng = np.random.default_rng(73)
        raw = RawNetwork(rng.lognormal(sigma=2.5, size=(107, 107)))
        m = threshold_and_normalize(raw, kappa=5e-5, row_sum=2.0)
        assert m.irreducible
        assert np.any(m.entries == 0.0)  # strongly connected but not complete
        np.testing.assert_allclose(m.entries.sum(axis=1), 2.0, atol=1e-12)

    def test_oversized_threshold_reports_components(self):
        raw = RawNetwork(np.array([[1.0, 1e-9], [1e-9, 1.0]]))
        with pytest.raises(ReducibleMatrixError) as info:
            threshold_and_normalize(raw, kappa=0.5, row_sum=2.0)
        assert info.value.components == [[0], [1]]

    def test_zero_row_detected(self):
        raw = RawNetwork(np.array([[0.0, 0.0], [1.0, 1.0]]))
        with pytest.raises(InvalidMatrixError, match="row 0"):
            threshold_and_normalize(raw, kappa=0.0)

    def test_idempotent(self):
        rng = np.random.default_rng(79)
        raw = RawNetwork(rng.lognormal(sigma=2.0, size=(30, 30)))
        once = threshold_and_normalize(raw, kappa=1e-3, row_sum=2.0)
        twice = threshold_and_normalize(RawNetwork(once.entries), kappa=1e-3, row_sum=2.0)
        assert np.array_equal(once.entries, twice.entries)

    def test_drop_diagonal_flag(self):
        raw = RawNetwork(np.array([[5.0, 1.0], [1.0, 5.0]]))
        kept = threshold_and_normalize(raw, kappa=0.0)
        dropped = threshold_and_normalize(raw, kappa=0.0, keep_diagonal=False)
        assert kept.entries[0, 0] > 0.0
        assert np.all(np.diag(dropped.entries) == 0.0)
        np.testing.assert_allclose(dropped.entries.sum(axis=1), 2.0, atol=1e-12)

    def test_labels_carried_through(self):
        raw = RawNetwork(np.array([[1.0, 2.0], [2.0, 1.0]]), labels=["u", "v"])
        assert threshold_and_normalize(raw, kappa=0.0).labels == ["u", "v"]

    def test_negative_kappa_rejected(self):
        raw = RawNetwork(np.ones((2, 2)))
        with pytest.raises(ValueError):
            threshold_and_normalize(raw, kappa=-1.0)


class TestRawNetwork:
    def test_rejects_negative(self):
        with pytest.raises(InvalidMatrixError):
            RawNetwork(np.array([[1.0, -1.0], [0.0, 1.0]]))

    def test_rejects_nonsquare(self):
        with pytest.raises(InvalidMatrixError):
            RawNetwork(np.ones((2, 3)))
