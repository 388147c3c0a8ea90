"""Loading, normalizing, and saving contact matrices.

Raw networks (commuter counts, traffic volumes, anything nonnegative) come
in as dense CSV or JSON matrices.  The preparation pipeline normalizes row
sums, drops entries below a threshold, renormalizes, and insists the result
is still strongly connected, since everything downstream assumes it.

Serialized floats round-trip exactly: JSON keeps full repr precision, CSV
writes 17 significant digits.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidMatrixError, ReducibleMatrixError
from .linalg import ContactMatrix, is_irreducible, strongly_connected_components

_ROW_SUM_SLACK = 1e-12


@dataclass(frozen=True)
class RawNetwork:
    """Unnormalized nonnegative edge-weight matrix with optional node labels."""

    entries: np.ndarray
    labels: list[str] | None = None

    def __post_init__(self):
        arr = np.asarray(self.entries, dtype=float)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise InvalidMatrixError(f"raw network must be square, got shape {arr.shape}")
        neg = np.argwhere(arr < 0.0)
        if neg.size:
            i, j = neg[0]
            raise InvalidMatrixError(
                f"raw network has negative entry {arr[i, j]!r} at ({i}, {j})"
            )
        object.__setattr__(self, "entries", arr)

    @property
    def n(self) -> int:
        return self.entries.shape[0]


def _infer_format(path, fmt: str | None) -> str:
    if fmt is not None:
        if fmt not in ("csv", "json"):
            raise ValueError(f"unknown format {fmt!r}, expected 'csv' or 'json'")
        return fmt
    suffix = Path(path).suffix.lower()
    if suffix == ".json":
        return "json"
    return "csv"


def _parse_csv(path) -> RawNetwork:
    with open(path, "r", encoding="utf-8") as fh:
        rows = [line.strip() for line in fh if line.strip()]
    if not rows:
        raise InvalidMatrixError(f"{path}: empty file")

    labels = None
    first = [tok.strip() for tok in rows[0].split(",")]
    try:
        [float(tok) for tok in first]
    except ValueError:
        labels = first
        rows = rows[1:]
        if not rows:
            raise InvalidMatrixError(f"{path}: header row but no data rows")

    data = []
    width = None
    for idx, line in enumerate(rows):
        toks = [tok.strip() for tok in line.split(",")]
        if width is None:
            width = len(toks)
        elif len(toks) != width:
            raise InvalidMatrixError(
                f"{path}: row {idx + 1} has {len(toks)} fields, expected {width}"
            )
        try:
            data.append([float(tok) for tok in toks])
        except ValueError as exc:
            raise InvalidMatrixError(f"{path}: row {idx + 1}: {exc}") from exc
    arr = np.asarray(data)
    if arr.shape[0] != arr.shape[1]:
        raise InvalidMatrixError(
            f"{path}: {arr.shape[0]} data rows of width {arr.shape[1]} (not square)"
        )
    if labels is not None and len(labels) != arr.shape[0]:
        raise InvalidMatrixError(
            f"{path}: {len(labels)} header labels for {arr.shape[0]} rows"
        )
    return RawNetwork(arr, labels)


def _parse_json(path) -> RawNetwork:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InvalidMatrixError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(doc, dict) or "rows" not in doc:
        raise InvalidMatrixError(f"{path}: expected an object with a 'rows' array")
    rows = doc["rows"]
    widths = {len(r) for r in rows}
    if len(widths) > 1:
        raise InvalidMatrixError(f"{path}: ragged 'rows' (widths {sorted(widths)})")
    arr = np.asarray(rows, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise InvalidMatrixError(f"{path}: 'rows' is {arr.shape}, not square")
    if "n" in doc and int(doc["n"]) != arr.shape[0]:
        raise InvalidMatrixError(
            f"{path}: declared n={doc['n']} but got {arr.shape[0]} rows"
        )
    labels = doc.get("labels")
    if labels is not None and len(labels) != arr.shape[0]:
        raise InvalidMatrixError(f"{path}: {len(labels)} labels for {arr.shape[0]} rows")
    return RawNetwork(arr, labels)


def load_matrix(path, fmt: str | None = None) -> RawNetwork:
    """Read a dense nonnegative square matrix from CSV or JSON.

    CSV: n comma-separated data rows, optionally preceded by a header row
    of node labels.  JSON: object with "rows" (list of lists) and optional
    "n" and "labels".  Format is inferred from the suffix unless given.
    """
    if _infer_format(path, fmt) == "json":
        return _parse_json(path)
    return _parse_csv(path)


def save_matrix(m, path, fmt: str | None = None) -> None:
    """Write a matrix so that loading it back reproduces the same floats."""
    if isinstance(m, (ContactMatrix, RawNetwork)):
        arr, labels = m.entries, m.labels
    else:
        arr, labels = np.asarray(m, dtype=float), None
    if _infer_format(path, fmt) == "json":
        doc = {"n": arr.shape[0], "rows": [list(map(float, row)) for row in arr]}
        if labels is not None:
            doc["labels"] = list(labels)
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh)
        return
    with open(path, "w", encoding="utf-8") as fh:
        if labels is not None:
            fh.write(",".join(labels) + "\n")
        for row in arr:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def threshold_and_normalize(
    raw: RawNetwork,
    kappa: float,
    row_sum: float = 2.0,
    keep_diagonal: bool = True,
) -> ContactMatrix:
    """Normalize rows, zero entries below the threshold, renormalize.

    Entries strictly below ``kappa`` (after the first normalization) are
    removed; surviving rows are rescaled back to ``row_sum``, so the output
    always has exactly equal row sums.  Raises on any row emptied by the
    threshold and on a result that is no longer strongly connected, listing
    the components.  The whole transform is idempotent for fixed arguments.
    """
    if kappa < 0.0:
        raise ValueError(f"threshold must be nonnegative, got {kappa}")
    if not row_sum > 0.0:
        raise ValueError(f"row_sum must be positive, got {row_sum}")

    m = raw.entries.copy()
    if not keep_diagonal:
        np.fill_diagonal(m, 0.0)

    def normalize(mat: np.ndarray, stage: str) -> np.ndarray:
        sums = mat.sum(axis=1)
        dead = np.nonzero(sums <= 0.0)[0]
        if dead.size:
            raise InvalidMatrixError(f"row {dead[0]} has zero sum {stage}")
        # Skip rescaling rows already on target so reapplying is bit-exact.
        scale = np.where(np.abs(sums - row_sum) <= _ROW_SUM_SLACK * row_sum, 1.0, row_sum / sums)
        return mat * scale[:, None]

    m = normalize(m, "before thresholding")
    m[m < kappa] = 0.0
    m = normalize(m, "after thresholding")

    if not is_irreducible(m):
        comps = strongly_connected_components(m)
        raise ReducibleMatrixError(
            f"thresholded network is not strongly connected "
            f"({len(comps)} components, sizes {[len(c) for c in comps]})",
            components=comps,
        )
    return ContactMatrix(m, labels=raw.labels)
