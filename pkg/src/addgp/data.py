"""Datasets and their CSV representation."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class DataFormatError(ValueError):
    """Malformed dataset file; ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y, dtype=float).ravel()
        if self.X.ndim != 2:
            raise ValueError(f"X must be 2-d, got shape {self.X.shape}")
        if self.X.shape[0] != self.y.size:
            raise ValueError(f"X has {self.X.shape[0]} rows but y has {self.y.size} entries")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @classmethod
    def empty(cls, p: int) -> "Dataset":
        return cls(np.zeros((0, p)), np.zeros(0), {"kind": "empty"})


def fmt(v: float) -> str:
    """Shortest round-trip decimal representation."""
    return repr(float(v))


def write_dataset_csv(data: Dataset, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow([f"x{j + 1}" for j in range(data.p)] + ["y"])
        for row, yi in zip(data.X, data.y):
            w.writerow([fmt(v) for v in row] + [fmt(yi)])


def read_points_csv(path, p: int | None = None, require_y: bool = True):
    """Parse a CSV with header ``x1..xp[,y]``.

    Returns ``(X, y)`` where ``y`` is None when not required and absent.
    """
    text = Path(path).read_text(encoding="utf-8")
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise DataFormatError("empty file", 1)
    header = [h.strip() for h in rows[0]]
    xcols = [h for h in header if h.startswith("x") and h[1:].isdigit()]
    if p is None:
        p = len(xcols)
    expected = [f"x{j + 1}" for j in range(p)]
    missing = [c for c in expected if c not in header]
    if missing:
        raise DataFormatError(f"missing column(s) {', '.join(missing)}", 1)
    if require_y and "y" not in header:
        raise DataFormatError("missing column y", 1)
    xi = [header.index(c) for c in expected]
    yi = header.index("y") if "y" in header else None
    X = np.zeros((len(rows) - 1, p))
    y = np.zeros(len(rows) - 1) if yi is not None else None
    for r, row in enumerate(rows[1:]):
        lineno = r + 2
        if len(row) != len(header):
            raise DataFormatError(f"expected {len(header)} fields, found {len(row)}", lineno)
        try:
            X[r] = [float(row[i]) for i in xi]
            if yi is not None:
                y[r] = float(row[yi])
        except ValueError as exc:
            raise DataFormatError(str(exc), lineno) from None
        if not np.all(np.isfinite(X[r])) or (yi is not None and not np.isfinite(y[r])):
            raise DataFormatError("non-finite value", lineno)
    return X, y


def read_dataset_csv(path) -> Dataset:
    X, y = read_points_csv(path, require_y=True)
    if X.size and (X.min() < 0 or X.max() > 1):
        raise DataFormatError("predictor values must lie in [0, 1]")
    return Dataset(X, y, {"kind": "csv", "path": str(path)})
