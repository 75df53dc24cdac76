"""Datasets, CSV ingestion and the augmented (quadratic) feature basis.

Feature indices are 0-based throughout the package. The augmented basis is
ordered as::

    0                intercept
    1 .. p           main effects Z_0 .. Z_{p-1}
    p+1 ..           interactions Z_j Z_l for j <= l, row-major
                     (Z_0^2, Z_0 Z_1, ..., Z_0 Z_{p-1}, Z_1^2, ...)
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class DataError(ValueError):
    """Raised for malformed or unusable input data."""


@dataclass(frozen=True)
class LabeledDataset:
    """Two-class sample: an ``n x p`` feature matrix and labels in {1, 2}.

    Class 1 corresponds to the indicator ``delta = 1`` of the mixture model,
    class 2 to ``delta = 0``.
    """

    features: np.ndarray
    labels: np.ndarray
    feature_names: tuple[str, ...] | None = None
    label_values: tuple[str, str] | None = None

    def __post_init__(self):
        X = np.array(self.features, dtype=float)
        y = np.asarray(self.labels).astype(int)
        if X.ndim != 2:
            raise DataError("features must be a 2-d array")
        if y.shape != (X.shape[0],):
            raise DataError("labels must have one entry per row of features")
        if not np.all(np.isfinite(X)):
            raise DataError("features contain non-finite values")
        if not np.all((y == 1) | (y == 2)):
            raise DataError("labels must be 1 or 2")
        n1, n2 = int(np.sum(y == 1)), int(np.sum(y == 2))
        if n1 < 2 or n2 < 2:
            raise DataError(f"each class needs at least 2 samples (n1={n1}, n2={n2})")
        if self.feature_names is not None and len(self.feature_names) != X.shape[1]:
            raise DataError("feature_names length does not match column count")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]

    @property
    def n1(self) -> int:
        return int(np.sum(self.labels == 1))

    @property
    def n2(self) -> int:
        return int(np.sum(self.labels == 2))

    @property
    def delta(self) -> np.ndarray:
        """0/1 response with 1 for class 1."""
        return (self.labels == 1).astype(float)

    def class_features(self, k: int) -> np.ndarray:
        return self.features[self.labels == k]

    def subset(self, rows) -> "LabeledDataset":
        return LabeledDataset(self.features[rows], self.labels[rows],
                              self.feature_names, self.label_values)


def read_table(path, label_column: str = "class", require_labels: bool = True):
    """Parse a headed CSV into ``(features, feature_names, raw_labels)``.

    `raw_labels` is None when the label column is absent and
    `require_labels` is false.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path} is empty") from None
        if label_column in header:
            li = header.index(label_column)
        elif require_labels:
            raise DataError(f"label column {label_column!r} not in header")
        else:
            li = -1
        names = tuple(h for i, h in enumerate(header) if i != li)
        rows, raw_labels = [], []
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != len(header):
                raise DataError(f"line {lineno}: expected {len(header)} fields, got {len(rec)}")
            if li >= 0:
                raw_labels.append(rec[li].strip())
            vals = []
            for i, cell in enumerate(rec):
                if i == li:
                    continue
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(f"line {lineno}: non-numeric cell {cell!r} in column {header[i]!r}") from None
                if not math.isfinite(v):
                    raise DataError(f"line {lineno}: missing or non-finite value in column {header[i]!r}")
                vals.append(v)
            rows.append(vals)
    X = np.array(rows, dtype=float).reshape(len(rows), len(names))
    return X, names, (raw_labels if li >= 0 else None)


def load_csv(path, label_column: str = "class", class1_label: str | None = None) -> LabeledDataset:
    """Read a two-class dataset from a headed, comma-separated file.

    The lexicographically smaller label value becomes class 1 unless
    `class1_label` names it explicitly. Every non-label column must be numeric.
    """
    X, names, raw_labels = read_table(path, label_column)
    values = sorted(set(raw_labels))
    if len(values) != 2:
        raise DataError(f"not a two-class problem: found label values {values}")
    if class1_label is None:
        first, second = values
    else:
        if class1_label not in values:
            raise DataError(f"class1_label {class1_label!r} not among labels {values}")
        first = class1_label
        second = values[1] if values[0] == class1_label else values[0]
    labels = np.array([1 if v == first else 2 for v in raw_labels])
    return LabeledDataset(X, labels, names, (first, second))


def save_csv(data: LabeledDataset, path, label_column: str = "class") -> None:
    """Write `data` in the format read by :func:`load_csv`."""
    names = data.feature_names or tuple(f"z{j}" for j in range(data.p))
    if data.label_values is not None:
        lv = {1: data.label_values[0], 2: data.label_values[1]}
    else:
        lv = {1: "1", 2: "2"}
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*names, label_column])
        for row, lab in zip(data.features, data.labels):
            w.writerow([repr(float(v)) for v in row] + [lv[int(lab)]])


@dataclass(frozen=True)
class AugmentedIndexMap:
    """Bijection between augmented column indices and term kinds."""

    p: int

    def __post_init__(self):
        if self.p < 1:
            raise ValueError("p must be at least 1")

    @property
    def p_tilde(self) -> int:
        return (self.p + 1) * (self.p + 2) // 2

    def main_index(self, j: int) -> int:
        if not 0 <= j < self.p:
            raise IndexError(f"feature {j} out of range for p={self.p}")
        return 1 + j

    def inter_index(self, j: int, l: int) -> int:
        if j > l:
            j, l = l, j
        if not (0 <= j and l < self.p):
            raise IndexError(f"pair ({j}, {l}) out of range for p={self.p}")
        return 1 + self.p + j * self.p - j * (j - 1) // 2 + (l - j)

    def kind(self, idx: int) -> tuple:
        """Return ``("intercept",)``, ``("main", j)`` or ``("inter", j, l)``."""
        p = self.p
        if not 0 <= idx < self.p_tilde:
            raise IndexError(f"augmented index {idx} out of range")
        if idx == 0:
            return ("intercept",)
        if idx <= p:
            return ("main", idx - 1)
        k = idx - 1 - p
        j = 0
        while k >= p - j:
            k -= p - j
            j += 1
        return ("inter", j, j + k)

    def index(self, kind: tuple) -> int:
        if kind[0] == "intercept":
            return 0
        if kind[0] == "main":
            return self.main_index(kind[1])
        if kind[0] == "inter":
            return self.inter_index(kind[1], kind[2])
        raise ValueError(f"unknown term kind {kind!r}")

    def pairs(self) -> tuple[np.ndarray, np.ndarray]:
        """Row-major ``(j, l)`` arrays for every interaction column."""
        j, l = np.triu_indices(self.p)
        return j, l


@dataclass(frozen=True)
class ReducedIndexSet:
    """Screened variables and the augmented columns they induce.

    The active columns are the intercept, every main effect and every
    interaction between two screened variables (quadratic terms included).
    """

    p: int
    screened: tuple[int, ...] = ()
    active_columns: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        scr = tuple(sorted(set(int(j) for j in self.screened)))
        for j in scr:
            if not 0 <= j < self.p:
                raise IndexError(f"screened variable {j} out of range for p={self.p}")
        object.__setattr__(self, "screened", scr)
        amap = AugmentedIndexMap(self.p)
        cols = list(range(1 + self.p))
        for a, j in enumerate(scr):
            for l in scr[a:]:
                cols.append(amap.inter_index(j, l))
        cols = np.array(cols, dtype=np.int64)
        cols.setflags(write=False)
        object.__setattr__(self, "active_columns", cols)

    @property
    def d(self) -> int:
        return len(self.screened)

    @classmethod
    def full(cls, p: int) -> "ReducedIndexSet":
        return cls(p, tuple(range(p)))


def augment(z, amap: AugmentedIndexMap) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if z.shape != (amap.p,):
        raise ValueError(f"expected a length-{amap.p} vector, got shape {z.shape}")
    j, l = amap.pairs()
    return np.concatenate(([1.0], z, z[j] * z[l]))


def reduced_augment(z, reduced: ReducedIndexSet) -> np.ndarray:
    """Augmented vector restricted to ``reduced.active_columns``."""
    z = np.asarray(z, dtype=float)
    if z.shape != (reduced.p,):
        raise ValueError(f"expected a length-{reduced.p} vector, got shape {z.shape}")
    return augmented_design(z[None, :], reduced.active_columns)[0]


def augmented_design(Z, columns=None) -> np.ndarray:
    """Rows of the augmented basis for each row of `Z`, optionally column-restricted.

    Only the requested columns are materialized, so this is cheap for
    reduced index sets even when ``p_tilde`` is large.
    """
    Z = np.asarray(Z, dtype=float)
    n, p = Z.shape
    amap = AugmentedIndexMap(p)
    if columns is None:
        columns = np.arange(amap.p_tilde)
    columns = np.asarray(columns, dtype=np.int64)
    if columns.size and (columns.min() < 0 or columns.max() >= amap.p_tilde):
        raise IndexError("augmented column index out of range")
    out = np.empty((n, columns.size))
    jj, ll = amap.pairs()
    for c, idx in enumerate(columns):
        if idx == 0:
            out[:, c] = 1.0
        elif idx <= p:
            out[:, c] = Z[:, idx - 1]
        else:
            k = idx - 1 - p
            out[:, c] = Z[:, jj[k]] * Z[:, ll[k]]
    return out
