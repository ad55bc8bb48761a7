"""Dataset ingestion: CSV parsing, train/test splitting, z-scoring.

Normalisation statistics are always fit on the training rows only and
applied everywhere; predictive metrics are reported back in original
units via the stored statistics.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ConstantColumn, DomainError, ParseError


@dataclass(frozen=True)
class Normalization:
    """Per-column z-score statistics (population standard deviation)."""

    x_mean: np.ndarray
    x_std: np.ndarray
    y_mean: np.ndarray
    y_std: np.ndarray

    def normalize_x(self, X):
        return (np.asarray(X, dtype=float) - self.x_mean) / self.x_std

    def normalize_y(self, Y):
        return (np.asarray(Y, dtype=float) - self.y_mean) / self.y_std

    def denormalize_y(self, Y):
        return np.asarray(Y, dtype=float) * self.y_std + self.y_mean


@dataclass(frozen=True)
class Dataset:
    """Normalised design matrices plus the split and statistics behind them."""

    X: np.ndarray
    Y: np.ndarray
    train_index: np.ndarray
    test_index: np.ndarray
    norm: Normalization
    feature_names: tuple = ()
    target_name: str = "target"

    @property
    def X_train(self):
        return self.X[self.train_index]

    @property
    def Y_train(self):
        return self.Y[self.train_index]

    @property
    def X_test(self):
        return self.X[self.test_index]

    @property
    def Y_test(self):
        return self.Y[self.test_index]

    @property
    def n_features(self):
        return self.X.shape[1]

    @property
    def n_outputs(self):
        return self.Y.shape[1]


def split_indices(n: int, split=None, rng=None):
    """Resolve a split specification into (train, test) index arrays.

    ``split`` may be ``None`` (everything trains), a mapping with
    ``test_fraction`` and ``seed``, or a mapping with explicit
    ``train_index``/``test_index`` lists.
    """
    if split is None:
        return np.arange(n), np.arange(0)
    if "train_index" in split or "test_index" in split:
        train = np.asarray(split.get("train_index", []), dtype=int)
        test = np.asarray(split.get("test_index", []), dtype=int)
        if train.size == 0:
            train = np.setdiff1d(np.arange(n), test)
        bad = [i for i in np.concatenate([train, test]) if not 0 <= i < n]
        if bad:
            raise DomainError(f"split indices out of range: {bad[:5]}")
        return train, test
    frac = float(split.get("test_fraction", 0.0))
    if not 0.0 <= frac < 1.0:
        raise DomainError(f"test_fraction must be in [0, 1), got {frac}")
    seed = int(split.get("seed", 0))
    perm = np.random.default_rng(seed).permutation(n) if rng is None else rng.permutation(n)
    n_test = int(round(frac * n))
    test = np.sort(perm[:n_test])
    train = np.sort(perm[n_test:])
    if train.size == 0:
        raise DomainError("split leaves no training rows")
    return train, test


def _fit_normalization(X, Y, train_index, feature_names, target_name):
    Xt, Yt = X[train_index], Y[train_index]
    x_mean, x_std = Xt.mean(axis=0), Xt.std(axis=0)
    y_mean, y_std = Yt.mean(axis=0), Yt.std(axis=0)
    for d in range(X.shape[1]):
        if x_std[d] == 0:
            name = feature_names[d] if d < len(feature_names) else f"feature {d}"
            raise ConstantColumn(f"column '{name}' has zero variance on the training rows")
    if np.any(y_std == 0):
        raise ConstantColumn(f"column '{target_name}' has zero variance on the training rows")
    return Normalization(x_mean, x_std, y_mean, y_std)


def from_arrays(X, Y, split=None, feature_names=(), target_name="target") -> Dataset:
    """Build a normalised dataset from raw (original-unit) arrays."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if Y.ndim == 1:
        Y = Y[:, None]
    if X.shape[0] != Y.shape[0]:
        raise DomainError(f"X has {X.shape[0]} rows but Y has {Y.shape[0]}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
        raise DomainError("missing or non-finite values are not admitted")
    train, test = split_indices(X.shape[0], split)
    norm = _fit_normalization(X, Y, train, feature_names, target_name)
    return Dataset(
        X=norm.normalize_x(X),
        Y=norm.normalize_y(Y),
        train_index=train,
        test_index=test,
        norm=norm,
        feature_names=tuple(feature_names),
        target_name=target_name,
    )


def _read_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return [row for row in csv.reader(fh) if row and any(f.strip() for f in row)]


def ingest_csv(path, target_column, split=None) -> Dataset:
    """Read a numeric CSV, split it, and z-score on the training rows.

    A header row is detected by its first row failing to parse as
    numbers.  ``target_column`` is a column index or, when a header is
    present, a column name.
    """
    rows = _read_rows(path)
    if not rows:
        raise ParseError(f"{path}: empty file")
    header = None
    try:
        [float(f) for f in rows[0]]
    except ValueError:
        header = [f.strip() for f in rows[0]]
        rows = rows[1:]
    if not rows:
        raise ParseError(f"{path}: no data rows")
    width = len(rows[0])
    data = np.empty((len(rows), width))
    for r, row in enumerate(rows):
        if len(row) != width:
            raise ParseError(f"row {r + 1}: expected {width} fields, got {len(row)}")
        for c, fieldval in enumerate(row):
            try:
                data[r, c] = float(fieldval)
            except ValueError:
                raise ParseError(
                    f"row {r + 1}, column {c + 1}: could not parse {fieldval!r}"
                ) from None
    if isinstance(target_column, str):
        if header is None:
            raise ParseError(f"target column {target_column!r} given but file has no header")
        try:
            target = header.index(target_column)
        except ValueError:
            raise ParseError(f"target column {target_column!r} not in header {header}") from None
    else:
        target = int(target_column) % width
    keep = [c for c in range(width) if c != target]
    names = tuple(header[c] for c in keep) if header else tuple(f"x{c}" for c in keep)
    target_name = header[target] if header else f"x{target}"
    return from_arrays(
        data[:, keep], data[:, [target]], split,
        feature_names=names, target_name=target_name,
    )


def dataset_to_csv(ds: Dataset, path) -> None:
    """Write a dataset back out in original units with a header row."""
    X = ds.X * ds.norm.x_std + ds.norm.x_mean
    Y = ds.norm.denormalize_y(ds.Y)
    names = list(ds.feature_names) or [f"x{c}" for c in range(X.shape[1])]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(names + [ds.target_name])
        for r in range(X.shape[0]):
            writer.writerow([repr(v) for v in X[r]] + [repr(v) for v in Y[r]])


def synthetic_regression_1d(n: int, seed: int = 0, noise_sd: float = 0.1):
    """Smooth one-dimensional regression data in original units."""
    rng = np.random.default_rng(seed)
    x = np.sort(rng.uniform(-3.0, 3.0, n))
    y = np.sin(2.0 * x) + 0.25 * x + rng.normal(0.0, noise_sd, n)
    return x[:, None], y[:, None]
