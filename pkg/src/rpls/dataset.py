"""Datasets, CSV ingestion, synthetic data and labeled/unlabeled/test splits."""

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._rng import Xoshiro256

UNLABELED = -1


class DataError(ValueError):
    """Malformed input data; the message carries the row/column location."""


@dataclass(frozen=True, eq=False)
class Dataset:
    """Feature matrix plus optional class labels (``-1`` marks unlabeled).

    Arrays are stored read-only; membership in D/U/test lives in
    :class:`SplitState`, never in the dataset itself.
    """

    features: np.ndarray
    labels: np.ndarray
    feature_names: tuple
    class_count: int
    class_levels: tuple = field(default=())

    def __post_init__(self):
        X = np.array(self.features, dtype=float)
        y = np.array(self.labels, dtype=np.int64)
        if X.ndim != 2:
            raise DataError(f"features must be 2-D, got shape {X.shape}")
        n, d = X.shape
        if n < 1 or d < 1:
            raise DataError("dataset needs at least one row and one feature")
        if y.shape != (n,):
            raise DataError(f"labels have shape {y.shape}, expected ({n},)")
        if self.class_count < 1:
            raise DataError("class_count must be positive")
        bad = (y != UNLABELED) & ((y < 0) | (y >= self.class_count))
        if bad.any():
            row = int(np.flatnonzero(bad)[0])
            raise DataError(f"row {row}: label {y[row]} outside 0..{self.class_count - 1}")
        if not np.all(np.isfinite(X)):
            row, col = map(int, np.argwhere(~np.isfinite(X))[0])
            raise DataError(f"row {row}, column {col}: non-finite feature value")
        names = tuple(self.feature_names) or tuple(f"x{j + 1}" for j in range(d))
        if len(names) != d:
            raise DataError(f"{len(names)} feature names for {d} columns")
        levels = tuple(self.class_levels) or tuple(str(k) for k in range(self.class_count))
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "feature_names", names)
        object.__setattr__(self, "class_levels", levels)

    @property
    def n_rows(self):
        return self.features.shape[0]

    @property
    def n_features(self):
        return self.features.shape[1]

    def class_counts(self):
        y = self.labels[self.labels != UNLABELED]
        return np.bincount(y, minlength=self.class_count)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            np.array_equal(self.features, other.features)
            and np.array_equal(self.labels, other.labels)
            and self.feature_names == other.feature_names
            and self.class_count == other.class_count
            and self.class_levels == other.class_levels
        )

    __hash__ = None


def load_csv(path, label_column, class_levels=None):
    """Read a headed CSV; empty label cells become unlabeled rows.

    Labels map to ``0..J-1`` in ``class_levels`` order, or in order of first
    appearance when no levels are given.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: file not found")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if r]
    if not rows:
        raise DataError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if label_column not in header:
        raise DataError(f"{path}: label column {label_column!r} not in header {header}")
    if len(rows) < 2:
        raise DataError(f"{path}: header row but no data rows")
    label_pos = header.index(label_column)
    feature_pos = [j for j in range(len(header)) if j != label_pos]
    levels = list(class_levels) if class_levels is not None else []
    fixed_levels = class_levels is not None
    X = np.empty((len(rows) - 1, len(feature_pos)))
    y = np.empty(len(rows) - 1, dtype=np.int64)
    for i, row in enumerate(rows[1:]):
        line = i + 2
        if len(row) != len(header):
            raise DataError(f"{path}: line {line}: expected {len(header)} cells, got {len(row)}")
        for out_j, j in enumerate(feature_pos):
            cell = row[j].strip()
            try:
                value = float(cell)
            except ValueError:
                raise DataError(
                    f"{path}: line {line}, column {header[j]!r}: non-numeric value {cell!r}"
                ) from None
            if not math.isfinite(value):
                raise DataError(f"{path}: line {line}, column {header[j]!r}: non-finite value")
            X[i, out_j] = value
        cell = row[label_pos].strip()
        if cell == "":
            y[i] = UNLABELED
        elif cell in levels:
            y[i] = levels.index(cell)
        elif fixed_levels:
            raise DataError(
                f"{path}: line {line}, column {label_column!r}: unknown label {cell!r}"
            )
        else:
            levels.append(cell)
            y[i] = len(levels) - 1
    if not levels:
        raise DataError(f"{path}: no class levels given and no labeled rows")
    return Dataset(
        features=X,
        labels=y,
        feature_names=tuple(header[j] for j in feature_pos),
        class_count=len(levels),
        class_levels=tuple(levels),
    )


def write_csv(data, path, label_column="label"):
    """Write ``data`` so that ``load_csv(path, label_column, levels)`` restores it."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(data.feature_names) + [label_column])
        for row, label in zip(data.features, data.labels):
            cell = "" if label == UNLABELED else data.class_levels[label]
            writer.writerow([repr(float(v)) for v in row] + [cell])


def generate_binomial(n_rows, coefficients, intercept=0.0, seed=0):
    """Standard-normal covariates with Bernoulli(logistic(b0 + x.b)) labels."""
    coefficients = np.atleast_1d(np.asarray(coefficients, dtype=float))
    if n_rows < 1:
        raise DataError("n_rows must be at least 1")
    if coefficients.ndim != 1 or coefficients.size < 1:
        raise DataError("coefficients must be a non-empty vector")
    if not np.all(np.isfinite(coefficients)) or not math.isfinite(intercept):
        raise DataError("coefficients and intercept must be finite")
    rng = Xoshiro256(seed)
    d = coefficients.size
    X = np.empty((n_rows, d))
    y = np.empty(n_rows, dtype=np.int64)
    for i in range(n_rows):
        for j in range(d):
            X[i, j] = rng.standard_normal()
        eta = intercept + float(X[i] @ coefficients)
        p = 1.0 / (1.0 + math.exp(-eta)) if eta >= 0 else math.exp(eta) / (1.0 + math.exp(eta))
        y[i] = 1 if rng.random() < p else 0
    return Dataset(features=X, labels=y, feature_names=(), class_count=2)


@dataclass(frozen=True)
class SplitState:
    """Disjoint index sets for labeled (D), unlabeled pool (U) and test rows."""

    labeled_idx: tuple
    unlabeled_idx: tuple
    test_idx: tuple
    rng_seed: int = 0

    def __post_init__(self):
        sets = [set(self.labeled_idx), set(self.unlabeled_idx), set(self.test_idx)]
        if sum(map(len, sets)) != len(set().union(*sets)):
            raise DataError("labeled, unlabeled and test index sets overlap")

    def labeled_view(self, data):
        """(X, y) restricted to D; the only view that exposes labels."""
        idx = np.asarray(self.labeled_idx, dtype=np.int64)
        return data.features[idx], data.labels[idx]

    def pool_view(self, data):
        idx = np.asarray(self.unlabeled_idx, dtype=np.int64)
        return data.features[idx]

    def test_view(self, data):
        """Held-out rows with ground truth, for evaluation only."""
        idx = np.asarray(self.test_idx, dtype=np.int64)
        return data.features[idx], data.labels[idx]


def make_split(data, unlabeled_fraction, test_fraction, seed=0, max_retries=100):
    """Seeded split into test, stratified labeled part, and masked pool.

    ``test_fraction`` is taken of all labeled rows; ``unlabeled_fraction`` of
    what remains after the test rows are removed.  Rows without a label
    always land in the pool.
    """
    if not 0.0 <= unlabeled_fraction < 1.0:
        raise DataError("unlabeled_fraction must lie in [0, 1)")
    if not 0.0 < test_fraction < 1.0:
        raise DataError("test_fraction must lie in (0, 1)")
    J = data.class_count
    y = data.labels
    known = [i for i in range(data.n_rows) if y[i] != UNLABELED]
    missing = [k for k in range(J) if not np.any(y == k)]
    if missing:
        raise DataError(f"dataset has no labeled rows of class(es) {missing}")
    n = len(known)
    n_test = int(round(n * test_fraction))
    n_rest = n - n_test
    n_unlabeled = int(round(n_rest * unlabeled_fraction))
    n_labeled = n_rest - n_unlabeled
    if n_test < 1 or n_labeled < J:
        raise DataError(
            f"fractions leave {n_test} test and {n_labeled} labeled rows; "
            f"need >=1 test row and >= {J} labeled rows"
        )
    rng = Xoshiro256(seed)
    for _ in range(max_retries):
        order = rng.shuffle(list(known))
        test = order[:n_test]
        rest = order[n_test:]
        by_class = [[i for i in rest if y[i] == k] for k in range(J)]
        if all(by_class):
            break
    else:
        raise DataError("could not draw a split whose training part contains every class")
    quota = _stratified_quota([len(c) for c in by_class], n_labeled)
    labeled = sorted(i for k in range(J) for i in by_class[k][: quota[k]])
    taken = set(labeled)
    pool = sorted([i for i in rest if i not in taken] + [i for i in range(data.n_rows) if y[i] == UNLABELED])
    return SplitState(tuple(labeled), tuple(pool), tuple(sorted(test)), int(seed))


def _stratified_quota(sizes, total):
    """Largest-remainder allocation with at least one row per class."""
    J = len(sizes)
    quota = [1] * J
    left = total - J
    avail = sum(sizes) - J
    shares = [(s - 1) * left / avail if avail else 0.0 for s in sizes]
    for k in range(J):
        quota[k] += int(math.floor(shares[k]))
    remainders = sorted(range(J), key=lambda k: (-(shares[k] - math.floor(shares[k])), k))
    short = total - sum(quota)
    for k in remainders:
        if short == 0:
            break
        if quota[k] < sizes[k]:
            quota[k] += 1
            short -= 1
    return quota
