"""Datasets on the unit cube: synthetic generators, CSV ingestion, balancing, splits."""

import csv
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from cfx.errors import FormatError, InputError


@dataclass(frozen=True, eq=False)
class Dataset:
    """Features min-max normalised to [0, 1] with binary labels.

    ``normalization`` holds the raw per-feature ``(min, max)`` used, so
    :meth:`denormalize` can map points back to raw units.
    """

    features: np.ndarray
    labels: np.ndarray
    feature_names: tuple
    normalization: np.ndarray
    categories: dict = field(default_factory=dict)

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        y = np.asarray(self.labels).astype(int)
        if X.ndim != 2 or len(X) < 1 or len(y) != len(X):
            raise InputError("dataset needs a nonempty 2-D feature matrix with one label per row")
        if not np.all(np.isin(y, (0, 1))):
            raise InputError("labels must be binary")
        if np.any(X < 0) or np.any(X > 1):
            raise InputError("features must be normalised to [0, 1]")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "normalization", np.asarray(self.normalization, dtype=float).reshape(-1, 2))

    def __len__(self):
        return len(self.labels)

    @property
    def dim(self):
        return self.features.shape[1]

    def class_counts(self):
        return int(np.sum(self.labels == 0)), int(np.sum(self.labels == 1))

    def subset(self, idx):
        idx = np.asarray(idx, dtype=int)
        return Dataset(self.features[idx], self.labels[idx], self.feature_names,
                       self.normalization, self.categories)

    def normalize(self, raw):
        lo, hi = self.normalization[:, 0], self.normalization[:, 1]
        span = np.where(hi > lo, hi - lo, 1.0)
        return np.where(hi > lo, (np.asarray(raw, dtype=float) - lo) / span, 0.0)

    def denormalize(self, x):
        lo, hi = self.normalization[:, 0], self.normalization[:, 1]
        return lo + np.asarray(x, dtype=float) * (hi - lo)

    def to_csv(self, path, label_column="y"):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow([*self.feature_names, label_column])
            for row, label in zip(self.features, self.labels):
                writer.writerow([repr(float(v)) for v in row] + [int(label)])


def minmax(raw, names=None):
    """Normalise columns to [0, 1]; constant columns map to 0 with a warning."""
    raw = np.asarray(raw, dtype=float)
    lo, hi = raw.min(axis=0), raw.max(axis=0)
    const = hi <= lo
    for j in np.flatnonzero(const):
        label = names[j] if names is not None else j
        warnings.warn(f"feature {label!r} is constant; normalised to 0", RuntimeWarning, stacklevel=2)
    span = np.where(const, 1.0, hi - lo)
    X = np.where(const, 0.0, (raw - lo) / span)
    return np.clip(X, 0.0, 1.0), np.column_stack([lo, hi])


def make_two_moons(n=1000, noise=0.1, seed=0):
    """Two interleaving half circles (class 0 upper arc, class 1 lower arc) plus Gaussian noise."""
    if n < 2:
        raise InputError("need at least two samples")
    rng = np.random.default_rng(seed)
    n_out = n // 2
    n_in = n - n_out
    t_out = np.linspace(0.0, np.pi, n_out)
    t_in = np.linspace(0.0, np.pi, n_in)
    raw = np.vstack([
        np.column_stack([np.cos(t_out), np.sin(t_out)]),
        np.column_stack([1.0 - np.cos(t_in), 0.5 - np.sin(t_in)]),
    ])
    labels = np.concatenate([np.zeros(n_out, dtype=int), np.ones(n_in, dtype=int)])
    if noise > 0:
        raw = raw + rng.normal(scale=noise, size=raw.shape)
    order = rng.permutation(n)
    X, norm = minmax(raw[order])
    return Dataset(X, labels[order], ("x1", "x2"), norm)


def make_sphere_quadrant(n, d, seed=0):
    """Uniform points in [0,1]^d, class 1 inside the unit ball centred at (1, ..., 1)."""
    if d < 2:
        raise InputError("dimension must be >= 2")
    X = np.random.default_rng(seed).random((n, d))
    labels = (np.linalg.norm(X - 1.0, axis=1) <= 1.0).astype(int)
    return Dataset(X, labels, tuple(f"x{i + 1}" for i in range(d)), np.tile([0.0, 1.0], (d, 1)))


def load_csv(path, label_column="y", categorical_columns=(), feature_columns=None):
    """Read a headed, comma-delimited CSV into a normalised :class:`Dataset`.

    Categorical columns are integer-coded in order of first appearance.  All
    malformed rows are collected and reported together in one
    :class:`FormatError` (see ``row_errors``).
    """
    categorical_columns = set(categorical_columns or ())
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise FormatError(f"{path}: file is empty") from None
        rows = list(reader)
    if label_column not in header:
        raise FormatError(f"{path}: label column {label_column!r} not in header")
    if feature_columns is None:
        feature_columns = [h for h in header if h != label_column]
    missing = [c for c in feature_columns if c not in header]
    if missing:
        raise FormatError(f"{path}: feature columns {missing} not in header")
    col = {h: i for i, h in enumerate(header)}
    codes = {c: {} for c in feature_columns if c in categorical_columns}
    raw, labels, errors = [], [], []
    for lineno, row in enumerate(rows, start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(header):
            errors.append((lineno, f"expected {len(header)} fields, got {len(row)}"))
            continue
        try:
            label = float(row[col[label_column]])
            if label not in (0.0, 1.0):
                raise ValueError(f"label {row[col[label_column]]!r} is not 0/1")
            values = []
            for c in feature_columns:
                cell = row[col[c]].strip()
                if c in codes:
                    values.append(codes[c].setdefault(cell, len(codes[c])))
                else:
                    values.append(float(cell))
        except ValueError as exc:
            errors.append((lineno, str(exc)))
            continue
        raw.append(values)
        labels.append(int(label))
    if errors:
        raise FormatError(f"{path}: {len(errors)} malformed row(s)", errors)
    if not raw:
        raise FormatError(f"{path}: no data rows")
    X, norm = minmax(np.array(raw, dtype=float), feature_columns)
    return Dataset(X, np.array(labels), tuple(feature_columns), norm,
                   {c: list(m) for c, m in codes.items()})


def balance_classes(ds, seed=0):
    """Subsample the majority class (without replacement) down to the minority count."""
    idx0 = np.flatnonzero(ds.labels == 0)
    idx1 = np.flatnonzero(ds.labels == 1)
    if len(idx0) == 0 or len(idx1) == 0:
        raise InputError("balancing needs both classes present")
    rng = np.random.default_rng(seed)
    keep = min(len(idx0), len(idx1))
    idx0 = rng.choice(idx0, keep, replace=False) if len(idx0) > keep else idx0
    idx1 = rng.choice(idx1, keep, replace=False) if len(idx1) > keep else idx1
    return ds.subset(np.sort(np.concatenate([idx0, idx1])))


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.5
    test_fraction: float = 0.25
    attack_fraction: float = 0.25
    seed: int = 0
    attack_class_balance: Optional[tuple] = None

    def __post_init__(self):
        fr = (self.train_fraction, self.test_fraction, self.attack_fraction)
        if min(fr) < 0 or abs(sum(fr) - 1.0) > 1e-9:
            raise InputError("split fractions must be nonnegative and sum to 1")
        if self.attack_class_balance is not None:
            p0, p1 = self.attack_class_balance
            if min(p0, p1) < 0 or abs(p0 + p1 - 1.0) > 1e-9:
                raise InputError("attack_class_balance must be two proportions summing to 1")


def split_indices(n, labels, spec):
    rng = np.random.default_rng(spec.seed)
    order = rng.permutation(n)
    n_train = int(round(spec.train_fraction * n))
    n_test = min(int(round(spec.test_fraction * n)), n - n_train)
    train, test, pool = order[:n_train], order[n_train:n_train + n_test], order[n_train + n_test:]
    if spec.attack_class_balance is None:
        return train, test, pool
    p0, p1 = spec.attack_class_balance
    pool0, pool1 = pool[labels[pool] == 0], pool[labels[pool] == 1]
    size = len(pool)
    # shrink the attack split until both classes can supply their share
    if p0 > 0:
        size = min(size, int(np.floor(len(pool0) / p0 + 1e-9)))
    if p1 > 0:
        size = min(size, int(np.floor(len(pool1) / p1 + 1e-9)))
    n0 = int(round(p0 * size))
    n1 = size - n0
    if size < 1 or n0 > len(pool0) or n1 > len(pool1):
        raise InputError("attack class balance is infeasible for this dataset")
    attack = np.concatenate([pool0[:n0], pool1[:n1]])
    return train, test, attack[rng.permutation(len(attack))]


def split(ds, spec):
    """Disjoint seeded (train, test, attack) datasets."""
    return tuple(ds.subset(i) for i in split_indices(len(ds), ds.labels, spec))
