"""Datasets, CSV ingestion, stratified partitioning and synthetic generators."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np


@dataclass(frozen=True, eq=False)
class Dataset:
    """Feature matrix plus dense integer labels.

    Parameters
    ----------
    features : array of shape (N, D)
    labels : array of shape (N,)
        Class indices in ``[0, n_classes)``.
    n_classes : int
    feature_names : sequence of str, optional
    ids : array of shape (N,), optional
        Row ids in the source dataset. Defaults to ``arange(N)``; splits
        carry the ids of the rows they were cut from.
    """

    features: np.ndarray
    labels: np.ndarray
    n_classes: int
    feature_names: tuple[str, ...] | None = None
    ids: np.ndarray = field(default=None)

    def __post_init__(self):
        X = np.array(self.features, dtype=float, copy=True)
        y = np.array(self.labels, copy=True)
        if X.ndim != 2:
            raise ValueError(f"features must be 2-D, got shape {X.shape}")
        if y.ndim != 1 or y.shape[0] != X.shape[0]:
            raise ValueError("labels must be 1-D with one entry per row")
        if not np.all(np.isfinite(X)):
            raise ValueError("features contain non-finite values")
        if y.size and not np.issubdtype(y.dtype, np.integer):
            if not np.all(np.equal(np.mod(y, 1), 0)):
                raise ValueError("labels must be integers")
        y = y.astype(np.int64)
        L = int(self.n_classes)
        if L < 1:
            raise ValueError("n_classes must be positive")
        if y.size and (y.min() < 0 or y.max() >= L):
            raise ValueError(f"labels must lie in [0, {L})")
        missing = np.setdiff1d(np.arange(L), y)
        if missing.size:
            raise ValueError(f"classes {missing.tolist()} have no samples")
        ids = np.arange(X.shape[0]) if self.ids is None else np.array(self.ids, dtype=np.int64)
        if ids.shape != y.shape:
            raise ValueError("ids must have one entry per row")
        names = None if self.feature_names is None else tuple(self.feature_names)
        if names is not None and len(names) != X.shape[1]:
            raise ValueError("feature_names length must equal the number of columns")
        for arr in (X, y, ids):
            arr.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "n_classes", L)
        object.__setattr__(self, "feature_names", names)
        object.__setattr__(self, "ids", ids)

    def __len__(self):
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_classes)

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows, dtype=np.int64)
        return Dataset(self.features[rows], self.labels[rows], self.n_classes,
                       self.feature_names, self.ids[rows])

    def with_features(self, features: np.ndarray) -> "Dataset":
        return Dataset(features, self.labels, self.n_classes, self.feature_names, self.ids)


@dataclass(frozen=True)
class Partition:
    """The four disjoint parts used by one replication."""

    train: Dataset
    meta_train: Dataset
    dsel: Dataset
    test: Dataset


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def load_csv(path, label_column: int | str = -1) -> Dataset:
    """Read a comma-separated file into a :class:`Dataset`.

    The first row is a header iff any of its feature cells is non-numeric
    (always, when ``label_column`` is a name). Labels are re-encoded as
    ``0..L-1`` in order of first appearance.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such dataset file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise ValueError(f"{path}: empty file")

    first = [c.strip() for c in rows[0]]
    if isinstance(label_column, str):
        is_header = True
    else:
        # a text label in the first data row must not make it look like a header
        skip = label_column % len(first)
        is_header = any(not _is_number(c) for i, c in enumerate(first) if i != skip)
    header = None
    if is_header:
        header = first
        rows = rows[1:]
    n_cols = len(rows[0]) if rows else len(header or [])
    if isinstance(label_column, str):
        if header is None:
            raise ValueError(f"{path}: label column {label_column!r} given by name but file has no header")
        if label_column not in header:
            raise ValueError(f"{path}: no column named {label_column!r}")
        label_idx = header.index(label_column)
    else:
        label_idx = label_column % n_cols
    first_data_line = 2 if header is not None else 1

    codes: dict[str, int] = {}
    labels = []
    features = []
    for r, row in enumerate(rows):
        line = first_data_line + r
        if len(row) != n_cols:
            raise ValueError(f"{path}: row {line} has {len(row)} columns, expected {n_cols}")
        values = []
        for c, cell in enumerate(row):
            cell = cell.strip()
            if c == label_idx:
                labels.append(codes.setdefault(cell, len(codes)))
                continue
            try:
                v = float(cell)
            except ValueError:
                raise ValueError(f"{path}: non-numeric value {cell!r} at row {line}, column {c + 1}") from None
            if not np.isfinite(v):
                raise ValueError(f"{path}: non-finite value {cell!r} at row {line}, column {c + 1}")
            values.append(v)
        features.append(values)
    if len(codes) < 2:
        raise ValueError(f"{path}: dataset has a single class")
    names = None
    if header is not None:
        names = tuple(h for i, h in enumerate(header) if i != label_idx)
    return Dataset(np.array(features, dtype=float).reshape(len(rows), n_cols - 1),
                   np.array(labels), len(codes), names)


def allocate(n: int, fractions: Sequence[float]) -> np.ndarray:
    """Split ``n`` items into parts by largest remainder.

    Every part receives ``floor`` or ``ceil`` of its ideal share; leftover
    items go to the largest fractional remainders, earlier parts first.
    """
    ideal = np.asarray(fractions, dtype=float) * n
    counts = np.floor(ideal).astype(np.int64)
    rest = n - counts.sum()
    order = np.argsort(-(ideal - counts), kind="stable")
    counts[order[:rest]] += 1
    return counts


def stratified_indices(labels: np.ndarray, fractions: Sequence[float], rng: np.random.Generator,
                       n_classes: int | None = None, min_per_part: int = 0) -> list[np.ndarray]:
    """Row indices for each part, stratified by label and sorted ascending."""
    labels = np.asarray(labels)
    L = int(labels.max()) + 1 if n_classes is None else n_classes
    parts: list[list[np.ndarray]] = [[] for _ in fractions]
    for c in range(L):
        rows = np.flatnonzero(labels == c)
        rows = rows[rng.permutation(rows.size)]
        counts = allocate(rows.size, fractions)
        if min_per_part:
            # move single rows from the largest parts into starved ones
            for p in np.flatnonzero(counts < min_per_part):
                while counts[p] < min_per_part:
                    donor = int(np.argmax(counts))
                    if counts[donor] <= min_per_part:
                        break
                    counts[donor] -= 1
                    counts[p] += 1
        bounds = np.concatenate([[0], np.cumsum(counts)])
        for p in range(len(fractions)):
            parts[p].append(rows[bounds[p]:bounds[p + 1]])
    return [np.sort(np.concatenate(chunks)) if chunks else np.empty(0, np.int64) for chunks in parts]


def stratified_split(data: Dataset, fractions: Sequence[float], seed: int) -> list[Dataset]:
    """Split ``data`` into disjoint parts that keep the class priors.

    Per-class counts in each part are within one sample of
    ``fraction * class_size`` (every part is also guaranteed at least one
    sample of every class, which only bites for tiny classes).
    """
    fractions = [float(f) for f in fractions]
    if not fractions or any(f <= 0 for f in fractions):
        raise ValueError("every fraction must be positive")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"fractions must sum to 1, got {sum(fractions)}")
    counts = data.class_counts()
    if counts.min() < len(fractions):
        c = int(np.argmin(counts))
        raise ValueError(f"class {c} has {counts[c]} samples, fewer than the {len(fractions)} parts")
    rng = np.random.default_rng(seed)
    parts = stratified_indices(data.labels, fractions, rng, data.n_classes, min_per_part=1)
    return [data.subset(rows) for rows in parts]


def protocol_split(data: Dataset, seed: int) -> Partition:
    """50/25/25 split into training, D_SEL and test, then the training half
    split evenly into the pool-training and meta-training sets."""
    s1, s2 = np.random.SeedSequence(seed).generate_state(2)
    training, dsel, test = stratified_split(data, [0.5, 0.25, 0.25], int(s1))
    train, meta_train = stratified_split(training, [0.5, 0.5], int(s2))
    return Partition(train, meta_train, dsel, test)


def minmax_scaler(reference: Dataset):
    """Return a function mapping features into the [0, 1] box of ``reference``.

    Constant columns are shifted but not scaled.
    """
    lo = reference.features.min(axis=0)
    span = reference.features.max(axis=0) - lo
    span = np.where(span > 0, span, 1.0)

    def transform(d: Dataset) -> Dataset:
        return d.with_features((d.features - lo) / span)

    return transform


def _class_sizes(n: int) -> tuple[int, int]:
    if n < 4:
        raise ValueError(f"need at least 4 samples, got {n}")
    return n - n // 2, n // 2


def generate_banana(n: int = 1000, seed: int = 0, radius: float = 5.0, noise: float = 1.0) -> Dataset:
    """Two interleaved banana-shaped classes in 2-D.

    Each class is a circular arc of the given radius spanning 1.25*pi,
    the second arc mirrored and shifted by ``-0.75 * radius`` on both axes,
    with isotropic Gaussian noise of standard deviation ``noise``.
    """
    na, nb = _class_sizes(n)
    rng = np.random.default_rng(seed)
    ta = 0.125 * np.pi + rng.random(na) * 1.25 * np.pi
    a = radius * np.column_stack([np.sin(ta), np.cos(ta)]) + rng.standard_normal((na, 2)) * noise
    tb = 0.375 * np.pi - rng.random(nb) * 1.25 * np.pi
    b = radius * np.column_stack([np.sin(tb), np.cos(tb)]) + rng.standard_normal((nb, 2)) * noise
    b -= 0.75 * radius
    X = np.vstack([a, b])
    y = np.repeat([0, 1], [na, nb])
    return Dataset(X, y, 2, ("x1", "x2"))


def generate_lithuanian(n: int = 1000, seed: int = 0, length: float = 6.0,
                        sigmas: tuple[float, float] = (0.4, 0.8)) -> Dataset:
    """Two classes spread along parallel curved spines.

    Class 0 follows ``y = 2 * (1 - (x / length)**2)`` and class 1 the same
    parabola lowered by 2; the points are displaced perpendicular-ish by
    Gaussian noise whose spread differs per class (``sigmas``).
    """
    na, nb = _class_sizes(n)
    rng = np.random.default_rng(seed)
    out = []
    for cls, (m, s, shift) in enumerate([(na, sigmas[0], 0.0), (nb, sigmas[1], -2.0)]):
        t = rng.uniform(-1.0, 1.0, m)
        spine = np.column_stack([length * t, 2.0 * (1.0 - t ** 2) + shift])
        out.append(spine + rng.standard_normal((m, 2)) * s)
    X = np.vstack(out)
    y = np.repeat([0, 1], [na, nb])
    return Dataset(X, y, 2, ("x1", "x2"))


GENERATORS = {"banana": generate_banana, "lithuanian": generate_lithuanian}
