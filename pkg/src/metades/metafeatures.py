"""Consensus-based sample selection and meta-feature extraction."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .base import Pool, boundary_distances
from .dataset import Dataset
from .region import ProfileNeighborhood, RegionOfCompetence, knn_region, profile_neighbors

POSTERIOR_TARGETS = ("true", "predicted")


class EmptySelectionError(ValueError):
    """No meta-training sample fell below the consensus threshold."""


def n_meta_features(K: int, K_p: int) -> int:
    return 2 * K + K_p + 2


@dataclass(frozen=True, eq=False)
class MetaVector:
    """Meta-features describing member ``classifier_id`` around sample ``sample_id``.

    ``f1`` neighbor hits, ``f2`` posteriors on the neighbors, ``f3`` local
    accuracy, ``f4`` hits on the output-profile neighbors, ``f5`` distance
    to the decision boundary. ``label`` is 1 (competent) / 0, or None at
    query time.
    """

    f1: np.ndarray
    f2: np.ndarray
    f3: float
    f4: np.ndarray
    f5: float
    label: int | None = None
    classifier_id: int = -1
    sample_id: int = -1

    @property
    def features(self) -> np.ndarray:
        return np.concatenate([self.f1, self.f2, [self.f3], self.f4, [self.f5]]).astype(float)

    @classmethod
    def from_features(cls, row, K: int, K_p: int, label=None, classifier_id=-1, sample_id=-1):
        row = np.asarray(row, dtype=float)
        if row.shape != (n_meta_features(K, K_p),):
            raise ValueError("feature row length does not match K and K_p")
        return cls(row[:K].astype(np.int64), row[K:2 * K], float(row[2 * K]),
                   row[2 * K + 1:2 * K + 1 + K_p].astype(np.int64), float(row[-1]),
                   label, classifier_id, sample_id)


@dataclass(frozen=True, eq=False)
class MetaDataset:
    """Labeled meta-feature vectors, ordered by sample then classifier."""

    features: np.ndarray  # (n, F)
    labels: np.ndarray  # (n,) alpha
    classifier_ids: np.ndarray
    sample_ids: np.ndarray
    K: int
    K_p: int

    def __post_init__(self):
        F = n_meta_features(self.K, self.K_p)
        if self.features.ndim != 2 or self.features.shape[1] != F:
            raise ValueError(f"meta-features must have {F} columns")
        n = self.features.shape[0]
        for a in (self.labels, self.classifier_ids, self.sample_ids):
            if a.shape != (n,):
                raise ValueError("one label / classifier id / sample id per vector")

    def __len__(self):
        return self.features.shape[0]

    @property
    def vectors(self) -> list[MetaVector]:
        return [MetaVector.from_features(self.features[r], self.K, self.K_p, int(self.labels[r]),
                                         int(self.classifier_ids[r]), int(self.sample_ids[r]))
                for r in range(len(self))]

    def subset(self, rows) -> "MetaDataset":
        rows = np.asarray(rows, dtype=np.int64)
        return MetaDataset(self.features[rows], self.labels[rows], self.classifier_ids[rows],
                           self.sample_ids[rows], self.K, self.K_p)

    def column_names(self) -> list[str]:
        return ([f"f1_{k}" for k in range(self.K)] + [f"f2_{k}" for k in range(self.K)] + ["f3"]
                + [f"f4_{k}" for k in range(self.K_p)] + ["f5"])

    def to_csv(self, path):
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(self.column_names() + ["alpha", "classifier_id", "sample_id"])
            for r in range(len(self)):
                w.writerow([repr(float(v)) for v in self.features[r]]
                           + [int(self.labels[r]), int(self.classifier_ids[r]), int(self.sample_ids[r])])


class ReferenceCache:
    """Pool decisions and posteriors on a labeled reference set, computed once.

    Used for the meta-training set during meta-training and for D_SEL at
    query time.
    """

    def __init__(self, pool: Pool, data: Dataset):
        self.pool = pool
        self.data = data
        self.supports = pool.predict_proba(data.features)  # (M, N, L)
        self.predictions = pool.scores(data.features).argmax(axis=-1)  # (M, N)
        self.correct = self.predictions == data.labels[None, :]
        self.true_support = np.take_along_axis(
            self.supports, np.broadcast_to(data.labels[None, :, None], self.supports.shape[:2] + (1,)),
            axis=2)[..., 0]
        self.predicted_support = self.supports.max(axis=-1)
        self.profiles = np.ascontiguousarray(self.predictions.T)  # (N, M)

    def posterior(self, target: str) -> np.ndarray:
        if target == "true":
            return self.true_support
        if target == "predicted":
            return self.predicted_support
        raise ValueError(f"posterior target must be one of {POSTERIOR_TARGETS}")


def consensus_degree(pool: Pool, x) -> float:
    """Share of pool votes going to the plurality class."""
    votes = pool.predict(x)[:, 0]
    return float(np.bincount(votes, minlength=pool.n_classes).max() / len(pool))


def consensus_degrees(pool: Pool, X) -> np.ndarray:
    preds = pool.predict(X)  # (M, N)
    counts = np.stack([np.count_nonzero(preds == c, axis=0) for c in range(pool.n_classes)])
    return counts.max(axis=0) / len(pool)


def select_meta_training_samples(pool: Pool, data: Dataset, h_C: float) -> np.ndarray:
    """Rows whose consensus degree is strictly below ``h_C``."""
    if not 0.0 < h_C <= 1.0:
        raise ValueError("h_C must lie in (0, 1]")
    return np.flatnonzero(consensus_degrees(pool, data.features) < h_C)


def extract_meta_vector(c_index: int, pool: Pool, x, true_label: int | None,
                        region: RegionOfCompetence, region_data: Dataset,
                        profiles: ProfileNeighborhood, *, posterior: str = "true",
                        sample_id: int = -1) -> MetaVector:
    """Meta-feature vector of one pool member for one sample.

    ``posterior`` chooses which class f2 reads the member's posterior for:
    the neighbor's true class (default) or the member's own prediction.
    """
    if posterior not in POSTERIOR_TARGETS:
        raise ValueError(f"posterior target must be one of {POSTERIOR_TARGETS}")
    if profiles.profiles.ndim != 2 or profiles.profiles.shape[1] != len(pool):
        raise ValueError("profile neighborhood does not match the pool size")
    c = pool.member(c_index)
    Xn = region_data.features[region.neighbor_ids]
    yn = region_data.labels[region.neighbor_ids]
    proba = c.predict_proba(Xn)
    if posterior == "true":
        f2 = proba[np.arange(len(yn)), yn]
    else:
        f2 = proba.max(axis=1)
    f1 = (c.predict(Xn) == yn).astype(np.int64)
    f4 = (profiles.profiles[:, c_index] == profiles.labels).astype(np.int64)
    x = np.asarray(x, dtype=float)[None, :]
    f5 = float(boundary_distances(c.weights, c.biases, x)[0])
    label = None
    if true_label is not None:
        label = int(int(c.predict(x)[0]) == int(true_label))
    return MetaVector(f1, f2, float(f1.mean()), f4, f5, label, c_index, sample_id)


def meta_feature_block(cache: ReferenceCache, region: RegionOfCompetence,
                       neighborhood: ProfileNeighborhood, boundary: np.ndarray,
                       posterior: str = "true") -> np.ndarray:
    """(M, F) meta-features of every member for one sample.

    ``boundary`` holds each member's distance to its decision boundary at
    the sample. Row i equals ``extract_meta_vector(i, ...).features``.
    """
    ids = region.neighbor_ids
    f1 = cache.correct[:, ids].astype(float)
    f2 = cache.posterior(posterior)[:, ids]
    f3 = f1.mean(axis=1, keepdims=True)
    f4 = (neighborhood.profiles.T == neighborhood.labels[None, :]).astype(float)
    return np.hstack([f1, f2, f3, f4, np.asarray(boundary, dtype=float)[:, None]])


def build_meta_dataset(pool: Pool, meta_train: Dataset, K: int = 7, K_p: int = 5, h_C: float = 0.7,
                       *, sample_ids=None, posterior: str = "true") -> MetaDataset:
    """Labeled meta-feature vectors for every (selected sample, member) pair.

    Regions of competence and output-profile neighbors are searched inside
    ``meta_train`` itself, leaving the sample out. ``sample_ids`` bypasses
    the consensus selection.

    Raises
    ------
    EmptySelectionError
        When no sample has consensus below ``h_C``.
    """
    if sample_ids is None:
        sample_ids = select_meta_training_samples(pool, meta_train, h_C)
        if sample_ids.size == 0:
            raise EmptySelectionError(
                f"no meta-training sample has consensus below h_C={h_C}; lower h_C or use all samples")
    sample_ids = np.asarray(sample_ids, dtype=np.int64)
    cache = ReferenceCache(pool, meta_train)
    X = meta_train.features
    M = len(pool)
    boundary = pool.decision_distances(X[sample_ids]) if sample_ids.size else np.zeros((M, 0))
    blocks, alphas = [], []
    for col, j in enumerate(sample_ids):
        region = knn_region(X[j], meta_train, K, exclude=int(j))
        neigh = profile_neighbors(cache.profiles[j], cache.profiles, meta_train.labels, K_p, exclude=int(j))
        blocks.append(meta_feature_block(cache, region, neigh, boundary[:, col], posterior))
        alphas.append(cache.correct[:, j].astype(np.int64))
    F = n_meta_features(K, K_p)
    feats = np.vstack(blocks) if blocks else np.zeros((0, F))
    labels = np.concatenate(alphas) if alphas else np.zeros(0, np.int64)
    return MetaDataset(feats, labels, np.tile(np.arange(M), sample_ids.size),
                       np.repeat(sample_ids, M), K, K_p)
