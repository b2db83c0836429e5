"""Regions of competence in feature space and neighborhoods in decision space."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .base import Pool, seqsum
from .dataset import Dataset


@dataclass(frozen=True, eq=False)
class RegionOfCompetence:
    neighbor_ids: np.ndarray  # (K,) rows of the reference dataset
    distances: np.ndarray  # (K,) ascending

    def __len__(self):
        return self.neighbor_ids.shape[0]


@dataclass(frozen=True, eq=False)
class OutputProfile:
    entries: np.ndarray  # (M,) decision of each pool member


@dataclass(frozen=True, eq=False)
class ProfileNeighborhood:
    """The K_p reference samples whose output profiles are closest to a query's.

    ``profiles`` keeps the selected reference profiles, so ``profiles[k, i]``
    is member i's decision on the k-th selected sample.
    """

    profile_ids: np.ndarray  # (K_p,)
    labels: np.ndarray  # (K_p,) true label of each selected sample
    distances: np.ndarray  # (K_p,)
    profiles: np.ndarray  # (K_p, M)

    def __len__(self):
        return self.profile_ids.shape[0]


def _smallest(d2: np.ndarray, k: int, exclude) -> np.ndarray:
    candidates = np.arange(d2.shape[0])
    if exclude is not None:
        candidates = candidates[candidates != exclude]
    if candidates.size < k:
        raise ValueError(f"need {k} reference rows, only {candidates.size} available")
    # stable sort keeps the lower index first among equal distances
    return candidates[np.argsort(d2[candidates], kind="stable")[:k]]


def knn_region(x, reference: Dataset, K: int, exclude: int | None = None) -> RegionOfCompetence:
    """The K reference rows closest to ``x`` in Euclidean distance.

    ``exclude`` drops one reference row (the query itself during
    meta-training). Ties go to the lower row index.
    """
    if K < 1:
        raise ValueError("K must be positive")
    x = np.asarray(x, dtype=float).ravel()
    diff = reference.features - x
    d2 = seqsum(diff * diff)
    ids = _smallest(d2, K, exclude)
    return RegionOfCompetence(ids, np.sqrt(d2[ids]))


def output_profile(pool: Pool, x) -> OutputProfile:
    return OutputProfile(pool.predict(x)[:, 0])


def output_profiles(pool: Pool, X) -> np.ndarray:
    """(N, M) matrix whose rows are the output profiles of ``X``."""
    return pool.predict(X).T


def profile_distance(a, b) -> float:
    """Euclidean distance between one-hot encoded output profiles.

    Each disagreeing member contributes two unit differences, so the squared
    distance is twice the number of disagreements.
    """
    a = np.asarray(getattr(a, "entries", a))
    b = np.asarray(getattr(b, "entries", b))
    return float(np.sqrt(2.0 * np.count_nonzero(a != b)))


def profile_neighbors(query_profile, reference_profiles, reference_labels, K_p: int,
                      exclude: int | None = None) -> ProfileNeighborhood:
    """The K_p reference profiles nearest to ``query_profile``; ties to the lower index."""
    if K_p < 1:
        raise ValueError("K_p must be positive")
    q = np.asarray(getattr(query_profile, "entries", query_profile))
    if isinstance(reference_profiles, np.ndarray):
        R = reference_profiles
    else:
        R = np.array([np.asarray(getattr(p, "entries", p)) for p in reference_profiles])
    d2 = 2.0 * np.count_nonzero(R != q[None, :], axis=1)
    ids = _smallest(d2, K_p, exclude)
    labels = np.asarray(reference_labels)[ids]
    return ProfileNeighborhood(ids, labels, np.sqrt(d2[ids]), R[ids])
