"""Classical dynamic selection techniques used for comparison.

Each technique takes a pool, a query ``x`` and the labeled D_SEL set and
returns a class index. ``correct[i, k]`` below means member i classifies
region neighbor k correctly.

* KNORA-E: members with ``correct[i, :]`` all true vote; K shrinks until
  someone qualifies, the whole pool votes if nobody does at K=1.
* KNORA-U: member i gets ``sum_k correct[i, k]`` votes.
* OLA: the member maximizing ``mean_k correct[i, k]`` decides.
* LCA: as OLA over the neighbors whose label equals member i's prediction
  for ``x``; score 0 when there are none.
* MLA: LCA with neighbor k weighted by ``1 / (d_k + eps)``.
* MCB: OLA over the neighbors whose output profile agrees with the query's
  on at least ``similarity_threshold`` of the members (all neighbors when
  none qualify).
* KNOP: KNORA-U over the K_p D_SEL samples with the nearest output
  profiles instead of the feature-space neighbors.

Ties between single-classifier scores go to the lower member index.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .base import Pool
from .dataset import Dataset
from .descore import majority_vote, weighted_majority_vote
from .metafeatures import ReferenceCache
from .region import knn_region, profile_neighbors

MCB_THRESHOLD = 0.7
MLA_EPSILON = 1e-12


class Decision(NamedTuple):
    label: int
    selected: np.ndarray  # members that voted or decided
    scores: np.ndarray  # per-member competence score the technique used
    fallback: bool = False


def _query(pool: Pool, x):
    x2 = np.asarray(x, dtype=float).reshape(1, -1)
    return pool.predict(x2)[:, 0], pool.predict_proba(x2)[:, 0, :]


def _vote(votes, supports, members, weights=None) -> int:
    members = np.asarray(members, dtype=np.int64)
    tie = supports[members].mean(axis=0)
    if weights is None:
        return majority_vote(votes[members], tie, supports.shape[1])
    return weighted_majority_vote(votes[members], weights, tie, supports.shape[1])


def _single(votes, scores) -> Decision:
    best = int(np.argmax(scores))
    return Decision(int(votes[best]), np.array([best]), scores)


def _cache(pool, dsel, cache):
    return cache if cache is not None else ReferenceCache(pool, dsel)


def _knora_e(pool, x, dsel, K, cache) -> Decision:
    votes, supports = _query(pool, x)
    region = knn_region(x, dsel, K)
    correct = cache.correct[:, region.neighbor_ids]
    for k in range(K, 0, -1):
        selected = np.flatnonzero(correct[:, :k].all(axis=1))
        if selected.size:
            return Decision(_vote(votes, supports, selected), selected, correct.sum(axis=1).astype(float))
    everyone = np.arange(len(pool))
    return Decision(_vote(votes, supports, everyone), everyone, np.zeros(len(pool)), True)


def _union(votes, supports, correct) -> Decision:
    weights = correct.sum(axis=1).astype(float)
    if not weights.any():
        # nobody is right on any neighbor: plain pool vote
        everyone = np.arange(votes.size)
        return Decision(_vote(votes, supports, everyone), everyone, weights, True)
    members = np.flatnonzero(weights > 0)
    return Decision(_vote(votes, supports, members, weights[members]), members, weights)


def _knora_u(pool, x, dsel, K, cache) -> Decision:
    votes, supports = _query(pool, x)
    region = knn_region(x, dsel, K)
    return _union(votes, supports, cache.correct[:, region.neighbor_ids])


def _ola(pool, x, dsel, K, cache) -> Decision:
    votes, _ = _query(pool, x)
    region = knn_region(x, dsel, K)
    return _single(votes, cache.correct[:, region.neighbor_ids].mean(axis=1))


def _class_restricted(votes, correct, neighbor_labels, weights) -> np.ndarray:
    """Weighted accuracy of each member over the neighbors labeled with its own prediction."""
    same = neighbor_labels[None, :] == votes[:, None]  # (M, K)
    den = (same * weights[None, :]).sum(axis=1)
    num = ((same & correct) * weights[None, :]).sum(axis=1)
    return np.divide(num, den, out=np.zeros_like(den), where=den > 0)


def _lca(pool, x, dsel, K, cache) -> Decision:
    votes, _ = _query(pool, x)
    ids = knn_region(x, dsel, K).neighbor_ids
    return _single(votes, _class_restricted(votes, cache.correct[:, ids], dsel.labels[ids], np.ones(ids.size)))


def _mla(pool, x, dsel, K, cache, epsilon=MLA_EPSILON) -> Decision:
    votes, _ = _query(pool, x)
    region = knn_region(x, dsel, K)
    ids = region.neighbor_ids
    weights = 1.0 / (region.distances + epsilon)
    return _single(votes, _class_restricted(votes, cache.correct[:, ids], dsel.labels[ids], weights))


def _mcb(pool, x, dsel, K, cache, similarity_threshold=MCB_THRESHOLD) -> Decision:
    votes, _ = _query(pool, x)
    ids = knn_region(x, dsel, K).neighbor_ids
    agreement = (cache.profiles[ids] == votes[None, :]).mean(axis=1)
    kept = ids[agreement >= similarity_threshold]
    d = _single(votes, cache.correct[:, kept if kept.size else ids].mean(axis=1))
    return d._replace(fallback=kept.size == 0)


def _knop(pool, x, dsel, K, cache) -> Decision:
    votes, supports = _query(pool, x)
    neigh = profile_neighbors(votes, cache.profiles, dsel.labels, K)
    return _union(votes, supports, cache.correct[:, neigh.profile_ids])


def _majority(pool, x, dsel, K, cache) -> Decision:
    votes, supports = _query(pool, x)
    everyone = np.arange(len(pool))
    return Decision(_vote(votes, supports, everyone), everyone, np.ones(len(pool)))


def knora_eliminate(pool: Pool, x, dsel: Dataset, K: int = 7, cache=None) -> int:
    return _knora_e(pool, x, dsel, K, _cache(pool, dsel, cache)).label


def knora_union(pool: Pool, x, dsel: Dataset, K: int = 7, cache=None) -> int:
    return _knora_u(pool, x, dsel, K, _cache(pool, dsel, cache)).label


def ola(pool: Pool, x, dsel: Dataset, K: int = 7, cache=None) -> int:
    return _ola(pool, x, dsel, K, _cache(pool, dsel, cache)).label


def lca(pool: Pool, x, dsel: Dataset, K: int = 7, cache=None) -> int:
    return _lca(pool, x, dsel, K, _cache(pool, dsel, cache)).label


def mla(pool: Pool, x, dsel: Dataset, K: int = 7, cache=None, epsilon: float = MLA_EPSILON) -> int:
    return _mla(pool, x, dsel, K, _cache(pool, dsel, cache), epsilon).label


def mcb(pool: Pool, x, dsel: Dataset, K: int = 7, cache=None,
        similarity_threshold: float = MCB_THRESHOLD) -> int:
    return _mcb(pool, x, dsel, K, _cache(pool, dsel, cache), similarity_threshold).label


def knop(pool: Pool, x, dsel: Dataset, K_profiles: int = 7, cache=None) -> int:
    return _knop(pool, x, dsel, K_profiles, _cache(pool, dsel, cache)).label


def pool_majority(pool: Pool, x, dsel: Dataset | None = None, K: int = 7, cache=None) -> int:
    """Static reference: every member votes with equal weight."""
    return _majority(pool, x, dsel, K, cache).label


BASELINES = {
    "KNORA-E": _knora_e,
    "KNORA-U": _knora_u,
    "OLA": _ola,
    "LCA": _lca,
    "MLA": _mla,
    "MCB": _mcb,
    "KNOP": _knop,
}
REFERENCE_METHODS = {"majority": _majority}


def run_baseline(name: str, pool: Pool, test: Dataset, dsel: Dataset, K: int = 7,
                 cache: ReferenceCache | None = None, **options):
    """Evaluate one technique on ``test``.

    Returns accuracy, predictions and one diagnostics record per query.
    ``options`` go to the technique (``epsilon`` for MLA,
    ``similarity_threshold`` for MCB).
    """
    fn = BASELINES.get(name) or REFERENCE_METHODS.get(name)
    if fn is None:
        raise ValueError(f"unknown method {name!r}")
    cache = _cache(pool, dsel, cache)
    preds = np.empty(len(test), np.int64)
    diags = []
    for j in range(len(test)):
        d = fn(pool, test.features[j], dsel, K, cache, **options)
        preds[j] = d.label
        diags.append({"method": name, "query_id": j, "selected": d.selected.tolist(),
                      "deltas": d.scores.tolist(), "label": d.label,
                      "true_label": int(test.labels[j]), "fallback": bool(d.fallback)})
    return float(np.mean(preds == test.labels)), preds, diags
