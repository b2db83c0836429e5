"""Generalization phase: competence estimation and the three combination modes.

Mode ``S`` lets the members with competence above ``upsilon`` vote with
equal weight, ``W`` lets every member vote with its competence as weight,
and ``H`` lets the members above ``upsilon`` vote with their competences as
weights. When nobody clears ``upsilon`` (S and H) the single most competent
member decides.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .base import Pool
from .dataset import Dataset
from .metafeatures import POSTERIOR_TARGETS, ReferenceCache, meta_feature_block
from .region import knn_region, profile_neighbors

MODES = ("S", "W", "H")


@dataclass(frozen=True)
class DesConfig:
    K: int = 7
    K_p: int = 5
    h_C: float = 0.70
    upsilon: float = 0.5
    mode: str = "H"
    posterior: str = "true"

    def __post_init__(self):
        if self.K < 1 or self.K_p < 1:
            raise ValueError("K and K_p must be at least 1")
        if not 0.0 < self.h_C <= 1.0:
            raise ValueError("h_C must lie in (0, 1]")
        if not 0.0 < self.upsilon < 1.0:
            raise ValueError("upsilon must lie in (0, 1)")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.posterior not in POSTERIOR_TARGETS:
            raise ValueError(f"posterior must be one of {POSTERIOR_TARGETS}")


@dataclass(frozen=True, eq=False)
class CompetenceProfile:
    deltas: np.ndarray  # (M,)
    query_id: int = -1

    def __len__(self):
        return self.deltas.shape[0]


@dataclass
class QueryOutcome:
    label: int
    selected: np.ndarray
    fallback: bool = False
    diagnostics: dict = field(default_factory=dict)


def _decide(totals: np.ndarray, tiebreak_supports) -> int:
    best = np.flatnonzero(totals == totals.max())
    if best.size > 1 and tiebreak_supports is not None:
        s = np.asarray(tiebreak_supports, dtype=float)[best]
        best = best[s == s.max()]
    return int(best[0])


def majority_vote(labels, tiebreak_supports=None, n_classes: int | None = None) -> int:
    """Plurality label.

    Vote ties go to the tied class with the highest ``tiebreak_supports``
    entry (the voters' mean posterior per class), then to the lowest index.
    """
    labels = np.asarray(labels, dtype=np.int64)
    L = n_classes or (len(tiebreak_supports) if tiebreak_supports is not None else int(labels.max()) + 1)
    return _decide(np.bincount(labels, minlength=L), tiebreak_supports)


def weighted_majority_vote(labels, weights, tiebreak_supports=None, n_classes: int | None = None) -> int:
    """Class with the largest summed weight, ties as in :func:`majority_vote`."""
    labels = np.asarray(labels, dtype=np.int64)
    weights = np.asarray(weights, dtype=float)
    if weights.shape != labels.shape:
        raise ValueError("one weight per label")
    if np.any(weights < 0):
        raise ValueError("weights must be non-negative")
    L = n_classes or (len(tiebreak_supports) if tiebreak_supports is not None else int(labels.max()) + 1)
    return _decide(np.bincount(labels, weights=weights, minlength=L), tiebreak_supports)


def combine(deltas, votes, supports, mode: str, upsilon: float = 0.5) -> QueryOutcome:
    """Apply one combination mode to a query's member decisions.

    Parameters
    ----------
    deltas : array of shape (M,)
        Competence of each member.
    votes : array of shape (M,)
        Each member's predicted class.
    supports : array of shape (M, L)
        Each member's posterior estimates, used to break vote ties.
    """
    deltas = np.asarray(deltas, dtype=float)
    votes = np.asarray(votes, dtype=np.int64)
    supports = np.asarray(supports, dtype=float)
    L = supports.shape[1]
    if mode == "W":
        selected = np.arange(deltas.size)
    elif mode in ("S", "H"):
        selected = np.flatnonzero(deltas > upsilon)
    else:
        raise ValueError(f"mode must be one of {MODES}")
    if selected.size == 0:
        best = int(np.argmax(deltas))
        return QueryOutcome(int(votes[best]), np.array([best]), True)
    tie = supports[selected].mean(axis=0)
    if mode == "S":
        label = majority_vote(votes[selected], tie, L)
    else:
        label = weighted_majority_vote(votes[selected], deltas[selected], tie, L)
    return QueryOutcome(label, selected, False)


def estimate_competences(pool: Pool, model, x, dsel: Dataset, dsel_profiles: ReferenceCache | None = None,
                         cfg: DesConfig = DesConfig(), query_id: int = -1) -> CompetenceProfile:
    """Competence of every member for query ``x``, judged around it in D_SEL.

    ``dsel_profiles`` is the precomputed pool behavior on D_SEL; it is built
    on the fly when omitted.
    """
    cache = dsel_profiles if dsel_profiles is not None else ReferenceCache(pool, dsel)
    x = np.asarray(x, dtype=float).ravel()
    region = knn_region(x, dsel, cfg.K)
    query_profile = pool.predict(x[None, :])[:, 0]
    neigh = profile_neighbors(query_profile, cache.profiles, dsel.labels, cfg.K_p)
    block = meta_feature_block(cache, region, neigh, pool.decision_distances(x[None, :])[:, 0], cfg.posterior)
    return CompetenceProfile(np.asarray(model.competence(block), dtype=float), query_id)


def classify_query(pool: Pool, model, x, dsel: Dataset, cfg: DesConfig = DesConfig(),
                   cache: ReferenceCache | None = None) -> tuple[int, dict]:
    """Predict one query; returns the label and a diagnostics record."""
    prof = estimate_competences(pool, model, x, dsel, cache, cfg)
    x2 = np.asarray(x, dtype=float).reshape(1, -1)
    out = combine(prof.deltas, pool.predict(x2)[:, 0], pool.predict_proba(x2)[:, 0, :], cfg.mode, cfg.upsilon)
    return out.label, {"mode": cfg.mode, "selected": out.selected.tolist(), "deltas": prof.deltas.tolist(),
                       "label": out.label, "fallback": out.fallback}


@dataclass
class Evaluation:
    accuracy: float
    predictions: np.ndarray
    diagnostics: list


def evaluate_modes(pool: Pool, model, test: Dataset, dsel: Dataset, cfg: DesConfig = DesConfig(),
                   modes=MODES, cache: ReferenceCache | None = None) -> dict[str, Evaluation]:
    """Evaluate several combination modes while estimating competences once per query."""
    for m in modes:
        if m not in MODES:
            raise ValueError(f"unknown mode {m!r}")
    cache = cache if cache is not None else ReferenceCache(pool, dsel)
    votes = pool.predict(test.features)  # (M, T)
    proba = pool.predict_proba(test.features)  # (M, T, L)
    preds = {m: np.empty(len(test), np.int64) for m in modes}
    diags = {m: [] for m in modes}
    for j in range(len(test)):
        prof = estimate_competences(pool, model, test.features[j], dsel, cache, cfg, j)
        for m in modes:
            out = combine(prof.deltas, votes[:, j], proba[:, j, :], m, cfg.upsilon)
            preds[m][j] = out.label
            diags[m].append({"method": f"META-DES.{m}", "query_id": j,
                             "selected": out.selected.tolist(), "deltas": prof.deltas.tolist(),
                             "label": out.label, "true_label": int(test.labels[j]),
                             "fallback": out.fallback})
    return {m: Evaluation(float(np.mean(preds[m] == test.labels)), preds[m], diags[m]) for m in modes}


def evaluate(pool: Pool, model, test: Dataset, dsel: Dataset, cfg: DesConfig = DesConfig()) -> Evaluation:
    """Accuracy of ``cfg.mode`` on ``test`` plus one diagnostics record per query."""
    return evaluate_modes(pool, model, test, dsel, cfg, (cfg.mode,))[cfg.mode]
