"""Gaussian Naive Bayes meta-classifier over meta-feature vectors.

Any object exposing ``competence(X) -> array`` (probability of the
competent meta-class for each row of ``X``) can stand in for
:class:`NaiveBayesModel` in the generalization phase.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .base import seqsum
from .dataset import stratified_indices
from .metafeatures import MetaDataset, MetaVector, n_meta_features

MODEL_FORMAT = "metades-naive-bayes"
FLOOR_SCALE = 1e-9
FLOOR_MIN = 1e-12


@dataclass(frozen=True, eq=False)
class NaiveBayesModel:
    """Class priors and per-feature normal densities for the two meta-classes.

    Row 0 of ``means``/``variances`` is the incompetent class, row 1 the
    competent one.
    """

    priors: np.ndarray  # (2,)
    means: np.ndarray  # (2, F)
    variances: np.ndarray  # (2, F)
    variance_floor: float
    K: int
    K_p: int
    validation_accuracy: float | None = None

    def __post_init__(self):
        F = n_meta_features(self.K, self.K_p)
        priors = np.asarray(self.priors, dtype=float)
        means = np.asarray(self.means, dtype=float)
        variances = np.asarray(self.variances, dtype=float)
        if priors.shape != (2,) or means.shape != (2, F) or variances.shape != (2, F):
            raise ValueError(f"expected priors (2,), means and variances (2, {F})")
        if self.variance_floor <= 0 or np.any(variances < self.variance_floor):
            raise ValueError("variances must be at least the positive variance floor")
        if abs(priors.sum() - 1.0) > 1e-12 or np.any(priors < 0):
            raise ValueError("priors must be a probability vector")
        object.__setattr__(self, "priors", priors)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "variances", variances)

    @property
    def n_features(self) -> int:
        return self.means.shape[1]

    def joint_log_likelihood(self, X) -> np.ndarray:
        """(n, 2) log prior plus summed Gaussian log densities."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} meta-features, got {X.shape[1]}")
        diff = X[:, None, :] - self.means[None]
        logpdf = -0.5 * np.log(2.0 * np.pi * self.variances)[None] - diff * diff / (2.0 * self.variances[None])
        with np.errstate(divide="ignore"):
            log_prior = np.log(self.priors)
        return seqsum(logpdf) + log_prior[None]

    def predict_proba(self, X) -> np.ndarray:
        jll = self.joint_log_likelihood(X)
        top = jll.max(axis=1, keepdims=True)
        e = np.exp(jll - top)
        return e / (e[:, :1] + e[:, 1:])

    def competence(self, X) -> np.ndarray:
        """Probability of the competent meta-class for each row."""
        return self.predict_proba(X)[:, 1]

    def predict(self, X) -> np.ndarray:
        return self.predict_proba(X).argmax(axis=1)

    def to_json(self) -> str:
        return json.dumps({
            "format": MODEL_FORMAT,
            "K": self.K, "K_p": self.K_p, "F": self.n_features,
            "priors": self.priors.tolist(),
            "means": self.means.tolist(),
            "variances": self.variances.tolist(),
            "variance_floor": self.variance_floor,
            "validation_accuracy": self.validation_accuracy,
        })

    @classmethod
    def from_json(cls, text: str) -> "NaiveBayesModel":
        doc = json.loads(text)
        if doc.get("format") != MODEL_FORMAT:
            raise ValueError("not a Naive Bayes model document")
        model = cls(np.array(doc["priors"]), np.array(doc["means"]), np.array(doc["variances"]),
                    doc["variance_floor"], doc["K"], doc["K_p"], doc["validation_accuracy"])
        if model.n_features != doc["F"]:
            raise ValueError("feature count does not match K and K_p")
        return model

    def save(self, path):
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "NaiveBayesModel":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def fit_naive_bayes(X, alpha, K: int, K_p: int, variance_floor: float | None = None) -> NaiveBayesModel:
    """Maximum-likelihood fit on meta-feature rows ``X`` with labels ``alpha``.

    Variances are clamped from below; by default the floor is ``1e-9`` times
    the largest per-feature variance of ``X``, and never below ``1e-12``.
    """
    X = np.asarray(X, dtype=float)
    alpha = np.asarray(alpha)
    if np.unique(alpha).size < 2:
        raise ValueError("meta-classifier training data holds a single meta-class")
    if variance_floor is None:
        variance_floor = max(FLOOR_SCALE * float(X.var(axis=0).max()), FLOOR_MIN)
    means = np.empty((2, X.shape[1]))
    variances = np.empty((2, X.shape[1]))
    priors = np.empty(2)
    for c in (0, 1):
        Xc = X[alpha == c]
        means[c] = Xc.mean(axis=0)
        variances[c] = np.maximum(((Xc - means[c]) ** 2).mean(axis=0), variance_floor)
        priors[c] = Xc.shape[0] / X.shape[0]
    return NaiveBayesModel(priors, means, variances, variance_floor, K, K_p)


def train_meta(meta: MetaDataset, train_fraction: float = 0.75, seed: int = 0,
               variance_floor: float | None = None) -> NaiveBayesModel:
    """Fit on a split of ``meta`` stratified by meta-class; score the rest.

    Naive Bayes needs no early stopping, so the held-out part only yields
    ``validation_accuracy`` (None when it is empty).
    """
    if not 0.0 < train_fraction <= 1.0:
        raise ValueError("train_fraction must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    if train_fraction < 1.0:
        fit_rows, val_rows = stratified_indices(meta.labels, [train_fraction, 1.0 - train_fraction], rng, 2)
    else:
        fit_rows, val_rows = np.arange(len(meta)), np.empty(0, np.int64)
    model = fit_naive_bayes(meta.features[fit_rows], meta.labels[fit_rows], meta.K, meta.K_p, variance_floor)
    acc = None
    if val_rows.size:
        acc = float(np.mean(model.predict(meta.features[val_rows]) == meta.labels[val_rows]))
    return NaiveBayesModel(model.priors, model.means, model.variances, model.variance_floor,
                           model.K, model.K_p, acc)


def competence(model, v) -> float:
    """Competence level of a single meta-feature vector (or raw row)."""
    row = v.features if isinstance(v, MetaVector) else np.asarray(v, dtype=float)
    return float(model.competence(row[None, :])[0])
