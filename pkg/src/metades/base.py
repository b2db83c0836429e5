"""Perceptron base classifiers and bagged pools.

All score arithmetic goes through :func:`affine`, which accumulates the dot
product one feature at a time with elementwise operations only. The result
for a given row is therefore bit-identical whether it is computed alone or
inside a batch, and whether one classifier or a whole pool is evaluated.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import Dataset

POOL_FORMAT = "metades-pool"
POOL_VERSION = 1
MAX_BOOTSTRAP_RETRIES = 100


def seqsum(a: np.ndarray) -> np.ndarray:
    """Sum over the last axis, strictly left to right."""
    out = a[..., 0].copy()
    for k in range(1, a.shape[-1]):
        out += a[..., k]
    return out


def affine(X: np.ndarray, W: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Per-class scores ``X @ W.T + B`` with a fixed summation order.

    ``X`` is ``(N, D)``; ``W`` is ``(L, D)`` or ``(M, L, D)`` with ``B`` of
    matching leading shape. Returns ``(N, L)`` or ``(M, N, L)``.
    """
    Wt = W[..., None, :, :]  # (..., 1, L, D)
    Xe = X[:, None, :]  # (N, 1, D)
    s = Xe[..., 0] * Wt[..., 0]
    for d in range(1, X.shape[1]):
        s = s + Xe[..., d] * Wt[..., d]
    return s + B[..., None, :]


def softmax(scores: np.ndarray, slope: float = 1.0) -> np.ndarray:
    z = slope * scores
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / seqsum(e)[..., None]


def boundary_distances(W: np.ndarray, B: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Distance from each row of ``X`` to the nearest boundary of its predicted class.

    For the predicted class ``p`` and every other class ``q`` the pairwise
    boundary is ``(w_p - w_q) . x + (b_p - b_q) = 0``; the minimum
    point-to-hyperplane distance over ``q`` is returned. Boundaries with a
    zero normal contribute distance 0. Shapes follow :func:`affine`.
    """
    W3 = W if W.ndim == 3 else W[None]
    B2 = B if B.ndim == 2 else B[None]
    M, L, D = W3.shape
    pred = affine(X, W3, B2).argmax(axis=-1)  # (M, N)
    m = np.arange(M)[:, None]
    dW = W3[m, pred][:, :, None, :] - W3[:, None, :, :]  # (M, N, L, D)
    dB = B2[m, pred][:, :, None] - B2[:, None, :]  # (M, N, L)
    num = dW[..., 0] * X[None, :, None, 0]
    sq = dW[..., 0] * dW[..., 0]
    for d in range(1, D):
        num = num + dW[..., d] * X[None, :, None, d]
        sq = sq + dW[..., d] * dW[..., d]
    num = np.abs(num + dB)
    norm = np.sqrt(sq)
    with np.errstate(divide="ignore", invalid="ignore"):
        dist = np.where(norm > 0, num / np.where(norm > 0, norm, 1.0), 0.0)
    dist[np.arange(L)[None, None, :] == pred[..., None]] = np.inf
    out = dist.min(axis=-1)
    out[~np.isfinite(out)] = 0.0  # L == 1
    return out if W.ndim == 3 else out[0]


@dataclass(frozen=True, eq=False)
class LinearClassifier:
    """Per-class linear scores with an argmax decision.

    ``slope`` scales the scores before the softmax that turns them into
    posterior estimates; for two classes this is the logistic sigmoid of
    the signed margin.
    """

    weights: np.ndarray  # (L, D)
    biases: np.ndarray  # (L,)
    slope: float = 1.0

    def __post_init__(self):
        W = np.array(self.weights, dtype=float)
        b = np.array(self.biases, dtype=float)
        if W.ndim != 2 or b.shape != (W.shape[0],):
            raise ValueError("weights must be (L, D) and biases (L,)")
        if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
            raise ValueError("classifier parameters must be finite")
        W.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "weights", W)
        object.__setattr__(self, "biases", b)

    @property
    def n_classes(self) -> int:
        return self.weights.shape[0]

    def scores(self, X) -> np.ndarray:
        return affine(np.atleast_2d(np.asarray(X, dtype=float)), self.weights, self.biases)

    def predict(self, X) -> np.ndarray:
        return self.scores(X).argmax(axis=-1)

    def predict_proba(self, X) -> np.ndarray:
        return softmax(self.scores(X), self.slope)


def classify(c: LinearClassifier, x) -> int:
    """Index of the highest score; ties go to the lowest class index."""
    return int(c.predict(x)[0])


def supports(c: LinearClassifier, x) -> np.ndarray:
    return c.predict_proba(x)[0]


def decision_distance(c: LinearClassifier, x) -> float:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    return float(boundary_distances(c.weights, c.biases, x)[0])


@dataclass(frozen=True, eq=False)
class Pool:
    """M linear classifiers stored as stacked parameter arrays.

    Attributes
    ----------
    weights : array of shape (M, L, D)
    biases : array of shape (M, L)
    trained_on : tuple of arrays
        Bootstrap row indices each member was trained on.
    slope : float
    """

    weights: np.ndarray
    biases: np.ndarray
    trained_on: tuple = ()
    slope: float = 1.0

    def __post_init__(self):
        W = np.array(self.weights, dtype=float)
        B = np.array(self.biases, dtype=float)
        if W.ndim != 3 or B.shape != W.shape[:2] or W.shape[0] < 1:
            raise ValueError("pool weights must be (M, L, D) with M >= 1 and biases (M, L)")
        W.setflags(write=False)
        B.setflags(write=False)
        object.__setattr__(self, "weights", W)
        object.__setattr__(self, "biases", B)
        object.__setattr__(self, "trained_on", tuple(np.asarray(t, dtype=np.int64) for t in self.trained_on))

    @classmethod
    def from_members(cls, members, trained_on=()) -> "Pool":
        members = list(members)
        return cls(np.stack([m.weights for m in members]), np.stack([m.biases for m in members]),
                   trained_on, members[0].slope)

    def __len__(self):
        return self.weights.shape[0]

    @property
    def n_classes(self) -> int:
        return self.weights.shape[1]

    @property
    def n_features(self) -> int:
        return self.weights.shape[2]

    def member(self, i: int) -> LinearClassifier:
        return LinearClassifier(self.weights[i], self.biases[i], self.slope)

    @property
    def members(self) -> list[LinearClassifier]:
        return [self.member(i) for i in range(len(self))]

    def scores(self, X) -> np.ndarray:
        """(M, N, L) scores of every member on every row."""
        return affine(np.atleast_2d(np.asarray(X, dtype=float)), self.weights, self.biases)

    def predict(self, X) -> np.ndarray:
        return self.scores(X).argmax(axis=-1)

    def predict_proba(self, X) -> np.ndarray:
        return softmax(self.scores(X), self.slope)

    def decision_distances(self, X) -> np.ndarray:
        """(M, N) boundary distances, see :func:`boundary_distances`."""
        return boundary_distances(self.weights, self.biases, np.atleast_2d(np.asarray(X, dtype=float)))

    def to_json(self) -> str:
        M, L, D = self.weights.shape
        doc = {
            "format": POOL_FORMAT,
            "version": POOL_VERSION,
            "M": M, "D": D, "L": L,
            "slope": self.slope,
            "weights": self.weights.ravel().tolist(),
            "biases": self.biases.ravel().tolist(),
            "trained_on": [t.tolist() for t in self.trained_on],
        }
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> "Pool":
        doc = json.loads(text)
        if doc.get("format") != POOL_FORMAT or doc.get("version") != POOL_VERSION:
            raise ValueError("not a version-1 pool document")
        M, L, D = doc["M"], doc["L"], doc["D"]
        return cls(np.array(doc["weights"], dtype=float).reshape(M, L, D),
                   np.array(doc["biases"], dtype=float).reshape(M, L),
                   doc["trained_on"], doc["slope"])

    def save(self, path):
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Pool":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def _fit_lockstep(X, y, n_classes, samples, rngs, epochs, learning_rate):
    """Train one perceptron per entry of ``samples`` side by side.

    ``samples[m]`` holds the row indices (into ``X``) of member m's training
    set and ``rngs[m]`` draws its per-epoch visiting order. Updates are the
    multi-class (Kesler) rule: on a mistake the true class row moves towards
    ``x`` and the predicted class row away from it.
    """
    M, n = samples.shape
    D = X.shape[1]
    W = np.zeros((M, n_classes, D))
    B = np.zeros((M, n_classes))
    members = np.arange(M)
    for _ in range(epochs):
        order = np.stack([samples[m][rngs[m].permutation(n)] for m in range(M)])
        for t in range(n):
            rows = order[:, t]
            xb = X[rows]  # (M, D)
            yb = y[rows]
            s = xb[:, None, 0] * W[..., 0]
            for d in range(1, D):
                s = s + xb[:, None, d] * W[..., d]
            pred = (s + B).argmax(axis=1)
            wrong = members[pred != yb]
            if wrong.size:
                step = learning_rate * xb[wrong]
                W[wrong, yb[wrong]] += step
                W[wrong, pred[wrong]] -= step
                B[wrong, yb[wrong]] += learning_rate
                B[wrong, pred[wrong]] -= learning_rate
    return W, B


def train_perceptron(data: Dataset, epochs: int = 100, learning_rate: float = 0.1, seed: int = 0,
                     slope: float = 1.0) -> LinearClassifier:
    """Online multi-class perceptron, rows reshuffled every epoch."""
    if epochs < 1 or learning_rate <= 0:
        raise ValueError("epochs must be >= 1 and learning_rate > 0")
    samples = np.arange(len(data))[None, :]
    W, B = _fit_lockstep(data.features, data.labels, data.n_classes, samples,
                         [np.random.default_rng(seed)], epochs, learning_rate)
    return LinearClassifier(W[0], B[0], slope)


def bootstrap_indices(labels: np.ndarray, n_classes: int, rng: np.random.Generator) -> np.ndarray:
    """An N-sample bootstrap containing every class, redrawn when one is missing."""
    n = labels.shape[0]
    for _ in range(MAX_BOOTSTRAP_RETRIES + 1):
        idx = rng.integers(0, n, n)
        if np.unique(labels[idx]).size == n_classes:
            return idx
    raise ValueError(f"bootstrap missed a class {MAX_BOOTSTRAP_RETRIES + 1} times in a row; "
                     "some class is too rare to bag")


def member_streams(seed: int, M: int):
    """Independent generators for each member, derived from ``seed``."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(M)]


def bagging_pool(data: Dataset, M: int = 100, epochs: int = 100, learning_rate: float = 0.1,
                 seed: int = 0, slope: float = 1.0) -> Pool:
    """Train ``M`` perceptrons on bootstrap replicates of ``data``.

    Member m draws its bootstrap from its own stream and then a training
    seed, so ``train_perceptron(data.subset(pool.trained_on[m]), seed=...)``
    reproduces it exactly.
    """
    if M < 1:
        raise ValueError("pool size must be >= 1")
    if epochs < 1 or learning_rate <= 0:
        raise ValueError("epochs must be >= 1 and learning_rate > 0")
    boots, rngs = [], []
    for stream in member_streams(seed, M):
        boots.append(bootstrap_indices(data.labels, data.n_classes, stream))
        rngs.append(np.random.default_rng(int(stream.integers(2 ** 63))))
    samples = np.stack(boots)
    W, B = _fit_lockstep(data.features, data.labels, data.n_classes, samples, rngs, epochs, learning_rate)
    return Pool(W, B, tuple(boots), slope)


def member_training_seed(seed: int, m: int, data: Dataset) -> int:
    """Training seed bagging_pool hands to member ``m`` (for audits)."""
    stream = member_streams(seed, m + 1)[m]
    bootstrap_indices(data.labels, data.n_classes, stream)
    return int(stream.integers(2 ** 63))
