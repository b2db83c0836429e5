"""Rank-based comparisons: Kruskal-Wallis, Wilcoxon signed-rank, Friedman mean ranks."""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np
from scipy import stats as sps

EXACT_MAX_N = 25
_CELL = re.compile(r"^\s*([-+]?[0-9]*\.?[0-9]+(?:[eE][-+]?\d+)?)\s*(?:\(\s*([-+]?[0-9]*\.?[0-9]+)\s*\))?")


@dataclass(frozen=True, eq=False)
class AccuracyTable:
    """Mean (and std) accuracy in percent, one row per dataset, one column per method."""

    methods: tuple[str, ...]
    datasets: tuple[str, ...]
    means: np.ndarray
    stddevs: np.ndarray | None = None

    def __post_init__(self):
        means = np.asarray(self.means, dtype=float)
        shape = (len(self.datasets), len(self.methods))
        if means.shape != shape:
            raise ValueError(f"means must have shape {shape}, got {means.shape}")
        std = None if self.stddevs is None else np.asarray(self.stddevs, dtype=float)
        if std is not None and std.shape != shape:
            raise ValueError("stddevs must match means")
        if np.any(means < 0) or np.any(means > 100):
            raise ValueError("accuracies must be percentages in [0, 100]")
        object.__setattr__(self, "methods", tuple(self.methods))
        object.__setattr__(self, "datasets", tuple(self.datasets))
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "stddevs", std)

    def column(self, method: str) -> np.ndarray:
        return self.means[:, self.methods.index(method)]

    @classmethod
    def from_csv(cls, path) -> "AccuracyTable":
        """Read a table whose first column names the dataset.

        Cells are either plain numbers or ``mean(std)``; trailing markers
        such as a bullet are ignored.
        """
        with Path(path).open(newline="", encoding="utf-8") as fh:
            rows = [r for r in csv.reader(fh) if r]
        header, body = rows[0], rows[1:]
        methods = [h.strip() for h in header[1:]]
        datasets, means, stds = [], [], []
        for line, row in enumerate(body, start=2):
            datasets.append(row[0].strip())
            m_row, s_row = [], []
            for col, cell in enumerate(row[1:], start=2):
                match = _CELL.match(cell)
                if not match:
                    raise ValueError(f"{path}: cannot parse {cell!r} at row {line}, column {col}")
                m_row.append(float(match.group(1)))
                s_row.append(float(match.group(2)) if match.group(2) else math.nan)
            means.append(m_row)
            stds.append(s_row)
        stds = np.array(stds, dtype=float)
        return cls(tuple(methods), tuple(datasets), np.array(means, dtype=float),
                   None if np.isnan(stds).all() else stds)


class KruskalResult(NamedTuple):
    statistic: float
    p_value: float


class WilcoxonResult(NamedTuple):
    statistic: float  # min(W+, W-)
    p_value: float
    direction: str  # "a>b", "b>a" or "none"
    n: int  # non-zero differences
    w_plus: float
    w_minus: float


def kruskal_wallis(*groups: Sequence[float]) -> KruskalResult:
    """H statistic with tie correction; p from chi-squared with g-1 dof."""
    if len(groups) == 1 and not np.isscalar(groups[0][0]):
        groups = tuple(groups[0])
    if len(groups) < 2:
        raise ValueError("need at least two groups")
    arrays = [np.asarray(g, dtype=float).ravel() for g in groups]
    if any(a.size == 0 for a in arrays):
        raise ValueError("groups must be non-empty")
    pooled = np.concatenate(arrays)
    N = pooled.size
    ranks = sps.rankdata(pooled)
    h = 0.0
    start = 0
    for a in arrays:
        r = ranks[start:start + a.size]
        h += r.sum() ** 2 / a.size
        start += a.size
    h = 12.0 / (N * (N + 1)) * h - 3.0 * (N + 1)
    _, tie_counts = np.unique(pooled, return_counts=True)
    correction = 1.0 - (tie_counts ** 3 - tie_counts).sum() / (N ** 3 - N)
    if correction == 0:
        return KruskalResult(0.0, 1.0)
    h /= correction
    h = max(h, 0.0)
    return KruskalResult(float(h), float(sps.chi2.sf(h, len(arrays) - 1)))


def _exact_signed_rank_sf(doubled_ranks: np.ndarray, observed: int) -> float:
    """P(W+ >= observed) under random signs, W+ measured in half-rank units."""
    total = int(doubled_ranks.sum())
    counts = np.zeros(total + 1)
    counts[0] = 1.0
    for r in doubled_ranks.astype(np.int64):
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[:total + 1 - r]
        counts = counts + shifted
    counts /= counts.sum()
    return float(counts[observed:].sum())


def wilcoxon_signed_rank(a, b) -> WilcoxonResult:
    """Two-sided Wilcoxon signed-rank test on paired samples.

    Zero differences are dropped and tied absolute differences share their
    average rank. Up to 25 remaining pairs the p-value comes from the exact
    permutation distribution of the (tie-adjusted) ranks; beyond that from
    the normal approximation with tie and continuity corrections.
    ``direction`` tells which sample tends to be larger.
    """
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.shape != b.shape:
        raise ValueError("paired samples must have the same length")
    d = a - b
    d = d[d != 0]
    n = d.size
    if n == 0:
        return WilcoxonResult(0.0, 1.0, "none", 0, 0.0, 0.0)
    ranks = sps.rankdata(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    w_minus = float(ranks[d < 0].sum())
    stat = min(w_plus, w_minus)
    direction = "a>b" if w_plus > w_minus else "b>a" if w_minus > w_plus else "none"
    if n <= EXACT_MAX_N:
        doubled = np.rint(2 * ranks).astype(np.int64)
        # distribution is symmetric, so the upper tail of max(W+, W-) doubles
        upper = int(round(2 * max(w_plus, w_minus)))
        p = min(1.0, 2.0 * _exact_signed_rank_sf(doubled, upper))
    else:
        mean = n * (n + 1) / 4.0
        _, t = np.unique(np.abs(d), return_counts=True)
        var = n * (n + 1) * (2 * n + 1) / 24.0 - (t ** 3 - t).sum() / 48.0
        z = (abs(w_plus - mean) - 0.5) / math.sqrt(var) if var > 0 else 0.0
        p = min(1.0, 2.0 * float(sps.norm.sf(max(z, 0.0))))
    return WilcoxonResult(stat, p, direction, n, w_plus, w_minus)


def rank_rows(means: np.ndarray) -> np.ndarray:
    """Rank methods within each dataset, 1 = highest accuracy, ties averaged."""
    return np.vstack([sps.rankdata(-row) for row in np.atleast_2d(means)])


def friedman_mean_ranks(table: AccuracyTable | np.ndarray) -> np.ndarray:
    """Mean over datasets of each method's within-dataset rank."""
    means = table.means if isinstance(table, AccuracyTable) else np.asarray(table, dtype=float)
    return rank_rows(means).mean(axis=0)
