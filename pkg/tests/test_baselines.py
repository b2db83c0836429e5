import numpy as np
import pytest

import oracles
from metades.base import Pool
from metades.baselines import (
    BASELINES, knop, knora_eliminate, knora_union, lca, mcb, mla, ola, pool_majority, run_baseline,
)
from metades.dataset import Dataset
from metades.metafeatures import ReferenceCache


def decide(name, pool, x, dsel, K=7, **options):
    """Full decision record (label, selected, scores, fallback) for one query."""
    return BASELINES[name](pool, np.asarray(x, float), dsel, K, ReferenceCache(pool, dsel), **options)


# loop oracles written from the one-line definitions --------------------------------

class Instance:
    def __init__(self, pool, dsel, x, K=7):
        self.W, self.B = pool.weights.tolist(), pool.biases.tolist()
        self.M, self.L = len(pool), pool.n_classes
        self.X, self.y = dsel.features.tolist(), dsel.labels.tolist()
        self.x = [float(v) for v in x]
        self.ids, self.dist = oracles.knn(self.x, self.X, K)
        self.votes = [oracles.predict(self.W[i], self.B[i], self.x) for i in range(self.M)]
        self.post = [oracles.posteriors(self.W[i], self.B[i], self.x, pool.slope) for i in range(self.M)]
        self.right = [[oracles.predict(self.W[i], self.B[i], self.X[k]) == self.y[k] for k in range(len(self.X))]
                      for i in range(self.M)]

    def vote(self, members, weights=None):
        weights = [1.0] * len(members) if weights is None else weights
        tie = oracles.mean_support(self.post, members, self.L)
        return oracles.vote([self.votes[i] for i in members], weights, tie, self.L)

    def best(self, scores):
        return self.votes[oracles.argmax_first(scores)]

    def knora_e(self):
        for k in range(len(self.ids), 0, -1):
            sel = [i for i in range(self.M) if all(self.right[i][n] for n in self.ids[:k])]
            if sel:
                return self.vote(sel)
        return self.vote(list(range(self.M)))

    def union(self, ids):
        w = [float(sum(self.right[i][n] for n in ids)) for i in range(self.M)]
        sel = [i for i in range(self.M) if w[i] > 0]
        if not sel:
            return self.vote(list(range(self.M)))
        return self.vote(sel, [w[i] for i in sel])

    def ola(self, ids=None):
        ids = self.ids if ids is None else ids
        return self.best([sum(self.right[i][n] for n in ids) / len(ids) for i in range(self.M)])

    def lca(self, weighted=False, eps=1e-12):
        scores = []
        for i in range(self.M):
            num = den = 0.0
            for n, d in zip(self.ids, self.dist):
                if self.y[n] == self.votes[i]:
                    w = 1.0 / (d + eps) if weighted else 1.0
                    den += w
                    num += w * self.right[i][n]
            scores.append(num / den if den > 0 else 0.0)
        return self.best(scores)

    def profile(self, row):
        return [oracles.predict(self.W[i], self.B[i], row) for i in range(self.M)]

    def mcb(self, threshold):
        kept = [n for n in self.ids
                if sum(a == b for a, b in zip(self.profile(self.X[n]), self.votes)) / self.M >= threshold]
        return self.ola(kept if kept else None)

    def knop(self, K_p):
        profiles = [self.profile(row) for row in self.X]
        ids, _ = oracles.profile_knn(self.votes, profiles, self.L, K_p)
        return self.union(ids)


def random_instance(rng, coarse=False):
    M, L = int(rng.integers(1, 9)), int(rng.integers(2, 4))
    pool = oracles.random_pool(rng, M, L, 2)
    dsel = oracles.random_dataset(rng, 25, 2, L)
    if coarse:
        dsel = dsel.with_features(np.round(dsel.features))
    return pool, dsel, rng.normal(size=2)


@pytest.mark.parametrize("coarse", [False, True])
def test_all_baselines_match_loop_oracles(coarse):
    rng = np.random.default_rng(7 + coarse)
    for _ in range(60):
        pool, dsel, x = random_instance(rng, coarse)
        o = Instance(pool, dsel, x)
        assert knora_eliminate(pool, x, dsel) == o.knora_e()
        assert knora_union(pool, x, dsel) == o.union(o.ids)
        assert ola(pool, x, dsel) == o.ola()
        assert lca(pool, x, dsel) == o.lca()
        assert mla(pool, x, dsel) == o.lca(weighted=True)
        assert mcb(pool, x, dsel) == o.mcb(0.7)
        assert knop(pool, x, dsel, 7) == o.knop(7)
        assert pool_majority(pool, x) == o.vote(list(range(o.M)))


# fixtures where the answer is known by construction -----------------------------

def line_data(n=14):
    X = np.linspace(-1, 1, n)[:, None]
    return Dataset(X, (X[:, 0] > 0).astype(int), 2)


def stump(sign, cut=0.0):
    """Two-class 1-D member: class 1 when sign * (x - cut) > 0."""
    return [[-sign], [sign]], [sign * cut, -sign * cut]


def make_pool(*members):
    return Pool(np.array([m[0] for m in members], float), np.array([m[1] for m in members], float))


def test_knora_e_single_perfect_member_decides():
    d = line_data()
    pool = make_pool(stump(-1), stump(1), stump(-1, 0.3), stump(1, -0.5))
    assert knora_eliminate(pool, [0.05], d) == 1


def test_knora_e_falls_back_to_whole_pool():
    d = line_data()
    pool = make_pool(stump(-1), stump(-1), stump(1, 5.0))
    # nobody is right on the nearest neighbor of 0.9; majority of (0, 0, 0) answers
    assert knora_eliminate(pool, [0.9], d) == 0
    assert decide("KNORA-E", pool, [0.9], d).fallback


def test_knora_u_examples():
    d = line_data()
    right_everywhere = stump(1)
    right_once = stump(-1, 0.95)
    pool = make_pool(right_everywhere, right_once)
    assert knora_union(pool, [0.9], d, K=7) == 1
    same = make_pool(stump(1), stump(1), stump(1))
    assert knora_union(same, [0.3], d) == pool_majority(same, [0.3])


def test_ola_picks_perfect_region():
    d = line_data()
    pool = make_pool(stump(1, 0.5), stump(1), stump(-1))
    assert ola(pool, [0.2], d) == 1
    assert decide("OLA", pool, [0.2], d).selected.tolist() == [1]


def test_lca_empty_denominator_scores_zero():
    d = line_data()
    # member 0 predicts class 1 near x = -0.9, where every neighbor is class 0
    pool = make_pool(stump(1, -5.0), stump(1))
    out = decide("LCA", pool, [-0.9], d)
    assert out.scores[0] == 0.0 and out.label == 0


def test_mcb_reductions():
    rng = np.random.default_rng(3)
    for _ in range(30):
        pool, dsel, x = random_instance(rng)
        assert mcb(pool, x, dsel, similarity_threshold=0.0) == ola(pool, x, dsel)
    d = line_data()
    pool = make_pool(stump(1), stump(-1), stump(1, 1.2))
    # at x = 1.5 the profile is (1, 0, 1); no reference row shares it, so all neighbors are kept
    assert mcb(pool, [1.5], d, similarity_threshold=1.0) == ola(pool, [1.5], d)
    assert decide("MCB", pool, [1.5], d, similarity_threshold=1.0).fallback


def test_knop_reductions():
    d = line_data()
    same = make_pool(stump(1), stump(1))
    # every reference profile equals the query's class pattern on its side of 0
    o = Instance(same, d, [0.5])
    assert knop(same, [0.5], d, 7) == o.union(o.ids[:7])
    single = make_pool(stump(-1, 0.2))
    for x in np.linspace(-1, 1, 9):
        assert knop(single, [x], d, 5) == single.predict([[x]])[0, 0]


def test_run_baseline_schema_and_errors():
    d = line_data()
    pool = make_pool(stump(1), stump(-1))
    acc, preds, diags = run_baseline("KNOP", pool, d, d, K=5)
    assert 0.0 <= acc <= 1.0 and preds.shape == (len(d),)
    assert set(diags[0]) == {"method", "query_id", "selected", "deltas", "label", "true_label", "fallback"}
    with pytest.raises(ValueError, match="unknown method"):
        run_baseline("DES-FA", pool, d, d)
    assert set(BASELINES) == {"KNORA-E", "KNORA-U", "OLA", "LCA", "MLA", "MCB", "KNOP"}
