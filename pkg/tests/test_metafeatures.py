import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from metades.base import Pool, bagging_pool
from metades.dataset import Dataset, generate_banana, protocol_split
from metades.metafeatures import (
    EmptySelectionError, MetaDataset, MetaVector, ReferenceCache, build_meta_dataset, consensus_degree,
    consensus_degrees, extract_meta_vector, meta_feature_block, n_meta_features, select_meta_training_samples,
)
from metades.region import knn_region, profile_neighbors


def constant_pool(classes, L=2, D=1) -> Pool:
    """Members that ignore the input and always answer their assigned class."""
    B = np.zeros((len(classes), L))
    B[np.arange(len(classes)), classes] = 1.0
    return Pool(np.zeros((len(classes), L, D)), B)


@pytest.mark.parametrize("n_first, expected", [(70, 0.70), (100, 1.0), (51, 0.51), (49, 0.51)])
def test_consensus_degree(n_first, expected):
    pool = constant_pool([0] * n_first + [1] * (100 - n_first))
    assert consensus_degree(pool, [[0.0]]) == expected


def test_selection_uses_strict_inequality():
    data = Dataset([[0.0], [1.0]], [0, 1], 2)
    assert select_meta_training_samples(constant_pool([0] * 69 + [1] * 31), data, 0.7).tolist() == [0, 1]
    assert select_meta_training_samples(constant_pool([0] * 70 + [1] * 30), data, 0.7).size == 0


def test_unanimous_pool_gives_empty_selection():
    data = Dataset(np.arange(20.0)[:, None], np.arange(20) % 2, 2)
    pool = constant_pool([1] * 10)
    for h in (0.3, 0.7, 1.0):
        assert select_meta_training_samples(pool, data, h).size == 0
    with pytest.raises(EmptySelectionError):
        build_meta_dataset(pool, data)
    forced = build_meta_dataset(pool, data, sample_ids=np.arange(20))
    assert len(forced) == 200


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 31), st.floats(0.05, 1.0), st.floats(0.05, 1.0))
def test_selection_is_monotone_in_threshold(seed, h1, h2):
    lo, hi = sorted((h1, h2))
    rng = np.random.default_rng(seed)
    pool = oracles.random_pool(rng, 11, 3, 2)
    data = oracles.random_dataset(rng, 30, 2, 3)
    assert set(select_meta_training_samples(pool, data, lo)) <= set(select_meta_training_samples(pool, data, hi))
    assert np.all(consensus_degrees(pool, data.features) > 0)


def _instance(rng, M, L, N=30, D=3):
    pool = oracles.random_pool(rng, M, L, D)
    ref = oracles.random_dataset(rng, N, D, L)
    return pool, ref


def _extract(pool, x, y, ref, K=7, K_p=5, exclude=None, posterior="true", i=0):
    region = knn_region(x, ref, K, exclude)
    cache = ReferenceCache(pool, ref)
    q = pool.predict(np.asarray(x)[None, :])[:, 0]
    neigh = profile_neighbors(q, cache.profiles, ref.labels, K_p, exclude)
    return extract_meta_vector(i, pool, x, y, region, ref, neigh, posterior=posterior), region, neigh, cache


def assert_matches_oracle(v, want):
    f1, f2, f3, f4, f5, alpha = want
    assert v.f1.tolist() == f1
    assert v.f4.tolist() == f4
    assert v.label == alpha
    assert np.allclose(v.f2, f2, rtol=0, atol=1e-9)
    assert abs(v.f3 - f3) <= 1e-9
    assert abs(v.f5 - f5) <= 1e-9


@pytest.mark.parametrize("posterior", ["true", "predicted"])
def test_extract_matches_loop_oracle(posterior):
    rng = np.random.default_rng(10)
    for _ in range(40):
        M, L = int(rng.integers(1, 8)), int(rng.integers(2, 4))
        pool, ref = _instance(rng, M, L)
        x = rng.normal(size=3)
        y = int(rng.integers(L))
        i = int(rng.integers(M))
        v, *_ = _extract(pool, x, y, ref, posterior=posterior, i=i)
        assert_matches_oracle(v, oracles.meta_vector(pool, i, x, y, ref, 7, 5, posterior=posterior))


def test_extract_examples():
    # member 0 answers the true class everywhere, member 1 never does
    X = np.linspace(-1, 1, 12)[:, None]
    y = (X[:, 0] > 0).astype(int)
    ref = Dataset(X, y, 2)
    pool = Pool([[[-5.0], [5.0]], [[5.0], [-5.0]]], [[0.0, 0.0], [0.0, 0.0]])
    good, *_ = _extract(pool, [0.5], 1, ref, i=0)
    assert good.f1.tolist() == [1] * 7 and good.f3 == 1.0 and good.label == 1
    bad, *_ = _extract(pool, [0.5], 1, ref, i=1)
    assert bad.f1.tolist() == [0] * 7 and bad.f3 == 0.0 and bad.label == 0
    assert good.features.shape == (21,)
    unlabeled, *_ = _extract(pool, [0.5], None, ref, i=0)
    assert unlabeled.label is None


def test_extract_rejects_mismatched_profiles():
    rng = np.random.default_rng(0)
    pool, ref = _instance(rng, 4, 2)
    x = rng.normal(size=3)
    region = knn_region(x, ref, 7)
    other = oracles.random_pool(rng, 3, 2, 3)
    neigh = profile_neighbors(other.predict(x[None])[:, 0], ReferenceCache(other, ref).profiles, ref.labels, 5)
    with pytest.raises(ValueError, match="pool size"):
        extract_meta_vector(0, pool, x, 0, region, ref, neigh)


def test_block_rows_equal_single_extraction_bitwise():
    rng = np.random.default_rng(11)
    pool, ref = _instance(rng, 6, 3)
    x = rng.normal(size=3)
    _, region, neigh, cache = _extract(pool, x, 0, ref)
    block = meta_feature_block(cache, region, neigh, pool.decision_distances(x[None])[:, 0])
    for i in range(6):
        v = extract_meta_vector(i, pool, x, 0, region, ref, neigh)
        assert np.array_equal(block[i], v.features)


def test_meta_vector_round_trip():
    v = MetaVector(np.array([1, 0]), np.array([0.7, 0.2]), 0.5, np.array([1, 1, 0]), 0.3, 1, 4, 9)
    w = MetaVector.from_features(v.features, 2, 3, 1, 4, 9)
    assert np.array_equal(w.features, v.features) and n_meta_features(2, 3) == 9
    with pytest.raises(ValueError):
        MetaVector.from_features(np.zeros(8), 2, 3)


def test_build_meta_dataset_matches_oracle_with_self_exclusion():
    rng = np.random.default_rng(12)
    pool, ref = _instance(rng, 5, 2, N=25)
    meta = build_meta_dataset(pool, ref, 7, 5, h_C=1.0)
    selected = select_meta_training_samples(pool, ref, 1.0)
    assert len(meta) == selected.size * 5
    assert meta.features.shape[1] == 21
    # ordered by sample, then classifier
    assert meta.sample_ids.tolist() == np.repeat(selected, 5).tolist()
    assert meta.classifier_ids.tolist() == np.tile(np.arange(5), selected.size).tolist()
    for v in meta.vectors:
        x = ref.features[v.sample_id]
        want = oracles.meta_vector(pool, v.classifier_id, x, int(ref.labels[v.sample_id]), ref, 7, 5,
                                   exclude=v.sample_id)
        assert_matches_oracle(v, want)


def test_banana_meta_dataset_is_non_degenerate():
    part = protocol_split(generate_banana(1000, 0), 0)
    pool = bagging_pool(part.train, 100, epochs=20, seed=0)
    meta = build_meta_dataset(pool, part.meta_train)
    assert 0.0 < meta.labels.mean() < 1.0
    f1 = meta.features[:, :7]
    f2 = meta.features[:, 7:14]
    assert np.array_equal(meta.features[:, 14], f1.mean(axis=1))
    assert np.all((f2 >= 0) & (f2 <= 1)) and np.all(meta.features[:, -1] >= 0)


def test_meta_dataset_invariant_to_row_permutation():
    rng = np.random.default_rng(13)
    pool, ref = _instance(rng, 7, 2, N=40)
    perm = rng.permutation(40)
    shuffled = Dataset(ref.features[perm], ref.labels[perm], 2)
    a = build_meta_dataset(pool, ref, h_C=1.0)
    b = build_meta_dataset(pool, shuffled, h_C=1.0)
    key_a = {(int(s), int(c)): r for r, (s, c) in enumerate(zip(a.sample_ids, a.classifier_ids))}
    assert len(a) == len(b)
    cache = ReferenceCache(pool, ref)
    for r, (s, c) in enumerate(zip(b.sample_ids, b.classifier_ids)):
        ra = key_a[(int(perm[s]), int(c))]
        assert a.labels[ra] == b.labels[r]
        # f1, f2, f3, f5 do not depend on row order (continuous features: no distance ties)
        cols = list(range(15)) + [20]
        assert np.array_equal(a.features[ra, cols], b.features[r, cols])
        # f4 only when the profile neighborhood is not cut inside a distance tie
        d = np.sort(2.0 * np.count_nonzero(np.delete(cache.profiles, perm[s], 0) != cache.profiles[perm[s]], 1))
        if d[4] != d[5]:
            assert np.array_equal(np.sort(a.features[ra, 15:20]), np.sort(b.features[r, 15:20]))


def test_meta_dataset_csv_export(tmp_path):
    rng = np.random.default_rng(14)
    pool, ref = _instance(rng, 3, 2, N=20)
    meta = build_meta_dataset(pool, ref, 3, 2, h_C=1.0)
    meta.to_csv(tmp_path / "meta.csv")
    lines = (tmp_path / "meta.csv").read_text().splitlines()
    assert lines[0].split(",") == meta.column_names() + ["alpha", "classifier_id", "sample_id"]
    assert len(lines) == len(meta) + 1
    assert isinstance(meta.subset([0, 1]), MetaDataset)
