import io

import numpy as np
import pytest
from hypothesis import given, strategies as st

from stormsynth import cluster
from stormsynth.trackprep import NormalizedTrack

from oracles import brute_force_kmeans


def line_track(sid, start, heading, rng, n=20):
    t = np.linspace(0, 1, n)[:, None]
    pts = np.hstack([start + 0.3 * t * np.array(heading), np.full((n, 1), 0.5)])
    pts[:, :2] += rng.normal(0, 0.002, (n, 2))
    return NormalizedTrack(sid, np.clip(pts, 0, 1))


@pytest.fixture
def two_groups():
    rng = np.random.default_rng(0)
    ne = [line_track(f"NE{i}", np.array([0.2, 0.2]), (1, 1), rng) for i in range(6)]
    nw = [line_track(f"NW{i}", np.array([0.2, 0.7]), (1, -1), rng) for i in range(6)]
    return ne + nw


def test_separates_ne_and_nw(two_groups):
    model = cluster.kmeans_fit(two_groups, k=2, seed=1)
    labels = model.assignments
    assert len(set(labels[:6])) == 1 and len(set(labels[6:])) == 1
    assert labels[0] != labels[6]
    X = cluster.feature_matrix(two_groups)
    assert model.inertia == pytest.approx(brute_force_kmeans(X, 2), rel=1e-9)


def test_k1_centroid_is_mean(two_groups):
    model = cluster.kmeans_fit(two_groups, k=1, seed=0)
    np.testing.assert_allclose(model.centroids[0], cluster.feature_matrix(two_groups).mean(0))


def test_too_few_tracks(two_groups):
    with pytest.raises(ValueError):
        cluster.kmeans_fit(two_groups[:3], k=4, seed=0)


def test_identical_seeds_identical_output(fixture_storms):
    from stormsynth.trackprep import prepare_corpus
    tracks, _, _ = prepare_corpus(fixture_storms)
    outs = []
    for _ in range(2):
        model = cluster.kmeans_fit(tracks, 4, "2d", seed=42)
        plan = cluster.select_seeds(model, cluster.sample_cluster_counts(model.proportions, 30, 7),
                                    seed=9)
        buf = io.StringIO()
        model.write_csv(buf)
        plan.write_csv(buf, model.track_ids)
        outs.append(buf.getvalue())
    assert outs[0] == outs[1]


def test_empty_cluster_repair():
    X = np.array([[0.0], [0.0], [10.0]])
    centroids, labels, _ = cluster.lloyd(X, np.array([[0.0], [100.0], [200.0]]))
    assert sorted(np.bincount(labels, minlength=3)) == [1, 1, 1]


def test_counts_examples():
    np.testing.assert_array_equal(cluster.sample_cluster_counts([1.0], 7, 0), [7])
    counts = cluster.sample_cluster_counts([0.5, 0.5], 10000, 3)
    assert all(4700 <= c <= 5300 for c in counts)
    with pytest.raises(ValueError):
        cluster.sample_cluster_counts([0.5, -0.5], 3, 0)


def _model_with(assignments, k):
    X = np.arange(len(assignments), dtype=float)[:, None]
    cents = np.array([X[assignments == c].mean(0) if np.any(assignments == c) else [0.0]
                      for c in range(k)])
    return cluster.ClusterModel(k, "2d", cents, assignments,
                                np.bincount(assignments, minlength=k) / len(assignments),
                                tuple(f"T{i}" for i in range(len(assignments))), 0.0), X


def test_single_member_cluster_repeats():
    model, X = _model_with(np.array([0, 1, 1, 1]), 2)
    plan = cluster.select_seeds(model, [3, 0], seed=0)
    assert [s[1] for s in plan.seeds] == [0, 0, 0]
    assert [s[2] for s in plan.seeds] == [0, 1, 2]


def test_zero_counts_empty_plan():
    model, _ = _model_with(np.array([0, 1, 1, 0]), 2)
    assert len(cluster.select_seeds(model, [0, 0], seed=0)) == 0


def test_nearest_mode_cycles_by_distance():
    model, X = _model_with(np.array([0, 0, 0, 1]), 2)
    plan = cluster.select_seeds(model, [4, 1], seed=0, mode="nearest", features=X)
    # centroid of cluster 0 is 1.0: member 1 first, then 0 and 2 by index
    assert [s[1] for s in plan.seeds if s[0] == 0] == [1, 0, 2, 1]


def test_plan_for_116(fixture_storms):
    from stormsynth.trackprep import prepare_corpus
    tracks, _, _ = prepare_corpus(fixture_storms)
    model = cluster.kmeans_fit(tracks, 4, seed=5)
    counts = cluster.sample_cluster_counts(model.proportions, 116, 6)
    plan = cluster.select_seeds(model, counts, seed=7)
    assert len(plan) == 116
    assert all(model.assignments[i] == c for c, i, _ in plan.seeds)
    buf = io.StringIO()
    plan.write_csv(buf, model.track_ids)
    back = cluster.read_seed_plan_csv(io.StringIO(buf.getvalue()), model.track_ids, 4)
    assert back.seeds == plan.seeds
    np.testing.assert_array_equal(back.counts, counts)


def test_silhouette_sweep_runs(two_groups):
    scores = cluster.silhouette_sweep(two_groups, ks=range(2, 5), seed=0)
    assert max(scores, key=scores.get) == 2


@given(st.lists(st.floats(0, 1), min_size=1, max_size=6).filter(lambda p: sum(p) > 0),
       st.integers(0, 500), st.integers(0, 2 ** 32 - 1))
def test_counts_sum_to_total(props, total, seed):
    counts = cluster.sample_cluster_counts(props, total, seed)
    assert counts.sum() == total
    assert all(c == 0 for c, p in zip(counts, props) if p == 0)


@given(st.integers(0, 2 ** 32 - 1), st.integers(2, 40), st.integers(1, 5),
       st.integers(1, 4))
def test_lloyd_objective_non_increasing(seed, n, k, dim):
    rng = np.random.default_rng(seed)
    k = min(k, n)
    X = rng.normal(size=(n, dim))
    _, _, history = cluster.lloyd(X, cluster.kmeans_plusplus(X, k, rng))
    assert all(b <= a * (1 + 1e-12) + 1e-12 for a, b in zip(history, history[1:]))


@given(st.integers(0, 2 ** 32 - 1), st.integers(3, 8), st.integers(1, 3))
def test_matches_brute_force_small(seed, n, k):
    X = np.random.default_rng(seed).normal(size=(n, 2))
    _, _, inertia = cluster.kmeans(X, k, seed, n_init=20)
    assert inertia == pytest.approx(brute_force_kmeans(X, k), rel=1e-6, abs=1e-9)
