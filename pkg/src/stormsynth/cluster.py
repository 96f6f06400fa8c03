"""
K-means grouping of normalized tracks and per-cluster seed selection.

Tracks are flattened to vectors (20 x 2 for lat/lon, 20 x 3 with pressure)
and clustered with Lloyd's algorithm from k-means++ starts. The best of
``n_init`` restarts (lowest within-cluster sum of squares) is kept.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from typing import Optional, Sequence, TextIO, Union

import numpy as np

from .trackprep import NormalizedTrack

LOGGER = logging.getLogger(__name__)

DEFAULT_K = 4
N_INIT = 20
MAX_ITER = 300

SeedLike = Union[int, np.random.Generator, None]


def _rng(seed: SeedLike) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def feature_matrix(tracks: Sequence[NormalizedTrack], feature_mode: str = "2d") -> np.ndarray:
    if feature_mode not in ("2d", "3d"):
        raise ValueError(f"feature_mode must be '2d' or '3d', got {feature_mode!r}")
    return np.stack([t.flat(feature_mode) for t in tracks])


def _sq_dists(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    d = (X * X).sum(1)[:, None] - 2.0 * X @ C.T + (C * C).sum(1)[None, :]
    return np.maximum(d, 0.0)


def kmeans_plusplus(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(X)
    centers = [X[rng.integers(n)]]
    closest = ((X - centers[0]) ** 2).sum(1)
    for _ in range(1, k):
        total = closest.sum()
        if total > 0:
            idx = rng.choice(n, p=closest / total)
        else:
            idx = rng.integers(n)
        centers.append(X[idx])
        closest = np.minimum(closest, ((X - X[idx]) ** 2).sum(1))
    return np.array(centers)


def objective(X: np.ndarray, centroids: np.ndarray, labels: np.ndarray) -> float:
    return float(((X - centroids[labels]) ** 2).sum())


def _repair_empty(X, labels, centroids, k):
    """Give each empty cluster the point farthest from its current centroid."""
    for c in range(k):
        counts = np.bincount(labels, minlength=k)
        if counts[c]:
            continue
        dist = ((X - centroids[labels]) ** 2).sum(1)
        # only take from clusters that can spare a member
        dist[counts[labels] <= 1] = -1.0
        far = int(np.argmax(dist))
        labels[far] = c
        centroids[c] = X[far]
    return labels


def lloyd(X: np.ndarray, init: np.ndarray, max_iter: int = MAX_ITER
          ) -> tuple[np.ndarray, np.ndarray, list[float]]:
    """Run Lloyd iterations from ``init``.

    Returns centroids, labels and the objective after every centroid update.
    Stops when assignments repeat or after ``max_iter`` iterations.
    """
    k = len(init)
    centroids = np.array(init, dtype=float)
    labels = None
    history = []
    for _ in range(max_iter):
        new = np.argmin(_sq_dists(X, centroids), axis=1)
        new = _repair_empty(X, new, centroids, k)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        for c in range(k):
            centroids[c] = X[labels == c].mean(axis=0)
        history.append(objective(X, centroids, labels))
    return centroids, labels, history


def kmeans(X: np.ndarray, k: int, seed: SeedLike = None, n_init: int = N_INIT,
           max_iter: int = MAX_ITER) -> tuple[np.ndarray, np.ndarray, float]:
    """Best-of-``n_init`` k-means++/Lloyd on the rows of ``X``."""
    X = np.asarray(X, dtype=float)
    if k < 1:
        raise ValueError("k must be positive")
    if len(X) < k:
        raise ValueError(f"need at least k={k} samples, got {len(X)}")
    rng = _rng(seed)
    best = None
    for _ in range(n_init):
        centroids, labels, _ = lloyd(X, kmeans_plusplus(X, k, rng), max_iter)
        inertia = objective(X, centroids, labels)
        if best is None or inertia < best[2]:
            best = (centroids, labels, inertia)
    return best


@dataclass(frozen=True)
class ClusterModel:
    k: int
    feature_mode: str
    centroids: np.ndarray
    assignments: np.ndarray
    proportions: np.ndarray
    track_ids: tuple
    inertia: float

    def members(self, cluster: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == cluster)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignments, minlength=self.k)

    def write_csv(self, out: TextIO) -> None:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["track_id", "cluster"])
        for tid, c in zip(self.track_ids, self.assignments):
            w.writerow([tid, int(c)])


def kmeans_fit(tracks: Sequence[NormalizedTrack], k: int = DEFAULT_K,
               feature_mode: str = "2d", seed: SeedLike = None,
               n_init: int = N_INIT, max_iter: int = MAX_ITER) -> ClusterModel:
    """Cluster normalized tracks.

    Parameters
    ----------
    tracks : sequence of NormalizedTrack
    k : int
        Number of clusters.
    feature_mode : {"2d", "3d"}
        ``"2d"`` clusters on lat/lon geometry only; ``"3d"`` adds pressure.
    seed : int or numpy Generator
        Drives the k-means++ draws; identical seeds give identical models.
    """
    if len(tracks) < k:
        raise ValueError(f"need at least k={k} tracks, got {len(tracks)}")
    X = feature_matrix(tracks, feature_mode)
    centroids, labels, inertia = kmeans(X, k, seed, n_init, max_iter)
    proportions = np.bincount(labels, minlength=k) / len(labels)
    return ClusterModel(k, feature_mode, centroids, labels, proportions,
                        tuple(t.storm_id for t in tracks), inertia)


def silhouette_scores(X: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Per-sample silhouette values (0 for members of singleton clusters)."""
    D = np.sqrt(_sq_dists(X, X))
    k = labels.max() + 1
    n = len(X)
    sums = np.zeros((n, k))
    for c in range(k):
        sums[:, c] = D[:, labels == c].sum(1)
    sizes = np.bincount(labels, minlength=k).astype(float)
    own = sizes[labels]
    a = sums[np.arange(n), labels] / np.maximum(own - 1, 1)
    other = sums / np.where(sizes > 0, sizes, np.nan)
    other[np.arange(n), labels] = np.inf
    b = np.nanmin(other, axis=1)
    s = (b - a) / np.maximum(a, b)
    s[own <= 1] = 0.0
    return s


def silhouette_sweep(tracks: Sequence[NormalizedTrack], ks=range(2, 9),
                     feature_mode: str = "2d", seed: SeedLike = None) -> dict:
    """Mean silhouette for each k. Diagnostic only, nothing is selected automatically."""
    X = feature_matrix(tracks, feature_mode)
    rng = _rng(seed)
    out = {}
    for k in ks:
        _, labels, _ = kmeans(X, k, rng)
        out[k] = float(silhouette_scores(X, labels).mean())
        LOGGER.info("k=%d mean silhouette %.4f", k, out[k])
    return out


def sample_cluster_counts(proportions: Sequence[float], total: int,
                          seed: SeedLike = None) -> np.ndarray:
    """Multinomial split of ``total`` items across clusters."""
    if total < 0:
        raise ValueError("total must be non-negative")
    p = np.asarray(proportions, dtype=float)
    if np.any(p < 0) or p.sum() <= 0:
        raise ValueError("proportions must be non-negative with positive sum")
    return _rng(seed).multinomial(total, p / p.sum())


@dataclass(frozen=True)
class SeedPlan:
    counts: np.ndarray
    # (cluster, track index into the clustered corpus, replicate index)
    seeds: tuple

    def __len__(self) -> int:
        return len(self.seeds)

    def track_indices(self) -> list[int]:
        return [s[1] for s in self.seeds]

    def write_csv(self, out: TextIO, track_ids: Sequence[str]) -> None:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["cluster", "seed_track_id", "replicate_index"])
        for cluster, idx, rep in self.seeds:
            w.writerow([cluster, track_ids[idx], rep])


def read_seed_plan_csv(src: TextIO, track_ids: Sequence[str], k: Optional[int] = None) -> SeedPlan:
    lookup = {tid: i for i, tid in enumerate(track_ids)}
    seeds = []
    for row in csv.DictReader(src):
        tid = row["seed_track_id"]
        if tid not in lookup:
            raise ValueError(f"seed track {tid} not in the track corpus")
        seeds.append((int(row["cluster"]), lookup[tid], int(row["replicate_index"])))
    k = k if k is not None else (max((s[0] for s in seeds), default=-1) + 1)
    counts = np.bincount([s[0] for s in seeds], minlength=k) if seeds else np.zeros(k, int)
    return SeedPlan(counts, tuple(seeds))


def select_seeds(model: ClusterModel, counts: Sequence[int], seed: SeedLike = None,
                 mode: str = "uniform", features: Optional[np.ndarray] = None) -> SeedPlan:
    """Pick ``counts[c]`` seed tracks from each cluster ``c``.

    ``mode="uniform"`` draws members uniformly with replacement.
    ``mode="nearest"`` cycles through members ordered by distance to the
    centroid and needs the clustered ``features`` matrix.
    """
    counts = np.asarray(counts, dtype=np.int64)
    if len(counts) != model.k:
        raise ValueError(f"expected {model.k} counts, got {len(counts)}")
    if np.any(counts < 0):
        raise ValueError("counts must be non-negative")
    rng = _rng(seed)
    seeds = []
    for c in range(model.k):
        n = int(counts[c])
        if n == 0:
            continue
        members = model.members(c)
        if len(members) == 0:
            raise ValueError(f"cluster {c} is empty but {n} seeds were requested")
        if mode == "uniform":
            picks = members[rng.integers(len(members), size=n)]
        elif mode == "nearest":
            if features is None:
                raise ValueError("nearest mode needs the feature matrix")
            d = ((features[members] - model.centroids[c]) ** 2).sum(1)
            ordered = members[np.argsort(d, kind="stable")]
            picks = ordered[np.arange(n) % len(ordered)]
        else:
            raise ValueError(f"unknown seed mode {mode!r}")
        seeds.extend((c, int(i), r) for r, i in enumerate(picks))
    return SeedPlan(counts, tuple(seeds))
