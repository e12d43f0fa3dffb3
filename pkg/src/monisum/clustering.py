"""Per-step K-means with label continuity across steps, plus baselines.

Raw K-means labels are arbitrary from one step to the next; they are
re-indexed by matching each fresh cluster against the recent history (count
of nodes shared with a label's clusters over the last m steps) and solving
the resulting maximum-weight bipartite assignment. Nearest-centroid ties
break to the lowest cluster index everywhere.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import linear_sum_assignment

KMEANS_TOL = 1e-6
KMEANS_MAX_ITER = 100


@dataclass
class Partition:
    """One step's cluster assignment over N nodes with K centroids."""

    assignment: np.ndarray  # (N,) labels in 0..k-1
    centroids: np.ndarray  # (k, feature_dim)
    k: int
    t: int = -1  # -1 marks a raw, not yet time-stamped partition

    def members(self, label: int) -> np.ndarray:
        return np.where(self.assignment == label)[0]


@dataclass
class PartitionHistory:
    """Bounded window of recent partitions, strictly increasing in t."""

    capacity: int
    m: int = 1
    window: list[Partition] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.capacity < 1:
            raise ValueError("capacity must be >= 1")
        if self.m < 1:
            raise ValueError("m must be >= 1")

    def __len__(self) -> int:
        return len(self.window)

    @property
    def latest(self) -> Partition:
        return self.window[-1]

    def append(self, partition: Partition) -> None:
        if self.window and partition.t <= self.window[-1].t:
            raise ValueError(
                f"partition t={partition.t} must exceed last t={self.window[-1].t}"
            )
        self.window.append(partition)
        if len(self.window) > self.capacity:
            del self.window[: len(self.window) - self.capacity]

    def recent(self, count: int) -> list[Partition]:
        """The newest `count` partitions, newest last."""
        return self.window[-count:] if count > 0 else []


def _assign(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # argmin returns the first minimum, which is the lowest-index tie rule
    d2 = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    return np.argmin(d2, axis=1)


def cluster_means(points: np.ndarray, labels: np.ndarray, k: int) -> np.ndarray:
    """Per-label mean vectors; every label in 0..k-1 must have members."""
    cents = np.empty((k, points.shape[1]))
    for j in range(k):
        cents[j] = points[labels == j].mean(axis=0)
    return cents


def kmeans(points: np.ndarray, k: int, seed: int | np.random.Generator) -> Partition:
    """Lloyd iterations from k-means++ seeding; returns a raw partition.

    Converges when the max centroid movement drops below 1e-6 or after 100
    iterations. Empty clusters are repaired by stealing the point currently
    farthest from its assigned centroid.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim != 2:
        raise ValueError("points must be a 2-D (N, feature_dim) array")
    n = points.shape[0]
    if k <= 0:
        raise ValueError("k must be positive")
    if k > n:
        raise ValueError(f"k={k} exceeds the number of points n={n}")
    if not np.all(np.isfinite(points)):
        raise ValueError("points must be finite")

    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    centroids = _plus_plus_seeds(points, k, rng)

    labels = np.zeros(n, dtype=np.int64)
    for _ in range(KMEANS_MAX_ITER):
        labels = _assign(points, centroids)
        labels = _repair_empty(points, labels, centroids, k)
        new_centroids = cluster_means(points, labels, k)
        movement = np.sqrt(((new_centroids - centroids) ** 2).sum(axis=1)).max()
        centroids = new_centroids
        if movement < KMEANS_TOL:
            break
    return Partition(assignment=labels, centroids=centroids, k=k)


def _plus_plus_seeds(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = ((points - points[chosen[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = int(rng.choice(n, p=d2 / total))
        else:
            # All remaining points coincide with a seed; any unchosen one does.
            remaining = np.setdiff1d(np.arange(n), chosen)
            idx = int(rng.choice(remaining))
        chosen.append(idx)
        d2 = np.minimum(d2, ((points - points[idx]) ** 2).sum(axis=1))
    return points[chosen].copy()


def _repair_empty(
    points: np.ndarray, labels: np.ndarray, centroids: np.ndarray, k: int
) -> np.ndarray:
    counts = np.bincount(labels, minlength=k)
    for j in np.where(counts == 0)[0]:
        dist = ((points - centroids[labels]) ** 2).sum(axis=1)
        dist[counts[labels] <= 1] = -1.0  # do not empty a singleton cluster
        victim = int(np.argmax(dist))
        counts[labels[victim]] -= 1
        labels = labels.copy()
        labels[victim] = j
        counts[j] = 1
        centroids[j] = points[victim]
    return labels


def inertia(points: np.ndarray, partition: Partition) -> float:
    """Total within-cluster squared distance."""
    diff = points - partition.centroids[partition.assignment]
    return float((diff**2).sum())


def similarity(
    raw: Partition, history: PartitionHistory, m: int, normalized: bool = False
) -> np.ndarray:
    """Node-sharing counts between fresh clusters and recent historical labels.

    w[k][j] counts nodes present in fresh cluster k and in label j's clusters
    at all of the min(m, t-1) most recent steps. normalized=True divides by
    the union size instead (Jaccard index), for the comparison experiment.
    """
    if len(history) == 0:
        raise ValueError("history must be non-empty")
    k = raw.k
    if any(p.k != k for p in history.window):
        raise ValueError("cluster count mismatch between raw partition and history")
    t = raw.t if raw.t > 0 else history.latest.t + 1
    lookback = min(m, t - 1)
    past = history.recent(lookback)

    n = raw.assignment.shape[0]
    hist_member = np.ones((k, n), dtype=bool)
    for p in past:
        for j in range(k):
            hist_member[j] &= p.assignment == j

    if normalized:
        w = np.zeros((k, k), dtype=float)
    else:
        w = np.zeros((k, k), dtype=np.int64)
    for ki in range(k):
        fresh = raw.assignment == ki
        for j in range(k):
            inter = int(np.count_nonzero(fresh & hist_member[j]))
            if normalized:
                union = int(np.count_nonzero(fresh | hist_member[j]))
                w[ki, j] = inter / union if union else 0.0
            else:
                w[ki, j] = inter
    return w


def match_labels(w: np.ndarray) -> np.ndarray:
    """Permutation phi maximizing sum_k w[k, phi(k)].

    Solved as a maximum-weight bipartite assignment; among maximizers the
    lexicographically smallest permutation (phi(0), phi(1), ...) is returned.
    """
    w = np.asarray(w)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise ValueError("similarity matrix must be square")
    k = w.shape[0]
    exact = np.issubdtype(w.dtype, np.integer)
    atol = 0.0 if exact else 1e-9 * max(1.0, float(np.abs(w).max()))

    def best_total(mat: np.ndarray):
        rows, cols = linear_sum_assignment(mat, maximize=True)
        return mat[rows, cols].sum()

    remaining_cols = list(range(k))
    target = best_total(w)
    phi = np.empty(k, dtype=np.int64)
    for row in range(k):
        for j in remaining_cols:  # ascending, so the first feasible j is smallest
            rest_cols = [c for c in remaining_cols if c != j]
            rest = w[np.ix_(list(range(row + 1, k)), rest_cols)]
            rest_total = best_total(rest) if rest.size else 0
            if w[row, j] + rest_total >= target - atol:
                phi[row] = j
                remaining_cols.remove(j)
                target = target - w[row, j]
                break
        else:
            raise RuntimeError("assignment search failed to extend a maximizer")
    return phi


def dynamic_step(
    features: np.ndarray,
    history: PartitionHistory,
    k: int,
    m: int,
    seed: int | np.random.Generator,
    t: int | None = None,
    normalized_similarity: bool = False,
) -> Partition:
    """Cluster one step's stored features and re-index labels for continuity.

    The first step adopts the raw K-means labels; later steps relabel via the
    similarity measure against the history, then append to it.
    """
    raw = kmeans(features, k, seed)
    if t is None:
        t = history.latest.t + 1 if len(history) else 1
    if len(history) == 0:
        part = replace(raw, t=t)
    else:
        w = similarity(replace(raw, t=t), history, m, normalized=normalized_similarity)
        phi = match_labels(w)
        assignment = phi[raw.assignment]
        centroids = np.empty_like(raw.centroids)
        centroids[phi] = raw.centroids
        part = Partition(assignment=assignment, centroids=centroids, k=k, t=t)
    history.append(part)
    return part


def static_baseline(
    dataset, k: int, seed: int | np.random.Generator, resource: int | None = None
) -> np.ndarray:
    """Offline fixed assignment: K-means over each node's entire series.

    resource selects one resource's series per node; None concatenates all.
    Returns the (N,) assignment; per-step centroids are recomputed from the
    stored view by the caller.
    """
    values = dataset.values
    if resource is None:
        series = values.transpose(1, 0, 2).reshape(dataset.n_nodes, -1)
    else:
        series = values[:, :, resource].T
    return kmeans(series, k, seed).assignment


def min_distance_baseline(
    features: np.ndarray, k: int, seed: int | np.random.Generator, t: int = -1
) -> Partition:
    """Random-monitor baseline: K random nodes become the step's centroids.

    Every node maps to its nearest selected node's value; selection order
    defines the cluster indices, so clusters may end up empty.
    """
    features = np.asarray(features, dtype=float)
    n = features.shape[0]
    if k > n:
        raise ValueError(f"k={k} exceeds the number of points n={n}")
    if k <= 0:
        raise ValueError("k must be positive")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    selected = rng.choice(n, size=k, replace=False)
    centroids = features[selected].copy()
    return Partition(assignment=_assign(features, centroids), centroids=centroids, k=k, t=t)


def brute_force_max_matching(w: np.ndarray) -> tuple[np.ndarray, float]:
    """Exhaustive assignment oracle for small K: (lexicographically smallest
    maximizing permutation, maximum total weight)."""
    w = np.asarray(w)
    k = w.shape[0]
    best_total = -np.inf
    best_perm: tuple[int, ...] | None = None
    for perm in itertools.permutations(range(k)):
        total = sum(w[i, perm[i]] for i in range(k))
        if total > best_total:
            best_total = total
            best_perm = perm
    return np.array(best_perm, dtype=np.int64), float(best_total)
