"""Error metrics: per-step and time-averaged RMSE, the multi-horizon
objective, the intermediate (centroid-distance) RMSE, the pooled standard
deviation bound, and the pairwise-correlation CDF.

All standard deviations and covariances use the population (divide-by-n)
convention.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class MetricsRecord:
    t: int
    h: int
    resource: str
    rmse: float


@dataclass
class AggregateMetrics:
    """Run-level summary: per-(h, resource) time-averaged RMSEs and extras."""

    time_avg_rmse: dict[tuple[int, str], float]
    objective: dict[str, float | None]
    intermediate: dict[str, float]
    intermediate_true: dict[str, float]
    frequencies: np.ndarray  # (N,) empirical per-node transmission frequency
    budget_slack: np.ndarray  # (N,) frequency minus budget
    h_max: int
    warmup_steps: int = 0


def rmse(forecast: np.ndarray, truth: np.ndarray) -> float:
    """Root mean (over nodes) squared Euclidean error."""
    forecast = np.asarray(forecast, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if forecast.shape != truth.shape:
        raise ValueError(f"shape mismatch: {forecast.shape} vs {truth.shape}")
    diff = forecast - truth
    if diff.ndim == 1:
        diff = diff[:, None]
    return float(np.sqrt((diff**2).sum(axis=1).mean()))


def time_avg_rmse(per_step: np.ndarray) -> float:
    """Square root of the mean of squared per-step RMSEs."""
    per_step = np.asarray(per_step, dtype=float)
    if per_step.size == 0:
        raise ValueError("no per-step records")
    return float(np.sqrt((per_step**2).mean()))


def objective(time_avg_by_h: dict[int, float], h_max: int) -> float:
    """Root mean over horizons 0..h_max of squared time-averaged RMSEs."""
    missing = [h for h in range(h_max + 1) if h not in time_avg_by_h]
    if missing:
        raise ValueError(f"missing horizons {missing} for objective over 0..{h_max}")
    vals = np.array([time_avg_by_h[h] for h in range(h_max + 1)])
    return float(np.sqrt((vals**2).mean()))


def intermediate_rmse(values_seq, partitions) -> float:
    """Time-averaged RMSE between values and their assigned centroids.

    values_seq and partitions are aligned per-step sequences; centroids must
    live in the same space as the values (project both first when clustering
    ran on extended feature vectors).
    """
    per_step = []
    for vals, part in zip(values_seq, partitions):
        per_step.append(rmse(part.centroids[part.assignment], vals))
    return time_avg_rmse(np.array(per_step))


def std_baseline(dataset, resource: int, per_node: bool = False) -> float:
    """Pooled population standard deviation of one resource over all nodes
    and steps; per_node=True averages per-node variances instead."""
    vals = dataset.values[:, :, resource]
    if per_node:
        return float(np.sqrt(vals.var(axis=0, ddof=0).mean()))
    return float(vals.std(ddof=0))


def correlation_cdf(dataset, resource: int) -> tuple[np.ndarray, np.ndarray, int]:
    """Sorted pairwise Pearson correlations with empirical CDF values.

    Nodes with constant series are excluded (correlation undefined); the
    returned triple is (sorted correlations, cdf, excluded node count).
    """
    vals = dataset.values[:, :, resource]
    n = vals.shape[1]
    if n < 2:
        raise ValueError("need at least two nodes")
    stds = vals.std(axis=0, ddof=0)
    keep = np.where(stds > 0)[0]
    excluded = n - len(keep)
    if len(keep) < 2:
        raise ValueError("fewer than two non-constant series; correlation undefined")
    centered = vals[:, keep] - vals[:, keep].mean(axis=0)
    normed = centered / stds[keep]
    corr = (normed.T @ normed) / vals.shape[0]
    iu = np.triu_indices(len(keep), k=1)
    pairs = np.sort(corr[iu])
    cdf = np.arange(1, len(pairs) + 1) / len(pairs)
    return pairs, cdf, excluded


def adjusted_rand_index(labels_a: np.ndarray, labels_b: np.ndarray) -> float:
    """Chance-corrected agreement between two partitions of the same nodes."""
    labels_a = np.asarray(labels_a)
    labels_b = np.asarray(labels_b)
    if labels_a.shape != labels_b.shape:
        raise ValueError("label arrays must have the same shape")
    n = labels_a.size
    _, a_inv = np.unique(labels_a, return_inverse=True)
    _, b_inv = np.unique(labels_b, return_inverse=True)
    contingency = np.zeros((a_inv.max() + 1, b_inv.max() + 1), dtype=np.int64)
    np.add.at(contingency, (a_inv, b_inv), 1)

    def comb2(x):
        return x * (x - 1) / 2.0

    sum_cells = comb2(contingency).sum()
    sum_rows = comb2(contingency.sum(axis=1)).sum()
    sum_cols = comb2(contingency.sum(axis=0)).sum()
    total = comb2(n)
    expected = sum_rows * sum_cols / total if total else 0.0
    max_index = 0.5 * (sum_rows + sum_cols)
    if max_index == expected:
        return 1.0
    return float((sum_cells - expected) / (max_index - expected))
