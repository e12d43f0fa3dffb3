"""Centroid time-series forecasting and per-node forecast assembly.

A small registry of forecaster kinds ("hold", "ar") trains one model per
(cluster, component) on the history of that cluster's centroid. Per-node
forecasts combine the forecasted centroid of the node's predicted cluster
(majority vote over a lookback window) with an offset averaged from recent
scaled deviations; the scaling keeps each adjusted point inside its cluster's
nearest-centroid region.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from monisum.clustering import Partition, PartitionHistory


@dataclass
class CentroidSeries:
    """Contiguous per-step history of one cluster centroid component."""

    cluster: int
    resource: str = ""
    start_t: int = 1
    values: list[float] = field(default_factory=list)

    def append(self, value: float) -> None:
        self.values.append(float(value))

    def __len__(self) -> int:
        return len(self.values)


@dataclass
class ForecasterModel:
    kind: str
    order: int = 0
    coefficients: np.ndarray | None = None  # [intercept, lag1..lagp] for AR
    trained_at: int = -1
    fell_back_to_hold: bool = False  # set when the AR fit was singular


class _Hold:
    @staticmethod
    def fit(values: np.ndarray, order: int) -> np.ndarray | None:
        if len(values) < 1:
            raise ValueError("sample-and-hold needs at least one value")
        return None

    @staticmethod
    def predict(model: ForecasterModel, values: np.ndarray, h: int) -> float:
        return float(values[-1])


class _AutoRegressive:
    @staticmethod
    def fit(values: np.ndarray, order: int) -> np.ndarray:
        p = order
        if p < 1:
            raise ValueError("AR order must be >= 1")
        if len(values) < p + 1:
            raise ValueError(f"series of length {len(values)} too short for AR({p})")
        y = values[p:]
        cols = [np.ones(len(y))] + [values[p - lag : len(values) - lag] for lag in range(1, p + 1)]
        design = np.column_stack(cols)
        # Rank-deficient designs (constant or purely periodic series) take the
        # minimum-norm solution, which still reproduces the signal exactly.
        coef, _, _, _ = np.linalg.lstsq(design, y, rcond=None)
        if not np.all(np.isfinite(coef)):
            raise np.linalg.LinAlgError("no finite least-squares solution")
        return coef

    @staticmethod
    def predict(model: ForecasterModel, values: np.ndarray, h: int) -> float:
        p = model.order
        coef = model.coefficients
        lags = list(values[-p:][::-1])  # most recent first
        out = float(values[-1])
        for _ in range(h):
            out = float(coef[0] + np.dot(coef[1:], lags))
            lags = [out] + lags[:-1]
        return out


FORECASTERS: dict[str, type] = {"hold": _Hold, "ar": _AutoRegressive}


def register_forecaster(kind: str, handler: type) -> None:
    """Register a forecaster exposing fit(values, order) and predict(model, values, h)."""
    FORECASTERS[kind] = handler


def fit(kind: str, series: CentroidSeries, order: int = 0) -> ForecasterModel:
    """Train a model of the given kind on the centroid series.

    A singular AR fit falls back to sample-and-hold, with the fallback
    recorded on the model.
    """
    if kind not in FORECASTERS:
        raise ValueError(f"unknown forecaster kind {kind!r}")
    values = np.asarray(series.values, dtype=float)
    trained_at = series.start_t + len(values) - 1
    try:
        coef = FORECASTERS[kind].fit(values, order)
    except np.linalg.LinAlgError:
        return ForecasterModel(
            kind=kind, order=order, coefficients=None, trained_at=trained_at,
            fell_back_to_hold=True,
        )
    return ForecasterModel(kind=kind, order=order, coefficients=coef, trained_at=trained_at)


def forecast(model: ForecasterModel, series: CentroidSeries, h: int) -> float:
    """Forecast the centroid h steps past the end of the series.

    The series carries all values observed so far, so a model trained on a
    prefix still forecasts from the latest state.
    """
    if h < 1:
        raise ValueError("horizon must be >= 1")
    values = np.asarray(series.values, dtype=float)
    if model.fell_back_to_hold:
        return _Hold.predict(model, values, h)
    return FORECASTERS[model.kind].predict(model, values, h)


def predict_membership(history: PartitionHistory, m_prime: int) -> np.ndarray:
    """Per-node modal cluster label over the last m_prime+1 steps.

    Ties break to the tied label held most recently.
    """
    if len(history) == 0:
        raise ValueError("history must be non-empty")
    window = history.recent(m_prime + 1)
    stacked = np.stack([p.assignment for p in window])  # (W, N), newest last
    k = window[-1].k
    n = stacked.shape[1]
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        counts = np.bincount(stacked[:, i], minlength=k)
        best = counts.max()
        tied = np.where(counts == best)[0]
        if len(tied) == 1:
            out[i] = tied[0]
        else:
            tied_set = set(tied.tolist())
            for row in range(stacked.shape[0] - 1, -1, -1):
                if stacked[row, i] in tied_set:
                    out[i] = stacked[row, i]
                    break
    return out


def _nearest(point: np.ndarray, centroids: np.ndarray) -> int:
    d2 = ((centroids - point) ** 2).sum(axis=1)
    return int(np.argmin(d2))  # first minimum = lowest-index tie rule


def alpha_clamp(z: np.ndarray, j: int, centroids: np.ndarray) -> float:
    """Largest scale alpha in (0, 1] keeping c_j + alpha*(z - c_j) in cluster j.

    alpha is 1 when z itself is nearest to c_j. Otherwise the closed form
    min over competing centroids of ||d_k||^2 / (2 v.d_k) gives the boundary
    scale; boundary points falling to a lower-index competitor are retreated
    by the smallest representable decrements until the assignment holds.
    """
    z = np.atleast_1d(np.asarray(z, dtype=float))
    centroids = np.atleast_2d(np.asarray(centroids, dtype=float))
    cj = centroids[j]
    v = z - cj

    duplicates = np.where((centroids == cj).all(axis=1))[0]
    if len(duplicates) > 1 and not v.any():
        warnings.warn(
            f"degenerate clamp: centroid {j} duplicated at indices {duplicates.tolist()}",
            RuntimeWarning,
            stacklevel=2,
        )
        return 1.0

    if _nearest(z, centroids) == j:
        return 1.0

    alpha = 1.0
    for k in range(len(centroids)):
        if k == j:
            continue
        dk = centroids[k] - cj
        vdk = float(np.dot(v, dk))
        if vdk > 0.0:
            alpha = min(alpha, float(np.dot(dk, dk)) / (2.0 * vdk))

    for _ in range(200):
        if _nearest(cj + alpha * v, centroids) == j:
            return alpha
        alpha = math.nextafter(alpha, 0.0)
    while alpha > 0.0 and _nearest(cj + alpha * v, centroids) != j:
        alpha *= 0.5
    return alpha


def offset(
    node: int,
    j_star: int,
    partitions: list[Partition],
    stored: list[np.ndarray],
    m_prime: int,
    proj: np.ndarray | None = None,
) -> np.ndarray:
    """Average of scaled deviations of the node from cluster j_star's centroid.

    partitions and stored are aligned, newest last, covering at most
    m_prime+1 steps (fewer near the start of a run; the average renormalizes
    to the available count). proj selects the measurement-space components
    when clustering ran on extended feature vectors.
    """
    count = min(m_prime + 1, len(partitions))
    if count == 0:
        raise ValueError("need at least one partition")
    total: np.ndarray | None = None
    for m in range(count):
        part = partitions[-1 - m]
        z = stored[-1 - m][node]
        alpha = alpha_clamp(z, j_star, part.centroids)
        dev = z - part.centroids[j_star]
        if proj is not None:
            dev = dev[proj]
        term = alpha * dev
        total = term if total is None else total + term
    return total / count


@dataclass
class ForecastRecord:
    """Per-node forecasts issued at step t for target t+h."""

    t: int
    h: int
    centroid_forecasts: np.ndarray  # (k, n_components)
    membership_forecast: np.ndarray  # (N,)
    offsets: np.ndarray  # (N, n_components), post-clamp effective offsets
    node_forecasts: np.ndarray  # (N, n_components) == centroid[membership] + offsets


def forecast_nodes(
    t: int,
    h: int,
    models: dict[tuple[int, int], ForecasterModel],
    series: dict[tuple[int, int], CentroidSeries],
    history: PartitionHistory,
    recent_stored: list[np.ndarray],
    m_prime: int,
    proj: np.ndarray | None = None,
) -> ForecastRecord:
    """Compose centroid forecasts, membership prediction, and offsets.

    models may be empty (warm-up), in which case every centroid forecast is
    the sample-and-hold value. Final node forecasts are clamped to [0, 1];
    the recorded offsets absorb the clamp so the decomposition
    node == centroid[membership] + offset stays exact.
    """
    if len(history) == 0:
        raise ValueError("history must be non-empty")
    k = history.latest.k
    comps = (
        len(proj) if proj is not None else history.latest.centroids.shape[1]
    )
    cent_fc = np.empty((k, comps))
    for j in range(k):
        for c in range(comps):
            s = series[(j, c)]
            model = models.get((j, c))
            if model is None:
                cent_fc[j, c] = s.values[-1]
            else:
                cent_fc[j, c] = forecast(model, s, h)

    membership = predict_membership(history, m_prime)
    n = membership.shape[0]
    window = history.recent(m_prime + 1)
    stored_window = recent_stored[-len(window):]

    raw_offsets = np.empty((n, comps))
    for i in range(n):
        raw_offsets[i] = offset(i, int(membership[i]), window, stored_window, m_prime, proj)

    cents_sel = cent_fc[membership]
    clipped = np.clip(cents_sel + raw_offsets, 0.0, 1.0)
    offsets = clipped - cents_sel
    node_forecasts = cents_sel + offsets  # exact decomposition by construction
    return ForecastRecord(
        t=t,
        h=h,
        centroid_forecasts=cent_fc,
        membership_forecast=membership,
        offsets=offsets,
        node_forecasts=node_forecasts,
    )
