import numpy as np
import pytest

from monisum.clustering import Partition, PartitionHistory
from monisum.forecasting import (
    CentroidSeries,
    alpha_clamp,
    fit,
    forecast,
    forecast_nodes,
    offset,
    predict_membership,
)


def _series(values, cluster=0):
    s = CentroidSeries(cluster=cluster)
    for v in values:
        s.append(float(np.squeeze(v)))
    return s


def _partition(assignment, centroids, t):
    assignment = np.asarray(assignment)
    centroids = np.atleast_2d(np.asarray(centroids, dtype=float))
    if centroids.shape[0] == 1 and centroids.shape[1] > 1:
        centroids = centroids.T
    return Partition(assignment=assignment, centroids=centroids, k=centroids.shape[0], t=t)


def _history(partitions, m=1):
    hist = PartitionHistory(capacity=len(partitions) + 1, m=m)
    for p in partitions:
        hist.append(p)
    return hist


class TestFit:
    def test_constant_series_forecasts_constant(self):
        # Rank-deficient design: the minimum-norm fit still absorbs the level,
        # so any horizon forecasts the constant.
        model = fit("ar", _series([0.42] * 20), order=1)
        for h in (1, 3, 7):
            assert forecast(model, _series([0.42] * 20), h=h) == pytest.approx(0.42, abs=1e-9)

    def test_recovers_linear_recursion(self):
        # x_t = 0.5 x_{t-1} + 0.1 generated noiselessly from x_0 = 0.9.
        xs = [0.9]
        for _ in range(19):
            xs.append(0.5 * xs[-1] + 0.1)
        model = fit("ar", _series(xs), order=1)
        assert not model.fell_back_to_hold
        assert model.coefficients[0] == pytest.approx(0.1, abs=1e-6)
        assert model.coefficients[1] == pytest.approx(0.5, abs=1e-6)

    def test_too_short_series_rejected(self):
        with pytest.raises(ValueError, match="too short"):
            fit("ar", _series([0.5]), order=3)

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError, match="unknown forecaster"):
            fit("nope", _series([0.5, 0.6]))

    def test_hold_needs_one_value(self):
        with pytest.raises(ValueError):
            fit("hold", _series([]))


class TestForecast:
    def test_hold_returns_current_for_any_horizon(self):
        model = fit("hold", _series([0.1, 0.42]))
        s = _series([0.1, 0.42])
        for h in (1, 2, 10, 100):
            assert forecast(model, s, h) == 0.42

    def test_ar_on_sinusoid(self):
        t = np.arange(200)
        xs = 0.5 + 0.3 * np.sin(2 * np.pi * t / 50.0)
        model = fit("ar", _series(xs.tolist()), order=3)
        truth = 0.5 + 0.3 * np.sin(2 * np.pi * 200 / 50.0)
        got = forecast(model, _series(xs.tolist()), h=1)
        assert abs(got - truth) / abs(truth) < 0.05

    def test_ar_iterates_recursion(self):
        # Coefficient 0.5, intercept 0, last value 0.8: 0.4 then 0.2 at h=2.
        from monisum.forecasting import ForecasterModel

        model = ForecasterModel(kind="ar", order=1, coefficients=np.array([0.0, 0.5]))
        s = _series([0.8])
        assert forecast(model, s, h=2) == pytest.approx(0.2, abs=1e-12)

    def test_bad_horizon_rejected(self):
        model = fit("hold", _series([0.5]))
        with pytest.raises(ValueError):
            forecast(model, _series([0.5]), h=0)

    def test_ar_recovery_property(self):
        # Stable oscillatory AR(2), zero noise: coefficients recovered to 1e-6.
        a1, a2, b0 = 1.2, -0.8, 0.05
        xs = [0.5, 0.7]
        for _ in range(48):
            xs.append(b0 + a1 * xs[-1] + a2 * xs[-2])
        model = fit("ar", _series(xs), order=2)
        assert model.coefficients == pytest.approx([b0, a1, a2], abs=1e-6)

    def test_model_uses_transient_state(self):
        # Trained on a prefix, forecasting still starts from the full series.
        xs = [0.9]
        for _ in range(30):
            xs.append(0.5 * xs[-1] + 0.1)
        model = fit("ar", _series(xs[:15]), order=1)
        got = forecast(model, _series(xs), h=1)
        assert got == pytest.approx(0.5 * xs[-1] + 0.1, abs=1e-9)


class TestPredictMembership:
    def test_unanimous(self):
        parts = [_partition([2, 0, 1], [[0.1], [0.5], [0.9]], t) for t in range(1, 7)]
        hist = _history(parts)
        labels = predict_membership(hist, m_prime=5)
        assert labels.tolist() == [2, 0, 1]

    def test_tie_breaks_to_most_recent(self):
        # Node labels over 6 steps: 1,1,1,2,2,2 with m_prime=5 -> tie, pick 2.
        seq = [1, 1, 1, 2, 2, 2]
        parts = [
            _partition([seq[i], 0, 0], [[0.1], [0.5], [0.9]], t=i + 1) for i in range(6)
        ]
        hist = _history(parts)
        labels = predict_membership(hist, m_prime=5)
        assert labels[0] == 2

    def test_window_of_one(self):
        parts = [
            _partition([0, 1], [[0.2], [0.8]], t=1),
            _partition([1, 0], [[0.2], [0.8]], t=2),
        ]
        hist = _history(parts)
        labels = predict_membership(hist, m_prime=0)
        assert labels.tolist() == [1, 0]

    def test_stability_when_constant(self):
        parts = [_partition([1, 0], [[0.2], [0.8]], t) for t in range(1, 9)]
        hist = _history(parts)
        assert predict_membership(hist, m_prime=5).tolist() == [1, 0]


class TestAlphaClamp:
    def test_inside_own_cluster(self):
        cents = np.array([[0.2], [0.8]])
        assert alpha_clamp(np.array([0.3]), 0, cents) == 1.0

    def test_one_dim_boundary_case(self):
        # c_j = 0, competitor at 1, z = 0.9: alpha = 0.5 / 0.9.
        cents = np.array([[0.0], [1.0]])
        alpha = alpha_clamp(np.array([0.9]), 0, cents)
        assert alpha == pytest.approx(0.5 / 0.9, rel=1e-9)
        adjusted = 0.0 + alpha * 0.9
        assert adjusted == pytest.approx(0.5, abs=1e-9)
        # Boundary midpoint ties to the lower index, which is j here.
        d = np.abs(cents[:, 0] - adjusted)
        assert int(np.argmin(d)) == 0

    def test_zero_offset_direction(self):
        cents = np.array([[0.2], [0.8]])
        assert alpha_clamp(np.array([0.2]), 0, cents) == 1.0

    def test_grid_scan_oracle(self):
        # Library alpha must match the largest grid alpha whose adjusted point
        # lands in cluster j, for random 2-D geometries.
        rng = np.random.default_rng(21)
        grid = np.linspace(0.0, 1.0, 2001)
        for _ in range(40):
            cents = rng.random((4, 2))
            z = rng.random(2)
            j = int(rng.integers(4))
            alpha = alpha_clamp(z, j, cents)
            cj = cents[j]
            ok = []
            for a in grid:
                y = cj + a * (z - cj)
                d2 = ((cents - y) ** 2).sum(axis=1)
                ok.append(int(np.argmin(d2)) == j)
            # Largest grid point that stays in cluster j.
            best_grid = grid[max(i for i, good in enumerate(ok) if good)]
            assert alpha >= best_grid - 5e-4
            assert alpha <= best_grid + 5e-4 or alpha == 1.0

    def test_validity_property_randomized(self):
        rng = np.random.default_rng(33)
        for _ in range(300):
            k = int(rng.integers(2, 6))
            cents = rng.random((k, 3))
            z = rng.random(3)
            j = int(rng.integers(k))
            alpha = alpha_clamp(z, j, cents)
            assert 0.0 < alpha <= 1.0
            y = cents[j] + alpha * (z - cents[j])
            d2 = ((cents - y) ** 2).sum(axis=1)
            assert int(np.argmin(d2)) == j

    def test_boundary_to_lower_index_retreats(self):
        # Competitor has the LOWER index, so the exact midpoint would leave
        # cluster 1; alpha must retreat just below the closed form.
        cents = np.array([[1.0], [0.0]])
        alpha = alpha_clamp(np.array([0.9]), 1, cents)
        closed = 0.5 / 0.9
        assert alpha < closed
        assert alpha == pytest.approx(closed, rel=1e-12)
        y = 0.0 + alpha * 0.9
        d = np.abs(cents[:, 0] - y)
        assert int(np.argmin(d)) == 1

    def test_degenerate_duplicate_centroid_flags(self):
        cents = np.array([[0.5], [0.5]])
        with pytest.warns(RuntimeWarning, match="degenerate"):
            alpha = alpha_clamp(np.array([0.5]), 1, cents)
        assert alpha == 1.0


class TestOffset:
    def test_zero_when_on_centroid(self):
        parts = [_partition([0, 1], [[0.2], [0.8]], t) for t in range(1, 4)]
        stored = [np.array([[0.2], [0.8]])] * 3
        s = offset(0, 0, parts, stored, m_prime=2)
        assert s == pytest.approx([0.0])

    def test_single_term(self):
        parts = [_partition([0, 1], [[0.5], [0.9]], t=1)]
        stored = [np.array([[0.6], [0.9]])]
        s = offset(0, 0, parts, stored, m_prime=0)
        assert s == pytest.approx([0.1])

    def test_hand_evaluated_two_terms(self):
        # Deviations 0.1 with alpha=1 and 0.3 with alpha=0.5: (0.1+0.15)/2.
        # Geometry: c_j=0, competitor at 0.3 -> boundary at 0.15, so a stored
        # value of 0.3 clamps to alpha = 0.045/(2*0.09) = 0.5.
        older = _partition([0, 1], [[0.0], [0.6]], t=1)  # z=0.1 inside cluster 0
        newer = _partition([0, 1], [[0.0], [0.3]], t=2)  # z=0.3 clamps at 0.5
        stored = [np.array([[0.1], [0.6]]), np.array([[0.3], [0.35]])]
        s = offset(0, 0, [older, newer], stored, m_prime=1)
        assert s == pytest.approx([(0.1 + 0.15) / 2.0], abs=1e-12)

    def test_truncates_and_renormalizes_at_start(self):
        parts = [_partition([0, 1], [[0.5], [0.9]], t=1)]
        stored = [np.array([[0.7], [0.9]])]
        s = offset(0, 0, parts, stored, m_prime=5)  # only one step available
        assert s == pytest.approx([0.2])


class TestForecastNodes:
    def _setup(self, values_by_step, assignment, centroids_by_step):
        parts = [
            _partition(assignment, c, t=i + 1) for i, c in enumerate(centroids_by_step)
        ]
        hist = _history(parts)
        stored = [np.asarray(v, dtype=float) for v in values_by_step]
        k = parts[-1].k
        series = {}
        for j in range(k):
            series[(j, 0)] = _series([c[j] for c in centroids_by_step], cluster=j)
        return hist, stored, series

    def test_single_cluster_node_at_centroid(self):
        hist, stored, series = self._setup(
            [[[0.4], [0.4]]] * 3, [0, 0], [[0.4], [0.4], [0.4]]
        )
        rec = forecast_nodes(3, 5, {}, series, hist, stored, m_prime=2)
        assert np.allclose(rec.node_forecasts, [[0.4], [0.4]], atol=1e-12)

    def test_constant_trace_fixpoint(self):
        hist, stored, series = self._setup(
            [[[0.3], [0.7]]] * 4, [0, 1], [[[0.3], [0.7]]] * 4
        )
        model = {}
        for key in series:
            model[key] = fit("hold", series[key])
        for h in (1, 3, 9):
            rec = forecast_nodes(4, h, model, series, hist, stored, m_prime=3)
            assert np.allclose(rec.node_forecasts, [[0.3], [0.7]], atol=1e-6)

    def test_decomposition_identity_exact(self):
        rng = np.random.default_rng(8)
        values = [rng.random((5, 1)) for _ in range(4)]
        cents = [[[0.2], [0.8]]] * 4
        hist, stored, series = self._setup(values, [0, 0, 1, 1, 0], cents)
        rec = forecast_nodes(4, 2, {}, series, hist, stored, m_prime=3)
        lhs = rec.node_forecasts
        rhs = rec.centroid_forecasts[rec.membership_forecast] + rec.offsets
        assert np.array_equal(lhs, rhs)

    def test_hold_horizon_invariance(self):
        rng = np.random.default_rng(12)
        values = [rng.random((4, 1)) for _ in range(5)]
        cents = [[[v[0, 0]], [v[-1, 0]]] for v in values]
        hist, stored, series = self._setup(values, [0, 0, 1, 1], cents)
        recs = [
            forecast_nodes(5, h, {}, series, hist, stored, m_prime=2) for h in (1, 4, 20)
        ]
        for rec in recs[1:]:
            assert np.array_equal(rec.node_forecasts, recs[0].node_forecasts)

    def test_forecasts_clamped_to_unit_interval(self):
        from monisum.forecasting import ForecasterModel

        hist, stored, series = self._setup(
            [[[0.95], [0.05]]] * 3, [0, 1], [[[0.95], [0.05]]] * 3
        )
        # A runaway AR model would leave [0, 1] without the clamp.
        models = {
            (0, 0): ForecasterModel(kind="ar", order=1, coefficients=np.array([0.5, 1.0])),
            (1, 0): ForecasterModel(kind="ar", order=1, coefficients=np.array([-0.5, 1.0])),
        }
        rec = forecast_nodes(3, 5, models, series, hist, stored, m_prime=2)
        assert rec.node_forecasts.min() >= 0.0
        assert rec.node_forecasts.max() <= 1.0
