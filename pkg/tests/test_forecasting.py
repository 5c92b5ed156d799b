import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from streamscale.errors import (
    InsufficientHistoryError,
    UndefinedScoreError,
    UnfitModelError,
)
from streamscale.forecasting import (
    HORIZON_S,
    POOR_WAPE_THRESHOLD,
    Forecast,
    ForecasterHealth,
    TrendSeasonalForecaster,
    WorkloadSeries,
    fallback_forecast,
    record_quality,
    select_forecast,
    wape,
)

from oracles import line_projection


class TestWape:
    def test_perfect_forecast(self):
        assert wape([100.0, 200.0], [100.0, 200.0]) == 0.0

    def test_direct_formula(self):
        assert wape([100.0, 100.0], [110.0, 90.0]) == pytest.approx(0.1)

    def test_total_miss(self):
        assert wape([50.0, 50.0], [0.0, 0.0]) == pytest.approx(1.0)

    def test_zero_actual_undefined(self):
        with pytest.raises(UndefinedScoreError):
            wape([0.0, 0.0], [10.0, 10.0])

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            wape([1.0, 2.0], [1.0])

    @given(
        st.lists(st.floats(min_value=1.0, max_value=1e5), min_size=1, max_size=30),
        st.floats(min_value=0.01, max_value=1000.0),
    )
    def test_scale_invariance(self, actual, factor):
        rng = np.random.default_rng(0)
        a = np.array(actual)
        p = a * rng.uniform(0.5, 1.5, size=len(a))
        assert wape(a * factor, p * factor) == pytest.approx(wape(a, p))


class TestForecaster:
    def test_requires_fit_before_forecast(self):
        model = TrendSeasonalForecaster()
        with pytest.raises(UnfitModelError):
            model.forecast()
        with pytest.raises(UnfitModelError):
            model.update(WorkloadSeries(0.0, [1.0]))

    def test_fit_needs_minimum_history(self):
        with pytest.raises(InsufficientHistoryError):
            TrendSeasonalForecaster().fit(WorkloadSeries(0.0, np.ones(50)))

    def test_constant_history(self):
        history = WorkloadSeries(0.0, np.full(600, 1000.0))
        forecast = TrendSeasonalForecaster().fit(history).forecast()
        assert forecast.horizon == HORIZON_S
        assert forecast.start == 600.0
        assert forecast.source == "model"
        assert np.all(np.abs(forecast.values - 1000.0) <= 10.0)  # within 1%

    def test_linear_ramp_continues(self):
        values = 500.0 + 10.0 * np.arange(600)
        forecast = TrendSeasonalForecaster().fit(WorkloadSeries(0.0, values)).forecast()
        truth = 500.0 + 10.0 * np.arange(600, 600 + HORIZON_S)
        assert np.all(np.abs(forecast.values - truth) / truth <= 0.05)

    def test_sine_phase_alignment(self):
        # two visible periods; the fitted seasonal profile must keep the
        # horizon in phase with the true continuation
        period = 400
        t = np.arange(2 * period)
        values = 10_000.0 + 3_000.0 * np.sin(2 * np.pi * t / period)
        forecast = TrendSeasonalForecaster().fit(WorkloadSeries(0.0, values)).forecast()
        t_future = np.arange(2 * period, 2 * period + HORIZON_S)
        truth = 10_000.0 + 3_000.0 * np.sin(2 * np.pi * t_future / period)
        assert wape(truth, forecast.values) < 0.25

    def test_forecast_always_full_horizon(self):
        model = TrendSeasonalForecaster().fit(WorkloadSeries(0.0, np.ones(120)))
        assert model.forecast().horizon == HORIZON_S
        model.update(WorkloadSeries(120.0, np.ones(60)))
        assert model.forecast().horizon == HORIZON_S

    def test_forecast_clamped_nonnegative(self):
        values = np.maximum(1000.0 - 5.0 * np.arange(300), 0.0)
        forecast = TrendSeasonalForecaster().fit(WorkloadSeries(0.0, values)).forecast()
        assert np.all(forecast.values >= 0.0)

    def test_update_advances_start(self):
        model = TrendSeasonalForecaster().fit(WorkloadSeries(0.0, np.ones(120)))
        model.update(WorkloadSeries(120.0, np.ones(60)))
        assert model.forecast().start == 180.0

    def test_periodic_wape_beats_threshold_over_next_loop(self):
        # noiseless periodic input with period <= 450 s: the model's score
        # over the next loop interval stays below the poor threshold
        for period in (60, 150, 300, 450):
            t = np.arange(1800)
            values = 5_000.0 + 2_000.0 * np.sin(2 * np.pi * t / period)
            model = TrendSeasonalForecaster().fit(WorkloadSeries(0.0, values))
            forecast = model.forecast()
            t_next = np.arange(1800, 1860)
            truth = 5_000.0 + 2_000.0 * np.sin(2 * np.pi * t_next / period)
            assert wape(truth, forecast.head(60)) < POOR_WAPE_THRESHOLD, period

    def test_retrained_returns_fresh_fitted_model(self):
        model = TrendSeasonalForecaster(alpha=0.3, beta=0.05, gamma=0.2)
        model.fit(WorkloadSeries(0.0, np.ones(120)))
        fresh = model.retrained(WorkloadSeries(0.0, np.full(240, 7.0)))
        assert fresh is not model
        assert fresh.alpha == 0.3 and fresh.beta == 0.05 and fresh.gamma == 0.2
        assert fresh.fitted
        assert fresh.forecast().values == pytest.approx(np.full(HORIZON_S, 7.0), abs=1.0)


class TestFallback:
    def test_constant(self):
        recent = WorkloadSeries(0.0, np.full(300, 500.0))
        forecast = fallback_forecast(recent)
        assert forecast.source == "fallback"
        assert forecast.values == pytest.approx(np.full(HORIZON_S, 500.0))

    def test_negative_slope_clamps_at_zero(self):
        # slope -1 from 600: zero from +600 s onward
        recent = WorkloadSeries(0.0, np.array([601.0, 600.0]))
        forecast = fallback_forecast(recent)
        assert forecast.values[0] == pytest.approx(599.0)
        assert forecast.values[598] == pytest.approx(1.0)
        assert np.all(forecast.values[599:] == 0.0)

    def test_matches_closed_form_projection(self):
        ramp = 2.0 * np.arange(1000)
        recent = WorkloadSeries(700.0, ramp[700:])
        forecast = fallback_forecast(recent)
        assert forecast.values == pytest.approx(line_projection(ramp[700:], HORIZON_S))
        assert forecast.start == 1000.0

    def test_needs_two_samples(self):
        with pytest.raises(InsufficientHistoryError):
            fallback_forecast(WorkloadSeries(0.0, [5.0]))

    def test_deterministic(self):
        recent = WorkloadSeries(50.0, np.linspace(10.0, 400.0, 300))
        a = fallback_forecast(recent)
        b = fallback_forecast(WorkloadSeries(50.0, np.linspace(10.0, 400.0, 300)))
        assert np.array_equal(a.values, b.values)


class TestSelectForecast:
    @pytest.fixture
    def primary(self):
        return Forecast(300.0, np.full(HORIZON_S, 1000.0), "model")

    @pytest.fixture
    def recent(self):
        return WorkloadSeries(0.0, np.full(300, 2000.0))

    def test_good_score_keeps_primary(self, primary, recent):
        assert select_forecast(primary, recent, 0.05) is primary

    def test_poor_score_switches_to_fallback(self, primary, recent):
        chosen = select_forecast(primary, recent, 0.30)
        assert chosen.source == "fallback"
        assert chosen.values == pytest.approx(np.full(HORIZON_S, 2000.0))

    def test_threshold_is_inclusive(self, primary, recent):
        assert select_forecast(primary, recent, 0.25) is primary

    def test_unscored_keeps_primary(self, primary, recent):
        assert select_forecast(primary, recent, None) is primary


class TestRecordQuality:
    def test_reset_on_good_score(self):
        health = ForecasterHealth()
        for _ in range(14):
            assert not record_quality(health, 0.9)
        assert not record_quality(health, 0.1)
        assert health.consecutive_poor == 0
        assert health.last_wape == 0.1

    def test_signal_after_15_poor(self):
        health = ForecasterHealth()
        signals = [record_quality(health, 0.5) for _ in range(20)]
        assert signals.index(True) == 14  # the 15th poor score
        assert sum(signals) == 1  # in-flight guard suppresses repeats

    def test_no_duplicate_while_retraining(self):
        health = ForecasterHealth(consecutive_poor=14, retraining=True)
        assert not record_quality(health, 0.5)

    def test_resignal_after_failed_retrain(self):
        health = ForecasterHealth()
        assert any(record_quality(health, 0.5) for _ in range(15))
        health.retraining = False  # owner reports the attempt failed
        assert record_quality(health, 0.5)

    def test_undefined_score_counts_as_poor(self):
        health = ForecasterHealth()
        assert not record_quality(health, None)
        assert health.consecutive_poor == 1
        assert health.last_wape is None

    def test_boundary_score_is_not_poor(self):
        health = ForecasterHealth(consecutive_poor=14)
        assert not record_quality(health, POOR_WAPE_THRESHOLD)
        assert health.consecutive_poor == 0


class TestWorkloadSeries:
    def test_extend_and_tail(self):
        series = WorkloadSeries(10.0)
        series.extend([1.0, 2.0])
        series.extend(np.array([3.0]))
        assert len(series) == 3
        assert series.end_time == 13.0
        assert series.tail(2).tolist() == [2.0, 3.0]
        assert series.tail(0).tolist() == []

    def test_window_clips_to_bounds(self):
        series = WorkloadSeries(100.0, np.arange(10.0))
        assert series.window(102.0, 105.0).tolist() == [2.0, 3.0, 4.0]
        assert series.window(90.0, 101.0).tolist() == [0.0]
        assert series.window(105.0, 104.0).tolist() == []

    def test_tail_series_start_time(self):
        series = WorkloadSeries(0.0, np.arange(100.0))
        tail = series.tail_series(30)
        assert tail.start_time == 70.0
        assert tail.values.tolist() == list(np.arange(70.0, 100.0))
