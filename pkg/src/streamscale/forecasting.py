"""Workload forecasting over a 15-minute horizon at 1 Hz.

The built-in model combines a double-exponentially-smoothed level/trend
with an additive seasonal profile whose period is detected from the
autocorrelation of detrended history. Forecast quality is scored per
control loop with WAPE; sustained poor scores switch the consumer to a
linear fallback and eventually trigger a retrain on recent history.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    InsufficientHistoryError,
    UndefinedScoreError,
    UnfitModelError,
)

HORIZON_S = 900
POOR_WAPE_THRESHOLD = 0.25
RETRAIN_AFTER_POOR = 15
MIN_FIT_SAMPLES = 120
MIN_SEASON_LAG = 20
ACF_PEAK_THRESHOLD = 0.3


class WorkloadSeries:
    """Append-only per-second workload history."""

    def __init__(self, start_time: float = 0.0, values=None) -> None:
        self.start_time = float(start_time)
        self._values = np.asarray(values if values is not None else [], dtype=np.float64)

    def __len__(self) -> int:
        return len(self._values)

    @property
    def values(self) -> np.ndarray:
        return self._values

    @property
    def end_time(self) -> float:
        return self.start_time + len(self._values)

    def extend(self, values) -> None:
        arr = np.asarray(values, dtype=np.float64)
        self._values = np.concatenate([self._values, arr]) if len(self._values) else arr.copy()

    def tail(self, n: int) -> np.ndarray:
        return self._values[-n:] if n > 0 else self._values[:0]

    def tail_series(self, n: int) -> "WorkloadSeries":
        values = self.tail(n)
        return WorkloadSeries(self.end_time - len(values), values)

    def window(self, t0: float, t1: float) -> np.ndarray:
        i0 = max(int(t0 - self.start_time), 0)
        i1 = max(int(t1 - self.start_time), i0)
        return self._values[i0:i1]


@dataclass
class Forecast:
    """Per-second workload forecast starting at ``start``."""

    start: float
    values: np.ndarray
    source: str  # "model" | "fallback"

    @property
    def horizon(self) -> int:
        return len(self.values)

    def head(self, n: int) -> np.ndarray:
        return self.values[:n]

    def peak(self, until: int | None = None) -> float:
        segment = self.values if until is None else self.values[: max(until, 1)]
        return float(segment.max())


@dataclass
class ForecasterHealth:
    """Rolling quality state for the primary forecaster."""

    consecutive_poor: int = 0
    last_wape: float | None = None
    retraining: bool = False


def wape(actual, predicted) -> float:
    """Weighted absolute percentage error of a forecast segment."""
    a = np.asarray(actual, dtype=np.float64)
    p = np.asarray(predicted, dtype=np.float64)
    if a.shape != p.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {p.shape}")
    denom = float(np.sum(a))
    if denom <= 0.0:
        raise UndefinedScoreError("WAPE undefined for zero actual volume")
    return float(np.sum(np.abs(a - p))) / denom


def _linear_fit(values: np.ndarray) -> tuple[float, float]:
    """Least-squares line over indices 0..n-1, returned as (intercept, slope)."""
    n = len(values)
    x = np.arange(n, dtype=np.float64)
    slope, intercept = np.polyfit(x, values, 1) if n > 1 else (0.0, float(values[0]))
    return float(intercept), float(slope)


def _detect_period(residuals: np.ndarray) -> int | None:
    """Dominant period of a detrended series via its autocorrelation peaks."""
    n = len(residuals)
    max_lag = n // 2
    if max_lag <= MIN_SEASON_LAG:
        return None
    r = residuals - residuals.mean()
    denom = float(np.dot(r, r))
    if denom <= 1e-9 * n:
        return None
    ac = np.correlate(r, r, mode="full")[n - 1 :] / denom
    best_lag, best_value = None, ACF_PEAK_THRESHOLD
    for lag in range(MIN_SEASON_LAG, max_lag):
        value = ac[lag]
        if value >= best_value and value > ac[lag - 1] and value >= ac[lag + 1]:
            best_lag, best_value = lag, value
    return best_lag


class TrendSeasonalForecaster:
    """Holt-style level/trend smoothing with an additive seasonal profile.

    fit() decomposes a history window into line + seasonal residual profile;
    update() folds in new observations with exponential smoothing; forecast()
    projects level + trend + season over the horizon, clamped to >= 0.
    """

    def __init__(
        self,
        alpha: float = 0.4,
        beta: float = 0.08,
        gamma: float = 0.3,
        horizon_s: int = HORIZON_S,
    ) -> None:
        self.alpha = alpha
        self.beta = beta
        self.gamma = gamma
        self.horizon_s = horizon_s
        self._level = 0.0
        self._trend = 0.0
        self._season: np.ndarray | None = None
        self._phase = 0
        self._end_time = 0.0
        self._fitted = False

    @property
    def fitted(self) -> bool:
        return self._fitted

    @property
    def period(self) -> int | None:
        return len(self._season) if self._season is not None else None

    def fit(self, history: WorkloadSeries) -> "TrendSeasonalForecaster":
        values = history.values
        n = len(values)
        if n < MIN_FIT_SAMPLES:
            raise InsufficientHistoryError(
                f"fit needs >= {MIN_FIT_SAMPLES} samples, got {n}"
            )
        intercept, slope = _linear_fit(values)
        residuals = values - (intercept + slope * np.arange(n))
        period = _detect_period(residuals)
        if period is not None:
            season = np.zeros(period)
            for k in range(period):
                season[k] = residuals[k::period].mean()
            season -= season.mean()
            # refit the line on the deseasonalized series so trend and
            # season do not double-count the same variation
            phase_values = season[np.arange(n) % period]
            intercept, slope = _linear_fit(values - phase_values)
            self._season = season
            self._phase = n % period
        else:
            self._season = None
            self._phase = 0
        self._level = intercept + slope * (n - 1)
        self._trend = slope
        self._end_time = history.end_time
        self._fitted = True
        return self

    def update(self, latest: WorkloadSeries) -> None:
        if not self._fitted:
            raise UnfitModelError("update() called before fit()")
        for value in latest.values:
            if self._season is not None:
                seasonal = self._season[self._phase]
                level = self.alpha * (value - seasonal) + (1.0 - self.alpha) * (
                    self._level + self._trend
                )
                self._trend = self.beta * (level - self._level) + (1.0 - self.beta) * self._trend
                self._season[self._phase] = (
                    self.gamma * (value - level) + (1.0 - self.gamma) * seasonal
                )
                self._level = level
                self._phase = (self._phase + 1) % len(self._season)
            else:
                level = self.alpha * value + (1.0 - self.alpha) * (self._level + self._trend)
                self._trend = self.beta * (level - self._level) + (1.0 - self.beta) * self._trend
                self._level = level
        self._end_time += len(latest.values)

    def forecast(self) -> Forecast:
        if not self._fitted:
            raise UnfitModelError("forecast() called before fit()")
        steps = np.arange(1, self.horizon_s + 1, dtype=np.float64)
        values = self._level + self._trend * steps
        if self._season is not None:
            period = len(self._season)
            idx = (self._phase + np.arange(self.horizon_s)) % period
            values = values + self._season[idx]
        return Forecast(self._end_time, np.maximum(values, 0.0), "model")

    def retrained(self, history: WorkloadSeries) -> "TrendSeasonalForecaster":
        """Fresh instance with the same smoothing parameters, fitted anew."""
        return TrendSeasonalForecaster(
            self.alpha, self.beta, self.gamma, self.horizon_s
        ).fit(history)


def fallback_forecast(recent: WorkloadSeries, horizon_s: int = HORIZON_S) -> Forecast:
    """Linear projection of a recent window, used when the model scores poorly."""
    n = len(recent)
    if n < 2:
        raise InsufficientHistoryError("fallback needs at least 2 recent samples")
    intercept, slope = _linear_fit(recent.values)
    steps = np.arange(n, n + horizon_s, dtype=np.float64)
    values = np.maximum(intercept + slope * steps, 0.0)
    return Forecast(recent.end_time, values, "fallback")


def select_forecast(
    primary: Forecast,
    recent: WorkloadSeries,
    last_wape: float | None,
    threshold: float = POOR_WAPE_THRESHOLD,
) -> Forecast:
    """Primary forecast while its last score is acceptable, else the fallback."""
    if last_wape is None or last_wape <= threshold:
        return primary
    return fallback_forecast(recent, primary.horizon)


def record_quality(
    health: ForecasterHealth,
    wape_value: float | None,
    threshold: float = POOR_WAPE_THRESHOLD,
    retrain_after: int = RETRAIN_AFTER_POOR,
) -> bool:
    """Fold one WAPE score into the health state.

    Returns True when a retrain should start: the score has been poor (or
    undefined) for retrain_after consecutive loops and no retrain is already
    in flight. The retraining flag is set on signal; the owner clears it
    when the retrained model is installed or the attempt fails.
    """
    health.last_wape = wape_value
    poor = wape_value is None or wape_value > threshold
    if not poor:
        health.consecutive_poor = 0
        return False
    health.consecutive_poor += 1
    if health.consecutive_poor >= retrain_after and not health.retraining:
        health.retraining = True
        return True
    return False
