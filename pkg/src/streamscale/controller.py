"""MAPE-K control loop for horizontal scaling of a stream processing job.

Each tick monitors per-worker metrics, updates the capacity and forecast
models, picks the smallest scale-out whose capacity covers the average
workload, the forecast over its own recovery window, and the full forecast
horizon while keeping predicted recovery time under the target, and applies
the decision through an executor. Background work (forecaster retraining,
recovery measurement) hands results back at the start of a later tick.
"""

from __future__ import annotations

import logging
import math
import threading
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .capacity import (
    IDLE_CPU,
    OBSERVED_TTL_S,
    CapacityTable,
    MetricSample,
    RegressionState,
    estimate_capacity_table,
    update_regression,
)
from .errors import (
    ProviderUnavailableError,
    ScalingFailedError,
    UndefinedScoreError,
    UndefinedSkewError,
)
from .forecasting import (
    POOR_WAPE_THRESHOLD,
    RETRAIN_AFTER_POOR,
    Forecast,
    ForecasterHealth,
    TrendSeasonalForecaster,
    WorkloadSeries,
    record_quality,
    select_forecast,
    wape,
)
from .recovery import (
    ANOMALY_MIN_SAMPLES,
    FAILURE,
    SCALE_IN,
    SCALE_OUT,
    AnomalyState,
    RecoveryConfig,
    RecoveryMeasurement,
    RecoveryMonitor,
    RecoveryPrediction,
    accumulated_backlog,
    predict_recovery_time,
    update_anomaly,
)

logger = logging.getLogger(__name__)

NO_CHANGE = "no-change"
RECENT_RESCALE_OK = "recent-rescale-ok"
FORCED_MAX = "forced-max"
GRACE_PERIOD = "grace-period"


@dataclass(frozen=True)
class ControllerConfig:
    loop_interval_s: int = 60
    grace_period_s: float = 180.0
    rescale_backoff_s: float = 600.0
    min_fit_history_s: int = 120
    fallback_window_s: int = 300
    retrain_window_s: int = 7200
    poor_wape_threshold: float = POOR_WAPE_THRESHOLD
    retrain_after_poor: int = RETRAIN_AFTER_POOR
    observed_ttl_s: float = OBSERVED_TTL_S


@dataclass
class ScalingDecision:
    target_parallelism: int
    reason: str  # no-change | recent-rescale-ok | scale-out | scale-in | forced-max | grace-period


@dataclass
class Knowledge:
    """Shared state between the MAPE phases and the models."""

    max_scaleout: int
    recovery: RecoveryConfig
    current_parallelism: int = 1
    regressions: dict[str, RegressionState] = field(default_factory=dict)
    latest_samples: dict[str, MetricSample] = field(default_factory=dict)
    capacity_table: CapacityTable = field(default_factory=CapacityTable)
    history: WorkloadSeries = field(default_factory=WorkloadSeries)
    forecast: Forecast | None = None
    forecaster_health: ForecasterHealth = field(default_factory=ForecasterHealth)
    anomaly: AnomalyState = field(default_factory=AnomalyState)
    last_rescale_time: float | None = None
    last_action_time: float | None = None
    consumer_lag: float = 0.0


@dataclass
class MetricsWindow:
    """One monitoring window delivered by a MetricsProvider."""

    end_time: float
    worker_samples: dict[str, MetricSample]
    workload: np.ndarray  # per-second arrivals over the window
    throughput: np.ndarray  # per-second total processed over the window
    consumer_lag: float
    parallelism: int


class MetricsProvider(ABC):
    @abstractmethod
    def poll(self, window_s: int) -> MetricsWindow:
        """Deliver metrics since the last poll; raises ProviderUnavailableError."""


class ScalingExecutor(ABC):
    @abstractmethod
    def rescale(self, target: int) -> None:
        """Apply a new worker count; raises ScalingFailedError."""


class InlineRetrainer:
    """Runs retrain jobs synchronously; keeps harness runs deterministic."""

    class _Handle:
        def __init__(self, fn: Callable):
            try:
                self._result, self._error = fn(), None
            except Exception as exc:  # noqa: BLE001 - reported via result()
                self._result, self._error = None, exc

        def done(self) -> bool:
            return True

        def result(self):
            if self._error is not None:
                raise self._error
            return self._result

    def submit(self, fn: Callable) -> "_Handle":
        return InlineRetrainer._Handle(fn)


class ThreadRetrainer:
    """Runs retrain jobs on a daemon thread, handed off via done()/result()."""

    class _Handle:
        def __init__(self, fn: Callable):
            self._result = None
            self._error: Exception | None = None
            self._thread = threading.Thread(target=self._run, args=(fn,), daemon=True)
            self._thread.start()

        def _run(self, fn: Callable) -> None:
            try:
                self._result = fn()
            except Exception as exc:  # noqa: BLE001 - reported via result()
                self._error = exc

        def done(self) -> bool:
            return not self._thread.is_alive()

        def result(self):
            self._thread.join()
            if self._error is not None:
                raise self._error
            return self._result

    def submit(self, fn: Callable) -> "_Handle":
        return ThreadRetrainer._Handle(fn)


@dataclass
class DecisionInputs:
    """Snapshot of everything decide() looked at, for replay by test oracles."""

    now: float
    current_parallelism: int
    max_scaleout: int
    capacities: dict[int, float]
    w_avg: float
    forecast_values: np.ndarray
    consumer_lag: float
    last_rescale_time: float | None
    last_action_time: float | None
    grace_period_s: float
    rescale_backoff_s: float
    loop_interval_s: int
    target_recovery_time_s: float
    downtime_scale_out_s: float
    downtime_scale_in_s: float
    checkpoint_tail: np.ndarray


@dataclass
class TickResult:
    """What one control-loop tick observed and did."""

    time: float
    skipped: bool = False
    decision: ScalingDecision | None = None
    executed: bool = False
    capacity_estimate: float | None = None
    parallelism: int = 0
    wape: float | None = None
    forecast_source: str | None = None
    retrain_signaled: bool = False
    recovery_measurement: RecoveryMeasurement | None = None
    predicted_recovery: RecoveryPrediction | None = None
    inputs: DecisionInputs | None = None


def _direction(current: int, target: int) -> str:
    if target == current:
        return FAILURE
    return SCALE_OUT if target > current else SCALE_IN


def _decide_details(
    knowledge: Knowledge, config: ControllerConfig, now: float
) -> tuple[ScalingDecision, DecisionInputs | None, dict[int, RecoveryPrediction]]:
    k = knowledge
    current = k.current_parallelism

    def snapshot() -> DecisionInputs:
        return DecisionInputs(
            now=now,
            current_parallelism=current,
            max_scaleout=k.max_scaleout,
            capacities={
                i: k.capacity_table.entries[i].capacity
                for i in k.capacity_table.entries
            },
            w_avg=float(np.mean(k.history.tail(config.loop_interval_s))),
            forecast_values=k.forecast.values.copy(),
            consumer_lag=k.consumer_lag,
            last_rescale_time=k.last_rescale_time,
            last_action_time=k.last_action_time,
            grace_period_s=config.grace_period_s,
            rescale_backoff_s=config.rescale_backoff_s,
            loop_interval_s=config.loop_interval_s,
            target_recovery_time_s=k.recovery.target_recovery_time_s,
            downtime_scale_out_s=k.recovery.downtime_scale_out_s,
            downtime_scale_in_s=k.recovery.downtime_scale_in_s,
            checkpoint_tail=k.history.tail(k.recovery.checkpoint_interval_s).copy(),
        )

    if (
        k.last_action_time is not None
        and now - k.last_action_time < config.grace_period_s
    ):
        snap = snapshot() if k.forecast is not None and len(k.history) else None
        return ScalingDecision(current, GRACE_PERIOD), snap, {}

    forecast = k.forecast
    inputs = snapshot()
    w_avg = inputs.w_avg

    predictions: dict[int, RecoveryPrediction] = {}
    c_current = k.capacity_table.capacity(current)
    if (
        k.last_rescale_time is not None
        and now - k.last_rescale_time < config.rescale_backoff_s
        and c_current is not None
        and c_current > w_avg
        and c_current > forecast.peak(config.loop_interval_s)
    ):
        # a recent rescale gets time to prove itself as long as it keeps up
        return ScalingDecision(current, RECENT_RESCALE_OK), inputs, predictions

    full_peak = forecast.peak()
    backlogs: dict[str, float] = {}
    for i in range(1, k.max_scaleout + 1):
        c_i = k.capacity_table.capacity(i)
        if c_i is None or not c_i > w_avg:
            continue
        direction = _direction(current, i)
        if direction not in backlogs:
            backlogs[direction] = accumulated_backlog(
                k.history, forecast, k.recovery, direction
            )
        prediction = predict_recovery_time(
            c_i, forecast, backlogs[direction], k.recovery.downtime_for(direction)
        )
        predictions[i] = prediction
        if not prediction.feasible or prediction.total_s > k.recovery.target_recovery_time_s:
            continue
        if c_i < forecast.peak(math.ceil(prediction.total_s)):
            continue
        if i == current:
            return ScalingDecision(current, NO_CHANGE), inputs, predictions
        if i < current and c_i < k.consumer_lag:
            # scale-in waits until the system has caught up
            continue
        if c_i > full_peak:
            reason = SCALE_IN if i < current else SCALE_OUT
            return ScalingDecision(i, reason), inputs, predictions
    return ScalingDecision(k.max_scaleout, FORCED_MAX), inputs, predictions


def decide(knowledge: Knowledge, config: ControllerConfig, now: float) -> ScalingDecision:
    """Pick the target scale-out for the current Knowledge snapshot."""
    decision, _, _ = _decide_details(knowledge, config, now)
    return decision


class ControlLoop:
    """Drives Monitor -> Analyze -> Plan -> Execute against one provider."""

    def __init__(
        self,
        provider: MetricsProvider,
        executor: ScalingExecutor,
        max_scaleout: int,
        recovery: RecoveryConfig,
        config: ControllerConfig | None = None,
        forecaster: TrendSeasonalForecaster | None = None,
        retrainer=None,
        initial_parallelism: int = 1,
    ) -> None:
        self.provider = provider
        self.executor = executor
        self.config = config or ControllerConfig()
        self.forecaster = forecaster or TrendSeasonalForecaster()
        self.retrainer = retrainer or InlineRetrainer()
        self.knowledge = Knowledge(
            max_scaleout=max_scaleout,
            recovery=recovery,
            current_parallelism=initial_parallelism,
        )
        self._pending_retrain = None  # (handle, snapshot_end_time)
        self._last_primary: Forecast | None = None
        self._recovery_monitor: RecoveryMonitor | None = None
        self._monitor_direction = SCALE_OUT
        self.rt_violations: list[float] = []
        self.skipped_ticks = 0

    def tick(self, now: float) -> TickResult:
        self._install_retrain()
        try:
            window = self.provider.poll(self.config.loop_interval_s)
        except ProviderUnavailableError as exc:
            logger.warning("metrics unavailable, skipping tick at %s: %s", now, exc)
            self.skipped_ticks += 1
            return TickResult(time=now, skipped=True, parallelism=self.knowledge.current_parallelism)
        self._monitor(window)
        result = TickResult(time=now, parallelism=self.knowledge.current_parallelism)
        self._analyze(window, now, result)
        self._plan_and_execute(now, result)
        return result

    # --- monitor ---

    def _monitor(self, window: MetricsWindow) -> None:
        k = self.knowledge
        k.current_parallelism = window.parallelism
        for worker_id, sample in window.worker_samples.items():
            k.latest_samples[worker_id] = sample
            if sample.cpu >= IDLE_CPU:
                state = k.regressions.setdefault(worker_id, RegressionState())
                update_regression(state, sample)
        for worker_id in list(k.latest_samples):
            if worker_id not in window.worker_samples:
                k.latest_samples.pop(worker_id)
                k.regressions.pop(worker_id, None)
        k.history.extend(window.workload)
        k.consumer_lag = float(window.consumer_lag)

    # --- analyze ---

    def _analyze(self, window: MetricsWindow, now: float, result: TickResult) -> None:
        k = self.knowledge
        for i in range(len(window.workload)):
            workload = float(window.workload[i])
            throughput = float(window.throughput[i])
            if self._recovery_monitor is not None:
                measurement = self._recovery_monitor.observe(workload, throughput)
                if measurement is not None:
                    self._finish_recovery(measurement, now)
                    result.recovery_measurement = measurement
            else:
                # the baseline only learns steady-state seconds; recovery
                # windows are known-anomalous and would poison it
                update_anomaly(k.anomaly, workload, throughput)

        try:
            k.capacity_table = estimate_capacity_table(
                k.regressions,
                k.latest_samples,
                k.current_parallelism,
                k.max_scaleout,
                k.capacity_table,
                now,
                self.config.observed_ttl_s,
            )
            result.capacity_estimate = k.capacity_table.capacity(k.current_parallelism)
        except UndefinedSkewError:
            logger.debug("cluster idle at %s, capacity table kept", now)

        if not self.forecaster.fitted:
            if len(k.history) >= self.config.min_fit_history_s:
                self.forecaster.fit(k.history)
            else:
                return
        else:
            segment = WorkloadSeries(window.end_time - len(window.workload), window.workload)
            self.forecaster.update(segment)

        primary = self.forecaster.forecast()
        wape_value: float | None = None
        scored = False
        if self._last_primary is not None:
            try:
                wape_value = wape(window.workload, self._last_primary.head(len(window.workload)))
            except UndefinedScoreError:
                wape_value = None
            scored = True
        if scored:
            result.wape = wape_value
            result.retrain_signaled = record_quality(
                k.forecaster_health,
                wape_value,
                self.config.poor_wape_threshold,
                self.config.retrain_after_poor,
            )
            if result.retrain_signaled:
                self._submit_retrain()
        recent = k.history.tail_series(self.config.fallback_window_s)
        k.forecast = select_forecast(
            primary, recent, wape_value if scored else None, self.config.poor_wape_threshold
        )
        result.forecast_source = k.forecast.source
        self._last_primary = primary

    # --- plan + execute ---

    def _plan_and_execute(self, now: float, result: TickResult) -> None:
        k = self.knowledge
        if k.forecast is None or len(k.history) < k.recovery.checkpoint_interval_s:
            return
        decision, inputs, predictions = _decide_details(k, self.config, now)
        result.decision = decision
        result.inputs = inputs
        target = decision.target_parallelism
        result.predicted_recovery = predictions.get(target)
        if target == k.current_parallelism:
            return
        try:
            self.executor.rescale(target)
        except ScalingFailedError as exc:
            logger.warning("rescale to %d failed, will retry next loop: %s", target, exc)
            return
        direction = _direction(k.current_parallelism, target)
        if result.predicted_recovery is None:
            # forced-max can pick a target the scan never scored; predict it
            # now so the action record is complete
            backlog = accumulated_backlog(k.history, k.forecast, k.recovery, direction)
            capacity = k.capacity_table.capacity(target) or 0.0
            result.predicted_recovery = predict_recovery_time(
                capacity, k.forecast, backlog, k.recovery.downtime_for(direction)
            )
        prediction = result.predicted_recovery
        if not prediction.feasible or prediction.total_s > k.recovery.target_recovery_time_s:
            logger.warning(
                "action at %s violates the recovery target (predicted %.0f s)",
                now,
                prediction.total_s,
            )
            self.rt_violations.append(now)
        logger.info(
            "rescale %d -> %d (%s) at %s", k.current_parallelism, target, decision.reason, now
        )
        result.executed = True
        k.current_parallelism = target
        k.last_rescale_time = now
        k.last_action_time = now
        # the key distribution changes with the worker set; old samples
        # describe a cluster that no longer exists
        k.regressions.clear()
        k.latest_samples.clear()
        if k.anomaly.count >= ANOMALY_MIN_SAMPLES:
            self._monitor_direction = direction
            self._recovery_monitor = RecoveryMonitor(
                k.anomaly, k.recovery.target_recovery_time_s
            )

    # --- background handoff ---

    def _submit_retrain(self) -> None:
        snapshot = self.knowledge.history.tail_series(self.config.retrain_window_s)
        handle = self.retrainer.submit(lambda: self.forecaster.retrained(snapshot))
        self._pending_retrain = (handle, snapshot.end_time)
        logger.info("forecaster retrain submitted on %d s of history", len(snapshot))

    def _install_retrain(self) -> None:
        if self._pending_retrain is None:
            return
        handle, snapshot_end = self._pending_retrain
        if not handle.done():
            return
        self._pending_retrain = None
        health = self.knowledge.forecaster_health
        try:
            model = handle.result()
        except Exception as exc:  # noqa: BLE001 - a failed retrain keeps the old model
            logger.warning("forecaster retrain failed: %s", exc)
            health.retraining = False
            return
        history = self.knowledge.history
        missed = history.window(snapshot_end, history.end_time)
        if len(missed):
            model.update(WorkloadSeries(snapshot_end, missed))
        self.forecaster = model
        self._last_primary = None
        health.retraining = False
        health.consecutive_poor = 0
        logger.info("retrained forecaster installed")

    def _finish_recovery(self, measurement: RecoveryMeasurement, now: float) -> None:
        k = self.knowledge
        self._recovery_monitor = None
        if measurement.downtime_s > 0:
            k.recovery.observe_downtime(self._monitor_direction, measurement.downtime_s)
        if measurement.timed_out or measurement.recovery_s > k.recovery.target_recovery_time_s:
            logger.warning(
                "measured recovery %.0f s exceeded the target (timed_out=%s)",
                measurement.recovery_s,
                measurement.timed_out,
            )
            self.rt_violations.append(now)
