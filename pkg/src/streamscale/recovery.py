"""Recovery-time prediction and measurement around scaling actions.

A rescale restarts the job: tuples since the last completed checkpoint are
reprocessed and workers are down for a configurable interval. Predictions
assume the worst checkpoint phase (a full interval of reprocessing) plus
arrivals during the expected downtime, then scan the forecast for the
catch-up point. After an action, a statistical monitor measures the real
downtime and recovery from the workload-vs-throughput stream and feeds the
measured downtime back into the configuration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import _kernels
from .errors import InsufficientHistoryError, InsufficientSamplesError
from .forecasting import Forecast, WorkloadSeries

SCALE_OUT = "scale-out"
SCALE_IN = "scale-in"
FAILURE = "failure"

ANOMALY_MIN_SAMPLES = 30
ANOMALY_FLOOR_FRACTION = 0.01
CONFIRM_SAMPLES = 10
TIMEOUT_FACTOR = 2.0
DOWNTIME_SMOOTHING = 0.5


@dataclass
class RecoveryConfig:
    """Expected restart behaviour and the recovery-time target."""

    checkpoint_interval_s: int
    downtime_scale_out_s: float = 30.0
    downtime_scale_in_s: float = 15.0
    target_recovery_time_s: float = 600.0

    def __post_init__(self) -> None:
        if self.checkpoint_interval_s <= 0:
            raise ValueError("checkpoint_interval_s must be positive")
        if self.downtime_scale_out_s <= 0 or self.downtime_scale_in_s <= 0:
            raise ValueError("downtimes must be positive")
        if self.target_recovery_time_s < max(
            self.downtime_scale_out_s, self.downtime_scale_in_s
        ):
            raise ValueError("target recovery time must cover the downtime alone")

    def downtime_for(self, direction: str) -> float:
        # failures restart the whole job, like a scale-out
        if direction == SCALE_IN:
            return self.downtime_scale_in_s
        if direction in (SCALE_OUT, FAILURE):
            return self.downtime_scale_out_s
        raise ValueError(f"unknown direction {direction!r}")

    def observe_downtime(
        self, direction: str, measured_s: float, weight: float = DOWNTIME_SMOOTHING
    ) -> None:
        """Blend a measured downtime into the expectation for its direction."""
        if direction == SCALE_IN:
            self.downtime_scale_in_s = (
                weight * measured_s + (1.0 - weight) * self.downtime_scale_in_s
            )
        else:
            self.downtime_scale_out_s = (
                weight * measured_s + (1.0 - weight) * self.downtime_scale_out_s
            )


@dataclass
class RecoveryPrediction:
    """Predicted recovery span for one candidate scale-out."""

    total_s: float
    backlog: float
    downtime_s: float
    feasible: bool


def accumulated_backlog(
    history: WorkloadSeries,
    forecast: Forecast,
    config: RecoveryConfig,
    direction: str,
) -> float:
    """Worst-case backlog a restart must absorb.

    Everything since the last completed checkpoint is reprocessed; the worst
    phase is a full interval, approximated by the trailing interval of
    history. Arrivals during the expected downtime pile on top.
    """
    interval = config.checkpoint_interval_s
    if len(history) < interval:
        raise InsufficientHistoryError(
            f"need {interval} s of history, have {len(history)} s"
        )
    downtime = config.downtime_for(direction)
    steps = math.ceil(downtime)
    if steps > forecast.horizon:
        raise ValueError("downtime exceeds the forecast horizon")
    reprocess = float(np.sum(history.tail(interval)))
    during_downtime = float(np.sum(forecast.values[:steps]))
    return reprocess + during_downtime


def predict_recovery_time(
    capacity: float,
    forecast: Forecast,
    backlog: float,
    downtime_s: float,
) -> RecoveryPrediction:
    """Downtime plus the catch-up span at the given capacity.

    Catch-up ends at the earliest second where the spare capacity
    accumulated since processing resumed covers the backlog. If the
    forecast horizon is exhausted first, the prediction is infeasible and
    carries the horizon as a sentinel total.
    """
    steps = math.ceil(downtime_s)
    values = np.ascontiguousarray(forecast.values, dtype=np.float64)
    catchup = _kernels.catchup_seconds(float(capacity), values, steps, float(backlog))
    if catchup < 0:
        return RecoveryPrediction(
            downtime_s + forecast.horizon, backlog, downtime_s, False
        )
    return RecoveryPrediction(downtime_s + catchup, backlog, downtime_s, True)


@dataclass
class AnomalyState:
    """One-pass mean/variance of the workload-minus-throughput signal."""

    count: int = 0
    mean: float = 0.0
    m2: float = 0.0

    def update(self, diff: float) -> None:
        self.count += 1
        delta = diff - self.mean
        self.mean += delta / self.count
        self.m2 += delta * (diff - self.mean)

    @property
    def std(self) -> float:
        return math.sqrt(self.m2 / self.count) if self.count else 0.0

    def snapshot(self) -> "AnomalyState":
        return replace(self)


def update_anomaly(state: AnomalyState, workload: float, throughput: float) -> AnomalyState:
    """Fold one steady-state second into the baseline."""
    state.update(workload - throughput)
    return state


def _deviation_threshold(state: AnomalyState, workload: float) -> float:
    # the absolute floor keeps a near-zero-variance baseline from flagging
    # every second as anomalous
    return max(state.std, ANOMALY_FLOOR_FRACTION * workload)


def is_anomalous(state: AnomalyState, workload: float, throughput: float) -> bool:
    """Whether this second deviates more than one standard deviation.

    Symmetric: both throughput deficits (restart, failure) and surpluses
    (catch-up) count as anomalous.
    """
    if state.count < ANOMALY_MIN_SAMPLES:
        raise InsufficientSamplesError(
            f"anomaly baseline needs {ANOMALY_MIN_SAMPLES} samples, has {state.count}"
        )
    deviation = (workload - throughput) - state.mean
    return abs(deviation) > _deviation_threshold(state, workload)


@dataclass
class RecoveryMeasurement:
    """Observed downtime and recovery span of one scaling action."""

    downtime_s: float
    recovery_s: float
    timed_out: bool


class RecoveryMonitor:
    """Classifies the post-action metric stream against a frozen baseline.

    Downtime is the initial contiguous run of deficit anomalies (throughput
    collapsed below workload). Recovery is the first second classified
    normal that holds for a confirmation window; catch-up surpluses in
    between remain anomalous and extend recovery, not downtime.
    """

    def __init__(
        self,
        baseline: AnomalyState,
        target_recovery_s: float,
        confirm_samples: int = CONFIRM_SAMPLES,
        timeout_factor: float = TIMEOUT_FACTOR,
    ) -> None:
        self._baseline = baseline.snapshot()
        self._confirm = confirm_samples
        self._timeout_s = timeout_factor * target_recovery_s
        self._elapsed = 0
        self._downtime = 0
        self._in_initial_deficit = True
        self._first_normal: int | None = None
        self._consecutive_normal = 0

    def observe(self, workload: float, throughput: float) -> RecoveryMeasurement | None:
        """Feed one second; returns the measurement once confirmed or timed out."""
        deviation = (workload - throughput) - self._baseline.mean
        threshold = _deviation_threshold(self._baseline, workload)
        t = self._elapsed
        self._elapsed += 1
        if abs(deviation) > threshold:
            if self._in_initial_deficit and deviation > 0:
                self._downtime = t + 1
            else:
                self._in_initial_deficit = False
            self._first_normal = None
            self._consecutive_normal = 0
        else:
            self._in_initial_deficit = False
            if self._first_normal is None:
                self._first_normal = t
            self._consecutive_normal += 1
            if self._consecutive_normal >= self._confirm:
                return RecoveryMeasurement(
                    float(self._downtime), float(self._first_normal), False
                )
        if self._elapsed >= self._timeout_s:
            return RecoveryMeasurement(float(self._downtime), float(self._elapsed), True)
        return None
