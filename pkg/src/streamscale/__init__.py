"""Self-adaptive horizontal autoscaling for stream processing, with a
deterministic cluster simulator for evaluating scaling policies offline.
"""

from ._kernels import backend
from .capacity import (
    CapacityEstimate,
    MetricSample,
    RegressionState,
    estimate_capacity_table,
    predict_capacity,
    update_regression,
    worker_max_cpu,
)
from .controller import (
    ControlLoop,
    ControllerConfig,
    Knowledge,
    MetricsProvider,
    MetricsWindow,
    ScalingDecision,
    ScalingExecutor,
    TickResult,
)
from .errors import (
    IdleWorkerError,
    InsufficientDataError,
    InsufficientHistoryError,
    InsufficientSamplesError,
    ProviderUnavailableError,
    ScalingFailedError,
    ScenarioError,
    StreamScaleError,
    TraceParseError,
    UndefinedScoreError,
    UndefinedSkewError,
    UnfitModelError,
)
from .forecasting import (
    Forecast,
    TrendSeasonalForecaster,
    WorkloadSeries,
    fallback_forecast,
    select_forecast,
    wape,
)
from .recovery import (
    AnomalyState,
    RecoveryConfig,
    RecoveryMonitor,
    RecoveryPrediction,
    accumulated_backlog,
    is_anomalous,
    predict_recovery_time,
    update_anomaly,
)
from .runner import run_experiment
from .scenario import Scenario, generate_trace, load_scenario, parse_scenario
from .simulator import ClusterSpec, Simulator

__version__ = "0.1.0"

__all__ = [
    "AnomalyState",
    "CapacityEstimate",
    "ClusterSpec",
    "ControlLoop",
    "ControllerConfig",
    "Forecast",
    "IdleWorkerError",
    "InsufficientDataError",
    "InsufficientHistoryError",
    "InsufficientSamplesError",
    "Knowledge",
    "MetricSample",
    "MetricsProvider",
    "MetricsWindow",
    "ProviderUnavailableError",
    "RecoveryConfig",
    "RecoveryMonitor",
    "RecoveryPrediction",
    "RegressionState",
    "Scenario",
    "ScalingDecision",
    "ScalingExecutor",
    "ScalingFailedError",
    "ScenarioError",
    "Simulator",
    "StreamScaleError",
    "TickResult",
    "TraceParseError",
    "TrendSeasonalForecaster",
    "UndefinedScoreError",
    "UndefinedSkewError",
    "UnfitModelError",
    "WorkloadSeries",
    "accumulated_backlog",
    "backend",
    "estimate_capacity_table",
    "fallback_forecast",
    "generate_trace",
    "is_anomalous",
    "load_scenario",
    "parse_scenario",
    "predict_capacity",
    "predict_recovery_time",
    "run_experiment",
    "select_forecast",
    "update_anomaly",
    "update_regression",
    "wape",
    "worker_max_cpu",
    "__version__",
]
