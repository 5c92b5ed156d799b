"""Exception types shared across the package."""


class StreamScaleError(Exception):
    """Base class for all package-specific errors."""


class IdleWorkerError(StreamScaleError, ValueError):
    """Capacity is undefined for a worker with zero CPU usage."""


class InsufficientDataError(StreamScaleError, ValueError):
    """A model does not have enough (or varied enough) samples yet."""


class UndefinedSkewError(StreamScaleError, ValueError):
    """Relative CPU ratios are undefined because the whole cluster is idle."""


class InsufficientHistoryError(StreamScaleError, ValueError):
    """An operation needs a longer workload history than is available."""


class UnfitModelError(StreamScaleError, RuntimeError):
    """The forecaster was asked to predict before being fitted."""


class UndefinedScoreError(StreamScaleError, ValueError):
    """A forecast error score is undefined (zero actual volume)."""


class InsufficientSamplesError(StreamScaleError, ValueError):
    """The anomaly baseline has fewer samples than the required minimum."""


class ProviderUnavailableError(StreamScaleError, RuntimeError):
    """The metrics provider could not deliver a window."""


class ScalingFailedError(StreamScaleError, RuntimeError):
    """The executor could not apply a scaling action."""


class ScenarioError(StreamScaleError, ValueError):
    """A scenario file is malformed or violates a validity constraint."""


class TraceParseError(ScenarioError):
    """A workload trace file could not be parsed."""
