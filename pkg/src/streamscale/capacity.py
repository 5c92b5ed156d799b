"""Online capacity model for a skewed cluster of stream workers.

Each worker gets a one-pass linear regression of throughput against CPU
usage. Because partition skew caps how far a cool worker can be pushed
before the hottest worker saturates, a worker's usable CPU is bounded by
its share of the current maximum CPU in the cluster. Summing per-worker
predictions at those bounds gives the processing capacity of the current
scale-out; a capacity table extrapolates to other scale-outs while
retaining previously observed values.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import IdleWorkerError, InsufficientDataError, UndefinedSkewError

IDLE_CPU = 0.01
VARIANCE_EPSILON = 1e-6
OBSERVED_TTL_S = 3600.0


@dataclass
class MetricSample:
    """One worker's averaged metrics over a monitoring window."""

    worker_id: str
    timestamp: float
    cpu: float
    throughput: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.cpu <= 1.0:
            raise ValueError(f"cpu must be within [0, 1], got {self.cpu}")
        if self.throughput < 0.0:
            raise ValueError(f"throughput must be >= 0, got {self.throughput}")


@dataclass
class RegressionState:
    """One-pass (Welford) accumulator for a CPU -> throughput line."""

    count: int = 0
    mean_cpu: float = 0.0
    mean_throughput: float = 0.0
    m2_cpu: float = 0.0
    co_moment: float = 0.0

    def update(self, cpu: float, throughput: float) -> None:
        self.count += 1
        d_cpu = cpu - self.mean_cpu
        self.mean_cpu += d_cpu / self.count
        self.mean_throughput += (throughput - self.mean_throughput) / self.count
        self.co_moment += d_cpu * (throughput - self.mean_throughput)
        self.m2_cpu += d_cpu * (cpu - self.mean_cpu)

    @property
    def cpu_variance(self) -> float:
        return self.m2_cpu / self.count if self.count else 0.0

    @property
    def slope(self) -> float:
        if self.count < 2 or self.m2_cpu < VARIANCE_EPSILON * self.count:
            raise InsufficientDataError(
                f"regression needs >= 2 samples with CPU variance >= {VARIANCE_EPSILON}"
            )
        return self.co_moment / self.m2_cpu

    @property
    def intercept(self) -> float:
        return self.mean_throughput - self.slope * self.mean_cpu


def update_regression(state: RegressionState, sample: MetricSample) -> RegressionState:
    """Fold one sample into the regression state and return it."""
    state.update(sample.cpu, sample.throughput)
    return state


def simple_capacity(throughput: float, cpu: float) -> float:
    """Capacity from a single observation: throughput scaled to full CPU."""
    if cpu <= 0.0:
        raise IdleWorkerError("capacity is undefined for an idle worker (cpu == 0)")
    return throughput / cpu


def predict_capacity(state: RegressionState, cpu_desired: float) -> float:
    """Regression-predicted throughput at the given CPU level, clamped to >= 0.

    Raises InsufficientDataError while the state is degenerate (fewer than
    two samples, near-zero CPU variance) or fits a negative slope; callers
    fall back to simple_capacity in those cases.
    """
    slope = state.slope
    if slope < 0.0:
        raise InsufficientDataError("negative slope, regression not usable yet")
    value = state.intercept + slope * cpu_desired
    return value if value > 0.0 else 0.0


def worker_max_cpu(worker_cpu: float, max_cpu: float) -> float:
    """Usable CPU bound for a worker, proportional to the hottest worker.

    A worker cannot be driven past the point where the most loaded worker
    saturates, so its headroom is capped at worker_cpu / max_cpu.
    """
    if max_cpu < IDLE_CPU:
        raise UndefinedSkewError("all workers idle, CPU ratios are undefined")
    ratio = worker_cpu / max_cpu
    return ratio if ratio < 1.0 else 1.0


def worker_capacity(
    state: RegressionState | None,
    latest: MetricSample,
    cpu_bound: float,
) -> float:
    """Predicted throughput of one worker at its usable CPU bound."""
    if state is not None:
        try:
            return predict_capacity(state, cpu_bound)
        except InsufficientDataError:
            pass
    if latest.cpu <= 0.0:
        return 0.0
    return simple_capacity(latest.throughput, latest.cpu) * cpu_bound


def current_scaleout_capacity(
    regressions: dict[str, RegressionState],
    latest: dict[str, MetricSample],
) -> float:
    """Capacity of the running scale-out: sum of per-worker predictions.

    Workers below the idle threshold contribute nothing (their share of the
    key space is negligible and a regression on idle noise is meaningless).
    """
    if not latest:
        raise UndefinedSkewError("no worker samples available")
    max_cpu = max(sample.cpu for sample in latest.values())
    if max_cpu < IDLE_CPU:
        raise UndefinedSkewError("all workers idle, CPU ratios are undefined")
    total = 0.0
    for worker_id, sample in latest.items():
        if sample.cpu < IDLE_CPU:
            continue
        bound = worker_max_cpu(sample.cpu, max_cpu)
        total += worker_capacity(regressions.get(worker_id), sample, bound)
    return total


@dataclass
class CapacityEstimate:
    capacity: float
    source: str  # "observed" | "predicted"
    updated_at: float


@dataclass
class CapacityTable:
    """Capacity estimates per scale-out, observed values kept over predicted."""

    entries: dict[int, CapacityEstimate] = field(default_factory=dict)

    def capacity(self, scaleout: int) -> float | None:
        entry = self.entries.get(scaleout)
        return entry.capacity if entry is not None else None

    def age(self, scaleout: int, now: float) -> float | None:
        entry = self.entries.get(scaleout)
        return now - entry.updated_at if entry is not None else None


def estimate_capacity_table(
    regressions: dict[str, RegressionState],
    latest: dict[str, MetricSample],
    current_scaleout: int,
    max_scaleout: int,
    previous: CapacityTable | None,
    now: float,
    observed_ttl_s: float = OBSERVED_TTL_S,
) -> CapacityTable:
    """Build the capacity table for scale-outs 1..max_scaleout.

    The current scale-out gets a fresh observed entry. Other scale-outs keep
    a previously observed entry while it is younger than observed_ttl_s,
    otherwise they get a linear extrapolation from the current average
    capacity per worker.
    """
    if not 1 <= current_scaleout <= max_scaleout:
        raise ValueError(
            f"current scale-out {current_scaleout} outside [1, {max_scaleout}]"
        )
    observed = current_scaleout_capacity(regressions, latest)
    per_worker = observed / current_scaleout
    entries: dict[int, CapacityEstimate] = {}
    for i in range(1, max_scaleout + 1):
        if i == current_scaleout:
            entries[i] = CapacityEstimate(observed, "observed", now)
            continue
        kept = previous.entries.get(i) if previous is not None else None
        if (
            kept is not None
            and kept.source == "observed"
            and now - kept.updated_at <= observed_ttl_s
        ):
            entries[i] = kept
            continue
        entries[i] = CapacityEstimate(per_worker * i, "predicted", now)
    return CapacityTable(entries)
