"""Deterministic discrete-time model of a stream processing cluster.

Keys are hashed onto workers, giving each worker a share of the key weight.
Backpressure from the most loaded worker caps the whole pipeline, so the
job consumes at most min(capacity_w / share_w) tuples per second from the
source; unconsumed tuples accumulate as consumer lag. Rescaling restarts
the job: tuples processed since the last completed checkpoint are
re-delivered and the cluster is down for a configured interval. Every
random draw comes from seeded generators, so a fixed seed reproduces a
run bit-exactly.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _kernels
from .capacity import MetricSample
from .controller import MetricsProvider, MetricsWindow, ScalingExecutor
from .errors import ProviderUnavailableError, ScalingFailedError
from .recovery import SCALE_IN, SCALE_OUT


def key_weight_vector(key_count: int, key_weights) -> np.ndarray:
    """Normalized per-key weight vector from a distribution description."""
    if isinstance(key_weights, str):
        if key_weights != "uniform":
            raise ValueError(f"unknown key weight distribution {key_weights!r}")
        weights = np.ones(key_count)
    elif isinstance(key_weights, dict):
        if set(key_weights) != {"zipf"}:
            raise ValueError(f"unknown key weight distribution {key_weights!r}")
        s = float(key_weights["zipf"])
        weights = 1.0 / np.power(np.arange(1, key_count + 1, dtype=np.float64), s)
    elif isinstance(key_weights, Sequence) or isinstance(key_weights, np.ndarray):
        weights = np.asarray(key_weights, dtype=np.float64)
        if len(weights) != key_count:
            raise ValueError(
                f"explicit weights length {len(weights)} != key_count {key_count}"
            )
        if np.any(weights < 0) or weights.sum() <= 0:
            raise ValueError("explicit weights must be non-negative and sum > 0")
    else:
        raise ValueError(f"unknown key weight distribution {key_weights!r}")
    return weights / weights.sum()


def assign_keys(key_count: int, workers: int) -> np.ndarray:
    """Deterministic key -> worker assignment (salt-free hash)."""
    return np.array(
        [zlib.crc32(f"key-{k}".encode()) % workers for k in range(key_count)],
        dtype=np.int64,
    )


def worker_shares(weights: np.ndarray, assignment: np.ndarray, workers: int) -> np.ndarray:
    return np.bincount(assignment, weights=weights, minlength=workers)


@dataclass
class ClusterSpec:
    """Static description of the cluster the simulator models."""

    max_workers: int
    worker_capacity: float  # tuples/s at 100% CPU on a nominal worker
    initial_workers: int = 1
    capacity_jitter: float = 0.05  # one-sided degradation across "identical" nodes
    cpu_noise: float = 0.02
    key_count: int = 100
    key_weights: object = "uniform"
    checkpoint_interval_s: int = 10
    downtime_scale_out_s: int = 30
    downtime_scale_in_s: int = 15
    base_latency_s: float = 0.2

    def __post_init__(self) -> None:
        if self.max_workers < 1:
            raise ValueError("max_workers must be >= 1")
        if not 1 <= self.initial_workers <= self.max_workers:
            raise ValueError("initial_workers must be within [1, max_workers]")
        if self.worker_capacity <= 0:
            raise ValueError("worker_capacity must be positive")
        if not 0.0 <= self.capacity_jitter < 1.0:
            raise ValueError("capacity_jitter must be within [0, 1)")
        if not 0.0 <= self.cpu_noise <= 0.5:
            raise ValueError("cpu_noise must be within [0, 0.5]")
        if self.key_count < 1:
            raise ValueError("key_count must be >= 1")
        if self.checkpoint_interval_s < 1:
            raise ValueError("checkpoint_interval_s must be >= 1")
        if self.downtime_scale_out_s < 1 or self.downtime_scale_in_s < 1:
            raise ValueError("downtimes must be >= 1 s")
        self.weight_vector()  # validates key_weights eagerly

    def weight_vector(self) -> np.ndarray:
        return key_weight_vector(self.key_count, self.key_weights)


@dataclass
class RescaleEvent:
    time: int
    previous: int
    target: int
    direction: str
    reprocessed: int
    downtime_s: int


@dataclass
class ChunkMetrics:
    """Per-second metrics plus per-worker window sums for one advance."""

    start: int
    parallelism: int
    worker_ids: list[str]
    workload: np.ndarray
    throughput: np.ndarray
    lag: np.ndarray
    latency: np.ndarray
    cpu_mean: np.ndarray
    worker_tput_sum: np.ndarray
    worker_cpu_sum: np.ndarray
    down_seconds: int

    @property
    def seconds(self) -> int:
        return len(self.workload)


class Simulator:
    """Step-driven cluster model; the ground-truth oracle for every claim."""

    def __init__(self, spec: ClusterSpec, seed: int = 0) -> None:
        self.spec = spec
        noise_seq, jitter_seq = np.random.SeedSequence(seed).spawn(2)
        self._noise_rng = np.random.default_rng(noise_seq)
        self._jitter_rng = np.random.default_rng(jitter_seq)
        self._weights = spec.weight_vector()
        self.now = 0
        self.lag = 0
        self.cumulative_arrivals = 0
        self.cumulative_processed = 0
        self.events: list[RescaleEvent] = []
        self._down_remaining = 0
        self._ckpt_clock = 0
        self._processed_since_ckpt = 0
        self._configure(spec.initial_workers)

    # --- configuration ---

    def _configure(self, workers: int) -> None:
        self.parallelism = workers
        assignment = assign_keys(self.spec.key_count, workers)
        self._shares = np.ascontiguousarray(
            worker_shares(self._weights, assignment, workers)
        )
        # placement changes performance: every (re)start draws fresh
        # one-sided degradation, max_workers wide to keep streams aligned
        jitter = self._jitter_rng.uniform(0.0, 1.0, size=self.spec.max_workers)
        degraded = self.spec.worker_capacity * (
            1.0 - self.spec.capacity_jitter * jitter[:workers]
        )
        self._capacities = np.maximum(np.rint(degraded), 1.0).astype(np.int64)
        active = self._shares > 0
        self._sustain = float(np.min(self._capacities[active] / self._shares[active]))
        self._cap_rate = int(self._sustain)

    @property
    def capacities(self) -> np.ndarray:
        return self._capacities.copy()

    @property
    def shares(self) -> np.ndarray:
        return self._shares.copy()

    @property
    def sustainable_rate(self) -> float:
        """Realized consumption ceiling of the current configuration."""
        return self._sustain

    @property
    def worker_ids(self) -> list[str]:
        return [f"w{i}" for i in range(self.parallelism)]

    def ground_truth_capacity(self, scaleout: int | None = None) -> float:
        """Maximum sustainable throughput at a scale-out, before jitter.

        The bottleneck worker holds the largest key-weight share, so the
        whole pipeline can sustain at most unit capacity / max share.
        """
        scaleout = self.parallelism if scaleout is None else scaleout
        if not 1 <= scaleout <= self.spec.max_workers:
            raise ValueError(f"scaleout {scaleout} outside [1, {self.spec.max_workers}]")
        assignment = assign_keys(self.spec.key_count, scaleout)
        shares = worker_shares(self._weights, assignment, scaleout)
        return float(self.spec.worker_capacity / shares.max())

    # --- simulation ---

    def run_seconds(self, workload) -> ChunkMetrics:
        """Advance one second per workload value and emit metrics."""
        workload = np.ascontiguousarray(workload, dtype=np.int64)
        if np.any(workload < 0):
            raise ValueError("workload rates must be >= 0")
        n = len(workload)
        start = self.now
        noise = 1.0 + self._noise_rng.uniform(
            -self.spec.cpu_noise, self.spec.cpu_noise, size=(n, self.spec.max_workers)
        )
        noise_active = np.ascontiguousarray(noise[:, : self.parallelism])
        out_tput = np.empty(n, dtype=np.int64)
        out_lag = np.empty(n, dtype=np.int64)
        out_latency = np.empty(n, dtype=np.float64)
        out_cpu_mean = np.empty(n, dtype=np.float64)
        worker_tput_sum = np.zeros(self.parallelism, dtype=np.int64)
        worker_cpu_sum = np.zeros(self.parallelism, dtype=np.float64)
        (
            self.lag,
            self._down_remaining,
            self._ckpt_clock,
            self._processed_since_ckpt,
            down_seconds,
        ) = _kernels.advance_seconds(
            workload,
            self._shares,
            self._capacities,
            noise_active,
            self.lag,
            self._down_remaining,
            self._ckpt_clock,
            self.spec.checkpoint_interval_s,
            self._processed_since_ckpt,
            self._cap_rate,
            self._sustain,
            self.spec.base_latency_s,
            out_tput,
            out_lag,
            out_latency,
            out_cpu_mean,
            worker_tput_sum,
            worker_cpu_sum,
        )
        self.now += n
        self.cumulative_arrivals += int(workload.sum())
        self.cumulative_processed += int(out_tput.sum())
        return ChunkMetrics(
            start=start,
            parallelism=self.parallelism,
            worker_ids=self.worker_ids,
            workload=workload,
            throughput=out_tput,
            lag=out_lag,
            latency=out_latency,
            cpu_mean=out_cpu_mean,
            worker_tput_sum=worker_tput_sum,
            worker_cpu_sum=worker_cpu_sum,
            down_seconds=int(down_seconds),
        )

    def step(self, workload_rate: int) -> ChunkMetrics:
        """Single-second convenience wrapper around run_seconds."""
        return self.run_seconds(np.array([workload_rate], dtype=np.int64))

    def rescale(self, target: int) -> None:
        """Restart with a new worker count: reprocessing, downtime, fresh draws."""
        if not 1 <= target <= self.spec.max_workers:
            raise ValueError(f"target {target} outside [1, {self.spec.max_workers}]")
        previous = self.parallelism
        direction = SCALE_IN if target < previous else SCALE_OUT
        reprocessed = int(self._processed_since_ckpt)
        # re-delivered from the source offset of the last completed checkpoint
        self.lag += reprocessed
        self.cumulative_arrivals += reprocessed
        downtime = (
            self.spec.downtime_scale_in_s
            if direction == SCALE_IN
            else self.spec.downtime_scale_out_s
        )
        self._configure(target)
        self._down_remaining = downtime
        self._ckpt_clock = 0
        self._processed_since_ckpt = 0
        self.events.append(
            RescaleEvent(self.now, previous, target, direction, reprocessed, downtime)
        )

    def conserved(self) -> bool:
        """Tuple conservation at the current instant."""
        return self.cumulative_arrivals == self.cumulative_processed + self.lag


class SimulatorMetricsProvider(MetricsProvider):
    """Buffers simulator chunks and serves them as monitoring windows."""

    def __init__(self, sim: Simulator) -> None:
        self._sim = sim
        self._pending: list[ChunkMetrics] = []

    def push(self, chunk: ChunkMetrics) -> None:
        self._pending.append(chunk)

    def poll(self, window_s: int) -> MetricsWindow:
        if not self._pending:
            raise ProviderUnavailableError("no metrics buffered since last poll")
        chunks, self._pending = self._pending, []
        parallelism = chunks[-1].parallelism
        if any(c.parallelism != parallelism for c in chunks):
            raise ProviderUnavailableError("worker set changed inside one window")
        workload = np.concatenate([c.workload for c in chunks])
        throughput = np.concatenate([c.throughput for c in chunks])
        seconds = len(workload)
        end_time = float(chunks[-1].start + chunks[-1].seconds)
        tput_sum = np.sum([c.worker_tput_sum for c in chunks], axis=0)
        cpu_sum = np.sum([c.worker_cpu_sum for c in chunks], axis=0)
        samples = {
            wid: MetricSample(
                worker_id=wid,
                timestamp=end_time,
                cpu=min(float(cpu_sum[i]) / seconds, 1.0),
                throughput=float(tput_sum[i]) / seconds,
            )
            for i, wid in enumerate(chunks[-1].worker_ids)
        }
        return MetricsWindow(
            end_time=end_time,
            worker_samples=samples,
            workload=workload,
            throughput=throughput,
            consumer_lag=float(chunks[-1].lag[-1]),
            parallelism=parallelism,
        )


class SimulatorScalingExecutor(ScalingExecutor):
    """Applies controller decisions to the simulator."""

    def __init__(self, sim: Simulator) -> None:
        self._sim = sim

    def rescale(self, target: int) -> None:
        try:
            self._sim.rescale(target)
        except ValueError as exc:
            raise ScalingFailedError(str(exc)) from exc
