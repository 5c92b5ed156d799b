"""Comparison autoscalers: a static scale-out and HPA-style thresholding."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .controller import NO_CHANGE, ScalingDecision


@dataclass(frozen=True)
class ThresholdPolicy:
    """Kubernetes-style threshold autoscaling parameters."""

    target_utilization: float
    max_workers: int
    min_workers: int = 1
    eval_interval_s: int = 15
    stabilization_window_s: int = 300  # scale-in only
    tolerance: float = 0.10

    def __post_init__(self) -> None:
        if not 0.0 < self.target_utilization < 1.0:
            raise ValueError("target_utilization must be within (0, 1)")
        if not 1 <= self.min_workers <= self.max_workers:
            raise ValueError("worker bounds must satisfy 1 <= min <= max")
        if self.eval_interval_s < 1 or self.stabilization_window_s < 0:
            raise ValueError("intervals must be positive")
        if not 0.0 <= self.tolerance < 1.0:
            raise ValueError("tolerance must be within [0, 1)")


def static_decide(fixed: int) -> ScalingDecision:
    """The static baseline always keeps its configured scale-out."""
    return ScalingDecision(fixed, NO_CHANGE)


def hpa_desired(current: int, avg_cpu: float, policy: ThresholdPolicy) -> int:
    """Raw HPA recommendation: ceil(current * observed / target), clamped.

    Ratios within the tolerance band keep the current count, the documented
    guard against oscillating on measurement noise.
    """
    ratio = avg_cpu / policy.target_utilization
    if abs(ratio - 1.0) <= policy.tolerance:
        return current
    desired = math.ceil(current * ratio)
    return max(policy.min_workers, min(policy.max_workers, desired))


@dataclass
class HpaAutoscaler:
    """HPA decision state: recommendations plus the scale-in stabilization window.

    Scale-outs apply immediately; scale-ins are limited to the maximum
    recommendation seen during the stabilization window, so a recent spike
    keeps the fleet up.
    """

    policy: ThresholdPolicy
    _window: list[tuple[float, int]] = field(default_factory=list)

    def decide(self, now: float, current: int, avg_cpu: float | None) -> int:
        if avg_cpu is None:  # no ready workers to observe
            return current
        desired = hpa_desired(current, avg_cpu, self.policy)
        self._window.append((now, desired))
        cutoff = now - self.policy.stabilization_window_s
        self._window = [(t, d) for t, d in self._window if t >= cutoff]
        if desired > current:
            return desired
        effective = max(d for _, d in self._window)
        if effective < current:
            return effective
        return current
