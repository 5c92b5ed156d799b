"""Scenario configuration: YAML schema, validation, and trace generation."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .errors import ScenarioError, TraceParseError
from .simulator import ClusterSpec, assign_keys, key_weight_vector, worker_shares

SCHEMA_VERSION = 1

ADAPTIVE = "adaptive"
HPA = "hpa"
STATIC = "static"
CONTROLLER_KINDS = (ADAPTIVE, HPA, STATIC)
TRACE_KINDS = ("sine", "spikes", "csv")


@dataclass
class WorkloadSpec:
    kind: str
    params: dict = field(default_factory=dict)


@dataclass
class ControllerSpec:
    kind: str
    params: dict = field(default_factory=dict)

    @property
    def name(self) -> str:
        if self.kind == HPA:
            return f"hpa-{self.params['target_utilization']:.2f}"
        if self.kind == STATIC:
            return f"static-{self.params['workers']}"
        return ADAPTIVE


@dataclass
class Scenario:
    name: str
    seed: int
    duration_s: int
    cluster: ClusterSpec
    workload: WorkloadSpec
    controllers: list[ControllerSpec]


def _require(mapping: dict, key: str, context: str):
    if key not in mapping:
        raise ScenarioError(f"{context}: missing required key {key!r}")
    return mapping[key]


def _as_int(value, context: str) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or value != int(value):
        raise ScenarioError(f"{context}: expected an integer, got {value!r}")
    return int(value)


def _as_number(value, context: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioError(f"{context}: expected a number, got {value!r}")
    return float(value)


def load_scenario(path: str | Path) -> Scenario:
    """Load and fully validate a scenario file."""
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except FileNotFoundError as exc:
        raise ScenarioError(f"scenario file not found: {path}") from exc
    except yaml.YAMLError as exc:
        raise ScenarioError(f"{path}: invalid YAML: {exc}") from exc
    if not isinstance(raw, dict):
        raise ScenarioError(f"{path}: top level must be a mapping")
    return parse_scenario(raw, base_dir=path.parent)


def parse_scenario(raw: dict, base_dir: Path | None = None) -> Scenario:
    version = _require(raw, "schema_version", "scenario")
    if version != SCHEMA_VERSION:
        raise ScenarioError(
            f"unsupported schema_version {version!r}, expected {SCHEMA_VERSION}"
        )
    name = str(raw.get("name", "scenario"))
    seed = _as_int(raw.get("seed", 0), "seed")
    duration = _as_int(_require(raw, "duration_s", "scenario"), "duration_s")
    if duration <= 0:
        raise ScenarioError("duration_s must be positive")

    cluster_raw = _require(raw, "cluster", "scenario")
    if not isinstance(cluster_raw, dict):
        raise ScenarioError("cluster: must be a mapping")
    try:
        cluster = ClusterSpec(
            max_workers=_as_int(_require(cluster_raw, "max_workers", "cluster"), "cluster.max_workers"),
            worker_capacity=_as_number(
                _require(cluster_raw, "worker_capacity", "cluster"), "cluster.worker_capacity"
            ),
            initial_workers=_as_int(cluster_raw.get("initial_workers", 1), "cluster.initial_workers"),
            capacity_jitter=_as_number(cluster_raw.get("capacity_jitter", 0.05), "cluster.capacity_jitter"),
            cpu_noise=_as_number(cluster_raw.get("cpu_noise", 0.02), "cluster.cpu_noise"),
            key_count=_as_int(cluster_raw.get("key_count", 100), "cluster.key_count"),
            key_weights=cluster_raw.get("key_weights", "uniform"),
            checkpoint_interval_s=_as_int(
                cluster_raw.get("checkpoint_interval_s", 10), "cluster.checkpoint_interval_s"
            ),
            downtime_scale_out_s=_as_int(
                cluster_raw.get("downtime_scale_out_s", 30), "cluster.downtime_scale_out_s"
            ),
            downtime_scale_in_s=_as_int(
                cluster_raw.get("downtime_scale_in_s", 15), "cluster.downtime_scale_in_s"
            ),
            base_latency_s=_as_number(cluster_raw.get("base_latency_s", 0.2), "cluster.base_latency_s"),
        )
    except ValueError as exc:
        raise ScenarioError(f"cluster: {exc}") from exc

    workload_raw = _require(raw, "workload", "scenario")
    if not isinstance(workload_raw, dict):
        raise ScenarioError("workload: must be a mapping")
    kind = _require(workload_raw, "kind", "workload")
    if kind not in TRACE_KINDS:
        raise ScenarioError(f"workload.kind must be one of {TRACE_KINDS}, got {kind!r}")
    params = {k: v for k, v in workload_raw.items() if k != "kind"}
    if kind == "csv" and base_dir is not None and "path" in params:
        candidate = Path(params["path"])
        if not candidate.is_absolute():
            params["path"] = str(base_dir / candidate)
    workload = WorkloadSpec(kind, params)

    controllers_raw = _require(raw, "controllers", "scenario")
    if not isinstance(controllers_raw, list) or not controllers_raw:
        raise ScenarioError("controllers: must be a non-empty list")
    controllers = []
    for idx, item in enumerate(controllers_raw):
        context = f"controllers[{idx}]"
        if not isinstance(item, dict):
            raise ScenarioError(f"{context}: must be a mapping")
        ckind = _require(item, "kind", context)
        if ckind not in CONTROLLER_KINDS:
            raise ScenarioError(
                f"{context}: kind must be one of {CONTROLLER_KINDS}, got {ckind!r}"
            )
        cparams = {k: v for k, v in item.items() if k != "kind"}
        if ckind == STATIC:
            workers = _as_int(_require(cparams, "workers", context), f"{context}.workers")
            if not 1 <= workers <= cluster.max_workers:
                raise ScenarioError(f"{context}: workers outside [1, max_workers]")
            cparams["workers"] = workers
        if ckind == HPA:
            target = _as_number(
                _require(cparams, "target_utilization", context),
                f"{context}.target_utilization",
            )
            if not 0.0 < target < 1.0:
                raise ScenarioError(f"{context}: target_utilization must be in (0, 1)")
            cparams["target_utilization"] = target
        controllers.append(ControllerSpec(ckind, cparams))

    scenario = Scenario(name, seed, duration, cluster, workload, controllers)
    trace = generate_trace(scenario.workload, scenario.duration_s)
    validate_trace_fits(scenario, trace)
    return scenario


def max_scaleout_capacity(cluster: ClusterSpec) -> float:
    """Ground-truth capacity at max scale-out, the scenario fairness bound."""
    weights = key_weight_vector(cluster.key_count, cluster.key_weights)
    assignment = assign_keys(cluster.key_count, cluster.max_workers)
    shares = worker_shares(weights, assignment, cluster.max_workers)
    return float(cluster.worker_capacity / shares.max())


def validate_trace_fits(scenario: Scenario, trace: np.ndarray) -> None:
    ceiling = max_scaleout_capacity(scenario.cluster)
    peak = int(trace.max()) if len(trace) else 0
    if peak > ceiling:
        raise ScenarioError(
            f"trace peak {peak} exceeds ground-truth capacity {ceiling:.0f} "
            f"at max scale-out; no controller could keep up"
        )


def generate_trace(spec: WorkloadSpec, duration_s: int) -> np.ndarray:
    """Deterministic per-second workload trace (int64 tuple counts)."""
    if duration_s <= 0:
        raise ScenarioError("duration_s must be positive")
    if spec.kind == "sine":
        return _sine_trace(spec.params, duration_s)
    if spec.kind == "spikes":
        return _spike_trace(spec.params, duration_s)
    if spec.kind == "csv":
        return _csv_trace(spec.params, duration_s)
    raise ScenarioError(f"unknown workload kind {spec.kind!r}")


def _sine_trace(params: dict, duration_s: int) -> np.ndarray:
    offset = _as_number(_require(params, "offset", "workload.sine"), "workload.sine.offset")
    amplitude = _as_number(
        _require(params, "amplitude", "workload.sine"), "workload.sine.amplitude"
    )
    periods = _as_number(params.get("periods", 1), "workload.sine.periods")
    if amplitude < 0 or periods <= 0:
        raise ScenarioError("workload.sine: amplitude must be >= 0 and periods > 0")
    if offset < amplitude:
        raise ScenarioError("workload.sine: offset < amplitude would go negative")
    t = np.arange(duration_s, dtype=np.float64)
    values = offset + amplitude * np.sin(2.0 * np.pi * periods * t / duration_s)
    return np.rint(values).astype(np.int64)


def _spike_trace(params: dict, duration_s: int) -> np.ndarray:
    base = _as_int(_require(params, "base", "workload.spikes"), "workload.spikes.base")
    height = _as_int(
        _require(params, "spike_height", "workload.spikes"), "workload.spikes.spike_height"
    )
    width = _as_int(
        _require(params, "spike_width", "workload.spikes"), "workload.spikes.spike_width"
    )
    positions = _require(params, "positions", "workload.spikes")
    if base < 0 or height < 0 or width <= 0:
        raise ScenarioError("workload.spikes: base/height must be >= 0 and width > 0")
    if not isinstance(positions, list):
        raise ScenarioError("workload.spikes.positions must be a list")
    values = np.full(duration_s, base, dtype=np.int64)
    for pos in positions:
        p = _as_int(pos, "workload.spikes.positions[]")
        if not 0 <= p < duration_s:
            raise ScenarioError(f"workload.spikes: position {p} outside the run")
        values[p : min(p + width, duration_s)] = base + height
    return values


def _csv_trace(params: dict, duration_s: int) -> np.ndarray:
    path = Path(_require(params, "path", "workload.csv"))
    scale = _as_number(params.get("scale_factor", 1.0), "workload.csv.scale_factor")
    if scale <= 0:
        raise ScenarioError("workload.csv.scale_factor must be positive")
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise TraceParseError(f"cannot read trace file {path}: {exc}") from exc
    values = []
    for lineno, line in enumerate(lines, start=1):
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        # tolerate a single header line
        if lineno == 1 and not _is_number(text.split(",")[-1]):
            continue
        field_text = text.split(",")[-1].strip()
        if not _is_number(field_text):
            raise TraceParseError(f"{path}:{lineno}: not a number: {field_text!r}")
        value = float(field_text) * scale
        if value < 0:
            raise TraceParseError(f"{path}:{lineno}: negative workload value")
        values.append(value)
    if len(values) < duration_s:
        raise TraceParseError(
            f"{path}: trace has {len(values)} values, run needs {duration_s}"
        )
    return np.rint(np.asarray(values[:duration_s])).astype(np.int64)


def _is_number(text: str) -> bool:
    try:
        float(text)
        return True
    except ValueError:
        return False
