"""Experiment runner: each controller against an identical seeded simulator."""

from __future__ import annotations

import json
import logging
import traceback
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .baselines import HpaAutoscaler, ThresholdPolicy
from .controller import ControlLoop, ControllerConfig, TickResult
from .forecasting import POOR_WAPE_THRESHOLD
from .recovery import RecoveryConfig
from .scenario import ADAPTIVE, HPA, STATIC, ControllerSpec, Scenario, generate_trace
from .simulator import (
    ChunkMetrics,
    RescaleEvent,
    Simulator,
    SimulatorMetricsProvider,
    SimulatorScalingExecutor,
)

logger = logging.getLogger(__name__)

CSV_HEADER = "time_s,workload,throughput,workers,cpu_avg,consumer_lag,latency_p95_s,decision_event"
DEFAULT_TARGET_RECOVERY_S = 600.0
BACKLOG_EQUIVALENT_S = 60


@dataclass
class ActionRecord:
    time: int
    previous: int
    target: int
    reason: str


@dataclass
class ControllerRun:
    """Everything one controller produced over a scenario run."""

    name: str
    kind: str
    target_recovery_s: float
    workload: np.ndarray
    throughput: np.ndarray
    workers: np.ndarray
    lag: np.ndarray
    latency: np.ndarray
    cpu_mean: np.ndarray
    events: dict[int, str] = field(default_factory=dict)
    actions: list[ActionRecord] = field(default_factory=list)
    ticks: list[TickResult] = field(default_factory=list)
    estimates: list[tuple[float, float]] = field(default_factory=list)
    rescales: list[RescaleEvent] = field(default_factory=list)
    rt_violations_predicted: int = 0
    failed: bool = False
    error: str | None = None

    @property
    def seconds(self) -> int:
        return len(self.workload)


@dataclass
class ControllerSummary:
    name: str
    kind: str
    avg_workers: float
    worker_integral: float
    normalized_usage: float | None
    latency_mean_s: float
    latency_p50_s: float
    latency_p95_s: float
    latency_p99_s: float
    latency_max_s: float
    scaling_actions: int
    rt_violations_predicted: int
    rt_violations_measured: int
    capacity_error_mean: float | None
    capacity_error_p95: float | None
    wape_mean: float | None
    wape_poor_fraction: float | None
    failed: bool
    error: str | None


@dataclass
class ExperimentResult:
    scenario: Scenario
    seed: int
    out_dir: Path
    trace: np.ndarray
    runs: list[ControllerRun]
    summaries: list[ControllerSummary]
    csv_paths: dict[str, Path]
    summary_path: Path

    @property
    def any_failed(self) -> bool:
        return any(run.failed for run in self.runs)


class _AdaptiveDriver:
    def __init__(self, sim: Simulator, spec: ControllerSpec, max_scaleout: int):
        params = spec.params
        cluster = sim.spec
        recovery = RecoveryConfig(
            checkpoint_interval_s=cluster.checkpoint_interval_s,
            downtime_scale_out_s=float(cluster.downtime_scale_out_s),
            downtime_scale_in_s=float(cluster.downtime_scale_in_s),
            target_recovery_time_s=float(
                params.get("target_recovery_time_s", DEFAULT_TARGET_RECOVERY_S)
            ),
        )
        config = ControllerConfig(
            loop_interval_s=int(params.get("loop_interval_s", 60)),
            grace_period_s=float(params.get("grace_period_s", 180.0)),
            rescale_backoff_s=float(params.get("rescale_backoff_s", 600.0)),
        )
        self.provider = SimulatorMetricsProvider(sim)
        self.executor = SimulatorScalingExecutor(sim)
        self.loop = ControlLoop(
            self.provider,
            self.executor,
            max_scaleout=max_scaleout,
            recovery=recovery,
            config=config,
            initial_parallelism=sim.parallelism,
        )
        self.cadence = config.loop_interval_s
        self.target_recovery_s = recovery.target_recovery_time_s

    def on_tick(self, chunk: ChunkMetrics, now: int, sim: Simulator, run: ControllerRun) -> str | None:
        self.provider.push(chunk)
        ground_truth = sim.ground_truth_capacity(chunk.parallelism)
        before = sim.parallelism
        result = self.loop.tick(float(now))
        run.ticks.append(result)
        if result.capacity_estimate is not None:
            run.estimates.append((result.capacity_estimate, ground_truth))
        run.rt_violations_predicted = len(self.loop.rt_violations)
        if result.executed:
            reason = result.decision.reason
            run.actions.append(ActionRecord(now, before, sim.parallelism, reason))
            return f"rescale:{before}->{sim.parallelism}:{reason}"
        return None


class _HpaDriver:
    def __init__(self, sim: Simulator, spec: ControllerSpec, max_scaleout: int):
        params = spec.params
        self.policy = ThresholdPolicy(
            target_utilization=float(params["target_utilization"]),
            max_workers=int(params.get("max_workers", max_scaleout)),
            min_workers=int(params.get("min_workers", 1)),
            eval_interval_s=int(params.get("eval_interval_s", 15)),
            stabilization_window_s=int(params.get("stabilization_window_s", 300)),
            tolerance=float(params.get("tolerance", 0.10)),
        )
        self.hpa = HpaAutoscaler(self.policy)
        self.cadence = self.policy.eval_interval_s
        self.target_recovery_s = DEFAULT_TARGET_RECOVERY_S

    def on_tick(self, chunk: ChunkMetrics, now: int, sim: Simulator, run: ControllerRun) -> str | None:
        ready_seconds = chunk.seconds - chunk.down_seconds
        if ready_seconds <= 0:
            return None
        per_worker = np.minimum(chunk.worker_cpu_sum / ready_seconds, 1.0)
        avg_cpu = float(np.mean(per_worker))
        before = sim.parallelism
        target = self.hpa.decide(float(now), before, avg_cpu)
        if target == before:
            return None
        sim.rescale(target)
        reason = "scale-in" if target < before else "scale-out"
        run.actions.append(ActionRecord(now, before, target, reason))
        return f"rescale:{before}->{target}:{reason}"


class _StaticDriver:
    def __init__(self, sim: Simulator, spec: ControllerSpec, max_scaleout: int):
        self.cadence = 60
        self.target_recovery_s = DEFAULT_TARGET_RECOVERY_S

    def on_tick(self, chunk: ChunkMetrics, now: int, sim: Simulator, run: ControllerRun) -> str | None:
        return None


_DRIVERS = {ADAPTIVE: _AdaptiveDriver, HPA: _HpaDriver, STATIC: _StaticDriver}


def _controller_names(specs: list[ControllerSpec]) -> list[str]:
    names: list[str] = []
    for spec in specs:
        base = spec.name
        name = base
        suffix = 2
        while name in names:
            name = f"{base}-{suffix}"
            suffix += 1
        names.append(name)
    return names


def run_controller(
    scenario: Scenario, spec: ControllerSpec, trace: np.ndarray, seed: int, name: str
) -> ControllerRun:
    """Run one controller over the full trace on its own simulator."""
    cluster = scenario.cluster
    if spec.kind == STATIC:
        cluster = replace(cluster, initial_workers=int(spec.params["workers"]))
    sim = Simulator(cluster, seed)
    duration = scenario.duration_s
    run = ControllerRun(
        name=name,
        kind=spec.kind,
        target_recovery_s=DEFAULT_TARGET_RECOVERY_S,
        workload=np.zeros(duration, dtype=np.int64),
        throughput=np.zeros(duration, dtype=np.int64),
        workers=np.zeros(duration, dtype=np.int64),
        lag=np.zeros(duration, dtype=np.int64),
        latency=np.zeros(duration, dtype=np.float64),
        cpu_mean=np.zeros(duration, dtype=np.float64),
    )
    t = 0
    try:
        # bad controller parameters fail this run, not the experiment
        driver = _DRIVERS[spec.kind](sim, spec, cluster.max_workers)
        run.target_recovery_s = driver.target_recovery_s
        while t < duration:
            n = min(driver.cadence, duration - t)
            chunk = sim.run_seconds(trace[t : t + n])
            sl = slice(t, t + n)
            run.workload[sl] = chunk.workload
            run.throughput[sl] = chunk.throughput
            run.workers[sl] = chunk.parallelism
            run.lag[sl] = chunk.lag
            run.latency[sl] = chunk.latency
            run.cpu_mean[sl] = chunk.cpu_mean
            t += n
            if n == driver.cadence and t < duration:
                event = driver.on_tick(chunk, t, sim, run)
                if event is not None:
                    run.events[t] = event
    except Exception as exc:  # noqa: BLE001 - a crash fails only this controller
        run.failed = True
        run.error = f"{type(exc).__name__}: {exc}"
        logger.error("controller %s failed at t=%d:\n%s", name, t, traceback.format_exc())
    run.rescales = list(sim.events)
    logger.info(
        "controller %s finished: %d actions, %d predicted RT violations",
        name,
        len(run.actions),
        run.rt_violations_predicted,
    )
    return run


def measure_recoveries(
    run: ControllerRun, equivalent_s: int = BACKLOG_EQUIVALENT_S
) -> list[tuple[ActionRecord, float | None]]:
    """Measured recovery span per action: first second with a healthy backlog.

    Healthy means lag at most equivalent_s seconds' worth of the current
    workload. Returns None for the span when the run ends first.
    """
    results = []
    lag, workload = run.lag, run.workload
    for action in run.actions:
        measured: float | None = None
        for t in range(action.time, run.seconds):
            if lag[t] <= equivalent_s * workload[t]:
                measured = float(t - action.time)
                break
        results.append((action, measured))
    return results


def summarize_run(run: ControllerRun, static_integral: float | None) -> ControllerSummary:
    integral = float(np.sum(run.workers))
    normalized = integral / static_integral if static_integral else None
    recoveries = measure_recoveries(run)
    measured_violations = sum(
        1
        for _, measured in recoveries
        if measured is None or measured > run.target_recovery_s
    )
    errors = [abs(est - gt) / gt for est, gt in run.estimates if gt > 0]
    wapes = [t.wape for t in run.ticks if t.wape is not None]
    return ControllerSummary(
        name=run.name,
        kind=run.kind,
        avg_workers=float(np.mean(run.workers)) if run.seconds else 0.0,
        worker_integral=integral,
        normalized_usage=normalized,
        latency_mean_s=float(np.mean(run.latency)) if run.seconds else 0.0,
        latency_p50_s=float(np.percentile(run.latency, 50)) if run.seconds else 0.0,
        latency_p95_s=float(np.percentile(run.latency, 95)) if run.seconds else 0.0,
        latency_p99_s=float(np.percentile(run.latency, 99)) if run.seconds else 0.0,
        latency_max_s=float(np.max(run.latency)) if run.seconds else 0.0,
        scaling_actions=len(run.actions),
        rt_violations_predicted=run.rt_violations_predicted,
        rt_violations_measured=measured_violations,
        capacity_error_mean=float(np.mean(errors)) if errors else None,
        capacity_error_p95=float(np.percentile(errors, 95)) if errors else None,
        wape_mean=float(np.mean(wapes)) if wapes else None,
        wape_poor_fraction=(
            float(np.mean([w > POOR_WAPE_THRESHOLD for w in wapes])) if wapes else None
        ),
        failed=run.failed,
        error=run.error,
    )


def summarize_runs(runs: list[ControllerRun]) -> list[ControllerSummary]:
    static_integral = next(
        (float(np.sum(r.workers)) for r in runs if r.kind == STATIC and not r.failed),
        None,
    )
    return [summarize_run(run, static_integral) for run in runs]


def _fmt(value: float | None) -> str:
    return "n/a" if value is None else f"{value:.6f}"


def render_summary(
    scenario_name: str, seed: int, duration_s: int, summaries: list[ControllerSummary]
) -> str:
    lines = [
        "experiment summary",
        f"scenario: {scenario_name}",
        f"seed: {seed}",
        f"duration_s: {duration_s}",
        "",
    ]
    for s in summaries:
        lines.append(f"controller: {s.name} ({s.kind})")
        if s.failed:
            lines.append(f"  FAILED: {s.error}")
        lines.extend(
            [
                f"  avg_workers: {s.avg_workers:.3f}",
                f"  worker_integral: {s.worker_integral:.0f}",
                f"  normalized_usage: {_fmt(s.normalized_usage)}",
                f"  latency_mean_s: {s.latency_mean_s:.3f}",
                f"  latency_p50_s: {s.latency_p50_s:.3f}",
                f"  latency_p95_s: {s.latency_p95_s:.3f}",
                f"  latency_p99_s: {s.latency_p99_s:.3f}",
                f"  latency_max_s: {s.latency_max_s:.3f}",
                f"  scaling_actions: {s.scaling_actions}",
                f"  rt_violations_predicted: {s.rt_violations_predicted}",
                f"  rt_violations_measured: {s.rt_violations_measured}",
                f"  capacity_error_mean: {_fmt(s.capacity_error_mean)}",
                f"  capacity_error_p95: {_fmt(s.capacity_error_p95)}",
                f"  wape_mean: {_fmt(s.wape_mean)}",
                f"  wape_poor_fraction: {_fmt(s.wape_poor_fraction)}",
                "",
            ]
        )
    lines.append("[machine]")
    lines.append(f"scenario={scenario_name}")
    lines.append(f"seed={seed}")
    lines.append(f"duration_s={duration_s}")
    for s in summaries:
        prefix = s.name
        lines.extend(
            [
                f"{prefix}.kind={s.kind}",
                f"{prefix}.failed={str(s.failed).lower()}",
                f"{prefix}.avg_workers={s.avg_workers:.6f}",
                f"{prefix}.worker_integral={s.worker_integral:.0f}",
                f"{prefix}.normalized_usage={_fmt(s.normalized_usage)}",
                f"{prefix}.latency_mean_s={s.latency_mean_s:.6f}",
                f"{prefix}.latency_p50_s={s.latency_p50_s:.6f}",
                f"{prefix}.latency_p95_s={s.latency_p95_s:.6f}",
                f"{prefix}.latency_p99_s={s.latency_p99_s:.6f}",
                f"{prefix}.latency_max_s={s.latency_max_s:.6f}",
                f"{prefix}.scaling_actions={s.scaling_actions}",
                f"{prefix}.rt_violations_predicted={s.rt_violations_predicted}",
                f"{prefix}.rt_violations_measured={s.rt_violations_measured}",
                f"{prefix}.capacity_error_mean={_fmt(s.capacity_error_mean)}",
                f"{prefix}.capacity_error_p95={_fmt(s.capacity_error_p95)}",
                f"{prefix}.wape_mean={_fmt(s.wape_mean)}",
                f"{prefix}.wape_poor_fraction={_fmt(s.wape_poor_fraction)}",
            ]
        )
    return "\n".join(lines) + "\n"


def write_run_csv(path: Path, run: ControllerRun) -> None:
    rows = [CSV_HEADER]
    for t in range(run.seconds):
        event = run.events.get(t, "")
        rows.append(
            f"{t},{run.workload[t]},{run.throughput[t]},{run.workers[t]},"
            f"{run.cpu_mean[t]:.6f},{run.lag[t]},{run.latency[t]:.6f},{event}"
        )
    path.write_text("\n".join(rows) + "\n")


def _write_meta(path: Path, run: ControllerRun) -> None:
    meta = {
        "name": run.name,
        "kind": run.kind,
        "target_recovery_s": run.target_recovery_s,
        "failed": run.failed,
        "error": run.error,
        "rt_violations_predicted": run.rt_violations_predicted,
        "actions": [[a.time, a.previous, a.target, a.reason] for a in run.actions],
        "estimates": [[est, gt] for est, gt in run.estimates],
        "wape": [t.wape for t in run.ticks if t.wape is not None],
    }
    path.write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")


def run_experiment(
    scenario: Scenario, out_dir: str | Path, seed: int | None = None
) -> ExperimentResult:
    """Run every controller in the scenario and write CSVs plus a summary."""
    effective_seed = scenario.seed if seed is None else seed
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    trace = generate_trace(scenario.workload, scenario.duration_s)
    names = _controller_names(scenario.controllers)
    runs = [
        run_controller(scenario, spec, trace, effective_seed, name)
        for spec, name in zip(scenario.controllers, names)
    ]
    summaries = summarize_runs(runs)
    csv_paths: dict[str, Path] = {}
    for run in runs:
        csv_path = out / f"{run.name}.csv"
        write_run_csv(csv_path, run)
        _write_meta(out / f"{run.name}.meta.json", run)
        csv_paths[run.name] = csv_path
    (out / "run.json").write_text(
        json.dumps(
            {
                "scenario": scenario.name,
                "seed": effective_seed,
                "duration_s": scenario.duration_s,
                "controllers": names,
            },
            indent=1,
            sort_keys=True,
        )
        + "\n"
    )
    summary_path = out / "summary.txt"
    summary_path.write_text(
        render_summary(scenario.name, effective_seed, scenario.duration_s, summaries)
    )
    return ExperimentResult(
        scenario=scenario,
        seed=effective_seed,
        out_dir=out,
        trace=trace,
        runs=runs,
        summaries=summaries,
        csv_paths=csv_paths,
        summary_path=summary_path,
    )


def load_run_csv(path: Path, meta: dict | None = None) -> ControllerRun:
    """Rebuild a ControllerRun (sans tick internals) from its CSV and meta."""
    lines = path.read_text().splitlines()
    if not lines or lines[0] != CSV_HEADER:
        raise ValueError(f"{path}: not a run CSV (bad header)")
    n = len(lines) - 1
    meta = meta or {}
    run = ControllerRun(
        name=meta.get("name", path.stem),
        kind=meta.get("kind", path.stem.split("-")[0]),
        target_recovery_s=float(meta.get("target_recovery_s", DEFAULT_TARGET_RECOVERY_S)),
        workload=np.zeros(n, dtype=np.int64),
        throughput=np.zeros(n, dtype=np.int64),
        workers=np.zeros(n, dtype=np.int64),
        lag=np.zeros(n, dtype=np.int64),
        latency=np.zeros(n, dtype=np.float64),
        cpu_mean=np.zeros(n, dtype=np.float64),
    )
    for i, line in enumerate(lines[1:]):
        parts = line.split(",")
        if len(parts) != 8:
            raise ValueError(f"{path}:{i + 2}: expected 8 columns")
        run.workload[i] = int(parts[1])
        run.throughput[i] = int(parts[2])
        run.workers[i] = int(parts[3])
        run.cpu_mean[i] = float(parts[4])
        run.lag[i] = int(parts[5])
        run.latency[i] = float(parts[6])
        if parts[7]:
            run.events[i] = parts[7]
    run.failed = bool(meta.get("failed", False))
    run.error = meta.get("error")
    run.rt_violations_predicted = int(meta.get("rt_violations_predicted", 0))
    run.estimates = [(float(e), float(g)) for e, g in meta.get("estimates", [])]
    for a in meta.get("actions", []):
        run.actions.append(ActionRecord(int(a[0]), int(a[1]), int(a[2]), str(a[3])))
    if not run.actions:
        for t, event in sorted(run.events.items()):
            if event.startswith("rescale:"):
                body = event.split(":", 2)
                before, after = body[1].split("->")
                reason = body[2] if len(body) > 2 else ""
                run.actions.append(ActionRecord(t, int(before), int(after), reason))
    wapes = meta.get("wape", [])
    run.ticks = [TickResult(time=0.0, wape=float(w)) for w in wapes if w is not None]
    return run


def report(run_dir: str | Path) -> Path:
    """Re-summarize an existing run directory from its CSV and meta files."""
    run_dir = Path(run_dir)
    info_path = run_dir / "run.json"
    info = json.loads(info_path.read_text()) if info_path.exists() else {}
    csv_files = sorted(run_dir.glob("*.csv"))
    if not csv_files:
        raise FileNotFoundError(f"no run CSVs found in {run_dir}")
    runs = []
    for csv_path in csv_files:
        meta_path = run_dir / f"{csv_path.stem}.meta.json"
        meta = json.loads(meta_path.read_text()) if meta_path.exists() else None
        runs.append(load_run_csv(csv_path, meta))
    summaries = summarize_runs(runs)
    summary_path = run_dir / "summary.txt"
    summary_path.write_text(
        render_summary(
            info.get("scenario", run_dir.name),
            int(info.get("seed", 0)),
            int(info.get("duration_s", runs[0].seconds if runs else 0)),
            summaries,
        )
    )
    return summary_path
