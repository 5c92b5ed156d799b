"""Command-line entry points: run scenarios, dump traces, re-render reports."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from .runner import report, run_experiment
from .scenario import ScenarioError, generate_trace, load_scenario

EXIT_OK = 0
EXIT_SCENARIO = 1
EXIT_CONTROLLER = 2


def _resolve_seed(flag: int | None, scenario_seed: int) -> int:
    if flag is not None:
        return flag
    env = os.environ.get("STREAMSCALE_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise ScenarioError(f"STREAMSCALE_SEED is not an integer: {env!r}") from exc
    return scenario_seed


def _cmd_run(args: argparse.Namespace) -> int:
    try:
        scenario = load_scenario(args.scenario)
        seed = _resolve_seed(args.seed, scenario.seed)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCENARIO
    out_dir = Path(args.out) if args.out else Path.cwd() / f"run-{scenario.name}"
    result = run_experiment(scenario, out_dir, seed=seed)
    sys.stdout.write(result.summary_path.read_text())
    print(f"results written to {result.out_dir}")
    if result.any_failed:
        failed = ", ".join(r.name for r in result.runs if r.failed)
        print(f"error: controller run failed: {failed}", file=sys.stderr)
        return EXIT_CONTROLLER
    return EXIT_OK


def _cmd_trace(args: argparse.Namespace) -> int:
    try:
        scenario = load_scenario(args.scenario)
        trace = generate_trace(scenario.workload, scenario.duration_s)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCENARIO
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    lines = ["time_s,workload"]
    lines.extend(f"{t},{v}" for t, v in enumerate(trace))
    out.write_text("\n".join(lines) + "\n")
    print(f"{len(trace)} seconds written to {out}")
    return EXIT_OK


def _cmd_report(args: argparse.Namespace) -> int:
    try:
        summary_path = report(args.run_dir)
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCENARIO
    sys.stdout.write(summary_path.read_text())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="streamscale",
        description="Simulate stream-processing autoscalers on workload scenarios.",
    )
    parser.add_argument(
        "--verbose", action="store_true", help="log controller activity to stderr"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run every controller in a scenario file")
    p_run.add_argument("scenario", help="path to a scenario YAML file")
    p_run.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p_run.add_argument("--out", default=None, help="output directory (default: ./run-<name>)")
    p_run.set_defaults(func=_cmd_run)

    p_trace = sub.add_parser("trace", help="write a scenario's workload trace as CSV")
    p_trace.add_argument("scenario", help="path to a scenario YAML file")
    p_trace.add_argument("--out", required=True, help="output CSV path")
    p_trace.set_defaults(func=_cmd_trace)

    p_report = sub.add_parser("report", help="re-render summary.txt for a finished run")
    p_report.add_argument("run_dir", help="directory produced by `streamscale run`")
    p_report.set_defaults(func=_cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
