"""Command line front end.

    podflow run        execute a workflow plan, print the summary, optionally
                       write CSVs and the trace to --out-dir
    podflow report     same as run, then render the figures next to the CSVs
    podflow motivation submit a small DAG with and without ordering and count
                       dependency violations across seeds

Config and workflow parse errors exit nonzero with a one-line message.
"""

from __future__ import annotations

import argparse
import sys

from .config import load_app_config
from .errors import PodflowError
from .experiment import (
    ENGINE_NAMES,
    motivation_experiment,
    run_experiment,
    write_outputs,
)

SUMMARY_KEYS = ("runs", "tasks", "retries", "task_time_mean", "task_time_min",
                "task_time_max", "lifecycle_mean", "lifecycle_min",
                "lifecycle_max", "cpu_usage_rate", "mem_usage_rate")


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--engine", choices=ENGINE_NAMES, default="adaptor")
    p.add_argument("--workflow", default=None,
                   help="builtin name or path to a workflow JSON file "
                        "(default: montage, or injector.workflow_path from --config)")
    p.add_argument("--size", type=int, default=None,
                   help="task count for generated shapes (pipeline, forkjoin, ...)")
    p.add_argument("--repeat", type=int, default=None,
                   help="back-to-back runs (default: injector.repeat from --config, else 1)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sample-period", type=float, default=0.5)
    p.add_argument("--failure-prob", type=float, default=None,
                   help="volume mount failure probability, overrides config")
    p.add_argument("--transport", choices=("memory", "socket"),
                   default="memory")
    p.add_argument("--config", default=None,
                   help="JSON or TOML file with cluster/engine/batch/argo/injector sections")
    p.add_argument("--out-dir", default=None,
                   help="directory for summary.csv, tasks.csv, samples.csv, events.csv, trace.jsonl")


def _run(args, render: bool) -> int:
    cfg = load_app_config(args.config)
    repeat = args.repeat if args.repeat is not None else cfg.injector.repeat
    workflow = args.workflow or cfg.injector.workflow_path or "montage"
    result = run_experiment(
        engine=args.engine, workflow=workflow, repeat=repeat,
        seed=args.seed, sample_period=args.sample_period,
        failure_prob=args.failure_prob, transport=args.transport,
        size=args.size, config=cfg)
    for key in SUMMARY_KEYS:
        value = result.summary.get(key)
        if isinstance(value, float):
            print(f"{key}: {value:.3f}")
        else:
            print(f"{key}: {value}")
    if args.out_dir:
        paths = write_outputs(result, args.out_dir)
        for name in sorted(paths):
            print(f"wrote {paths[name]}")
        if render:
            from .report import render_report
            for path in render_report(args.out_dir):
                print(f"wrote {path}")
    elif render:
        print("report needs --out-dir to place the CSVs and figures",
              file=sys.stderr)
        return 2
    return 0


def _motivation(args) -> int:
    counts = motivation_experiment(seeds=args.seeds)
    print(f"seeds: {counts['seeds']}")
    print(f"direct submission, seeds with violations: "
          f"{counts['direct_violated_seeds']}")
    print(f"direct submission, total violated edges: "
          f"{counts['direct_total_violations']}")
    print(f"dependency-aware engine, seeds with violations: "
          f"{counts['adaptor_violated_seeds']}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="podflow",
        description="workflow runs on a simulated cluster, with baselines")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute a plan and print the summary")
    _add_run_flags(run_p)

    rep_p = sub.add_parser("report",
                           help="run, write CSVs, render figures next to them")
    _add_run_flags(rep_p)

    mot_p = sub.add_parser("motivation",
                           help="count DAG-order violations vs. seeds")
    mot_p.add_argument("--seeds", type=int, default=100)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return _run(args, render=False)
        if args.command == "report":
            return _run(args, render=True)
        return _motivation(args)
    except (PodflowError, ValueError, OSError) as exc:
        print(f"podflow: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
