"""Figures rendered from the delimited outputs of a run directory.

Reads the CSVs that `write_outputs` produced and draws three PNGs next to
them: resource usage over time, per-run lifecycles, and the task time
distribution. Everything goes through the Agg backend so no display is
needed.
"""

from __future__ import annotations

import csv
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .errors import MissingFile

FIGURE_NAMES = ("usage.png", "lifecycles.png", "task_times.png")


def _read_rows(path: str) -> list[dict]:
    if not os.path.exists(path):
        raise MissingFile(path)
    with open(path, "r", encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def _usage_figure(rows: list[dict], path: str) -> None:
    t = [float(r["t"]) for r in rows]
    cpu = [int(r["used_cpu_milli"]) for r in rows]
    mem = [int(r["used_mem_mib"]) for r in rows]
    fig, (ax_cpu, ax_mem) = plt.subplots(2, 1, sharex=True, figsize=(8, 5))
    ax_cpu.step(t, cpu, where="post", color="tab:blue")
    ax_mem.step(t, mem, where="post", color="tab:orange")
    if rows:
        ax_cpu.axhline(int(rows[0]["allocatable_cpu_milli"]),
                       ls="--", lw=0.8, color="gray")
        ax_mem.axhline(int(rows[0]["allocatable_mem_mib"]),
                       ls="--", lw=0.8, color="gray")
    ax_cpu.set_ylabel("CPU (m)")
    ax_mem.set_ylabel("memory (MiB)")
    ax_mem.set_xlabel("time (s)")
    ax_cpu.set_title("worker resource usage (dashed: allocatable)")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def _lifecycle_figure(rows: list[dict], path: str) -> None:
    idx = [int(r["run"]) for r in rows]
    life = [float(r["lifecycle"]) for r in rows]
    fig, ax = plt.subplots(figsize=(8, 3.5))
    ax.bar(idx, life, color="tab:green", width=0.8)
    if life:
        mean = sum(life) / len(life)
        ax.axhline(mean, ls="--", lw=0.8, color="gray")
        ax.annotate(f"mean {mean:.2f}s", xy=(0.99, 0.95),
                    xycoords="axes fraction", ha="right", va="top",
                    fontsize=8, color="gray")
    ax.set_xlabel("run")
    ax.set_ylabel("lifecycle (s)")
    title = rows[0]["workflow"] if rows else "workflow"
    ax.set_title(f"{title}: namespace lifecycle per run")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def _task_time_figure(rows: list[dict], path: str) -> None:
    times = [float(r["task_time"]) for r in rows if r["task_time"]]
    fig, ax = plt.subplots(figsize=(8, 3.5))
    if times:
        ax.hist(times, bins=min(30, max(5, len(set(times)))),
                color="tab:purple")
    ax.set_xlabel("task pod time, creation to deletion (s)")
    ax.set_ylabel("pods")
    ax.set_title("task time distribution")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def render_report(out_dir: str) -> list[str]:
    """Draw the three figures for a run directory; returns their paths."""
    samples = _read_rows(os.path.join(out_dir, "samples.csv"))
    summary = _read_rows(os.path.join(out_dir, "summary.csv"))
    tasks = _read_rows(os.path.join(out_dir, "tasks.csv"))
    paths = [os.path.join(out_dir, name) for name in FIGURE_NAMES]
    _usage_figure(samples, paths[0])
    _lifecycle_figure(summary, paths[1])
    _task_time_figure(tasks, paths[2])
    return paths
