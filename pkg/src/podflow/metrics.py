"""Resource sampling, per-run timing aggregation, and the frozen CSV surface.

The sampler is a recurring daemon event inside the simulation, so it never
keeps the event loop alive on its own. Used capacity counts the requests of
bound, non-deleted pods on worker nodes; allocatable capacity is constant
per config.

CSV schemas are frozen (header row, column order, seconds with three
decimals) because they are the bit-exact comparison surface:

    samples.csv  t,used_cpu_milli,used_mem_mib,allocatable_cpu_milli,allocatable_mem_mib
    tasks.csv    run,workflow,task,attempt,phase,created_at,started_at,finished_at,deleted_at,task_time
    summary.csv  run,workflow,namespace,ns_created_at,ns_deleted_at,lifecycle,tasks,retries
"""

from __future__ import annotations

import io
from dataclasses import dataclass

from .cluster import Cluster
from .errors import EmptyInput


@dataclass(frozen=True)
class ResourceSample:
    t: float
    used_cpu_milli: int
    used_mem_mib: int
    allocatable_cpu_milli: int
    allocatable_mem_mib: int


class ResourceSampler:
    """Samples cluster usage every `period` virtual seconds while started."""

    def __init__(self, cluster: Cluster, period: float = 0.5):
        if period <= 0:
            raise ValueError(f"sample period must be positive, got {period}")
        self.cluster = cluster
        self.period = period
        self.samples: list[ResourceSample] = []
        self._running = False

    def start(self) -> None:
        if self._running:
            return
        self._running = True
        self._tick()

    def stop(self) -> None:
        self._running = False

    def _tick(self) -> None:
        if not self._running:
            return
        used_cpu, used_mem = self.cluster.used_on_workers()
        alloc_cpu, alloc_mem = self.cluster.allocatable_on_workers()
        self.samples.append(ResourceSample(
            self.cluster.now, used_cpu, used_mem, alloc_cpu, alloc_mem))
        self.cluster.call_at(self.cluster.now + self.period, self._tick,
                             daemon=True)


@dataclass(frozen=True)
class TaskRecord:
    """One pod attempt, timestamps as the cluster reported them."""

    task: str
    attempt: int
    phase: str
    created_at: float
    started_at: float | None
    finished_at: float | None
    deleted_at: float

    @property
    def task_time(self) -> float:
        return self.deleted_at - self.created_at


@dataclass(frozen=True)
class RunMetrics:
    """Everything the harness keeps about one workflow run."""

    workflow: str
    run_index: int
    namespace: str
    ns_created_at: float
    ns_deleted_at: float
    retries: int
    task_count: int
    task_records: tuple
    samples: tuple  # ResourceSamples within the run's lifecycle window

    @property
    def lifecycle(self) -> float:
        return self.ns_deleted_at - self.ns_created_at


def run_metrics_from(completed, samples) -> RunMetrics:
    """Join one CompletedRun with the samples inside its lifecycle window."""
    attempts: dict[str, int] = {}
    records = []
    for view in completed.pod_records:
        n = attempts.get(view.task_id, 0) + 1
        attempts[view.task_id] = n
        records.append(TaskRecord(
            task=view.task_id, attempt=n, phase=view.phase,
            created_at=view.created_at, started_at=view.started_at,
            finished_at=view.finished_at, deleted_at=view.deleted_at))
    window = [s for s in samples
              if completed.ns_created_at <= s.t <= completed.ns_deleted_at]
    return RunMetrics(
        workflow=completed.workflow, run_index=completed.run_index,
        namespace=completed.namespace, ns_created_at=completed.ns_created_at,
        ns_deleted_at=completed.ns_deleted_at, retries=completed.retries,
        task_count=completed.task_count, task_records=tuple(records),
        samples=tuple(window))


def aggregate(runs: list[RunMetrics]) -> dict:
    """Mean/min/max of task time and lifecycle, plus first-run usage rates."""
    if not runs:
        raise EmptyInput("aggregate needs at least one run")
    task_times = [rec.task_time for run in runs for rec in run.task_records]
    lifecycles = [run.lifecycle for run in runs]
    out = {
        "runs": len(runs),
        "tasks": len(task_times),
        "retries": sum(run.retries for run in runs),
        "task_time_mean": _mean(task_times),
        "task_time_min": min(task_times) if task_times else 0.0,
        "task_time_max": max(task_times) if task_times else 0.0,
        "lifecycle_mean": _mean(lifecycles),
        "lifecycle_min": min(lifecycles),
        "lifecycle_max": max(lifecycles),
    }
    first = runs[0]
    if first.samples:
        out["cpu_usage_rate"] = (_mean([s.used_cpu_milli for s in first.samples])
                                 / first.samples[0].allocatable_cpu_milli)
        out["mem_usage_rate"] = (_mean([s.used_mem_mib for s in first.samples])
                                 / first.samples[0].allocatable_mem_mib)
    else:
        out["cpu_usage_rate"] = 0.0
        out["mem_usage_rate"] = 0.0
    return out


def _mean(values) -> float:
    values = list(values)
    return sum(values) / len(values) if values else 0.0


# --- CSV emitters ---


def _sec(value) -> str:
    return "" if value is None else f"{value:.3f}"


def samples_csv(samples) -> str:
    buf = io.StringIO()
    buf.write("t,used_cpu_milli,used_mem_mib,"
              "allocatable_cpu_milli,allocatable_mem_mib\n")
    for s in samples:
        buf.write(f"{s.t:.3f},{s.used_cpu_milli},{s.used_mem_mib},"
                  f"{s.allocatable_cpu_milli},{s.allocatable_mem_mib}\n")
    return buf.getvalue()


def tasks_csv(runs) -> str:
    buf = io.StringIO()
    buf.write("run,workflow,task,attempt,phase,created_at,started_at,"
              "finished_at,deleted_at,task_time\n")
    for run in runs:
        for rec in run.task_records:
            buf.write(f"{run.run_index},{run.workflow},{rec.task},"
                      f"{rec.attempt},{rec.phase},{_sec(rec.created_at)},"
                      f"{_sec(rec.started_at)},{_sec(rec.finished_at)},"
                      f"{_sec(rec.deleted_at)},{_sec(rec.task_time)}\n")
    return buf.getvalue()


def summary_csv(runs) -> str:
    buf = io.StringIO()
    buf.write("run,workflow,namespace,ns_created_at,ns_deleted_at,"
              "lifecycle,tasks,retries\n")
    for run in runs:
        buf.write(f"{run.run_index},{run.workflow},{run.namespace},"
                  f"{_sec(run.ns_created_at)},{_sec(run.ns_deleted_at)},"
                  f"{_sec(run.lifecycle)},{run.task_count},{run.retries}\n")
    return buf.getvalue()
