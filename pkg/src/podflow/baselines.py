"""Comparison submitters over the same simulated cluster.

Neither baseline reimplements a real controller; both are overhead models
that stay DAG-correct but pay the interaction costs the adaptor avoids.

BatchJobRunner submits level by level: create the whole batch, poll until
every pod in it has succeeded, delete the batch, poll until it is gone, then
move on. Every create/delete command is serialized on one kubectl-like
channel and pays per_command_overhead. This over-synchronizes: a task whose
own parents are done still waits for the rest of its level.

ArgoLikeRunner triggers per edge like the adaptor, but notices state only at
reconcile ticks, pays per_task_controller_overhead before each pod creation,
holds finished pods for completion_gc_delay before deleting them, and holds
pods of sequential steps (out-degree 1 into an only-child) an extra
sequential_step_gc_delay, modeling the step-level teardown of a
template-based controller. Successors are created only after the parent pod
is observed gone at a tick.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .cluster import Cluster, SimConfig
from .engine import EngineConfig, RunDriver, WorkflowRun
from .informer import InformerCache
from .workflow import WorkflowSpec, level_partition


@dataclass
class BatchJobConfig:
    poll_interval: float = 2.0
    per_command_overhead: float = 0.8

    def __post_init__(self) -> None:
        if self.poll_interval <= 0:
            raise ValueError("poll_interval must be positive")
        if self.per_command_overhead < 0:
            raise ValueError("per_command_overhead must be >= 0")


@dataclass
class ArgoLikeConfig:
    reconcile_interval: float = 1.0
    per_task_controller_overhead: float = 4.5
    completion_gc_delay: float = 3.5
    sequential_step_gc_delay: float = 8.5

    def __post_init__(self) -> None:
        if self.reconcile_interval <= 0:
            raise ValueError("reconcile_interval must be positive")
        for name in ("per_task_controller_overhead", "completion_gc_delay",
                     "sequential_step_gc_delay"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


def _next_grid(now: float, step: float) -> float:
    """First strict grid point after `now` (grid = integer multiples of step)."""
    return (math.floor(now / step + 1e-9) + 1) * step


class BatchJobRunner(RunDriver):
    """Level-synchronous batch submission with polled status checks.

    Reads authoritative cluster state directly (the kubectl analogue); a
    cluster event sink is used only to capture pod records and namespace
    timestamps for metrics, never to drive control flow.
    """

    def __init__(self, cluster: Cluster, channel,
                 config: BatchJobConfig | None = None,
                 base: EngineConfig | None = None):
        super().__init__(cluster, channel, base)
        self.config = config or BatchJobConfig()
        self._cmd_free = 0.0
        self._poll_scheduled = False
        cluster.add_event_sink(self._capture)

    # one serialized command line: the k-th queued command lands 0.8k later
    def _issue(self, fn) -> float:
        at = max(self.cluster.now, self._cmd_free) + self.config.per_command_overhead
        self._cmd_free = at
        self.cluster.call_at(at, fn)
        return at

    def _capture(self, ev) -> None:
        run = self.runs.get(getattr(ev.obj, "namespace", "") or ev.obj.name)
        if run is None:
            return
        if ev.kind == "Pod" and ev.action == "Deleted":
            run.pod_records.append(ev.obj)
        elif ev.kind == "Namespace" and ev.action == "Added":
            run.ns_created_at = ev.obj.created_at
        elif ev.kind == "Namespace" and ev.action == "Deleted":
            run.state["ns_deleted_at"] = ev.obj.deleted_at

    def _begin_run(self, run: WorkflowRun) -> None:
        run.state.update(phase="ns-wait",
                         levels=level_partition(run.spec), level=0)
        self._issue(lambda: self.cluster.create_namespace(run.namespace))
        self._trace("namespace_create", namespace=run.namespace)
        self._schedule_poll()

    def _schedule_poll(self) -> None:
        if self._poll_scheduled:
            return
        self._poll_scheduled = True
        self.cluster.call_at(_next_grid(self.cluster.now,
                                        self.config.poll_interval), self._poll)

    def _poll(self) -> None:
        self._poll_scheduled = False
        for run in list(self.runs.values()):
            self._poll_run(run)
        if self.runs:
            self._schedule_poll()

    def _poll_run(self, run: WorkflowRun) -> None:
        phase = run.state["phase"]
        if phase == "ns-wait":
            ns = self.cluster.namespaces.get(run.namespace)
            if ns is not None and ns.created_at is not None:
                run.state["phase"] = "claim-wait"
                self._issue(lambda: self.cluster.create_claim(
                    run.namespace, run.claim,
                    storage_class=self.base.claim_storage_class,
                    capacity_mib=self.base.claim_capacity_mib))
                self._trace("claim_create", namespace=run.namespace)
        elif phase == "claim-wait":
            claim = self.cluster.claims.get((run.namespace, run.claim))
            if claim is not None and claim.bound:
                self._deploy_level(run)
        elif phase == "level-wait":
            self._check_level(run)
        elif phase == "drain":
            if self._level_gone(run):
                run.state["level"] += 1
                if run.state["level"] < len(run.state["levels"]):
                    self._deploy_level(run)
                else:
                    run.state["phase"] = "ns-gone-wait"
                    self._issue(lambda: self.cluster.delete_namespace(run.namespace))
                    self._trace("namespace_delete", namespace=run.namespace)
        elif phase == "ns-gone-wait":
            if run.namespace not in self.cluster.namespaces:
                self._finish_run(run, run.state["ns_deleted_at"])

    def _level_tasks(self, run: WorkflowRun) -> list[str]:
        return run.state["levels"][run.state["level"]]

    def _deploy_level(self, run: WorkflowRun) -> None:
        run.state["phase"] = "level-wait"
        self._trace("deploy_level", namespace=run.namespace,
                    level=run.state["level"])
        for tid in self._level_tasks(run):
            self._create_pod(run, tid)

    def _create_pod(self, run: WorkflowRun, tid: str) -> None:
        name = f"task-{tid}"
        run.pod_task[name] = tid
        run.task_status[tid] = "created"
        task = run.spec.tasks[tid]
        self._issue(lambda: self.cluster.create_pod(
            run.namespace, name, task_id=tid,
            request_cpu_milli=task.cpu_milli, request_mem_mib=task.mem_mib,
            volume_claim=run.claim,
            run_duration=self.base.duration_for(tid)))

    def _check_level(self, run: WorkflowRun) -> None:
        all_done = True
        for tid in self._level_tasks(run):
            pod = self.cluster.pods.get((run.namespace, f"task-{tid}"))
            status = run.task_status[tid]
            if status == "created":
                if pod is None:
                    all_done = False  # create command still in flight
                elif pod.phase == "Failed" and not pod.deleting:
                    run.task_status[tid] = "failed-deleting"
                    run.retries += 1
                    self._trace("pod_failed", namespace=run.namespace, task=tid)
                    self._issue(lambda n=pod.name: self._delete_if_present(run, n))
                    all_done = False
                elif pod.phase != "Succeeded":
                    all_done = False
            elif status == "failed-deleting":
                all_done = False
                if pod is None:
                    self._create_pod(run, tid)  # retry
        if all_done:
            run.state["phase"] = "drain"
            self._trace("level_done", namespace=run.namespace,
                        level=run.state["level"])
            for tid in self._level_tasks(run):
                self._issue(lambda n=f"task-{tid}": self._delete_if_present(run, n))

    def _delete_if_present(self, run: WorkflowRun, name: str) -> None:
        if (run.namespace, name) in self.cluster.pods:
            self.cluster.delete_pod(run.namespace, name)

    def _level_gone(self, run: WorkflowRun) -> bool:
        return all((run.namespace, f"task-{tid}") not in self.cluster.pods
                   for tid in self._level_tasks(run))


def deferred_gc_tasks(spec: WorkflowSpec) -> set[str]:
    """Tasks forming a sequential step: one child that has no other parent."""
    out = set()
    for tid, task in spec.tasks.items():
        if len(task.outputs) == 1:
            child = spec.tasks[task.outputs[0]]
            if len(child.inputs) == 1:
                out.add(tid)
    return out


class ArgoLikeRunner(RunDriver):
    """Per-edge triggering quantized to reconcile ticks.

    All reads go through the informer (the controller's cache); pod records
    and namespace timestamps are captured from events for metrics only.
    """

    def __init__(self, cluster: Cluster, informer: InformerCache, channel,
                 config: ArgoLikeConfig | None = None,
                 base: EngineConfig | None = None):
        super().__init__(cluster, channel, base)
        self.informer = informer
        self.config = config or ArgoLikeConfig()
        self._tick_scheduled = False

    def _prepare(self) -> None:
        if not self.informer.synced:
            self.informer.start()
        self.informer.subscribe("Pod", self._capture_pod)
        self.informer.subscribe("Namespace", self._capture_namespace)

    def _capture_pod(self, ev) -> None:
        run = self.runs.get(ev.obj.namespace)
        if run is not None and ev.action == "Deleted":
            run.pod_records.append(ev.obj)

    def _capture_namespace(self, ev) -> None:
        run = self.runs.get(ev.obj.name)
        if run is None:
            return
        if ev.action == "Added":
            run.ns_created_at = ev.obj.created_at
        elif ev.action == "Deleted":
            run.state["ns_deleted_at"] = ev.obj.deleted_at

    def _begin_run(self, run: WorkflowRun) -> None:
        run.state.update(phase="submitted",
                         deferred=deferred_gc_tasks(run.spec))
        self._schedule_tick()

    def _after(self, delay: float, fn) -> None:
        # zero-delay actions run inline so they are not sequenced behind the
        # next tick that was already queued
        if delay <= 0:
            fn()
        else:
            self.cluster.call_at(self.cluster.now + delay, fn)

    def _schedule_tick(self) -> None:
        if self._tick_scheduled:
            return
        self._tick_scheduled = True
        self.cluster.call_at(_next_grid(self.cluster.now,
                                        self.config.reconcile_interval),
                             self._tick)

    def _tick(self) -> None:
        self._tick_scheduled = False
        for run in list(self.runs.values()):
            self._reconcile(run)
        if self.runs:
            self._schedule_tick()

    def _reconcile(self, run: WorkflowRun) -> None:
        phase = run.state["phase"]
        if phase == "submitted":
            run.state["phase"] = "ns-wait"
            self.cluster.create_namespace(run.namespace)
            self._trace("namespace_create", namespace=run.namespace)
            return
        if phase == "ns-wait":
            if self.informer.get_namespace(run.namespace) is not None:
                run.state["phase"] = "claim-wait"
                self.cluster.create_claim(
                    run.namespace, run.claim,
                    storage_class=self.base.claim_storage_class,
                    capacity_mib=self.base.claim_capacity_mib)
                self._trace("claim_create", namespace=run.namespace)
            return
        if phase == "claim-wait":
            claim = self.informer.get_claim(run.namespace, run.claim)
            if claim is None or not claim.bound:
                return
            run.state["phase"] = "active"
            # fall through: entries are scheduled this same tick
        if run.state["phase"] == "active":
            self._scan(run)
        elif run.state["phase"] == "ns-gone-wait":
            if self.informer.get_namespace(run.namespace) is None:
                self._finish_run(run, run.state["ns_deleted_at"])

    def _scan(self, run: WorkflowRun) -> None:
        pods = {p.name: p for p in self.informer.list_pods(run.namespace)}
        for tid in sorted(run.spec.tasks):
            status = run.task_status.get(tid, "none")
            pod = pods.get(f"task-{tid}")
            if status == "created" and pod is not None:
                if pod.phase == "Succeeded":
                    run.task_status[tid] = "gc-wait"
                    dwell = self.config.completion_gc_delay
                    if tid in run.state["deferred"]:
                        dwell += self.config.sequential_step_gc_delay
                    self._trace("gc_scheduled", namespace=run.namespace,
                                task=tid)
                    self._after(dwell,
                                lambda n=pod.name: self._delete_if_present(run, n))
                elif pod.phase == "Failed":
                    run.task_status[tid] = "retry-deleting"
                    run.retries += 1
                    self._trace("pod_failed", namespace=run.namespace, task=tid)
                    self._delete_if_present(run, pod.name)
            elif status == "gc-wait" and pod is None:
                run.task_status[tid] = "gone"
                run.succeeded.add(tid)
                self._trace("task_done", namespace=run.namespace, task=tid)
            elif status == "retry-deleting" and pod is None:
                run.task_status[tid] = "none"
        if len(run.succeeded) == len(run.spec.tasks):
            run.state["phase"] = "ns-gone-wait"
            self._trace("namespace_delete", namespace=run.namespace)
            self.cluster.delete_namespace(run.namespace)
            return
        for tid in sorted(run.spec.tasks):
            if run.task_status.get(tid, "none") != "none":
                continue
            parents = run.spec.tasks[tid].inputs
            if all(run.task_status.get(p) == "gone" for p in parents):
                run.task_status[tid] = "creating"
                self._trace("task_prep", namespace=run.namespace, task=tid)
                self._after(self.config.per_task_controller_overhead,
                            lambda t=tid: self._create_pod(run, t))

    def _create_pod(self, run: WorkflowRun, tid: str) -> None:
        if run.phase == "complete" or run.task_status.get(tid) != "creating":
            return
        name = f"task-{tid}"
        run.pod_task[name] = tid
        run.task_status[tid] = "created"
        task = run.spec.tasks[tid]
        self.cluster.create_pod(
            run.namespace, name, task_id=tid,
            request_cpu_milli=task.cpu_milli, request_mem_mib=task.mem_mib,
            volume_claim=run.claim, run_duration=self.base.duration_for(tid))
        self._trace("create_pod", namespace=run.namespace, task=tid)

    def _delete_if_present(self, run: WorkflowRun, name: str) -> None:
        if (run.namespace, name) in self.cluster.pods:
            self.cluster.delete_pod(run.namespace, name)


# --- single-run conveniences ---


def _single_run(driver_factory, spec: WorkflowSpec, sim: SimConfig | None,
                sample_period: float):
    from .injector import InjectionPlan, Injector, MemoryChannel
    from .metrics import ResourceSampler, run_metrics_from
    from .workflow import serialize_workflow
    import json as _json

    cluster = Cluster(sim or SimConfig())
    sampler = ResourceSampler(cluster, sample_period)
    sampler.start()
    plan = InjectionPlan([(spec.name, _json.loads(serialize_workflow(spec)))])
    channel = MemoryChannel(Injector(plan))
    channel.open()
    driver = driver_factory(cluster, channel)
    driver.start()
    cluster.run_until_quiescent()
    sampler.stop()
    (completed,) = driver.completed_runs
    return run_metrics_from(completed, sampler.samples)


def run_batch_job(spec: WorkflowSpec, config: BatchJobConfig | None = None,
                  sim: SimConfig | None = None, base: EngineConfig | None = None,
                  sample_period: float = 0.5):
    """One workflow under the batch submitter; returns its RunMetrics."""
    return _single_run(
        lambda cluster, channel: BatchJobRunner(cluster, channel, config, base),
        spec, sim, sample_period)


def run_argo_like(spec: WorkflowSpec, config: ArgoLikeConfig | None = None,
                  sim: SimConfig | None = None, base: EngineConfig | None = None,
                  sample_period: float = 0.5):
    """One workflow under the reconcile-loop submitter; returns its RunMetrics."""
    def factory(cluster, channel):
        informer = InformerCache(cluster)
        informer.start()
        return ArgoLikeRunner(cluster, informer, channel, config, base)
    return _single_run(factory, spec, sim, sample_period)
