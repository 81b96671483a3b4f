"""Event-triggered workflow engine.

One namespace and one volume claim per workflow run. Task pods are created
as their predecessors finish, gated by an admission queue so the cluster is
never overcommitted. All reads go through the informer cache (listers); the
engine never touches authoritative cluster state directly. Commands are
issued with no dispatch latency; the only control-plane charge is one
api_call_overhead per round trip with the injector.

Event rules, driven entirely by informer callbacks:

* pod Succeeded        -> issue delete_pod
* pod Deleted, task ok -> mark done, enqueue newly ready successors, allocate
* pod Failed           -> issue delete_pod, re-queue after retry_backoff
* all tasks done       -> delete the namespace (once)
* namespace Deleted    -> record completion, ask the injector for more work

Successors start from the predecessor's Deleted event, not its Succeeded
event, so a task's resources are provably back in the pool before any child
pod is requested.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .cluster import Cluster, PodView
from .errors import AlreadyExists, DuplicatePodName, ValidationFailed
from .informer import InformerCache
from .workflow import WorkflowSpec, parse_workflow, ready_tasks


@dataclass
class EngineConfig:
    retry_backoff: float = 1.0          # wait before re-queueing a failed task
    claim_capacity_mib: int = 1024
    claim_storage_class: str = "nfs-dynamic"
    multi_run: bool = True              # keep pulling workflows until Done
    task_duration: float = 10.0         # container run time for every task
    task_durations: dict | None = None  # optional per-task override

    def duration_for(self, task_id: str) -> float:
        if self.task_durations and task_id in self.task_durations:
            return float(self.task_durations[task_id])
        return self.task_duration


@dataclass
class WorkflowRun:
    """Mutable bookkeeping for one workflow instance."""

    workflow: str
    run_index: int
    namespace: str
    claim: str
    spec: WorkflowSpec
    phase: str = "namespace-wait"   # -> claim-wait -> running -> cleanup
    queue: list = field(default_factory=list)       # admission FIFO of task ids
    touched: set = field(default_factory=set)       # ever enqueued
    succeeded: set = field(default_factory=set)
    task_status: dict = field(default_factory=dict)
    pod_task: dict = field(default_factory=dict)    # pod name -> task id
    pod_records: list = field(default_factory=list)  # PodView per Deleted event
    state: dict = field(default_factory=dict)       # driver-specific extras
    retries: int = 0
    ns_created_at: float | None = None
    ns_deleted_at: float | None = None
    ns_delete_issued: bool = False


@dataclass(frozen=True)
class CompletedRun:
    """Immutable summary handed to the metrics layer."""

    workflow: str
    run_index: int
    namespace: str
    ns_created_at: float
    ns_deleted_at: float
    retries: int
    task_count: int
    pod_records: tuple

    @property
    def lifecycle(self) -> float:
        return self.ns_deleted_at - self.ns_created_at


class RunDriver:
    """Shared plumbing for anything that executes workflows over a Cluster.

    Owns the injector channel handshake (validate, ack or nack, one
    api_call_overhead per round trip), run numbering, the trace log, and the
    CompletedRun assembly. Subclasses supply _begin_run and call _finish_run
    when their namespace is gone.
    """

    def __init__(self, cluster: Cluster, channel, base: EngineConfig | None = None):
        self.cluster = cluster
        self.channel = channel
        self.base = base or EngineConfig()
        self.runs: dict[str, WorkflowRun] = {}
        self.completed_runs: list[CompletedRun] = []
        self.trace_rows: list[dict] = []
        self.done = False
        self._seq = 0

    def start(self) -> None:
        """Hook up subclass machinery, then pull the first workflow."""
        self._prepare()
        self._pull(self.channel.recv_submit())

    def _prepare(self) -> None:
        pass

    def _pull(self, payload: dict) -> None:
        name = payload.get("name", "workflow")
        try:
            spec = parse_workflow(payload.get("workflow", {}), name=name)
        except ValidationFailed as exc:
            self.channel.send_ack(ok=False, error=f"{type(exc).__name__}: {exc}")
            return
        self.channel.send_ack(ok=True)
        at = self.cluster.now + self.cluster.config.api_call_overhead
        self.cluster.call_at(at, lambda: self.submit_workflow(spec))

    def _pull_next(self) -> None:
        if not self.base.multi_run and self.completed_runs:
            self.done = True
            self._trace("engine_idle")
            return
        self._trace("request_next")
        payload = self.channel.request_next()
        if payload is None:
            self.done = True
            self._trace("injector_done")
            return
        self._pull(payload)

    def submit_workflow(self, spec: WorkflowSpec) -> None:
        self._seq += 1
        namespace = f"wf-{self._seq:03d}"
        run = WorkflowRun(workflow=spec.name, run_index=self._seq,
                          namespace=namespace, claim=f"{namespace}-data",
                          spec=spec)
        self.runs[namespace] = run
        self._trace("submit", namespace=namespace, workflow=spec.name,
                    tasks=len(spec.tasks))
        self._begin_run(run)

    def _begin_run(self, run: WorkflowRun) -> None:
        raise NotImplementedError

    def _finish_run(self, run: WorkflowRun, deleted_at: float) -> None:
        if run.phase == "complete":
            return
        run.phase = "complete"
        run.ns_deleted_at = deleted_at
        self.runs.pop(run.namespace, None)
        self.completed_runs.append(CompletedRun(
            workflow=run.workflow, run_index=run.run_index,
            namespace=run.namespace, ns_created_at=run.ns_created_at,
            ns_deleted_at=run.ns_deleted_at, retries=run.retries,
            task_count=len(run.spec.tasks),
            pod_records=tuple(run.pod_records)))
        self._trace("run_complete", namespace=run.namespace,
                    workflow=run.workflow)
        self._pull_next()

    def _trace(self, action: str, **fields) -> None:
        row = {"t": round(self.cluster.now, 3), "action": action}
        row.update({k: v for k, v in fields.items() if v is not None})
        self.trace_rows.append(row)

    def export_trace_jsonl(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for row in self.trace_rows:
                fh.write(json.dumps(row, separators=(",", ":")) + "\n")


class AdaptorEngine(RunDriver):
    """Drives workflow runs over a Cluster through an InformerCache."""

    def __init__(self, cluster: Cluster, informer: InformerCache, channel,
                 config: EngineConfig | None = None):
        super().__init__(cluster, channel, config)
        self.informer = informer
        self.config = self.base

    def _prepare(self) -> None:
        if not self.informer.synced:
            self.informer.start()
        self.informer.subscribe("Pod", self._on_pod)
        self.informer.subscribe("Namespace", self._on_namespace)
        self.informer.subscribe("Claim", self._on_claim)

    # --- submission ---

    def _begin_run(self, run: WorkflowRun) -> None:
        self.ensure_namespace(run)

    def ensure_namespace(self, run: WorkflowRun) -> None:
        """Create the run namespace; a pre-existing one is adopted, not fatal."""
        try:
            self.cluster.create_namespace(run.namespace)
        except AlreadyExists:
            self._trace("namespace_exists", namespace=run.namespace)
            existing = self.informer.get_namespace(run.namespace)
            if existing is not None:
                self._namespace_ready(run, existing.created_at)

    def _namespace_ready(self, run: WorkflowRun, created_at: float) -> None:
        if run.phase != "namespace-wait":
            return
        run.phase = "claim-wait"
        run.ns_created_at = created_at
        self._trace("namespace_ready", namespace=run.namespace)
        try:
            self.cluster.create_claim(run.namespace, run.claim,
                                      storage_class=self.config.claim_storage_class,
                                      capacity_mib=self.config.claim_capacity_mib)
        except AlreadyExists:
            view = self.informer.get_claim(run.namespace, run.claim)
            if view is not None and view.bound:
                self._claim_ready(run)

    def _claim_ready(self, run: WorkflowRun) -> None:
        if run.phase != "claim-wait":
            return
        run.phase = "running"
        self._trace("claim_bound", namespace=run.namespace)
        self._enqueue(run, ready_tasks(run.spec, run.succeeded, set()))
        self.allocate_and_create(run)

    # --- admission ---

    def _free_resources(self) -> tuple[int, int]:
        """Cluster headroom as seen through the listers, all namespaces."""
        cpu = mem = 0
        for node in self.informer.list_nodes():
            if not node.is_master:
                cpu += node.allocatable_cpu_milli
                mem += node.allocatable_mem_mib
        for pod in self.informer.list_pods():
            cpu -= pod.request_cpu_milli
            mem -= pod.request_mem_mib
        return cpu, mem

    def _enqueue(self, run: WorkflowRun, task_ids) -> None:
        for tid in task_ids:
            run.touched.add(tid)
            run.task_status[tid] = "queued"
            run.queue.append(tid)
            self._trace("enqueue", namespace=run.namespace, task=tid)

    def allocate_and_create(self, run: WorkflowRun) -> None:
        """FIFO scan of the admission queue; skipped tasks keep their place.

        A task that does not fit stays queued and the scan moves on, so a
        small task behind a large one is not blocked. Rejected tasks are
        re-attempted on the next pod-deleted event.
        """
        free_cpu, free_mem = self._free_resources()
        still_waiting = []
        for tid in run.queue:
            task = run.spec.tasks[tid]
            if task.cpu_milli <= free_cpu and task.mem_mib <= free_mem:
                if self._create_task_pod(run, tid):
                    free_cpu -= task.cpu_milli
                    free_mem -= task.mem_mib
            else:
                still_waiting.append(tid)
        run.queue = still_waiting

    def _create_task_pod(self, run: WorkflowRun, tid: str) -> bool:
        name = f"task-{tid}"
        run.pod_task[name] = tid
        task = run.spec.tasks[tid]
        try:
            self.cluster.create_pod(run.namespace, name, task_id=tid,
                                    request_cpu_milli=task.cpu_milli,
                                    request_mem_mib=task.mem_mib,
                                    volume_claim=run.claim,
                                    run_duration=self.config.duration_for(tid))
        except DuplicatePodName:
            # Stale pod with our name: delete it and recreate once it is gone.
            run.task_status[tid] = "replace-deleting"
            self._trace("duplicate_pod", namespace=run.namespace, task=tid)
            self.cluster.delete_pod(run.namespace, name)
            return False
        run.task_status[tid] = "created"
        self._trace("create_pod", namespace=run.namespace, task=tid)
        return True

    # --- event handlers ---

    def _on_pod(self, ev) -> None:
        run = self.runs.get(ev.obj.namespace)
        if run is None:
            return  # not one of ours; ignore
        tid = run.pod_task.get(ev.obj.name)
        if tid is None:
            return
        if ev.action == "Modified":
            self._on_pod_phase(run, tid, ev.obj)
        elif ev.action == "Deleted":
            run.pod_records.append(ev.obj)
            self._on_pod_gone(run, tid)

    def _on_pod_phase(self, run: WorkflowRun, tid: str, pod: PodView) -> None:
        if run.task_status.get(tid) != "created":
            return
        if pod.phase == "Succeeded":
            run.task_status[tid] = "succeeded-deleting"
            self._trace("pod_succeeded", namespace=run.namespace, task=tid)
            self.cluster.delete_pod(run.namespace, pod.name)
        elif pod.phase == "Failed":
            run.task_status[tid] = "failed-deleting"
            run.retries += 1
            self._trace("pod_failed", namespace=run.namespace, task=tid,
                        reason=pod.reason)
            self.cluster.delete_pod(run.namespace, pod.name)

    def _on_pod_gone(self, run: WorkflowRun, tid: str) -> None:
        status = run.task_status.get(tid)
        if status == "succeeded-deleting":
            self._task_done(run, tid)
        elif status == "failed-deleting":
            self._trace("retry_scheduled", namespace=run.namespace, task=tid)
            at = self.cluster.now + self.config.retry_backoff
            self.cluster.call_at(at, lambda: self._retry(run, tid))
        elif status == "replace-deleting":
            run.task_status[tid] = "queued"
            run.queue.append(tid)
            self.allocate_and_create(run)

    def _retry(self, run: WorkflowRun, tid: str) -> None:
        run.task_status[tid] = "queued"
        run.queue.append(tid)
        self._trace("requeue", namespace=run.namespace, task=tid)
        self.allocate_and_create(run)

    def _task_done(self, run: WorkflowRun, tid: str) -> None:
        run.task_status[tid] = "done"
        run.succeeded.add(tid)
        self._trace("task_done", namespace=run.namespace, task=tid)
        if len(run.succeeded) == len(run.spec.tasks):
            if not run.ns_delete_issued:
                run.ns_delete_issued = True
                run.phase = "cleanup"
                self._trace("cleanup", namespace=run.namespace)
                self.cluster.delete_namespace(run.namespace)
            return
        blocked = run.touched - run.succeeded
        self._enqueue(run, ready_tasks(run.spec, run.succeeded, blocked))
        self.allocate_and_create(run)

    def _on_namespace(self, ev) -> None:
        run = self.runs.get(ev.obj.name)
        if run is None:
            return
        if ev.action == "Added":
            self._namespace_ready(run, ev.obj.created_at)
        elif ev.action == "Deleted" and run.phase == "cleanup":
            self._finish_run(run, ev.obj.deleted_at)

    def _on_claim(self, ev) -> None:
        run = self.runs.get(ev.obj.namespace)
        if run is None or ev.obj.name != run.claim:
            return
        if ev.action == "Modified" and ev.obj.bound:
            self._claim_ready(run)
