"""Deterministic virtual-time simulation of a small Kubernetes-like cluster.

Nodes, namespaces, dynamically bound volume claims, and a pod lifecycle
(Pending -> Running -> Succeeded/Failed, deletion from any phase) driven by a
discrete-event queue. Commands mutate authoritative state synchronously and
schedule future effects; every visible change emits a ResourceEvent that is
appended to the event log and pushed to registered sinks (the informer).

Determinism contract: identical SimConfig plus an identical command sequence
produces an identical event log. The only randomness is the scheduler's
seeded RNG (pod order / node choice under the arbitrary policy, mount-failure
rolls).
"""

from __future__ import annotations

import heapq
import io
import json
import random
from dataclasses import dataclass, field, fields

from .errors import (
    AlreadyExists,
    ClaimNotFound,
    DeadlineExceeded,
    DuplicatePodName,
    InvariantViolation,
    NamespaceNotFound,
    NotFound,
)

PENDING = "Pending"
RUNNING = "Running"
SUCCEEDED = "Succeeded"
FAILED = "Failed"

_ACTIVE_PHASES = (PENDING, RUNNING)


@dataclass
class SimConfig:
    """Cluster shape, operation latencies (virtual seconds), and policy."""

    worker_count: int = 6
    worker_cpu_milli: int = 8000
    worker_mem_mib: int = 15312
    exclude_master: bool = True
    namespace_create: float = 0.3
    namespace_delete: float = 1.0
    claim_create_and_bind: float = 1.0
    pod_create: float = 1.5
    pod_schedule: float = 0.3
    pod_delete: float = 1.0
    api_call_overhead: float = 0.25
    bind_interval: float = 0.1
    mount_failure_probability: float = 0.0
    rng_seed: int = 0
    scheduler_policy: str = "arbitrary"

    def __post_init__(self) -> None:
        for name in ("namespace_create", "namespace_delete", "claim_create_and_bind",
                     "pod_create", "pod_schedule", "pod_delete", "api_call_overhead",
                     "bind_interval"):
            if getattr(self, name) < 0:
                raise ValueError(f"latency {name} must be >= 0")
        if not 0.0 <= self.mount_failure_probability <= 1.0:
            raise ValueError("mount_failure_probability must be in [0, 1]")
        if self.scheduler_policy not in ("arbitrary", "spread"):
            raise ValueError(f"unknown scheduler_policy {self.scheduler_policy!r}")
        if self.worker_count < 1:
            raise ValueError("worker_count must be >= 1")

    @classmethod
    def from_dict(cls, data: dict) -> "SimConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown SimConfig keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_file(cls, path: str) -> "SimConfig":
        data = load_config_file(path)
        if "cluster" in data and isinstance(data["cluster"], dict):
            data = data["cluster"]
        return cls.from_dict(data)


def load_config_file(path: str) -> dict:
    """Read a JSON or TOML file into a plain dict (format by extension)."""
    if str(path).endswith(".toml"):
        try:
            import tomllib  # py311+
        except ModuleNotFoundError:
            import tomli as tomllib
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


# --- immutable snapshots carried by events and served by the informer -------

@dataclass(frozen=True, slots=True)
class PodView:
    name: str
    namespace: str
    task_id: str
    request_cpu_milli: int
    request_mem_mib: int
    volume_claim: str | None
    phase: str
    node: str | None
    created_at: float
    started_at: float | None
    finished_at: float | None
    deleted_at: float | None
    reason: str | None
    run_duration: float


@dataclass(frozen=True, slots=True)
class NodeView:
    name: str
    is_master: bool
    allocatable_cpu_milli: int
    allocatable_mem_mib: int
    bound_pods: frozenset


@dataclass(frozen=True, slots=True)
class NamespaceView:
    name: str
    claims: frozenset
    pods: frozenset
    created_at: float
    deleted_at: float | None


@dataclass(frozen=True, slots=True)
class ClaimView:
    name: str
    namespace: str
    storage_class: str
    capacity_mib: int
    bound: bool


@dataclass(frozen=True, slots=True)
class ResourceEvent:
    at: float
    seq: int
    kind: str      # Pod | Node | Namespace | Claim
    action: str    # Added | Modified | Deleted
    obj: object    # matching *View snapshot


# --- mutable authoritative records -------------------------------------------

@dataclass(slots=True)
class _Node:
    name: str
    is_master: bool
    allocatable_cpu_milli: int
    allocatable_mem_mib: int
    used_cpu_milli: int = 0
    used_mem_mib: int = 0
    bound_pods: set = field(default_factory=set)

    def view(self) -> NodeView:
        return NodeView(self.name, self.is_master, self.allocatable_cpu_milli,
                        self.allocatable_mem_mib, frozenset(self.bound_pods))


@dataclass(slots=True)
class _Namespace:
    name: str
    created_at: float | None = None
    deleted_at: float | None = None
    deleting: bool = False
    claims: set = field(default_factory=set)
    pods: set = field(default_factory=set)

    def view(self) -> NamespaceView:
        return NamespaceView(self.name, frozenset(self.claims), frozenset(self.pods),
                             self.created_at if self.created_at is not None else -1.0,
                             self.deleted_at)


@dataclass(slots=True)
class _Claim:
    name: str
    namespace: str
    storage_class: str
    capacity_mib: int
    bound: bool = False
    removed: bool = False

    def view(self) -> ClaimView:
        return ClaimView(self.name, self.namespace, self.storage_class,
                         self.capacity_mib, self.bound)


@dataclass(slots=True)
class _Pod:
    name: str
    namespace: str
    task_id: str
    request_cpu_milli: int
    request_mem_mib: int
    volume_claim: str | None
    run_duration: float
    created_at: float
    phase: str = PENDING
    node: str | None = None
    assigned: str | None = None   # node reserved by the scheduler, bind pending
    eligible_at: float = 0.0
    started_at: float | None = None
    finished_at: float | None = None
    deleted_at: float | None = None
    reason: str | None = None
    deleting: bool = False
    removed: bool = False
    ledger_held: bool = False

    def view(self) -> PodView:
        return PodView(self.name, self.namespace, self.task_id,
                       self.request_cpu_milli, self.request_mem_mib,
                       self.volume_claim, self.phase, self.node, self.created_at,
                       self.started_at, self.finished_at, self.deleted_at,
                       self.reason, self.run_duration)


class Cluster:
    """Authoritative cluster state plus the discrete-event engine driving it."""

    def __init__(self, config: SimConfig | None = None):
        self.config = config or SimConfig()
        self.now = 0.0
        self._seq = 0
        self._queue: list = []
        self._real_pending = 0
        self._rng = random.Random(self.config.rng_seed)
        self.event_log: list[ResourceEvent] = []
        self._sinks: list = []

        self.nodes: dict[str, _Node] = {}
        master = _Node("master", True, self.config.worker_cpu_milli,
                       self.config.worker_mem_mib)
        self.nodes[master.name] = master
        for i in range(1, self.config.worker_count + 1):
            node = _Node(f"node-{i}", False, self.config.worker_cpu_milli,
                         self.config.worker_mem_mib)
            self.nodes[node.name] = node
        self.namespaces: dict[str, _Namespace] = {}
        self.claims: dict[tuple, _Claim] = {}
        self.pods: dict[tuple, _Pod] = {}

        self._pass_queued = False
        self._next_bind_free = 0.0

    # --- event plumbing ---

    def add_event_sink(self, sink) -> None:
        """Register a callable(ResourceEvent) notified at emission time."""
        self._sinks.append(sink)

    def _emit(self, kind: str, action: str, obj) -> None:
        self._seq += 1
        event = ResourceEvent(self.now, self._seq, kind, action, obj)
        self.event_log.append(event)
        for sink in self._sinks:
            sink(event)

    def call_at(self, at: float, fn, daemon: bool = False) -> None:
        """Schedule fn() at virtual time `at` (>= now)."""
        if at < self.now:
            raise ValueError(f"cannot schedule into the past ({at} < {self.now})")
        self._seq += 1
        if not daemon:
            self._real_pending += 1
        heapq.heappush(self._queue, (at, self._seq, daemon, fn))

    def run_until_quiescent(self, deadline: float | None = None) -> list[ResourceEvent]:
        """Process queued events in (time, seq) order; return the full log.

        Without a deadline, stops once only daemon events (periodic samplers)
        remain. With one, raises DeadlineExceeded if real work is still queued
        at the deadline.
        """
        while self._queue:
            at, _, daemon, _ = self._queue[0]
            if deadline is not None and at > deadline:
                break
            if daemon and self._real_pending == 0:
                break
            at, _, daemon, fn = heapq.heappop(self._queue)
            if not daemon:
                self._real_pending -= 1
            self.now = at
            fn()
        if deadline is not None and self._real_pending > 0:
            raise DeadlineExceeded(f"work remains past deadline {deadline}")
        return self.event_log

    def run_until(self, t: float) -> list[ResourceEvent]:
        """Process events up to virtual time t and park the clock there."""
        while self._queue and self._queue[0][0] <= t:
            at, _, daemon, fn = heapq.heappop(self._queue)
            if not daemon:
                self._real_pending -= 1
            self.now = at
            fn()
        self.now = max(self.now, t)
        return self.event_log

    # --- namespaces ---

    def create_namespace(self, name: str) -> None:
        ns = self.namespaces.get(name)
        if ns is not None and ns.deleted_at is None:
            raise AlreadyExists(f"namespace {name!r}")
        record = _Namespace(name=name)
        self.namespaces[name] = record

        def visible() -> None:
            record.created_at = self.now
            self._emit("Namespace", "Added", record.view())

        self.call_at(self.now + self.config.namespace_create, visible)

    def delete_namespace(self, name: str) -> None:
        ns = self.namespaces.get(name)
        if ns is None or ns.created_at is None or ns.deleting or ns.deleted_at is not None:
            raise NotFound(f"namespace {name!r}")
        ns.deleting = True
        # only pods that still exist count; ns.pods may briefly name a pod
        # whose removal is the very event this call was made from
        members = [p for p in sorted(ns.pods) if (name, p) in self.pods]
        for pod_name in members:
            pod = self.pods[(name, pod_name)]
            if not pod.deleting:
                self._start_pod_deletion(pod)
        delay = (self.config.pod_delete if members else 0.0) + self.config.namespace_delete

        def removed() -> None:
            for claim_name in sorted(ns.claims):
                claim = self.claims.pop((name, claim_name), None)
                if claim is not None:
                    claim.removed = True
                    self._emit("Claim", "Deleted", claim.view())
            ns.claims.clear()
            ns.deleted_at = self.now
            self._emit("Namespace", "Deleted", ns.view())
            del self.namespaces[name]

        self.call_at(self.now + delay, removed)

    def _live_namespace(self, name: str) -> _Namespace:
        ns = self.namespaces.get(name)
        if ns is None or ns.created_at is None or ns.deleting:
            raise NamespaceNotFound(f"namespace {name!r}")
        return ns

    # --- volume claims ---

    def create_claim(self, namespace: str, name: str, storage_class: str = "nfs-dynamic",
                     capacity_mib: int = 1024) -> None:
        ns = self._live_namespace(namespace)
        if (namespace, name) in self.claims:
            raise AlreadyExists(f"claim {namespace}/{name}")
        claim = _Claim(name=name, namespace=namespace, storage_class=storage_class,
                       capacity_mib=capacity_mib)
        self.claims[(namespace, name)] = claim
        ns.claims.add(name)
        self._emit("Claim", "Added", claim.view())
        self._emit("Namespace", "Modified", ns.view())

        def bound() -> None:
            if claim.removed:
                return
            claim.bound = True
            self._emit("Claim", "Modified", claim.view())
            self._request_pass()

        self.call_at(self.now + self.config.claim_create_and_bind, bound)

    # --- pods ---

    def create_pod(self, namespace: str, name: str, task_id: str = "",
                   request_cpu_milli: int = 1200, request_mem_mib: int = 1200,
                   volume_claim: str | None = None, run_duration: float = 10.0) -> None:
        ns = self._live_namespace(namespace)
        if (namespace, name) in self.pods:
            raise DuplicatePodName(f"pod {namespace}/{name}")
        if volume_claim is not None and (namespace, volume_claim) not in self.claims:
            raise ClaimNotFound(f"claim {namespace}/{volume_claim}")
        pod = _Pod(name=name, namespace=namespace, task_id=task_id,
                   request_cpu_milli=request_cpu_milli, request_mem_mib=request_mem_mib,
                   volume_claim=volume_claim, run_duration=run_duration,
                   created_at=self.now, eligible_at=self.now + self.config.pod_schedule)
        self.pods[(namespace, name)] = pod
        ns.pods.add(name)
        self._emit("Pod", "Added", pod.view())
        self._emit("Namespace", "Modified", ns.view())
        self.call_at(pod.eligible_at, self._request_pass)

    def delete_pod(self, namespace: str, name: str) -> None:
        pod = self.pods.get((namespace, name))
        if pod is None:
            raise NotFound(f"pod {namespace}/{name}")
        if pod.deleting:
            return  # already terminating; repeat delete is a no-op
        self._start_pod_deletion(pod)

    def _start_pod_deletion(self, pod: _Pod) -> None:
        pod.deleting = True
        if pod.assigned is not None and pod.node is None:
            # reserved but not yet bound: hand the reservation back now
            self._release_ledger(pod, self.nodes[pod.assigned])
            pod.assigned = None
        self.call_at(self.now + self.config.pod_delete, lambda: self._remove_pod(pod))

    def _remove_pod(self, pod: _Pod) -> None:
        if pod.removed:
            return
        pod.removed = True
        pod.deleted_at = self.now
        node = self.nodes.get(pod.node) if pod.node else None
        if node is not None:
            if pod.ledger_held:
                self._release_ledger(pod, node)
            node.bound_pods.discard(pod.name)
            self._emit("Node", "Modified", node.view())
        del self.pods[(pod.namespace, pod.name)]
        ns = self.namespaces.get(pod.namespace)
        self._emit("Pod", "Deleted", pod.view())
        if ns is not None and not ns.deleting:
            ns.pods.discard(pod.name)
            self._emit("Namespace", "Modified", ns.view())
        elif ns is not None:
            ns.pods.discard(pod.name)
        self._request_pass()

    # --- scheduler ---

    def _reserve_ledger(self, pod: _Pod, node: _Node) -> None:
        node.used_cpu_milli += pod.request_cpu_milli
        node.used_mem_mib += pod.request_mem_mib
        pod.ledger_held = True
        if (node.used_cpu_milli > node.allocatable_cpu_milli
                or node.used_mem_mib > node.allocatable_mem_mib):
            raise InvariantViolation(
                f"node {node.name} over-committed: {node.used_cpu_milli}m/"
                f"{node.used_mem_mib}Mi of {node.allocatable_cpu_milli}m/"
                f"{node.allocatable_mem_mib}Mi")

    def _release_ledger(self, pod: _Pod, node: _Node) -> None:
        if not pod.ledger_held:
            return
        node.used_cpu_milli -= pod.request_cpu_milli
        node.used_mem_mib -= pod.request_mem_mib
        pod.ledger_held = False
        if node.used_cpu_milli < 0 or node.used_mem_mib < 0:
            raise InvariantViolation(f"node {node.name} ledger went negative")

    def _request_pass(self) -> None:
        if self._pass_queued:
            return
        self._pass_queued = True
        self.call_at(self.now, self._scheduler_pass)

    def _claim_bound(self, pod: _Pod) -> bool:
        if pod.volume_claim is None:
            return True
        claim = self.claims.get((pod.namespace, pod.volume_claim))
        return claim is not None and claim.bound

    def _scheduler_pass(self) -> None:
        self._pass_queued = False
        candidates = [
            pod for pod in self.pods.values()
            if pod.phase == PENDING and pod.node is None and pod.assigned is None
            and not pod.deleting and pod.eligible_at <= self.now
            and self._claim_bound(pod)
        ]
        if not candidates:
            return
        candidates.sort(key=lambda p: (p.namespace, p.name))
        if self.config.scheduler_policy == "arbitrary":
            self._rng.shuffle(candidates)
        feasible_pool = [n for n in self.nodes.values()
                         if not (n.is_master and self.config.exclude_master)]
        feasible_pool.sort(key=lambda n: n.name)
        for pod in candidates:
            nodes = [n for n in feasible_pool
                     if n.used_cpu_milli + pod.request_cpu_milli <= n.allocatable_cpu_milli
                     and n.used_mem_mib + pod.request_mem_mib <= n.allocatable_mem_mib]
            if not nodes:
                continue  # unschedulable is not an error: stays Pending
            if self.config.scheduler_policy == "arbitrary":
                node = self._rng.choice(nodes)
            else:
                node = min(nodes, key=lambda n: (n.used_cpu_milli, n.used_mem_mib, n.name))
            self._reserve_ledger(pod, node)
            pod.assigned = node.name
            bind_at = max(self.now, self._next_bind_free)
            self._next_bind_free = bind_at + self.config.bind_interval
            self.call_at(bind_at, lambda p=pod: self._commit_bind(p))

    def _commit_bind(self, pod: _Pod) -> None:
        if pod.removed or pod.deleting or pod.assigned is None:
            return
        node = self.nodes[pod.assigned]
        pod.node = node.name
        pod.assigned = None
        node.bound_pods.add(pod.name)
        self._emit("Node", "Modified", node.view())
        prob = self.config.mount_failure_probability
        fails = (pod.volume_claim is not None and prob > 0.0
                 and self._rng.random() < prob)
        if fails:
            self.call_at(self.now + self.config.pod_create,
                         lambda: self._pod_failed(pod, "MountFailure"))
        else:
            self.call_at(self.now + self.config.pod_create,
                         lambda: self._pod_running(pod))

    def _pod_running(self, pod: _Pod) -> None:
        if pod.removed:
            return
        pod.phase = RUNNING
        pod.started_at = self.now
        self._emit("Pod", "Modified", pod.view())
        self.call_at(self.now + pod.run_duration, lambda: self._pod_succeeded(pod))

    def _pod_succeeded(self, pod: _Pod) -> None:
        if pod.removed or pod.phase != RUNNING:
            return
        pod.phase = SUCCEEDED
        pod.finished_at = self.now
        self._release_ledger(pod, self.nodes[pod.node])
        self._emit("Pod", "Modified", pod.view())
        self._request_pass()

    def _pod_failed(self, pod: _Pod, reason: str) -> None:
        if pod.removed:
            return
        pod.phase = FAILED
        pod.reason = reason
        pod.finished_at = self.now
        self._release_ledger(pod, self.nodes[pod.node])
        self._emit("Pod", "Modified", pod.view())
        self._request_pass()

    # --- read-outs ---

    def authoritative_views(self) -> dict:
        """Visible objects as {(kind, namespace, name): view}, for resync."""
        out: dict = {}
        for name, node in self.nodes.items():
            out[("Node", "", name)] = node.view()
        for name, ns in self.namespaces.items():
            if ns.created_at is not None and ns.deleted_at is None:
                out[("Namespace", "", name)] = ns.view()
        for (namespace, name), claim in self.claims.items():
            out[("Claim", namespace, name)] = claim.view()
        for (namespace, name), pod in self.pods.items():
            out[("Pod", namespace, name)] = pod.view()
        return out

    def used_on_workers(self) -> tuple[int, int]:
        """(cpu_milli, mem_mib) requested by bound, non-deleted pods on workers."""
        cpu = mem = 0
        for pod in self.pods.values():
            if pod.node is None:
                continue
            if self.config.exclude_master and self.nodes[pod.node].is_master:
                continue
            cpu += pod.request_cpu_milli
            mem += pod.request_mem_mib
        return cpu, mem

    def allocatable_on_workers(self) -> tuple[int, int]:
        cpu = mem = 0
        for node in self.nodes.values():
            if node.is_master and self.config.exclude_master:
                continue
            cpu += node.allocatable_cpu_milli
            mem += node.allocatable_mem_mib
        return cpu, mem

    def export_event_log_csv(self) -> str:
        """Event log as CSV text: time,kind,action,name,namespace,node,phase."""
        buf = io.StringIO()
        buf.write("time,kind,action,name,namespace,node,phase\n")
        for ev in self.event_log:
            obj = ev.obj
            namespace = getattr(obj, "namespace", "") or ""
            node = getattr(obj, "node", "") or ""
            phase = getattr(obj, "phase", "") or ""
            buf.write(f"{ev.at:.3f},{ev.kind},{ev.action},{obj.name},"
                      f"{namespace},{node},{phase}\n")
        return buf.getvalue()
