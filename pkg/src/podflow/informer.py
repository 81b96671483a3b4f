"""List-Watch style cache over the simulated cluster.

The informer keeps per-kind stores of object snapshots, updated by the
cluster's event stream, and is the engine's only read path. Callbacks fire
inline after the store already reflects the event (store-then-notify), on the
same simulation step; an optional propagation delay defers application by a
fixed virtual interval for robustness experiments.
"""

from __future__ import annotations

from .cluster import Cluster, ResourceEvent
from .errors import NotSynced

KINDS = ("Pod", "Node", "Namespace", "Claim")


class Subscription:
    __slots__ = ("kind", "callback", "active")

    def __init__(self, kind: str, callback):
        self.kind = kind
        self.callback = callback
        self.active = True


class InformerCache:
    """Local snapshot store plus a tiny registry of event callbacks."""

    def __init__(self, cluster: Cluster, propagation_delay: float = 0.0):
        self._cluster = cluster
        self._delay = propagation_delay
        self._stores: dict[str, dict] = {kind: {} for kind in KINDS}
        self._subs: list[Subscription] = []
        self._synced = False
        self.last_sync = 0.0
        cluster.add_event_sink(self._on_cluster_event)

    def start(self) -> None:
        """Perform the initial list; listers work from here on."""
        self._replace_from_authority()
        self._synced = True
        self.last_sync = self._cluster.now

    @property
    def synced(self) -> bool:
        return self._synced

    # --- watch path ---

    def _on_cluster_event(self, event: ResourceEvent) -> None:
        if self._delay > 0:
            self._cluster.call_at(self._cluster.now + self._delay,
                                  lambda: self._apply(event))
        else:
            self._apply(event)

    def _apply(self, event: ResourceEvent) -> None:
        store = self._stores[event.kind]
        key = (getattr(event.obj, "namespace", ""), event.obj.name)
        if event.action == "Deleted":
            store.pop(key, None)
        else:
            store[key] = event.obj
        for sub in list(self._subs):
            if sub.active and sub.kind == event.kind:
                sub.callback(event)

    # --- listers ---

    def _store(self, kind: str) -> dict:
        if not self._synced:
            raise NotSynced(f"initial list has not completed (kind={kind})")
        return self._stores[kind]

    def list_pods(self, namespace: str | None = None) -> list:
        store = self._store("Pod")
        views = [v for (ns, _), v in store.items()
                 if namespace is None or ns == namespace]
        return sorted(views, key=lambda v: (v.namespace, v.name))

    def list_nodes(self) -> list:
        return sorted(self._store("Node").values(), key=lambda v: v.name)

    def list_namespaces(self) -> list:
        return sorted(self._store("Namespace").values(), key=lambda v: v.name)

    def list_claims(self, namespace: str | None = None) -> list:
        store = self._store("Claim")
        views = [v for (ns, _), v in store.items()
                 if namespace is None or ns == namespace]
        return sorted(views, key=lambda v: (v.namespace, v.name))

    def get_pod(self, namespace: str, name: str):
        return self._store("Pod").get((namespace, name))

    def get_claim(self, namespace: str, name: str):
        return self._store("Claim").get((namespace, name))

    def get_namespace(self, name: str):
        return self._store("Namespace").get(("", name))

    # --- subscriptions ---

    def subscribe(self, kind: str, callback) -> Subscription:
        if kind not in KINDS:
            raise ValueError(f"unknown kind {kind!r}")
        sub = Subscription(kind, callback)
        self._subs.append(sub)
        return sub

    def unsubscribe(self, sub: Subscription) -> None:
        sub.active = False
        if sub in self._subs:
            self._subs.remove(sub)

    # --- resync ---

    def _authority_by_kind(self) -> dict[str, dict]:
        fresh: dict[str, dict] = {kind: {} for kind in KINDS}
        for (kind, namespace, name), view in self._cluster.authoritative_views().items():
            fresh[kind][(namespace, name)] = view
        return fresh

    def _replace_from_authority(self) -> None:
        self._stores = self._authority_by_kind()

    def resync(self) -> int:
        """Replace the store with a fresh authoritative list.

        Returns how many entries differed (missing, stale, or phantom).
        """
        fresh = self._authority_by_kind()
        corrections = 0
        for kind in KINDS:
            old, new = self._stores[kind], fresh[kind]
            for key in set(old) | set(new):
                if old.get(key) != new.get(key):
                    corrections += 1
        self._stores = fresh
        self.last_sync = self._cluster.now
        return corrections

    # test hook: deliberately corrupt one entry to observe resync repairing it
    def corrupt_entry(self, kind: str, namespace: str, name: str, view) -> None:
        self._stores[kind][(namespace, name)] = view
