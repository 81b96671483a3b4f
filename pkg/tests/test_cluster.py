"""Simulated cluster: latencies, scheduler, phase machine, determinism."""

from __future__ import annotations

import random

import pytest

from podflow import errors
from podflow.cluster import Cluster, SimConfig

BIG = SimConfig(worker_count=1, worker_cpu_milli=48000, worker_mem_mib=91872)


def pod_events(log, name=None):
    out = [ev for ev in log if ev.kind == "Pod"]
    if name is not None:
        out = [ev for ev in out if ev.obj.name == name]
    return out


def test_config_defaults_are_pinned():
    cfg = SimConfig()
    assert cfg.worker_count == 6
    assert cfg.worker_cpu_milli == 8000
    assert cfg.worker_mem_mib == 15312
    assert cfg.exclude_master is True
    assert cfg.namespace_create == 0.3
    assert cfg.namespace_delete == 1.0
    assert cfg.claim_create_and_bind == 1.0
    assert cfg.pod_create == 1.5
    assert cfg.pod_schedule == 0.3
    assert cfg.pod_delete == 1.0
    assert cfg.api_call_overhead == 0.25
    assert cfg.mount_failure_probability == 0.0
    assert cfg.rng_seed == 0
    assert cfg.scheduler_policy == "arbitrary"


def test_config_validation():
    with pytest.raises(ValueError):
        SimConfig(pod_create=-1)
    with pytest.raises(ValueError):
        SimConfig(scheduler_policy="random")
    with pytest.raises(ValueError):
        SimConfig(mount_failure_probability=1.5)


def test_config_from_json_and_toml(tmp_path):
    j = tmp_path / "sim.json"
    j.write_text('{"cluster": {"worker_count": 2, "pod_create": 0.5}}')
    cfg = SimConfig.from_file(str(j))
    assert cfg.worker_count == 2
    assert cfg.pod_create == 0.5
    t = tmp_path / "sim.toml"
    t.write_text("[cluster]\nworker_count = 3\nscheduler_policy = 'spread'\n")
    cfg = SimConfig.from_file(str(t))
    assert cfg.worker_count == 3
    assert cfg.scheduler_policy == "spread"
    with pytest.raises(ValueError):
        SimConfig.from_dict({"worker_count": 2, "bogus": 1})


def test_allocatable_totals():
    sim = Cluster()
    cpu, mem = sim.allocatable_on_workers()
    assert cpu == 48000
    assert mem == 91872


def test_empty_cluster_empty_log():
    sim = Cluster()
    assert sim.run_until_quiescent() == []


def test_namespace_visible_after_latency():
    sim = Cluster(SimConfig(namespace_create=0.2))
    sim.create_namespace("wf-001")
    log = sim.run_until_quiescent()
    added = [ev for ev in log if ev.kind == "Namespace" and ev.action == "Added"]
    assert len(added) == 1
    assert added[0].at == pytest.approx(0.2)
    assert added[0].obj.created_at == pytest.approx(0.2)


def test_namespace_already_exists():
    sim = Cluster()
    sim.create_namespace("wf-001")
    with pytest.raises(errors.AlreadyExists):
        sim.create_namespace("wf-001")
    sim.run_until_quiescent()
    with pytest.raises(errors.AlreadyExists):
        sim.create_namespace("wf-001")


def test_delete_missing_namespace():
    sim = Cluster()
    with pytest.raises(errors.NotFound):
        sim.delete_namespace("nope")


def test_namespace_cascade_order():
    sim = Cluster(BIG)
    sim.create_namespace("wf-001")
    sim.run_until_quiescent()
    for i in range(3):
        sim.create_pod("wf-001", f"task-{i}", run_duration=5.0)
    sim.run_until_quiescent()
    sim.delete_namespace("wf-001")
    log = sim.run_until_quiescent()
    tail = [(ev.kind, ev.action) for ev in log
            if ev.action == "Deleted" and ev.kind in ("Pod", "Namespace")]
    assert tail == [("Pod", "Deleted")] * 3 + [("Namespace", "Deleted")]
    # cascade completeness: nothing of that namespace survives
    assert not sim.pods
    assert not sim.claims
    assert "wf-001" not in sim.namespaces


def test_claim_binds_after_latency():
    sim = Cluster()
    sim.create_namespace("wf-001")
    sim.run_until_quiescent()
    sim.call_at(5.0, lambda: sim.create_claim("wf-001", "shared"))
    log = sim.run_until_quiescent()
    claim_evs = [ev for ev in log if ev.kind == "Claim"]
    assert [ev.action for ev in claim_evs] == ["Added", "Modified"]
    assert claim_evs[0].at == pytest.approx(5.0)
    assert claim_evs[0].obj.bound is False
    assert claim_evs[1].at == pytest.approx(6.0)
    assert claim_evs[1].obj.bound is True


def test_claim_errors():
    sim = Cluster()
    with pytest.raises(errors.NamespaceNotFound):
        sim.create_claim("missing", "c")
    sim.create_namespace("wf-001")
    sim.run_until_quiescent()
    sim.create_claim("wf-001", "c")
    with pytest.raises(errors.AlreadyExists):
        sim.create_claim("wf-001", "c")


def test_pod_never_lands_on_master():
    sim = Cluster()
    sim.create_namespace("ns")
    sim.run_until_quiescent()
    for i in range(20):
        sim.create_pod("ns", f"p-{i:02d}", run_duration=1.0)
    sim.run_until_quiescent()
    running = [ev for ev in sim.event_log
               if ev.kind == "Pod" and ev.action == "Modified"
               and ev.obj.phase == "Running"]
    assert len(running) == 20
    assert all(ev.obj.node != "master" for ev in running)


def test_pod_phase_timing_chain():
    sim = Cluster()
    sim.create_namespace("ns")
    sim.run_until_quiescent()
    sim.call_at(1.0, lambda: sim.create_pod("ns", "p", run_duration=10.0))
    sim.run_until_quiescent()
    evs = pod_events(sim.event_log, "p")
    assert [ev.action for ev in evs] == ["Added", "Modified", "Modified"]
    added, running, succeeded = evs
    assert added.obj.phase == "Pending"
    assert running.obj.phase == "Running"
    assert succeeded.obj.phase == "Succeeded"
    # created 1.0, eligible+bound 1.3, running 2.8, succeeded 12.8
    assert running.at == pytest.approx(1.0 + 0.3 + 1.5)
    assert succeeded.at == pytest.approx(1.0 + 0.3 + 1.5 + 10.0)
    assert succeeded.obj.started_at == pytest.approx(2.8)


def test_capacity_forty_pods_of_1200m():
    # 48000 m in one pool: floor(48000/1200) = 40 run concurrently, #41 waits
    sim = Cluster(BIG)
    sim.create_namespace("ns")
    sim.run_until_quiescent()
    for i in range(41):
        sim.create_pod("ns", f"p-{i:02d}", run_duration=10.0)
    log = sim.run_until_quiescent()
    running_now = 0
    peak = 0
    first_finish = None
    last_start = None
    for ev in log:
        if ev.kind != "Pod" or ev.action != "Modified":
            continue
        if ev.obj.phase == "Running":
            running_now += 1
            peak = max(peak, running_now)
            last_start = ev
        elif ev.obj.phase == "Succeeded":
            running_now -= 1
            if first_finish is None:
                first_finish = ev
    assert peak == 40
    # the 41st pod only started after capacity freed up
    assert last_start.at >= first_finish.at


def test_mount_failure_forced():
    sim = Cluster(SimConfig(mount_failure_probability=1.0))
    sim.create_namespace("ns")
    sim.run_until_quiescent()
    sim.create_claim("ns", "vol")
    sim.run_until_quiescent()
    sim.create_pod("ns", "p", volume_claim="vol")
    sim.run_until_quiescent()
    final = pod_events(sim.event_log, "p")[-1]
    assert final.obj.phase == "Failed"
    assert final.obj.reason == "MountFailure"


def test_mount_failure_needs_a_claim():
    sim = Cluster(SimConfig(mount_failure_probability=1.0))
    sim.create_namespace("ns")
    sim.run_until_quiescent()
    sim.create_pod("ns", "bare", run_duration=1.0)
    sim.run_until_quiescent()
    assert pod_events(sim.event_log, "bare")[-1].obj.phase == "Succeeded"


def test_delete_pod_latency_and_reuse():
    sim = Cluster(SimConfig(pod_delete=0.5))
    sim.create_namespace("ns")
    sim.run_until_quiescent()
    sim.create_pod("ns", "p", run_duration=1.0)
    sim.run_until_quiescent()
    sim.call_at(20.0, lambda: sim.delete_pod("ns", "p"))
    sim.run_until_quiescent()
    deleted = [ev for ev in pod_events(sim.event_log, "p") if ev.action == "Deleted"]
    assert len(deleted) == 1
    assert deleted[0].at == pytest.approx(20.5)
    assert deleted[0].obj.deleted_at == pytest.approx(20.5)
    # same name is free again after the Deleted event
    sim.create_pod("ns", "p", run_duration=1.0)
    sim.run_until_quiescent()


def test_delete_missing_pod():
    sim = Cluster()
    sim.create_namespace("ns")
    sim.run_until_quiescent()
    with pytest.raises(errors.NotFound):
        sim.delete_pod("ns", "ghost")


def test_duplicate_pod_name():
    sim = Cluster()
    sim.create_namespace("ns")
    sim.run_until_quiescent()
    sim.create_pod("ns", "p", run_duration=99.0)
    with pytest.raises(errors.DuplicatePodName):
        sim.create_pod("ns", "p")


def test_pod_needs_existing_claim():
    sim = Cluster()
    sim.create_namespace("ns")
    sim.run_until_quiescent()
    with pytest.raises(errors.ClaimNotFound):
        sim.create_pod("ns", "p", volume_claim="ghost")


def test_delete_frees_exactly_the_request():
    sim = Cluster()
    sim.create_namespace("ns")
    sim.run_until_quiescent()
    sim.create_pod("ns", "p", request_cpu_milli=1200, run_duration=500.0)
    sim.run_until(10.0)
    node = next(n for n in sim.nodes.values() if n.bound_pods)
    before = node.used_cpu_milli
    sim.delete_pod("ns", "p")
    sim.run_until_quiescent()
    assert before - node.used_cpu_milli == 1200


def test_deadline_exceeded():
    sim = Cluster()
    sim.create_namespace("ns")
    sim.run_until_quiescent()
    sim.create_pod("ns", "p", run_duration=100.0)
    with pytest.raises(errors.DeadlineExceeded):
        sim.run_until_quiescent(deadline=5.0)


def test_determinism_same_seed_same_log():
    def run(seed):
        sim = Cluster(SimConfig(rng_seed=seed))
        sim.create_namespace("ns")
        sim.run_until_quiescent()
        for i in range(10):
            sim.create_pod("ns", f"p-{i}", run_duration=3.0)
        sim.run_until_quiescent()
        return sim.export_event_log_csv()

    assert run(7) == run(7)


def test_arbitrary_policy_start_order_varies_with_seed():
    def start_order(seed):
        sim = Cluster(SimConfig(rng_seed=seed))
        sim.create_namespace("ns")
        sim.run_until_quiescent()
        for i in range(6):
            sim.create_pod("ns", f"p-{i}", run_duration=3.0)
        sim.run_until_quiescent()
        return [ev.obj.name for ev in sim.event_log
                if ev.kind == "Pod" and ev.action == "Modified"
                and ev.obj.phase == "Running"]

    orders = {tuple(start_order(seed)) for seed in range(8)}
    assert len(orders) > 1


def test_spread_policy_is_deterministic_and_balanced():
    sim = Cluster(SimConfig(scheduler_policy="spread"))
    sim.create_namespace("ns")
    sim.run_until_quiescent()
    for i in range(12):
        sim.create_pod("ns", f"p-{i:02d}", run_duration=50.0)
    sim.run_until(20.0)
    counts = sorted(len(n.bound_pods) for n in sim.nodes.values() if not n.is_master)
    assert counts == [2] * 6


def test_event_log_csv_shape():
    sim = Cluster()
    sim.create_namespace("ns")
    sim.run_until_quiescent()
    sim.create_pod("ns", "p", run_duration=1.0)
    sim.run_until_quiescent()
    text = sim.export_event_log_csv()
    lines = text.strip().split("\n")
    assert lines[0] == "time,kind,action,name,namespace,node,phase"
    assert len(lines) == 1 + len(sim.event_log)
    assert any(",Pod,Modified,p,ns," in ln and ln.endswith("Running") for ln in lines)


LEGAL_NEXT = {
    None: {"Pending"},
    "Pending": {"Running", "Failed", "Pending"},  # mount failure skips Running
    "Running": {"Succeeded", "Failed", "Running"},
    "Succeeded": {"Succeeded"},
    "Failed": {"Failed"},
}


def check_phase_machine(log):
    """Phases per pod move only forward; timestamps never decrease."""
    last: dict = {}
    for ev in log:
        if ev.kind != "Pod":
            continue
        key = (ev.obj.namespace, ev.obj.name, ev.obj.created_at)
        if ev.action == "Added":
            assert ev.obj.phase == "Pending"
            last[key] = "Pending"
        elif ev.action == "Modified":
            assert ev.obj.phase in LEGAL_NEXT[last.get(key)]
            last[key] = ev.obj.phase
        ts = [ev.obj.created_at, ev.obj.started_at, ev.obj.finished_at,
              ev.obj.deleted_at]
        present = [t for t in ts if t is not None]
        assert present == sorted(present)


def test_random_scripts_hold_invariants():
    # fuzz the command surface; the internal ledger asserts stay silent and
    # the event log always shows a legal phase machine
    for seed in range(10):
        rng = random.Random(seed)
        sim = Cluster(SimConfig(rng_seed=seed, worker_count=2,
                                mount_failure_probability=0.2))
        names = [f"ns-{i}" for i in range(3)]
        t = 0.0
        for step in range(60):
            t += rng.random() * 2
            ns = rng.choice(names)
            op = rng.random()

            def cmd(ns=ns, op=op, step=step):
                try:
                    if op < 0.25:
                        sim.create_namespace(ns)
                    elif op < 0.35:
                        sim.create_claim(ns, "vol")
                    elif op < 0.7:
                        sim.create_pod(ns, f"p-{step}", run_duration=1 + op,
                                       volume_claim="vol" if op < 0.5 else None)
                    elif op < 0.85:
                        sim.delete_pod(ns, f"p-{rng.randrange(step + 1)}")
                    else:
                        sim.delete_namespace(ns)
                except errors.ClusterError:
                    pass

            sim.call_at(t, cmd)
        log = sim.run_until_quiescent()
        check_phase_machine(log)
        # cascade completeness: no pod/claim of a gone namespace survives
        for namespace, _ in list(sim.pods) + list(sim.claims):
            assert namespace in sim.namespaces
