"""Workflow model: JSON task documents, DAG validation, and order queries.

A workflow document is a JSON object keyed by task id. Each task carries
``input``/``output`` edge lists, an ``image`` reference, ``cpuNum``/``memNum``
resource requests (single-element string arrays, millicores / MiB), and an
``args`` list. Everything in here is a pure function over immutable specs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources as importlib_resources

from .errors import (
    AsymmetricEdge,
    CycleDetected,
    DanglingReference,
    MalformedJson,
    MissingField,
    NonNumericResource,
    SizeTooSmall,
    UnknownTaskId,
    UnknownWorkflowName,
)

REQUIRED_TASK_KEYS = ("input", "output", "image", "cpuNum", "memNum", "args")

DEFAULT_IMAGE = "task-emulator:latest"
DEFAULT_CPU_MILLI = 1200
DEFAULT_MEM_MIB = 1200
DEFAULT_ARGS = ("-c", "1", "-m", "100", "-t", "5")

CORPUS_NAMES = ("montage", "epigenomics", "cybershake", "ligo")
GENERATOR_NAMES = ("intree", "outtree", "forkjoin", "pipeline")


@dataclass(frozen=True)
class TaskSpec:
    """One task node: identity, edges, and container request."""

    id: str
    inputs: tuple[str, ...]
    outputs: tuple[str, ...]
    image: str
    cpu_milli: int
    mem_mib: int
    args: tuple[str, ...]


@dataclass(frozen=True)
class WorkflowSpec:
    name: str
    tasks: dict[str, TaskSpec]
    entry_ids: tuple[str, ...]
    exit_ids: tuple[str, ...]

    def task_ids(self) -> list[str]:
        return sorted(self.tasks)

    def edges(self) -> list[tuple[str, str]]:
        """All (parent, child) pairs, lexicographically ordered."""
        out = []
        for tid in sorted(self.tasks):
            for child in sorted(self.tasks[tid].outputs):
                out.append((tid, child))
        return out


def _resource_value(task_id: str, key: str, raw: object) -> int:
    # Listing-style single-element string arrays and plain integers both pass.
    if isinstance(raw, list):
        if len(raw) != 1:
            raise NonNumericResource(
                f"task {task_id!r}: {key} must hold exactly one value, got {raw!r}"
            )
        raw = raw[0]
    if isinstance(raw, bool):
        raise NonNumericResource(f"task {task_id!r}: {key}={raw!r} is not an integer")
    try:
        value = int(raw)
    except (TypeError, ValueError):
        raise NonNumericResource(
            f"task {task_id!r}: {key}={raw!r} is not an integer"
        ) from None
    if value <= 0:
        raise NonNumericResource(f"task {task_id!r}: {key}={value} must be positive")
    return value


def _edge_list(task_id: str, key: str, raw: object) -> tuple[str, ...]:
    if not isinstance(raw, list) or not all(isinstance(x, str) for x in raw):
        raise MalformedJson(f"task {task_id!r}: {key} must be a list of task ids")
    seen: list[str] = []
    for ref in raw:
        if ref not in seen:
            seen.append(ref)
    return tuple(seen)


def _find_cycle(tasks: dict[str, TaskSpec]) -> list[str]:
    """Return one directed cycle as a task-id path (for the error message)."""
    state: dict[str, int] = {}  # 0 visiting, 1 done
    stack: list[str] = []

    def visit(tid: str) -> list[str] | None:
        state[tid] = 0
        stack.append(tid)
        for child in tasks[tid].outputs:
            if state.get(child) == 0:
                return stack[stack.index(child):] + [child]
            if child not in state:
                found = visit(child)
                if found:
                    return found
        stack.pop()
        state[tid] = 1
        return None

    for tid in sorted(tasks):
        if tid not in state:
            found = visit(tid)
            if found:
                return found
    return []


def parse_workflow(text: str | dict, name: str = "workflow") -> WorkflowSpec:
    """Parse and fully validate a workflow document (JSON text or dict)."""
    if isinstance(text, (str, bytes)):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise MalformedJson(f"not valid JSON: {exc}") from None
    else:
        doc = text
    if not isinstance(doc, dict) or not doc:
        raise MalformedJson("workflow document must be a non-empty JSON object")

    tasks: dict[str, TaskSpec] = {}
    for tid, entry in doc.items():
        if not isinstance(tid, str) or not tid:
            raise MalformedJson(f"task id {tid!r} must be a non-empty string")
        if not isinstance(entry, dict):
            raise MalformedJson(f"task {tid!r} must map to an object")
        for key in REQUIRED_TASK_KEYS:
            if key not in entry:
                raise MissingField(f"task {tid!r} is missing {key!r}")
        image = entry["image"]
        if isinstance(image, list):
            if len(image) != 1 or not isinstance(image[0], str):
                raise MalformedJson(f"task {tid!r}: image must hold one string")
            image = image[0]
        if not isinstance(image, str) or not image:
            raise MalformedJson(f"task {tid!r}: image must be a non-empty string")
        args = entry["args"]
        if not isinstance(args, list):
            raise MalformedJson(f"task {tid!r}: args must be a list")
        tasks[tid] = TaskSpec(
            id=tid,
            inputs=_edge_list(tid, "input", entry["input"]),
            outputs=_edge_list(tid, "output", entry["output"]),
            image=image,
            cpu_milli=_resource_value(tid, "cpuNum", entry["cpuNum"]),
            mem_mib=_resource_value(tid, "memNum", entry["memNum"]),
            args=tuple(str(a) for a in args),
        )

    for tid in sorted(tasks):
        for ref in sorted(set(tasks[tid].inputs) | set(tasks[tid].outputs)):
            if ref not in tasks:
                raise DanglingReference(f"task {tid!r} references unknown task {ref!r}")

    # Edge symmetry: b in outputs(a) iff a in inputs(b), checked both ways.
    for a in sorted(tasks):
        for b in sorted(tasks[a].outputs):
            if a not in tasks[b].inputs:
                raise AsymmetricEdge(
                    f"{a!r} lists {b!r} as output but {b!r} does not list {a!r} as input"
                )
        for b in sorted(tasks[a].inputs):
            if a not in tasks[b].outputs:
                raise AsymmetricEdge(
                    f"{a!r} lists {b!r} as input but {b!r} does not list {a!r} as output"
                )

    cycle = _find_cycle(tasks)
    if cycle:
        raise CycleDetected(" -> ".join(cycle))

    entry_ids = tuple(tid for tid in sorted(tasks) if not tasks[tid].inputs)
    exit_ids = tuple(tid for tid in sorted(tasks) if not tasks[tid].outputs)
    return WorkflowSpec(name=name, tasks=tasks, entry_ids=entry_ids, exit_ids=exit_ids)


def serialize_workflow(spec: WorkflowSpec) -> str:
    """Render a spec back to the document format (round-trips through parse)."""
    doc = {}
    for tid in sorted(spec.tasks):
        task = spec.tasks[tid]
        doc[tid] = {
            "input": list(task.inputs),
            "output": list(task.outputs),
            "image": [task.image],
            "cpuNum": [str(task.cpu_milli)],
            "memNum": [str(task.mem_mib)],
            "args": list(task.args),
        }
    return json.dumps(doc, indent=2)


def ready_tasks(
    spec: WorkflowSpec, succeeded: set[str], in_flight: set[str]
) -> list[str]:
    """Tasks whose inputs all succeeded, minus done/in-flight ones, sorted."""
    for tid in set(succeeded) | set(in_flight):
        if tid not in spec.tasks:
            raise UnknownTaskId(f"{tid!r} is not a task of workflow {spec.name!r}")
    if succeeded & in_flight:
        raise ValueError("succeeded and in_flight overlap")
    out = []
    for tid in sorted(spec.tasks):
        if tid in succeeded or tid in in_flight:
            continue
        if all(dep in succeeded for dep in spec.tasks[tid].inputs):
            out.append(tid)
    return out


def level_partition(spec: WorkflowSpec) -> list[list[str]]:
    """Group tasks by longest path from an entry task (level 0 = entries)."""
    level: dict[str, int] = {}
    remaining = {tid: len(spec.tasks[tid].inputs) for tid in spec.tasks}
    frontier = [tid for tid in sorted(spec.tasks) if remaining[tid] == 0]
    for tid in frontier:
        level[tid] = 0
    while frontier:
        nxt: list[str] = []
        for tid in frontier:
            for child in spec.tasks[tid].outputs:
                level[child] = max(level.get(child, 0), level[tid] + 1)
                remaining[child] -= 1
                if remaining[child] == 0:
                    nxt.append(child)
        frontier = sorted(nxt)
    depth = max(level.values()) + 1 if level else 0
    out: list[list[str]] = [[] for _ in range(depth)]
    for tid in sorted(level):
        out[level[tid]].append(tid)
    return out


def _uniform_doc(edges: dict[str, tuple[list[str], list[str]]]) -> dict:
    doc = {}
    for tid, (inputs, outputs) in edges.items():
        doc[tid] = {
            "input": inputs,
            "output": outputs,
            "image": [DEFAULT_IMAGE],
            "cpuNum": [str(DEFAULT_CPU_MILLI)],
            "memNum": [str(DEFAULT_MEM_MIB)],
            "args": list(DEFAULT_ARGS),
        }
    return doc


def _chain_edges(ids: list[str]) -> dict[str, tuple[list[str], list[str]]]:
    edges = {}
    for i, tid in enumerate(ids):
        inputs = [ids[i - 1]] if i > 0 else []
        outputs = [ids[i + 1]] if i < len(ids) - 1 else []
        edges[tid] = (inputs, outputs)
    return edges


def _generated(name: str, size: int) -> WorkflowSpec:
    if size < 3:
        raise SizeTooSmall(f"{name} needs size >= 3, got {size}")
    ids = [str(i) for i in range(size)]
    edges: dict[str, tuple[list[str], list[str]]]
    if name == "pipeline":
        edges = _chain_edges(ids)
    elif name == "forkjoin":
        # entry + (size-2) parallel branches + join
        branches = ids[1:-1]
        edges = {ids[0]: ([], branches), ids[-1]: (branches, [])}
        for b in branches:
            edges[b] = ([ids[0]], [ids[-1]])
    elif name == "outtree":
        # binary out-tree over the first size-1 ids, virtual exit collects leaves
        tree = ids[:-1]
        exit_id = ids[-1]
        edges = {}
        for i, tid in enumerate(tree):
            kids = [tree[j] for j in (2 * i + 1, 2 * i + 2) if j < len(tree)]
            parent = [tree[(i - 1) // 2]] if i > 0 else []
            edges[tid] = (parent, kids if kids else [exit_id])
        leaves = [t for t, (_, outs) in edges.items() if outs == [exit_id]]
        edges[exit_id] = (leaves, [])
    elif name == "intree":
        # mirror image: virtual entry feeds the leaves of a binary in-tree
        tree = ids[1:]
        entry_id = ids[0]
        edges = {}
        for i, tid in enumerate(tree):
            kids = [tree[j] for j in (2 * i + 1, 2 * i + 2) if j < len(tree)]
            target = [tree[(i - 1) // 2]] if i > 0 else []
            edges[tid] = (kids if kids else [entry_id], target)
        leaves = [t for t, (ins, _) in edges.items() if ins == [entry_id]]
        edges[entry_id] = ([], leaves)
    else:
        raise UnknownWorkflowName(name)
    return parse_workflow(_uniform_doc(edges), name=f"{name}-{size}")


def builtin_workflow(name: str, size: int | None = None) -> WorkflowSpec:
    """Shipped corpus DAG by name, or a generated shape of the given size."""
    if name in CORPUS_NAMES:
        ref = importlib_resources.files(__package__) / "corpus" / f"{name}.json"
        return parse_workflow(ref.read_text(encoding="utf-8"), name=name)
    if name in GENERATOR_NAMES:
        if size is None:
            raise SizeTooSmall(f"{name} needs an explicit size >= 3")
        return _generated(name, size)
    raise UnknownWorkflowName(name)
