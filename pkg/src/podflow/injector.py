"""Workflow injection: plans, the NDJSON wire protocol, and two transports.

The injector owns an ordered plan of workflow documents and feeds them to the
engine across a message boundary: one initial SubmitWorkflow, then one
SubmitWorkflow (or Done) per NextWorkflowRequest, each submission answered by
exactly one Ack. Frames are UTF-8 JSON objects, LF-terminated, no embedded
newlines.

Two interchangeable transports. In-process: a MemoryChannel calls the
Injector state machine directly. Socket: the engine listens on localhost TCP
(EngineListener) while send_initial/serve_next run the injector side from a
separate thread; the engine blocks synchronously on socket reads inside the
virtual-time loop, so both transports produce identical traces for the same
plan and seed.
"""

from __future__ import annotations

import json
import os
import socket
import threading

from .errors import (
    ConnectionRefused,
    EmptyInput,
    MissingFile,
    NackFromEngine,
    ProtocolViolation,
)
from .workflow import WorkflowSpec, builtin_workflow, parse_workflow, serialize_workflow

SUBMIT = "SubmitWorkflow"
NEXT = "NextWorkflowRequest"
ACK = "Ack"
DONE = "Done"
_TYPES = (SUBMIT, NEXT, ACK, DONE)

ENDPOINT_ENV = "PODFLOW_INJECTOR_ENDPOINT"


def encode_message(mtype: str, payload: dict | None = None) -> bytes:
    if mtype not in _TYPES:
        raise ProtocolViolation(f"unknown message type {mtype!r}")
    frame = json.dumps({"type": mtype, "payload": payload or {}},
                       separators=(",", ":"))
    return frame.encode("utf-8") + b"\n"


def decode_message(line: bytes) -> tuple[str, dict]:
    try:
        doc = json.loads(line.decode("utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ProtocolViolation(f"bad frame: {exc}") from None
    if not isinstance(doc, dict) or doc.get("type") not in _TYPES:
        raise ProtocolViolation(f"bad frame: {line!r}")
    payload = doc.get("payload") or {}
    if not isinstance(payload, dict):
        raise ProtocolViolation("payload must be an object")
    return doc["type"], payload


def resolve_endpoint(value: str | None = None) -> tuple[str, int]:
    """host:port from an explicit value, else the environment."""
    value = value or os.environ.get(ENDPOINT_ENV)
    if not value:
        raise ConnectionRefused(
            f"no injector endpoint configured (set {ENDPOINT_ENV})")
    host, _, port = value.rpartition(":")
    if not host or not port.isdigit():
        raise ConnectionRefused(f"bad endpoint {value!r}, want host:port")
    return host, int(port)


class InjectionPlan:
    """Ordered workflow list replayed repeat_count times, with a cursor."""

    def __init__(self, workflows: list[tuple[str, dict]], repeat_count: int = 1):
        if repeat_count < 1:
            raise EmptyInput(f"repeat_count must be >= 1, got {repeat_count}")
        if not workflows:
            raise EmptyInput("plan needs at least one workflow")
        self.workflows = list(workflows)
        self.repeat_count = repeat_count
        self.cursor = 0

    @property
    def total(self) -> int:
        return len(self.workflows) * self.repeat_count

    def take(self) -> tuple[str, dict] | None:
        if self.cursor >= self.total:
            return None
        name, doc = self.workflows[self.cursor % len(self.workflows)]
        self.cursor += 1
        return name, doc


def load_plan(path: str, repeat_count: int = 1) -> InjectionPlan:
    """Plan from a workflow JSON file; parse errors propagate."""
    if not os.path.exists(path):
        raise MissingFile(path)
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    name = os.path.splitext(os.path.basename(path))[0]
    parse_workflow(text, name=name)  # validation only; the wire carries the doc
    return InjectionPlan([(name, json.loads(text))], repeat_count)


def plan_from_spec(spec: WorkflowSpec, repeat_count: int = 1) -> InjectionPlan:
    return InjectionPlan([(spec.name, json.loads(serialize_workflow(spec)))],
                         repeat_count)


def plan_from_name(workflow: str, repeat_count: int = 1,
                   size: int | None = None) -> InjectionPlan:
    """Plan from a builtin name or a .json file path."""
    if os.path.exists(workflow) or workflow.endswith(".json"):
        return load_plan(workflow, repeat_count)
    return plan_from_spec(builtin_workflow(workflow, size), repeat_count)


class Injector:
    """Plan-serving state machine, transport-agnostic.

    send_initial produces the first SubmitWorkflow; every engine message goes
    through handle(), which returns the reply (or None for an Ack). A
    NextWorkflowRequest is also honored from the initial state, so a consumer
    may drive the whole plan by requests alone.
    """

    def __init__(self, plan: InjectionPlan):
        self.plan = plan
        self._state = "init"

    def send_initial(self) -> tuple[str, dict]:
        if self.plan.cursor != 0 or self._state != "init":
            raise ProtocolViolation("duplicate send_initial")
        name, doc = self.plan.take()
        self._state = "awaiting_ack"
        return SUBMIT, {"name": name, "workflow": doc}

    def handle(self, mtype: str, payload: dict) -> tuple[str, dict] | None:
        if mtype == ACK:
            if self._state != "awaiting_ack":
                raise ProtocolViolation("Ack arrived while none was pending")
            if not payload.get("ok", True):
                self._state = "failed"
                raise NackFromEngine(str(payload.get("error", "")))
            self._state = "idle"
            return None
        if mtype == NEXT:
            if self._state not in ("init", "idle"):
                raise ProtocolViolation(f"unexpected {mtype} in state {self._state}")
            nxt = self.plan.take()
            if nxt is None:
                self._state = "done"
                return DONE, {}
            self._state = "awaiting_ack"
            name, doc = nxt
            return SUBMIT, {"name": name, "workflow": doc}
        raise ProtocolViolation(f"unexpected message type {mtype!r}")


class MemoryChannel:
    """Engine-side endpoint wired straight to an Injector instance."""

    def __init__(self, injector: Injector):
        self._injector = injector
        self.transcript: list[str] = []
        self._inbox: dict | None = None

    def open(self) -> None:
        _, payload = self._injector.send_initial()
        self._inbox = payload

    def recv_submit(self) -> dict:
        if self._inbox is None:
            raise ProtocolViolation("no workflow was submitted")
        payload, self._inbox = self._inbox, None
        self.transcript.append(SUBMIT)
        return payload

    def send_ack(self, ok: bool = True, error: str | None = None) -> None:
        self.transcript.append(ACK)
        payload = {"ok": ok}
        if error:
            payload["error"] = error
        self._injector.handle(ACK, payload)

    def request_next(self) -> dict | None:
        self.transcript.append(NEXT)
        mtype, payload = self._injector.handle(NEXT, {})
        self.transcript.append(mtype)
        if mtype == DONE:
            return None
        return payload

    def close(self) -> None:
        pass


# --- socket transport, engine side ---


class EngineListener:
    """Bound TCP listener the engine accepts its injector connection on."""

    def __init__(self, host: str = "127.0.0.1", port: int = 0):
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._sock.bind((host, port))
        self._sock.listen(1)

    @property
    def address(self) -> tuple[str, int]:
        return self._sock.getsockname()

    @property
    def endpoint(self) -> str:
        host, port = self.address
        return f"{host}:{port}"

    def accept(self, timeout: float = 10.0) -> "SocketChannel":
        self._sock.settimeout(timeout)
        conn, _ = self._sock.accept()
        return SocketChannel(conn)

    def close(self) -> None:
        self._sock.close()


class SocketChannel:
    """Engine-side endpoint speaking NDJSON over an accepted connection."""

    def __init__(self, conn: socket.socket):
        self.transcript: list[str] = []
        self._sock = conn
        self._reader = conn.makefile("rb")

    def _read(self) -> tuple[str, dict]:
        line = self._reader.readline()
        if not line:
            raise ProtocolViolation("peer closed the stream mid-protocol")
        return decode_message(line)

    def recv_submit(self) -> dict:
        mtype, payload = self._read()
        if mtype != SUBMIT:
            raise ProtocolViolation(f"expected {SUBMIT}, got {mtype}")
        self.transcript.append(SUBMIT)
        return payload

    def send_ack(self, ok: bool = True, error: str | None = None) -> None:
        payload = {"ok": ok}
        if error:
            payload["error"] = error
        self._sock.sendall(encode_message(ACK, payload))
        self.transcript.append(ACK)

    def request_next(self) -> dict | None:
        self._sock.sendall(encode_message(NEXT, {}))
        self.transcript.append(NEXT)
        mtype, payload = self._read()
        self.transcript.append(mtype)
        if mtype == DONE:
            return None
        if mtype != SUBMIT:
            raise ProtocolViolation(f"expected {SUBMIT} or {DONE}, got {mtype}")
        return payload

    def close(self) -> None:
        try:
            self._sock.close()
        except OSError:
            pass


# --- socket transport, injector side ---


class InjectorSession:
    """A connected injector: the state machine plus its socket."""

    def __init__(self, injector: Injector, sock: socket.socket):
        self.injector = injector
        self._sock = sock
        self._reader = sock.makefile("rb")

    def read(self) -> tuple[str, dict] | None:
        line = self._reader.readline()
        if not line:
            return None
        return decode_message(line)

    def write(self, mtype: str, payload: dict) -> None:
        self._sock.sendall(encode_message(mtype, payload))

    def close(self) -> None:
        try:
            self._sock.close()
        except OSError:
            pass


def send_initial(plan: InjectionPlan, endpoint: str | tuple[str, int]) -> InjectorSession:
    """Connect to the engine and push the first workflow.

    The cursor is advanced only after the connection stands, so a refused
    connection leaves the plan untouched. The returned session has the
    initial SubmitWorkflow on the wire but has not yet read the Ack; the
    serve_next loop consumes it.
    """
    if plan.cursor != 0:
        raise ProtocolViolation("duplicate send_initial (cursor is not 0)")
    if isinstance(endpoint, str):
        endpoint = resolve_endpoint(endpoint)
    try:
        sock = socket.create_connection(endpoint, timeout=10.0)
    except OSError as exc:
        raise ConnectionRefused(f"{endpoint[0]}:{endpoint[1]}: {exc}") from None
    injector = Injector(plan)
    mtype, payload = injector.send_initial()
    session = InjectorSession(injector, sock)
    session.write(mtype, payload)
    return session


def serve_next(session: InjectorSession) -> None:
    """Answer engine messages until Done is sent or the peer hangs up.

    Raises ProtocolViolation on unexpected message types and NackFromEngine
    when an Ack carries ok=false.
    """
    try:
        while True:
            msg = session.read()
            if msg is None:
                return
            reply = session.injector.handle(*msg)
            if reply is not None:
                session.write(*reply)
                if reply[0] == DONE:
                    return
    finally:
        session.close()


def run_injector(plan: InjectionPlan, endpoint: str | tuple[str, int]) -> None:
    """send_initial + serve_next, the whole injector side of one session."""
    serve_next(send_initial(plan, endpoint))


def start_injector_thread(plan: InjectionPlan,
                          endpoint: str | tuple[str, int]) -> threading.Thread:
    """Run the injector side in a daemon thread (socket-transport wiring)."""
    thread = threading.Thread(target=run_injector, args=(plan, endpoint),
                              name="injector", daemon=True)
    thread.start()
    return thread
