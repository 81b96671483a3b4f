"""Exception taxonomy shared by the simulator, engines, and injector.

Everything raised on purpose derives from PodflowError so callers can catch
one base. Unschedulable pods are *not* an error anywhere: a pod that fits no
node simply stays Pending.
"""

from __future__ import annotations


class PodflowError(Exception):
    """Base class for every error this package raises deliberately."""


# --- workflow document validation -----------------------------------------

class ValidationFailed(PodflowError):
    """A workflow document or generator request is invalid."""


class MalformedJson(ValidationFailed):
    """Input is not valid JSON or not an object keyed by task id."""


class MissingField(ValidationFailed):
    """A task entry lacks a required key."""


class NonNumericResource(ValidationFailed):
    """cpuNum/memNum could not be read as a positive integer."""


class DanglingReference(ValidationFailed):
    """An input/output names a task id that does not exist."""


class AsymmetricEdge(ValidationFailed):
    """a lists b as output but b does not list a as input (or vice versa)."""


class CycleDetected(ValidationFailed):
    """The task graph is not acyclic."""


class UnknownTaskId(ValidationFailed):
    """A task id passed to a query does not belong to the workflow."""


class UnknownWorkflowName(ValidationFailed):
    """builtin_workflow() got a name it does not ship."""


class SizeTooSmall(ValidationFailed):
    """A generated workflow shape needs size >= 3."""


# --- simulated cluster ------------------------------------------------------

class ClusterError(PodflowError):
    """Base class for simulator API errors."""


class AlreadyExists(ClusterError):
    """Create refused: an object with this name already exists."""


class DuplicatePodName(AlreadyExists):
    """Create refused: pod name already taken within the namespace."""


class NotFound(ClusterError):
    """The named object does not exist."""


class NamespaceNotFound(NotFound):
    """Operation references a namespace that does not exist."""


class ClaimNotFound(NotFound):
    """Pod references a volume claim that does not exist in its namespace."""


class DeadlineExceeded(ClusterError):
    """run_until_quiescent hit its deadline with work still queued."""


class InvariantViolation(ClusterError):
    """Internal ledger corruption (a bug, never expected in normal runs)."""


# --- informer cache ---------------------------------------------------------

class NotSynced(PodflowError):
    """Lister used before the informer performed its initial list."""


# --- injector / wire protocol ------------------------------------------------

class InjectorError(PodflowError):
    """Base class for workflow-injection errors."""


class MissingFile(InjectorError):
    """Workflow file path does not exist."""


class EmptyInput(InjectorError):
    """No data where at least one item was required."""


class ConnectionRefused(InjectorError):
    """Peer endpoint is not accepting connections."""


class NackFromEngine(InjectorError):
    """Engine answered a SubmitWorkflow with a negative Ack."""


class ProtocolViolation(InjectorError):
    """Peer sent a message type not allowed in the current protocol state."""
