"""DAG workflows executed as pods on a simulated cluster, with baselines."""

from .workflow import (
    TaskSpec,
    WorkflowSpec,
    builtin_workflow,
    level_partition,
    parse_workflow,
    ready_tasks,
    serialize_workflow,
)

__version__ = "0.1.0"

__all__ = [
    "TaskSpec",
    "WorkflowSpec",
    "builtin_workflow",
    "level_partition",
    "parse_workflow",
    "ready_tasks",
    "serialize_workflow",
    "__version__",
]
