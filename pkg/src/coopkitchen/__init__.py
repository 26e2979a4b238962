"""Two-agent resource-isolated kitchen benchmark.

Ships the deterministic kitchen simulator, the func(args) action language,
the trajectory-efficiency metric suite, a task registry, an agent harness
with scripted / recorded-mock / remote-chat backends, a batch experiment
runner and a live session service for human play.
"""

from .actions import Action, ErrorCode, ValidationError, canonical, parse_plan, validate
from .metrics import (
    CollaborationEvent,
    MetricConfig,
    TrajectoryRecord,
    d_max,
    ic,
    ites,
    pc,
    rc,
    rouge_l,
    tes,
)
from .tasks import TaskSpec, catalog, find_task, load_task, required_collaborations
from .world import StepOutcome, WorldState, apply_action, observe, tick

__version__ = "0.1.0"

__all__ = [
    "Action",
    "CollaborationEvent",
    "ErrorCode",
    "MetricConfig",
    "StepOutcome",
    "TaskSpec",
    "TrajectoryRecord",
    "ValidationError",
    "WorldState",
    "apply_action",
    "canonical",
    "catalog",
    "d_max",
    "find_task",
    "ic",
    "ites",
    "load_task",
    "observe",
    "parse_plan",
    "pc",
    "rc",
    "required_collaborations",
    "rouge_l",
    "tes",
    "tick",
    "validate",
]
