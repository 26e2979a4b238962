"""Task, layout, recipe and reference-trajectory configuration.

A task document bundles the goal text, the recipe guidance only Bob
receives, the kitchen layout (elements with owners, dispenser stock,
per-utensil synthesis tables) and one or more annotated reference action
trajectories.  Every reference action is parsed and statically validated
against the layout at load time, so a config bug fails fast instead of
corrupting an evaluation run.

The JSON schema is documented in docs/task_schema.md.  Collaboration
slots are annotation-driven: each slot names the ordered responder-side
actions that one request/response exchange covers, and the slot count is
the denominator used by the initiating/responding capability metrics.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from . import actions as al
from .actions import AGENTS
from .world import AgentState, Element, SynthesisRule, WorldState

SCHEMA_VERSION = 1
DEFAULT_GAMMA = 1.5


class SchemaError(ValueError):
    """A task document violates the published schema."""


class RatValidationError(ValueError):
    """A reference trajectory contains an action illegal in its layout."""


@dataclass(frozen=True)
class CollaborationSlot:
    """One required collaboration: responder-side actions serving the
    requesting agent (acquiring ingredients or a dish, or processing on
    the other side of the kitchen)."""

    responder: str
    action_indices: tuple[int, ...]
    behavior: str

    def actions(self, rat: "Rat") -> tuple[str, ...]:
        seq = rat.per_agent[self.responder]
        return tuple(seq[i] for i in self.action_indices)


@dataclass(frozen=True)
class Rat:
    """A per-agent reference action trajectory with slot annotations."""

    per_agent: dict[str, tuple[str, ...]]
    slots: tuple[CollaborationSlot, ...]

    def length(self, agent: str) -> int:
        return len(self.per_agent[agent])

    def total_actions(self) -> int:
        return sum(len(v) for v in self.per_agent.values())


@dataclass(frozen=True)
class LayoutDoc:
    elements: tuple[Element, ...]
    counter_slots: int
    order_probability: dict[str, float]


@dataclass(frozen=True)
class TaskSpec:
    """The full task tuple: goal, environment, guidance and references."""

    name: str
    level: int
    order: str
    goal: str
    recipe: str
    layout: LayoutDoc
    rats: tuple[Rat, ...]
    min_timesteps: int
    min_actions: int
    min_collaborative_actions: int
    time_limit_factor: float = DEFAULT_GAMMA
    source: Optional[str] = None

    def time_limit(self, gamma: Optional[float] = None) -> int:
        factor = self.time_limit_factor if gamma is None else gamma
        if factor <= 0:
            raise ValueError(f"time limit factor must be positive, got {factor}")
        return math.ceil(self.min_timesteps * factor)

    def initial_state(self, gamma: Optional[float] = None) -> WorldState:
        elements = {el.id: el for el in self.layout.elements}
        agents = {agent: AgentState() for agent in AGENTS}
        return WorldState(
            timestep=0,
            agents=agents,
            elements=elements,
            order=self.order,
            time_limit=self.time_limit(gamma),
        )

    def rat_set(self, agent: str) -> list[tuple[str, ...]]:
        """All reference trajectories for one agent (metric input)."""
        return [rat.per_agent[agent] for rat in self.rats]


def required_collaborations(task: TaskSpec) -> list[CollaborationSlot]:
    """The collaboration slots of the primary reference trajectory.

    The list length is N, the number of required collaborations the
    capability metrics divide by.
    """
    if not task.rats:
        return []
    return list(task.rats[0].slots)


def _utensil_type(element_id: str) -> str:
    return element_id.rstrip("0123456789")


def _build_element(doc: dict) -> Element:
    try:
        el_id = doc["id"]
        kind = doc["kind"]
        owner = doc["owner"]
    except KeyError as exc:
        raise SchemaError(f"element missing field {exc}") from exc
    if kind not in ("utensil", "dispenser", "counter", "delivery"):
        raise SchemaError(f"element '{el_id}' has unknown kind '{kind}'")
    if owner not in ("alice", "bob", "shared"):
        raise SchemaError(f"element '{el_id}' has unknown owner '{owner}'")
    synthesis = []
    for entry in doc.get("synthesis", []):
        rule = SynthesisRule(
            inputs=tuple(sorted(entry["inputs"])),
            action=entry["action"],
            duration=int(entry["duration"]),
            output=entry["output"],
        )
        if rule.action not in ("cook", "bake", "cut", "stir"):
            raise SchemaError(f"element '{el_id}': unknown process action '{rule.action}'")
        if rule.duration < 1:
            raise SchemaError(f"element '{el_id}': duration must be >= 1")
        synthesis.append(rule)
    seen = {(r.inputs, r.action) for r in synthesis}
    if len(seen) != len(synthesis):
        raise SchemaError(f"element '{el_id}': duplicate (inputs, action) synthesis entries")
    return Element(
        id=el_id,
        kind=kind,
        owner=owner,
        utensil_type=_utensil_type(el_id) if kind == "utensil" else "",
        inventory=tuple(sorted(doc.get("provides", []))),
        synthesis=tuple(synthesis),
        slots=int(doc.get("slots", 0)),
    )


def _canonical_rat_actions(raw: list, agent: str, task_name: str) -> tuple[str, ...]:
    canon = []
    for entry in raw:
        try:
            parsed = al.parse_plan(str(entry))
        except al.PlanParseError as exc:
            raise RatValidationError(
                f"task '{task_name}': reference action {entry!r} for {agent} "
                f"does not parse: {exc}"
            ) from exc
        if len(parsed) != 1 or parsed[0].is_request:
            raise RatValidationError(
                f"task '{task_name}': reference entry {entry!r} for {agent} "
                f"must be exactly one plain action"
            )
        canon.append(parsed[0].canonical())
    return tuple(canon)


def load_task(path: str | Path) -> TaskSpec:
    """Load and fully validate one task document."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON: {exc}") from exc

    if doc.get("schema_version") != SCHEMA_VERSION:
        raise SchemaError(
            f"{path}: schema_version {doc.get('schema_version')!r} "
            f"is not supported (expected {SCHEMA_VERSION})"
        )
    for field_name in (
        "name",
        "level",
        "order",
        "goal",
        "recipe",
        "layout",
        "rats",
        "min_timesteps",
        "min_actions",
        "min_collaborative_actions",
    ):
        if field_name not in doc:
            raise SchemaError(f"{path}: missing required field '{field_name}'")

    level = int(doc["level"])
    if not 1 <= level <= 6:
        raise SchemaError(f"{path}: level must be in 1..6, got {level}")

    layout_doc = doc["layout"]
    elements = tuple(_build_element(e) for e in layout_doc.get("elements", []))
    counters = [e for e in elements if e.kind == "counter"]
    if len(counters) != 1:
        raise SchemaError(f"{path}: exactly one shared counter region is required")
    if counters[0].owner != "shared":
        raise SchemaError(f"{path}: the counter must be shared")
    layout = LayoutDoc(
        elements=elements,
        counter_slots=counters[0].slots,
        order_probability=dict(layout_doc.get("order_probability", {})),
    )

    name = doc["name"]
    rats = []
    for rat_doc in doc["rats"]:
        per_agent = {}
        for agent in AGENTS:
            if agent not in rat_doc:
                raise SchemaError(f"{path}: rat is missing agent '{agent}'")
            per_agent[agent] = _canonical_rat_actions(rat_doc[agent], agent, name)
        slots = []
        for slot_doc in rat_doc.get("collaboration_slots", []):
            responder = slot_doc["responder"]
            if responder not in AGENTS:
                raise SchemaError(f"{path}: slot responder '{responder}' unknown")
            indices = tuple(int(i) for i in slot_doc["actions"])
            if any(i < 0 or i >= len(per_agent[responder]) for i in indices):
                raise SchemaError(f"{path}: slot indices {indices} out of range")
            slots.append(
                CollaborationSlot(responder, indices, slot_doc.get("behavior", ""))
            )
        rats.append(Rat(per_agent=per_agent, slots=tuple(slots)))
    if not rats:
        raise SchemaError(f"{path}: at least one reference trajectory is required")

    task = TaskSpec(
        name=name,
        level=level,
        order=doc["order"],
        goal=doc["goal"],
        recipe=doc["recipe"],
        layout=layout,
        rats=tuple(rats),
        min_timesteps=int(doc["min_timesteps"]),
        min_actions=int(doc["min_actions"]),
        min_collaborative_actions=int(doc["min_collaborative_actions"]),
        time_limit_factor=float(doc.get("time_limit_factor", DEFAULT_GAMMA)),
        source=str(path),
    )

    if task.rats[0].total_actions() != task.min_actions:
        raise SchemaError(
            f"{path}: min_actions={task.min_actions} but the primary reference "
            f"has {task.rats[0].total_actions()} actions"
        )
    if len(task.rats[0].slots) != task.min_collaborative_actions:
        raise SchemaError(
            f"{path}: min_collaborative_actions={task.min_collaborative_actions} but "
            f"{len(task.rats[0].slots)} collaboration slots are annotated"
        )

    state = task.initial_state()
    for rat in task.rats:
        for agent in AGENTS:
            for action_str in rat.per_agent[agent]:
                action = al.parse_plan(action_str)[0]
                error = al.validate(action, agent, state)
                if error is not None:
                    raise RatValidationError(
                        f"{path}: reference action '{action_str}' is illegal "
                        f"for {agent} in this layout: {error}"
                    )
    return task


def default_registry_dir() -> Path:
    return Path(__file__).parent / "data" / "tasks"


def catalog(registry_dir: Optional[str | Path] = None) -> list[TaskSpec]:
    """All tasks in a registry directory, ordered by (level, name)."""
    directory = Path(registry_dir) if registry_dir is not None else default_registry_dir()
    if not directory.is_dir():
        return []
    tasks = [load_task(p) for p in sorted(directory.glob("*.json"))]
    names = [t.name for t in tasks]
    if len(set(names)) != len(names):
        raise SchemaError(f"duplicate task names in registry {directory}")
    return sorted(tasks, key=lambda t: (t.level, t.name))


def find_task(name: str, registry_dir: Optional[str | Path] = None) -> TaskSpec:
    for task in catalog(registry_dir):
        if task.name == name:
            return task
    raise KeyError(f"no task named '{name}' in the registry")
