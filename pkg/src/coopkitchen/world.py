"""Deterministic kitchen state machine with resource isolation.

The world is element-interaction only: there is no grid navigation, and
every accepted primitive costs exactly one timestep.  Each agent owns a
disjoint set of interactive elements and the single shared counter is the
only exchange point.  All operations are pure functions from (state,
inputs) to outputs, so snapshots can be shared read-only across threads.

Within a timestep agents execute sequentially in the fixed order Bob then
Alice; processing timers decrement on ``tick`` at the end of the timestep,
so a process of duration d started at timestep t yields its output at the
start of timestep t + d.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional

from .actions import Action, ALICE, BOB

# Execution order of agents within one timestep.
EXECUTION_ORDER = (BOB, ALICE)

_PROCESS_VERBS = {"cook": "cooking", "bake": "baking", "cut": "cutting", "stir": "stirring"}


class EnvErrorCode(str, Enum):
    NO_SUCH_ELEMENT = "NoSuchElement"
    ELEMENT_NOT_IN_AGENT_SPACE = "ElementNotInAgentSpace"
    HANDS_FULL = "HandsFull"
    HANDS_EMPTY = "HandsEmpty"
    NO_MATCHING_SYNTHESIS_ENTRY = "NoMatchingSynthesisEntry"
    UTENSIL_BUSY = "UtensilBusy"
    COUNTER_FULL = "CounterFull"
    WRONG_DELIVERY = "WrongDelivery"


@dataclass(frozen=True)
class EnvError:
    code: EnvErrorCode
    message: str

    def __str__(self) -> str:
        return f"{self.code.value}: {self.message}"


class TimeLimitExceeded(Exception):
    """Advancing the clock past the episode time limit."""


@dataclass(frozen=True)
class SynthesisRule:
    """One synthesis-table entry: inputs + process action -> output."""

    inputs: tuple[str, ...]  # sorted multiset of item names
    action: str  # cook | bake | cut | stir
    duration: int  # timesteps >= 1
    output: str

    def matches(self, contents: tuple[str, ...], action: str) -> bool:
        return self.action == action and tuple(sorted(contents)) == self.inputs


@dataclass(frozen=True)
class Processing:
    rule: SynthesisRule
    remaining: int


@dataclass(frozen=True)
class Element:
    id: str
    kind: str  # utensil | dispenser | counter | delivery
    owner: str  # alice | bob | shared
    utensil_type: str = ""  # pot | oven | chopping_board | blender for utensils
    contents: tuple[str, ...] = ()
    inventory: tuple[str, ...] = ()  # dispenser stock; never depletes
    synthesis: tuple[SynthesisRule, ...] = ()
    processing: Optional[Processing] = None
    slots: int = 0  # display-only counter slot count


@dataclass(frozen=True)
class AgentState:
    holding: Optional[str] = None
    pending_plan: tuple[str, ...] = ()


@dataclass(frozen=True)
class WorldState:
    timestep: int
    agents: dict[str, AgentState]
    elements: dict[str, Element]
    order: str
    time_limit: int
    delivered: bool = False
    delivered_correct: bool = False

    def known_items(self) -> frozenset[str]:
        """Every item name that can exist: stock plus synthesis ins/outs."""
        names: set[str] = set()
        for el in self.elements.values():
            names.update(el.inventory)
            names.update(el.contents)
            for rule in el.synthesis:
                names.update(rule.inputs)
                names.add(rule.output)
        for ag in self.agents.values():
            if ag.holding:
                names.add(ag.holding)
        names.add(self.order)
        return frozenset(names)

    def find_element_of_kind(self, kind: str) -> Optional[Element]:
        for el in self.elements.values():
            if el.kind == kind:
                return el
        return None

    def item_multiset(self) -> tuple[str, ...]:
        """Sorted multiset of all loose items (hands + element contents)."""
        items: list[str] = []
        for ag in self.agents.values():
            if ag.holding:
                items.append(ag.holding)
        for el in self.elements.values():
            items.extend(el.contents)
        return tuple(sorted(items))


@dataclass(frozen=True)
class StepOutcome:
    new_state: WorldState
    per_agent_results: dict[str, tuple[bool, Optional[EnvError]]]
    delivered_correct: Optional[bool] = None

    def accepted(self, agent: str) -> bool:
        return self.per_agent_results[agent][0]

    def error(self, agent: str) -> Optional[EnvError]:
        return self.per_agent_results[agent][1]


def _with_element(state: WorldState, element: Element) -> WorldState:
    elements = dict(state.elements)
    elements[element.id] = element
    return replace(state, elements=elements)


def _with_agent(state: WorldState, agent_id: str, agent: AgentState) -> WorldState:
    agents = dict(state.agents)
    agents[agent_id] = agent
    return replace(state, agents=agents)


def _reject(state: WorldState, agent: str, code: EnvErrorCode, message: str) -> StepOutcome:
    return StepOutcome(state, {agent: (False, EnvError(code, message))})


def _ok(state: WorldState, agent: str, delivered_correct: Optional[bool] = None) -> StepOutcome:
    return StepOutcome(state, {agent: (True, None)}, delivered_correct)


def _reachable(element: Element, agent: str) -> bool:
    return element.owner in (agent, "shared")


def apply_action(state: WorldState, agent: str, action: Action) -> StepOutcome:
    """Execute one syntax-validated primitive for one agent.

    A semantically invalid action leaves the state unchanged and reports an
    error.  The single exception is a wrong deliver(): the delivery location
    consumes the submitted item, so the outcome is accepted with a
    WrongDelivery error attached and delivered_correct=False.
    """
    if action.is_request:
        # Requests are addressed to the other agent; they never execute here.
        return _reject(
            state,
            agent,
            EnvErrorCode.NO_SUCH_ELEMENT,
            "request(...) is a collaborative action and cannot be executed directly.",
        )

    func, args = action.func, action.args
    me = state.agents[agent]

    if func == "wait":
        return _ok(state, agent)

    if func == "pickup":
        obj, place = args
        element = state.elements.get(place)
        if element is None:
            return _reject(
                state, agent, EnvErrorCode.NO_SUCH_ELEMENT, f"there is no element named '{place}'."
            )
        if not _reachable(element, agent):
            return _reject(
                state,
                agent,
                EnvErrorCode.ELEMENT_NOT_IN_AGENT_SPACE,
                f"'{place}' is not in {agent}'s space.",
            )
        if me.holding is not None:
            return _reject(
                state,
                agent,
                EnvErrorCode.HANDS_FULL,
                f"{agent} is already holding one {me.holding} and cannot pick up more.",
            )
        if element.kind == "dispenser":
            if obj not in element.inventory:
                return _reject(
                    state,
                    agent,
                    EnvErrorCode.NO_SUCH_ELEMENT,
                    f"'{place}' does not provide '{obj}'.",
                )
            new_state = _with_agent(state, agent, replace(me, holding=obj))
            return _ok(new_state, agent)
        if element.kind in ("counter", "utensil"):
            if element.kind == "utensil" and element.processing is not None:
                return _reject(
                    state,
                    agent,
                    EnvErrorCode.UTENSIL_BUSY,
                    f"'{place}' is still processing and cannot be opened.",
                )
            if obj not in element.contents:
                return _reject(
                    state,
                    agent,
                    EnvErrorCode.NO_SUCH_ELEMENT,
                    f"there is no {obj} in '{place}' right now.",
                )
            contents = list(element.contents)
            contents.remove(obj)
            new_state = _with_element(state, replace(element, contents=tuple(contents)))
            new_state = _with_agent(new_state, agent, replace(me, holding=obj))
            return _ok(new_state, agent)
        return _reject(
            state,
            agent,
            EnvErrorCode.NO_SUCH_ELEMENT,
            f"nothing can be picked up from '{place}'.",
        )

    if func == "place_obj_on_counter":
        if me.holding is None:
            return _reject(
                state, agent, EnvErrorCode.HANDS_EMPTY, f"{agent} is not holding anything."
            )
        counter = state.find_element_of_kind("counter")
        assert counter is not None
        # Counter capacity is unbounded, so CounterFull never fires here; the
        # code exists for layouts that may wish to bound it later.
        new_state = _with_element(
            state, replace(counter, contents=counter.contents + (me.holding,))
        )
        new_state = _with_agent(new_state, agent, replace(me, holding=None))
        return _ok(new_state, agent)

    if func == "put_obj_in_utensil":
        (target,) = args
        element = state.elements.get(target)
        if element is None:
            return _reject(
                state, agent, EnvErrorCode.NO_SUCH_ELEMENT, f"there is no element named '{target}'."
            )
        if not _reachable(element, agent):
            return _reject(
                state,
                agent,
                EnvErrorCode.ELEMENT_NOT_IN_AGENT_SPACE,
                f"'{target}' is not in {agent}'s space.",
            )
        if me.holding is None:
            return _reject(
                state, agent, EnvErrorCode.HANDS_EMPTY, f"{agent} is not holding anything."
            )
        if element.processing is not None:
            return _reject(
                state,
                agent,
                EnvErrorCode.UTENSIL_BUSY,
                f"'{target}' is still processing; wait for it to finish.",
            )
        new_state = _with_element(
            state, replace(element, contents=element.contents + (me.holding,))
        )
        new_state = _with_agent(new_state, agent, replace(me, holding=None))
        return _ok(new_state, agent)

    if func in ("cook", "bake", "cut", "stir"):
        (target,) = args
        element = state.elements.get(target)
        if element is None:
            return _reject(
                state, agent, EnvErrorCode.NO_SUCH_ELEMENT, f"there is no element named '{target}'."
            )
        if not _reachable(element, agent):
            return _reject(
                state,
                agent,
                EnvErrorCode.ELEMENT_NOT_IN_AGENT_SPACE,
                f"'{target}' is not in {agent}'s space.",
            )
        if element.processing is not None:
            return _reject(
                state,
                agent,
                EnvErrorCode.UTENSIL_BUSY,
                f"'{target}' is already processing.",
            )
        rule = next(
            (r for r in element.synthesis if r.matches(element.contents, func)), None
        )
        if rule is None:
            held = ", ".join(sorted(element.contents)) if element.contents else "nothing"
            return _reject(
                state,
                agent,
                EnvErrorCode.NO_MATCHING_SYNTHESIS_ENTRY,
                f"'{target}' holds {held}, which cannot be processed with '{func}'.",
            )
        new_state = _with_element(
            state, replace(element, processing=Processing(rule, rule.duration))
        )
        return _ok(new_state, agent)

    if func == "fill_dish_with_food":
        (target,) = args
        element = state.elements.get(target)
        if element is None:
            return _reject(
                state, agent, EnvErrorCode.NO_SUCH_ELEMENT, f"there is no element named '{target}'."
            )
        if not _reachable(element, agent):
            return _reject(
                state,
                agent,
                EnvErrorCode.ELEMENT_NOT_IN_AGENT_SPACE,
                f"'{target}' is not in {agent}'s space.",
            )
        if me.holding != "dish":
            held = me.holding or "nothing"
            return _reject(
                state,
                agent,
                EnvErrorCode.HANDS_EMPTY,
                f"{agent} must hold a dish to fill it, but holds {held}.",
            )
        if element.processing is not None:
            return _reject(
                state,
                agent,
                EnvErrorCode.UTENSIL_BUSY,
                f"'{target}' is still processing; the food is not ready.",
            )
        if len(element.contents) != 1:
            held = ", ".join(sorted(element.contents)) if element.contents else "nothing"
            return _reject(
                state,
                agent,
                EnvErrorCode.NO_SUCH_ELEMENT,
                f"'{target}' holds {held}; there is no single finished food to plate.",
            )
        food = element.contents[0]
        # The dish is consumed into the plated item.
        new_state = _with_element(state, replace(element, contents=()))
        new_state = _with_agent(new_state, agent, replace(me, holding=food))
        return _ok(new_state, agent)

    if func == "deliver":
        delivery = state.find_element_of_kind("delivery")
        if delivery is None:
            return _reject(
                state, agent, EnvErrorCode.NO_SUCH_ELEMENT, "this kitchen has no delivery location."
            )
        if not _reachable(delivery, agent):
            return _reject(
                state,
                agent,
                EnvErrorCode.ELEMENT_NOT_IN_AGENT_SPACE,
                f"'{delivery.id}' is not in {agent}'s space.",
            )
        if me.holding is None:
            return _reject(
                state, agent, EnvErrorCode.HANDS_EMPTY, f"{agent} has nothing to deliver."
            )
        if me.holding == state.order:
            new_state = _with_agent(state, agent, replace(me, holding=None))
            new_state = replace(new_state, delivered=True, delivered_correct=True)
            return _ok(new_state, agent, delivered_correct=True)
        # Incorrect submissions are consumed by the delivery location: the
        # action executes but the item is removed from the world.
        submitted = me.holding
        new_state = _with_agent(state, agent, replace(me, holding=None))
        error = EnvError(
            EnvErrorCode.WRONG_DELIVERY,
            f"delivered {submitted} but the order is {state.order}; "
            f"the {submitted} was discarded.",
        )
        return StepOutcome(new_state, {agent: (True, error)}, delivered_correct=False)

    return _reject(
        state, agent, EnvErrorCode.NO_SUCH_ELEMENT, f"'{func}' cannot be executed."
    )


def tick(state: WorldState) -> WorldState:
    """Advance the clock one timestep and run processing timers.

    A processing element whose timer reaches zero replaces its inputs with
    the synthesis output.  Raises TimeLimitExceeded when the new timestep
    would pass the episode time limit.
    """
    if state.timestep + 1 > state.time_limit:
        raise TimeLimitExceeded(
            f"timestep {state.timestep + 1} exceeds the time limit of {state.time_limit}"
        )
    elements = {}
    for el_id, el in state.elements.items():
        if el.processing is None:
            elements[el_id] = el
            continue
        remaining = el.processing.remaining - 1
        if remaining > 0:
            elements[el_id] = replace(el, processing=Processing(el.processing.rule, remaining))
        else:
            elements[el_id] = replace(
                el, contents=(el.processing.rule.output,), processing=None
            )
    return replace(state, timestep=state.timestep + 1, elements=elements)


def _holding_phrase(agent: AgentState) -> str:
    return "nothing" if agent.holding is None else f"one {agent.holding}"


def _utensil_phrase(el: Element) -> str:
    if el.processing is not None:
        verb = _PROCESS_VERBS[el.processing.rule.action]
        inputs = ", ".join(sorted(el.contents)) if el.contents else "its contents"
        return (
            f"<{el.id}> is busy {verb} {inputs} "
            f"({el.processing.remaining} timesteps left)"
        )
    if not el.contents:
        return f"<{el.id}> is empty"
    return f"<{el.id}> contains {', '.join(sorted(el.contents))}"


def observe(state: WorldState, agent: Optional[str] = None) -> str:
    """Render the shared global observation string for the current scene.

    Both agents receive the identical text (they share observation); the
    ``agent`` parameter is accepted for interface symmetry only.  The
    rendering is byte-stable for a given state.
    """
    parts: list[str] = [f"Scene {state.timestep}:"]
    for name in (BOB, ALICE):
        ag = state.agents[name]
        label = name.capitalize()
        plan = ",".join(ag.pending_plan)
        parts.append(
            f"<{label}> holds {_holding_phrase(ag)}. "
            f"The planned sequence of actions (yet to be performed) for {label} is [{plan}]"
        )
    utensils = [el for el in state.elements.values() if el.kind == "utensil"]
    kitchen = "; ".join(_utensil_phrase(el) for el in utensils)
    counter = state.find_element_of_kind("counter")
    assert counter is not None
    if counter.contents:
        counter_text = "counters have: " + ", ".join(sorted(counter.contents))
    else:
        counter_text = "counters have nothing"
    slots = counter.slots or 1
    parts.append(
        f"Kitchen states: {kitchen}; {slots} counters can be visited by <Bob> and <Alice>. "
        f"Their states are as follows: {counter_text}."
    )
    return " ".join(parts)


def state_to_dict(state: WorldState) -> dict:
    """Canonical JSON-ready snapshot with stable key order."""
    return {
        "timestep": state.timestep,
        "time_limit": state.time_limit,
        "order": state.order,
        "delivered": state.delivered,
        "delivered_correct": state.delivered_correct,
        "agents": {
            name: {
                "holding": ag.holding,
                "pending_plan": list(ag.pending_plan),
            }
            for name, ag in sorted(state.agents.items())
        },
        "elements": {
            el_id: {
                "kind": el.kind,
                "owner": el.owner,
                "utensil_type": el.utensil_type,
                "contents": sorted(el.contents),
                "inventory": sorted(el.inventory),
                "processing": (
                    None
                    if el.processing is None
                    else {
                        "action": el.processing.rule.action,
                        "output": el.processing.rule.output,
                        "remaining": el.processing.remaining,
                    }
                ),
            }
            for el_id, el in sorted(state.elements.items())
        },
    }


def state_to_json(state: WorldState) -> str:
    return json.dumps(state_to_dict(state), sort_keys=True, separators=(",", ":"))
