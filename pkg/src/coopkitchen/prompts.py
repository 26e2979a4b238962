"""Instruction builder: fixed rule text plus slot-based episode context.

Every planner call receives one rendered prompt: fixed blocks (game rules,
communication rules, the agent's action space) followed by slots filled
from the live episode (recipe for the knowledge holder only, action
history, reflections, observation, conversation and error feedback).
Rendering is deterministic: identical inputs produce identical bytes.

Only Bob carries the recipe.  Alice's bundle never contains it; she must
be instructed through the communication channel.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

from .actions import ACTION_SPACES, ALICE, BOB, other_agent
from .tasks import TaskSpec
from .world import WorldState, observe

RECIPE_HOLDER = BOB

GAME_RULES = """\
You are playing a cooperative cooking game. Two agents, Bob and Alice, run one
kitchen split into two sides. Each agent can only reach the interactive
elements on its own side; the single shared counter is the only place where
items can be exchanged. Dispensers never run out. Utensils transform their
contents according to fixed synthesis rules when the matching process action
is applied, and need the stated number of timesteps to finish. The team goal
is to prepare the current order and deliver it at the delivery location.
Delivering the wrong item destroys that item. Work together: ask your
teammate for anything you cannot reach yourself."""

COMMUNICATION_RULES = """\
Respond with exactly three fields, each on its own line:
Analysis: your reasoning about the state, the task and your memory.
Plan: the actions you will perform next, as func(args) separated by ';'.
Say: a message to your teammate, or [NOTHING] if no communication is needed.
To ask your teammate to perform an action, put request('func(args)') entries
in your Plan and explain them in Say. End a conversation by finishing your
Say content with [END]."""

_ACTION_DESCRIPTIONS = {
    "pickup": "pickup(obj,place): take obj from a dispenser, the counter or an idle utensil (hands must be empty)",
    "cut": "cut(chopping_board_name): start cutting the board contents",
    "stir": "stir(blender_name): start blending the blender contents",
    "cook": "cook(pot_name): start cooking the pot contents",
    "bake": "bake(oven_name): start baking the oven contents",
    "place_obj_on_counter": "place_obj_on_counter(): put the held item on the shared counter",
    "put_obj_in_utensil": "put_obj_in_utensil(utensil): put the held item into a utensil",
    "fill_dish_with_food": "fill_dish_with_food(utensil): plate the finished food from a utensil onto the held dish",
    "deliver": "deliver(): submit the held item at the delivery location",
    "wait": "wait(num): do nothing this timestep",
}


def action_space_text(agent: str) -> str:
    lines = [f"Action space for {agent.capitalize()}:"]
    for i, func in enumerate(ACTION_SPACES[agent], start=1):
        lines.append(f"    {i}. {_ACTION_DESCRIPTIONS[func]}")
    teammate = other_agent(agent)
    teammate_funcs = ", ".join(ACTION_SPACES[teammate])
    lines.append(
        f"Your teammate {teammate.capitalize()} can perform: {teammate_funcs}. "
        f"Use request('func(args)') in your Plan to ask for one of those."
    )
    return "\n".join(lines)


class TemplateSlotMissing(ValueError):
    """A required prompt slot was not provided."""


@dataclass(frozen=True)
class PromptBundle:
    """Fixed blocks plus filled slots for one planner call."""

    agent: str
    game_rules: str
    communication_rules: str
    action_space: str
    recipe: Optional[str]  # knowledge holder only
    history: tuple[str, ...]
    reflections: tuple[str, ...]
    spaces: str
    order: str
    observation: str
    conversation: tuple[str, ...]
    error_feedback: Optional[str]

    def render(self) -> str:
        parts = [self.game_rules, self.communication_rules, self.action_space]
        if self.recipe is not None:
            parts.append("Recipe for the current order:\n" + self.recipe)
        parts.append(f"Successful Action History: [{', '.join(self.history)}]")
        if self.reflections:
            parts.append("Lessons from failures:\n" + "\n".join(self.reflections))
        parts.append(self.spaces)
        parts.append(f"Order:{self.order}")
        parts.append(self.observation)
        if self.conversation:
            parts.append("Conversation so far:\n" + "\n".join(self.conversation))
        if self.error_feedback:
            parts.append(
                "Your previous output was rejected: "
                + self.error_feedback
                + " Correct it and answer again in the required format."
            )
        return "\n\n".join(parts)


def spaces_line(state: WorldState) -> str:
    def owned(agent: str) -> str:
        ids = [el.id for el in state.elements.values() if el.owner == agent]
        ids.append("counter")
        return "  ".join(ids)

    return f"Bob space:{owned(BOB)}\nAlice space:{owned(ALICE)}"


def build_prompt(
    agent: str,
    state: WorldState,
    task: TaskSpec,
    memory: Sequence[str],
    reflections: Sequence[str],
    conversation: Sequence[str],
    error_feedback: Optional[str] = None,
    memory_window: int = 50,
    reflection_window: int = 5,
) -> PromptBundle:
    """Fill the prompt template for one agent at the current scene.

    ``memory`` is the agent's accepted-action log and ``reflections`` its
    stored notes from past invalid actions; both are capped by a window to
    bound prompt size.
    """
    if state is None or task is None:
        raise TemplateSlotMissing("state and task are required prompt slots")
    recipe = task.recipe if agent == RECIPE_HOLDER else None
    return PromptBundle(
        agent=agent,
        game_rules=GAME_RULES,
        communication_rules=COMMUNICATION_RULES,
        action_space=action_space_text(agent),
        recipe=recipe,
        history=tuple(memory[-memory_window:]),
        reflections=tuple(reflections[-reflection_window:]),
        spaces=spaces_line(state),
        order=task.order,
        observation=observe(state, agent),
        conversation=tuple(conversation),
        error_feedback=error_feedback,
    )


__all__ = [
    "GAME_RULES",
    "COMMUNICATION_RULES",
    "PromptBundle",
    "TemplateSlotMissing",
    "action_space_text",
    "build_prompt",
    "spaces_line",
    "RECIPE_HOLDER",
]
