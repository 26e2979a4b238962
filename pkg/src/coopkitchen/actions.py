"""Action language: parser, canonicalizer and rule-based validator.

Agents drive the kitchen with primitives written as ``func(args)``, for
example ``pickup(pumpkin, ingredient_dispenser)``.  A collaborative action
addressed to the other agent is wrapped as ``request(...)``; quotes inside
the wrapper are tolerated and stripped.  Plans are one or more primitives
separated by ``;``, ``,`` (outside parentheses) or newlines.

The grammar is documented in docs/action_grammar.md.  Validation error
message strings are part of the prompt contract and frozen in
tests/golden/validation_errors.txt.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, Optional, Sequence

if TYPE_CHECKING:
    from .world import WorldState

ALICE = "alice"
BOB = "bob"
AGENTS = (ALICE, BOB)

# Per-function arity of every primitive either agent may use.
ARITY = {
    "pickup": 2,
    "cut": 1,
    "stir": 1,
    "cook": 1,
    "bake": 1,
    "put_obj_in_utensil": 1,
    "fill_dish_with_food": 1,
    "place_obj_on_counter": 0,
    "deliver": 0,
    "wait": 1,
}

# Exclusive + shared actions per agent.  Alice runs the prep side (board,
# blender, dispensers); Bob runs the hot side (pot, oven, delivery).
ACTION_SPACES = {
    ALICE: ("pickup", "cut", "stir", "place_obj_on_counter", "put_obj_in_utensil", "wait"),
    BOB: (
        "pickup",
        "cook",
        "place_obj_on_counter",
        "put_obj_in_utensil",
        "fill_dish_with_food",
        "bake",
        "deliver",
        "wait",
    ),
}

# Which element kinds each unary utensil action may target.
UTENSIL_ACTION_KINDS = {
    "cut": "chopping_board",
    "stir": "blender",
    "cook": "pot",
    "bake": "oven",
}

_IDENT_RE = re.compile(r"^[a-z0-9_]+$")
_PROTOCOL_TOKENS = ("[END]", "[NOTHING]")


def other_agent(agent: str) -> str:
    if agent == ALICE:
        return BOB
    if agent == BOB:
        return ALICE
    raise ValueError(f"unknown agent {agent!r}")


class ErrorCode(str, Enum):
    """Stable machine-readable validation failure categories."""

    PARSE_ERROR = "ParseError"
    UNKNOWN_FUNCTION = "UnknownFunction"
    BAD_ARITY = "BadArity"
    UNKNOWN_ARGUMENT = "UnknownArgument"
    ENVIRONMENT_MISMATCH = "EnvironmentMismatch"
    NOT_IN_ACTION_SPACE = "NotInActionSpace"


@dataclass(frozen=True)
class ValidationError:
    """A rejected action: stable code plus the message fed back to the agent."""

    code: ErrorCode
    message: str

    def __str__(self) -> str:
        return f"{self.code.value}: {self.message}"


class PlanParseError(Exception):
    """Raised when a plan string cannot be tokenized into actions."""

    def __init__(self, message: str, position: int, token: str):
        super().__init__(message)
        self.position = position
        self.token = token
        self.error = ValidationError(ErrorCode.PARSE_ERROR, message)


@dataclass(frozen=True)
class Action:
    """One parsed primitive; ``is_request`` marks a collaborative wrapper."""

    func: str
    args: tuple[str, ...] = ()
    is_request: bool = False

    def canonical(self) -> str:
        inner = f"{self.func}({','.join(self.args)})"
        return f"request({inner})" if self.is_request else inner

    def inner(self) -> "Action":
        """The wrapped primitive of a request, or the action itself."""
        if not self.is_request:
            return self
        return Action(self.func, self.args, is_request=False)


def canonical(action: Action) -> str:
    return action.canonical()


def _canonical_ident(raw: str) -> str:
    # LLM output casing and spacing are unstable: lowercase and snake_case.
    ident = raw.strip().lower()
    ident = re.sub(r"\s+", "_", ident)
    ident = ident.strip("'\"")
    return ident


def _strip_protocol_noise(text: str) -> str:
    for token in _PROTOCOL_TOKENS:
        text = text.replace(token, " ")
    return text


def _split_top_level(text: str) -> list[tuple[int, str]]:
    """Split on ';', ',' and newlines at parenthesis depth zero.

    Returns (offset, chunk) pairs so parse errors can be positioned.
    """
    chunks: list[tuple[int, str]] = []
    depth = 0
    start = 0
    for i, ch in enumerate(text):
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth = max(0, depth - 1)
        elif ch in ";,\n" and depth == 0:
            chunks.append((start, text[start:i]))
            start = i + 1
    chunks.append((start, text[start:]))
    return [(off, chunk) for off, chunk in chunks if chunk.strip()]


_CALL_RE = re.compile(r"^\s*(?P<name>[A-Za-z_][A-Za-z0-9_ ]*?)\s*\((?P<args>.*)\)\s*\.?\s*$", re.S)


def _parse_call(chunk: str, offset: int) -> Action:
    m = _CALL_RE.match(chunk)
    if m is None:
        token = chunk.strip()
        raise PlanParseError(
            f"cannot parse {token!r} as func(args) at offset {offset}", offset, token
        )
    name = _canonical_ident(m.group("name"))
    body = m.group("args").strip()

    if name == "request":
        inner_text = body.strip().strip("'\"").strip()
        if not inner_text:
            raise PlanParseError(
                f"empty request(...) at offset {offset}", offset, chunk.strip()
            )
        inner = _parse_call(inner_text, offset)
        if inner.is_request:
            raise PlanParseError(
                f"nested request(...) at offset {offset}", offset, chunk.strip()
            )
        return Action(inner.func, inner.args, is_request=True)

    if not body:
        return Action(name, ())
    args = tuple(_canonical_ident(a) for a in body.split(","))
    if any(not a for a in args):
        raise PlanParseError(
            f"empty argument in {chunk.strip()!r} at offset {offset}", offset, chunk.strip()
        )
    return Action(name, args)


def parse_plan(text: str) -> list[Action]:
    """Parse a planner "Plan" field into an ordered action list.

    Tolerates protocol tokens (``[END]``, ``[NOTHING]``), quoting inside
    ``request(...)`` and unstable casing.  Raises PlanParseError with the
    offending token and offset on garbage input; an empty or token-only
    string parses to an empty list.
    """
    text = _strip_protocol_noise(text)
    if not text.strip():
        return []
    actions = []
    for offset, chunk in _split_top_level(text):
        actions.append(_parse_call(chunk, offset))
    return actions


def validate(action: Action, agent: str, state: "WorldState") -> Optional[ValidationError]:
    """Rule-based static check of one action against the current layout.

    Checks run in a fixed, documented order: action-space membership,
    arity, argument existence, then ownership / element-kind fit.  For a
    ``request(...)`` the wrapped primitive is checked against the other
    agent's action space (the responder will execute it).  Never mutates
    ``state``; dynamic preconditions (hands, contents, timers) are the
    simulator's job.
    """
    effective_agent = other_agent(agent) if action.is_request else agent
    func, args = action.func, action.args

    if func not in ARITY:
        return ValidationError(
            ErrorCode.UNKNOWN_FUNCTION,
            f"'{func}' is not a known action; there is no such function in the game.",
        )
    if func not in ACTION_SPACES[effective_agent]:
        return ValidationError(
            ErrorCode.NOT_IN_ACTION_SPACE,
            f"'{func}' is not in {effective_agent}'s action space; "
            f"only the other agent can perform it.",
        )
    if len(args) != ARITY[func]:
        return ValidationError(
            ErrorCode.BAD_ARITY,
            f"'{func}' takes {ARITY[func]} argument(s) but got {len(args)}: "
            f"{action.inner().canonical()}.",
        )

    if func == "wait":
        if not args[0].isdigit() or int(args[0]) < 1:
            return ValidationError(
                ErrorCode.UNKNOWN_ARGUMENT,
                f"wait takes a positive integer number of timesteps, got '{args[0]}'.",
            )
        return None

    known_items = state.known_items()
    elements = state.elements

    if func == "pickup":
        obj, place = args
        if obj not in known_items:
            return ValidationError(
                ErrorCode.UNKNOWN_ARGUMENT,
                f"unknown argument '{obj}' in {action.inner().canonical()}: "
                f"no such item exists in this kitchen.",
            )
        if place not in elements:
            return ValidationError(
                ErrorCode.UNKNOWN_ARGUMENT,
                f"unknown argument '{place}' in {action.inner().canonical()}: "
                f"no element with this name exists in this kitchen.",
            )
        element = elements[place]
        if element.kind == "delivery":
            return ValidationError(
                ErrorCode.ENVIRONMENT_MISMATCH,
                f"cannot pickup from '{place}': the delivery location only accepts orders.",
            )
        if element.owner not in (effective_agent, "shared"):
            return ValidationError(
                ErrorCode.ENVIRONMENT_MISMATCH,
                f"'{place}' is not in {effective_agent}'s space and cannot be reached.",
            )
        return None

    if func in UTENSIL_ACTION_KINDS or func in ("put_obj_in_utensil", "fill_dish_with_food"):
        target = args[0]
        if target not in elements:
            return ValidationError(
                ErrorCode.UNKNOWN_ARGUMENT,
                f"unknown argument '{target}' in {action.inner().canonical()}: "
                f"no element with this name exists in this kitchen.",
            )
        element = elements[target]
        if element.kind != "utensil":
            return ValidationError(
                ErrorCode.ENVIRONMENT_MISMATCH,
                f"'{target}' is not a utensil; '{func}' only works on utensils.",
            )
        if func in UTENSIL_ACTION_KINDS:
            wanted = UTENSIL_ACTION_KINDS[func]
            if element.utensil_type != wanted:
                return ValidationError(
                    ErrorCode.ENVIRONMENT_MISMATCH,
                    f"'{func}' only works on {wanted} elements, "
                    f"but '{target}' is a {element.utensil_type}.",
                )
        if element.owner not in (effective_agent, "shared"):
            return ValidationError(
                ErrorCode.ENVIRONMENT_MISMATCH,
                f"'{target}' is not in {effective_agent}'s space and cannot be reached.",
            )
        return None

    # place_obj_on_counter / deliver take no arguments; reachability of the
    # shared counter always holds and delivery ownership is checked by the
    # simulator when executed by the wrong agent (it is Bob's element).
    if func == "deliver":
        delivery = state.find_element_of_kind("delivery")
        if delivery is not None and delivery.owner not in (effective_agent, "shared"):
            return ValidationError(
                ErrorCode.ENVIRONMENT_MISMATCH,
                f"the delivery location is not in {effective_agent}'s space.",
            )
    return None


def canonical_plan(actions: Sequence[Action]) -> str:
    return "; ".join(a.canonical() for a in actions)
