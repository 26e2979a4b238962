"""Planner backends: remote chat LLMs, recorded mocks and scripted oracles.

Every backend answers one planner call with raw text in the three-field
format (Analysis / Plan / Say) plus token usage.  Parsing and retrying
malformed output is the episode loop's job, so mocks can deliberately
return garbage.
"""

from __future__ import annotations

import json
import re
import time
from dataclasses import dataclass, field, replace as dc_replace
from pathlib import Path
from typing import Optional, Protocol

from . import actions as al
from .actions import AGENTS
from .tasks import TaskSpec
from .world import EXECUTION_ORDER, WorldState, apply_action, tick

NOTHING = "[NOTHING]"
END = "[END]"


@dataclass(frozen=True)
class BackendConfig:
    """Declarative backend selection, loadable from a JSON config file."""

    kind: str  # remote_chat | scripted_rat | recorded_mock | idle
    endpoint_url: str = ""
    model_name: str = ""
    api_key_env: str = "COOPKITCHEN_API_KEY"
    temperature: float = 0.7
    top_p: float = 1.0
    max_retries: int = 3
    request_timeout: float = 60.0
    rat_index: int = 0
    recording_path: str = ""

    @staticmethod
    def from_dict(doc: dict) -> "BackendConfig":
        known = {f for f in BackendConfig.__dataclass_fields__}
        return BackendConfig(**{k: v for k, v in doc.items() if k in known})


@dataclass(frozen=True)
class BackendReply:
    text: str
    prompt_tokens: int
    completion_tokens: int


class BackendError(Exception):
    """Unrecoverable backend failure (episode aborts with a cause)."""


class BackendTimeout(BackendError):
    pass


class PlannerBackend(Protocol):
    def plan(self, agent: str, scene: int, prompt: str) -> BackendReply: ...

    def describe(self) -> str: ...


def _estimate_tokens(text: str) -> int:
    # Deterministic stand-in for tokenizer counts: mocks and oracles must
    # produce byte-identical reports across runs.
    return max(1, len(text) // 4)


def render_planner_text(analysis: str, plan: str, say: str) -> str:
    return f"Analysis: {analysis}\nPlan: {plan}\nSay: {say}"


# --------------------------------------------------------------------------
# Scripted oracle
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ScheduledStep:
    scene: int
    action: str


@dataclass(frozen=True)
class RatSchedule:
    """A greedy parallel replay of one reference trajectory.

    Each agent attempts its next reference action every scene (agents run
    in the simulator's fixed execution order) and stalls while the
    precondition is not yet met.  ``total_timesteps`` is the scene count at
    which the order is delivered; by construction it is the task's minimum
    completion time under those references.
    """

    steps: dict[str, tuple[ScheduledStep, ...]]
    total_timesteps: int

    def action_scene(self, agent: str, action_index: int) -> int:
        return self.steps[agent][action_index].scene

    def actions_starting_at(self, agent: str, scene: int) -> list[str]:
        return [s.action for s in self.steps[agent] if s.scene == scene]


def compute_rat_schedule(task: TaskSpec, rat_index: int = 0) -> RatSchedule:
    """Replay one reference trajectory greedily and record its timeline."""
    rat = task.rats[rat_index]
    # A generous sentinel limit: scheduling must never abort on the clock.
    state = task.initial_state()
    state = dc_replace(state, time_limit=10 * task.rats[rat_index].total_actions() + 100)
    pointers = {agent: 0 for agent in AGENTS}
    steps: dict[str, list[ScheduledStep]] = {agent: [] for agent in AGENTS}
    delivered = False

    while not delivered:
        progressed = False
        for agent in EXECUTION_ORDER:
            idx = pointers[agent]
            sequence = rat.per_agent[agent]
            if idx >= len(sequence):
                continue
            action = al.parse_plan(sequence[idx])[0]
            outcome = apply_action(state, agent, action)
            if not outcome.accepted(agent):
                continue
            if outcome.error(agent) is not None:
                raise RuntimeError(
                    f"reference action '{sequence[idx]}' misfires during replay: "
                    f"{outcome.error(agent)}"
                )
            state = outcome.new_state
            steps[agent].append(ScheduledStep(state.timestep, sequence[idx]))
            pointers[agent] += 1
            progressed = True
            if outcome.delivered_correct:
                delivered = True
                break
        if not delivered:
            processing = any(el.processing for el in state.elements.values())
            if not progressed and not processing:
                stuck = {a: rat.per_agent[a][pointers[a]:][:1] for a in AGENTS}
                raise RuntimeError(
                    f"reference replay deadlocked at scene {state.timestep}; "
                    f"next actions {stuck} are never enabled"
                )
            state = tick(state)

    total = state.timestep + 1  # the delivery scene is consumed by the episode
    if any(pointers[a] != len(rat.per_agent[a]) for a in AGENTS):
        raise RuntimeError("delivery happened before the reference was fully replayed")
    return RatSchedule(
        steps={agent: tuple(entries) for agent, entries in steps.items()},
        total_timesteps=total,
    )


class ScriptedRatBackend:
    """Oracle planner that replays a reference trajectory on schedule.

    The initiator side (recipe holder) additionally emits one request per
    collaboration slot, timed to the scene where the responder is due to
    start that slot, so a full oracle episode produces exactly N initiating
    and N responding events, all with positive marginal contribution.
    """

    def __init__(self, task: TaskSpec, agent: str, rat_index: int = 0):
        self.task = task
        self.agent = agent
        self.rat_index = rat_index
        self.schedule = compute_rat_schedule(task, rat_index)
        rat = task.rats[rat_index]
        self._slot_requests: dict[int, list[str]] = {}
        for slot in rat.slots:
            if slot.responder == agent:
                continue  # the responder replays; the other side requests
            first_scene = self.schedule.action_scene(slot.responder, slot.action_indices[0])
            actions = slot.actions(rat)
            self._slot_requests.setdefault(first_scene, []).extend(actions)
        self._slot_scenes = {
            slot.action_indices[0]: slot
            for slot in rat.slots
            if slot.responder == agent
        }

    def describe(self) -> str:
        return f"scripted_rat(rat={self.rat_index})"

    def plan(self, agent: str, scene: int, prompt: str) -> BackendReply:
        own = self.schedule.actions_starting_at(self.agent, scene)
        requested = self._slot_requests.get(scene, [])

        # Group consecutive own actions belonging to one slot into one plan
        # so a multi-action response is committed as a single bundle.
        plan_actions: list[str] = []
        if own:
            first_index = next(
                i
                for i, step in enumerate(self.schedule.steps[self.agent])
                if step.scene == scene
            )
            slot = self._slot_scenes.get(first_index)
            if slot is not None:
                rat = self.task.rats[self.rat_index]
                plan_actions = list(slot.actions(rat))
            else:
                plan_actions = own

        parts = [f"request('{a}')" for a in requested] + plan_actions
        plan_text = "; ".join(parts)
        if requested:
            say = (
                "Please perform: " + "; ".join(requested) + f". {END}"
            )
            analysis = "The next recipe step needs the other side of the kitchen."
        else:
            say = NOTHING
            analysis = "Following the planned trajectory." if plan_actions else "Waiting."
        text = render_planner_text(analysis, plan_text, say)
        return BackendReply(text, _estimate_tokens(prompt), _estimate_tokens(text))


class RatFollowerBackend:
    """Pace-tolerant oracle: always plans its next unexecuted reference action.

    Progress is read from the accepted-action history echoed in the prompt,
    so the follower re-emits an action until the environment accepts it and
    never loses its place, whatever the partner's pace.  Suited to live
    sessions with humans; the schedule-replay oracle is the one that proves
    minimum completion times.  Assumes the history window is wide enough to
    hold the whole reference (shipped tasks are far below the default cap).
    """

    _HISTORY_RE = re.compile(r"Successful Action History: \[(.*)\]")

    def __init__(self, task: TaskSpec, agent: str, rat_index: int = 0):
        self.task = task
        self.agent = agent
        self.sequence = task.rats[rat_index].per_agent[agent]

    def describe(self) -> str:
        return "rat_follower"

    def plan(self, agent: str, scene: int, prompt: str) -> BackendReply:
        match = self._HISTORY_RE.search(prompt)
        executed = 0
        if match and match.group(1).strip():
            executed = len(al.parse_plan(match.group(1)))
        if executed >= len(self.sequence):
            text = render_planner_text("All reference actions done.", "", NOTHING)
        else:
            text = render_planner_text(
                "Continuing the reference trajectory.",
                self.sequence[executed],
                NOTHING,
            )
        return BackendReply(text, _estimate_tokens(prompt), _estimate_tokens(text))


# --------------------------------------------------------------------------
# Mocks
# --------------------------------------------------------------------------


class IdleBackend:
    """Planner that always waits; useful as a lower bound."""

    def __init__(self, action: str = "wait(1)"):
        self.action = action

    def describe(self) -> str:
        return f"idle({self.action})"

    def plan(self, agent: str, scene: int, prompt: str) -> BackendReply:
        text = render_planner_text("Standing by.", self.action, NOTHING)
        return BackendReply(text, _estimate_tokens(prompt), _estimate_tokens(text))


class RecordedMockBackend:
    """Deterministic replay of canned planner outputs.

    The recording is a JSON list of entries keyed by (agent, timestep);
    multiple entries for the same key are consumed in order across
    successive planner calls (communication turns and error retries).  An
    entry is either the three structured fields or a raw ``text`` blob,
    which lets tests replay malformed output.  When a key runs dry the
    backend idles with an empty plan.
    """

    def __init__(self, entries: list[dict]):
        self._queues: dict[tuple[str, int], list[str]] = {}
        for entry in entries:
            key = (entry["agent"], int(entry["timestep"]))
            if "text" in entry:
                text = entry["text"]
            else:
                text = render_planner_text(
                    entry.get("analysis", ""),
                    entry.get("plan", ""),
                    entry.get("say", NOTHING),
                )
            self._queues.setdefault(key, []).append(text)
        self._cursors: dict[tuple[str, int], int] = {}

    @staticmethod
    def from_file(path: str | Path) -> "RecordedMockBackend":
        return RecordedMockBackend(json.loads(Path(path).read_text()))

    def describe(self) -> str:
        return "recorded_mock"

    def plan(self, agent: str, scene: int, prompt: str) -> BackendReply:
        key = (agent, scene)
        queue = self._queues.get(key, [])
        cursor = self._cursors.get(key, 0)
        if cursor < len(queue):
            text = queue[cursor]
            self._cursors[key] = cursor + 1
        elif queue:
            text = queue[-1]  # repeat the last recorded turn (stable retries)
        else:
            text = render_planner_text("", "", NOTHING)
        return BackendReply(text, _estimate_tokens(prompt), _estimate_tokens(text))


# --------------------------------------------------------------------------
# Remote chat-completion backend
# --------------------------------------------------------------------------


class RemoteChatBackend:
    """Chat-completion client over the de-facto JSON wire contract.

    POSTs ``{endpoint_url}/chat/completions`` with a role/content message
    list; any server speaking that contract works unchanged.  Transient
    failures are retried with exponential backoff.
    """

    def __init__(self, config: BackendConfig, session=None):
        import os

        import requests

        if not config.endpoint_url or not config.model_name:
            raise ValueError("remote_chat needs endpoint_url and model_name")
        self.config = config
        self._session = session if session is not None else requests.Session()
        self._api_key = os.environ.get(config.api_key_env, "")

    def describe(self) -> str:
        return f"remote_chat({self.config.model_name})"

    def plan(self, agent: str, scene: int, prompt: str) -> BackendReply:
        payload = {
            "model": self.config.model_name,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.config.temperature,
            "top_p": self.config.top_p,
        }
        headers = {"Content-Type": "application/json"}
        if self._api_key:
            headers["Authorization"] = f"Bearer {self._api_key}"
        url = self.config.endpoint_url.rstrip("/") + "/chat/completions"

        last_error: Optional[Exception] = None
        for attempt in range(self.config.max_retries + 1):
            try:
                response = self._session.post(
                    url, json=payload, headers=headers, timeout=self.config.request_timeout
                )
                response.raise_for_status()
                doc = response.json()
                text = doc["choices"][0]["message"]["content"]
                usage = doc.get("usage", {})
                return BackendReply(
                    text,
                    int(usage.get("prompt_tokens", _estimate_tokens(prompt))),
                    int(usage.get("completion_tokens", _estimate_tokens(text))),
                )
            except Exception as exc:  # noqa: BLE001 - treat transport errors uniformly
                last_error = exc
                if attempt < self.config.max_retries:
                    time.sleep(min(2.0**attempt, 8.0))
        raise BackendTimeout(
            f"chat completion failed after {self.config.max_retries + 1} attempts: {last_error}"
        )


def build_backend(config: BackendConfig, task: TaskSpec, agent: str) -> PlannerBackend:
    if config.kind == "scripted_rat":
        return ScriptedRatBackend(task, agent, config.rat_index)
    if config.kind == "rat_follower":
        return RatFollowerBackend(task, agent, config.rat_index)
    if config.kind == "recorded_mock":
        if not config.recording_path:
            raise ValueError("recorded_mock needs recording_path")
        return RecordedMockBackend.from_file(config.recording_path)
    if config.kind == "idle":
        return IdleBackend()
    if config.kind == "remote_chat":
        return RemoteChatBackend(config)
    raise ValueError(f"unknown backend kind '{config.kind}'")
