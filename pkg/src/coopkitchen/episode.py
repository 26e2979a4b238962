"""Episode orchestration: the plan / communicate / act / tick loop.

One scene (timestep) runs as:

1. Planning.  Each agent with an empty action queue is prompted.  A
   nonempty Say opens the communication channel, where the agents speak in
   alternation until one of them closes with [END] (the other gets a single
   reply opportunity), someone has nothing to say, or the round cap is hit.
   request('...') entries found in a Plan are scored as initiating events
   against the responder's history and delivered to the responder, whose
   next output of the scene is scored as the responding event.
2. Execution.  In the simulator's fixed order each agent attempts the head
   of its queue.  A rejection feeds the validation error back into one
   re-prompt, up to the retry cap, after which the agent idles this scene.
3. Tick.  Processing timers advance; the episode ends on correct delivery
   or when the clock reaches the time limit.

Histories record environment-accepted actions only; rejected attempts are
logged separately and never scored.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace as dc_replace
from typing import Optional

from . import actions as al
from .actions import ALICE, BOB, Action, other_agent
from .backends import NOTHING, END, BackendError, PlannerBackend
from .metrics import CollaborationEvent, MetricConfig, TrajectoryRecord, ic, ites, pc, rc, tes
from .prompts import build_prompt
from .tasks import TaskSpec, required_collaborations
from .world import EXECUTION_ORDER, WorldState, apply_action, tick

PLANNING_ORDER = (BOB, ALICE)  # the knowledge holder speaks first

REPORT_SCHEMA_VERSION = "1"


class PlannerFormatError(ValueError):
    """Planner output does not carry the required fields."""


class BudgetExceeded(RuntimeError):
    """Configured token budget for the episode was spent."""


@dataclass(frozen=True)
class PlannerOutput:
    analysis: str
    say: str
    plan: str


_FIELD_RE = re.compile(r"^\s*(analysis|plan|say)\s*:\s*(.*)$", re.IGNORECASE)


def parse_planner_output(text: str) -> PlannerOutput:
    """Extract the Analysis / Plan / Say fields from raw planner text.

    The Plan field is mandatory; a missing Say means [NOTHING].  Values may
    span multiple lines, up to the next field marker.
    """
    fields: dict[str, list[str]] = {}
    current: Optional[str] = None
    for line in text.splitlines():
        match = _FIELD_RE.match(line)
        if match:
            current = match.group(1).lower()
            fields.setdefault(current, []).append(match.group(2))
        elif current is not None:
            fields[current].append(line)
    if "plan" not in fields:
        raise PlannerFormatError(
            "output must contain 'Analysis:', 'Plan:' and 'Say:' fields; no Plan found"
        )
    def joined(name: str, default: str) -> str:
        if name not in fields:
            return default
        return "\n".join(fields[name]).strip()

    return PlannerOutput(
        analysis=joined("analysis", ""),
        say=joined("say", NOTHING) or NOTHING,
        plan=joined("plan", ""),
    )


@dataclass
class EpisodeConfig:
    gamma: float = 1.5
    beta: float = 0.95
    seed: int = 0
    max_rounds: int = 4
    max_retries: int = 3
    memory_window: int = 50
    reflection_window: int = 5
    token_budget: Optional[int] = None


class EpisodeObserver:
    """No-op hooks for live consumers (the session service streams these)."""

    def on_scene(self, state: WorldState) -> None: ...

    def on_say(self, scene: int, speaker: str, text: str) -> None: ...

    def on_accepted(self, scene: int, agent: str, action: str) -> None: ...

    def on_rejected(self, scene: int, agent: str, action: str, error: str) -> None: ...

    def on_end(self, report: "EpisodeReport") -> None: ...


@dataclass
class EpisodeReport:
    schema_version: str
    task_name: str
    level: int
    gamma: float
    beta: float
    seed: int
    backends: dict[str, str]
    success: bool
    failure_cause: Optional[str]
    timesteps_used: int
    time_limit: int
    min_timesteps: int
    histories: dict[str, list[list]]
    rejected: dict[str, list[list]]
    events: list[dict]
    transcript: list[list]
    tokens: dict[str, dict[str, int]]
    metrics: dict

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "task_name": self.task_name,
            "level": self.level,
            "gamma": self.gamma,
            "beta": self.beta,
            "seed": self.seed,
            "backends": self.backends,
            "success": self.success,
            "failure_cause": self.failure_cause,
            "timesteps_used": self.timesteps_used,
            "time_limit": self.time_limit,
            "min_timesteps": self.min_timesteps,
            "histories": self.histories,
            "rejected": self.rejected,
            "events": self.events,
            "transcript": self.transcript,
            "tokens": self.tokens,
            "metrics": self.metrics,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")) + "\n"


def _event_dict(event: CollaborationEvent) -> dict:
    return {
        "index": event.index,
        "kind": event.kind,
        "initiator": event.initiator,
        "scored_against": event.scored_against,
        "actions": list(event.actions),
        "ites": event.ites_value,
        "positive": event.positive,
        "history_len": event.history_len,
        "timestep": event.timestep,
    }


class _EpisodeRunner:
    def __init__(
        self,
        task: TaskSpec,
        backends: dict[str, PlannerBackend],
        config: EpisodeConfig,
        observer: Optional[EpisodeObserver] = None,
    ):
        self.task = task
        self.backends = backends
        self.config = config
        self.observer = observer if observer is not None else EpisodeObserver()
        self.metric_config = MetricConfig(beta=config.beta)
        self.state: WorldState = task.initial_state(config.gamma)
        self.records = {agent: TrajectoryRecord(agent) for agent in PLANNING_ORDER}
        self.rejected: dict[str, list[list]] = {agent: [] for agent in PLANNING_ORDER}
        self.reflections: dict[str, list[str]] = {agent: [] for agent in PLANNING_ORDER}
        self.pending: dict[str, list[Action]] = {agent: [] for agent in PLANNING_ORDER}
        self.inbox: dict[str, list[tuple[str, tuple[str, ...]]]] = {
            agent: [] for agent in PLANNING_ORDER
        }
        self.events: list[CollaborationEvent] = []
        self.transcript: list[list] = []
        self.tokens = {
            agent: {"prompt": 0, "completion": 0} for agent in PLANNING_ORDER
        }
        self.rat_sets = {agent: task.rat_set(agent) for agent in PLANNING_ORDER}
        self.n_required = len(required_collaborations(task))
        self.success = False
        self.failure_cause: Optional[str] = None

    # -- plumbing ---------------------------------------------------------

    def _conversation_lines(self) -> list[str]:
        return [f"{speaker.capitalize()}: {text}" for _, speaker, text in self.transcript]

    def _sync_pending(self, agent: str) -> None:
        plan = tuple(a.canonical() for a in self.pending[agent])
        agents = dict(self.state.agents)
        agents[agent] = dc_replace(agents[agent], pending_plan=plan)
        self.state = dc_replace(self.state, agents=agents)

    def _charge_tokens(self, agent: str, prompt_tokens: int, completion_tokens: int) -> None:
        self.tokens[agent]["prompt"] += prompt_tokens
        self.tokens[agent]["completion"] += completion_tokens
        if self.config.token_budget is not None:
            used = sum(t["prompt"] + t["completion"] for t in self.tokens.values())
            if used > self.config.token_budget:
                raise BudgetExceeded(f"token budget {self.config.token_budget} exceeded")

    def _call_backend(self, agent: str, scene: int, error_feedback: Optional[str]) -> str:
        bundle = build_prompt(
            agent,
            self.state,
            self.task,
            memory=self.records[agent].actions,
            reflections=self.reflections[agent],
            conversation=self._conversation_lines(),
            error_feedback=error_feedback,
            memory_window=self.config.memory_window,
            reflection_window=self.config.reflection_window,
        )
        reply = self.backends[agent].plan(agent, scene, bundle.render())
        self._charge_tokens(agent, reply.prompt_tokens, reply.completion_tokens)
        return reply.text

    def _plan_step(self, agent: str, scene: int, error_feedback: Optional[str]) -> Optional[PlannerOutput]:
        """One planner call with format-error retries; None after giving up."""
        feedback = error_feedback
        for _ in range(self.config.max_retries + 1):
            text = self._call_backend(agent, scene, feedback)
            try:
                return parse_planner_output(text)
            except PlannerFormatError as exc:
                feedback = str(exc)
        return None

    # -- events -----------------------------------------------------------

    def _record_request_event(self, initiator: str, requests: list[Action], scene: int) -> None:
        responder = other_agent(initiator)
        bundle = tuple(a.inner().canonical() for a in requests)
        history = list(self.records[responder].actions)
        value = ites(bundle, history, self.rat_sets[responder], self.metric_config)
        self.events.append(
            CollaborationEvent(
                index=len(self.events),
                kind="request",
                initiator=initiator,
                scored_against=responder,
                actions=bundle,
                ites_value=value,
                history_len=len(history),
                timestep=scene,
            )
        )
        self.inbox[responder].append((initiator, bundle))

    def _record_response_event(self, responder: str, executables: list[Action], scene: int) -> None:
        if not self.inbox[responder]:
            return
        initiator = self.inbox[responder][0][0]
        self.inbox[responder].clear()
        bundle = tuple(a.canonical() for a in executables)
        history = list(self.records[responder].actions)
        value = ites(bundle, history, self.rat_sets[responder], self.metric_config)
        self.events.append(
            CollaborationEvent(
                index=len(self.events),
                kind="response",
                initiator=initiator,
                scored_against=responder,
                actions=bundle,
                ites_value=value,
                history_len=len(history),
                timestep=scene,
            )
        )

    # -- planning ---------------------------------------------------------

    def _plan_and_commit(
        self, agent: str, scene: int, error_feedback: Optional[str] = None
    ) -> Optional[PlannerOutput]:
        """Prompt one agent and stage a validated plan.

        Static validation failures (parse errors, unknown functions or
        arguments, space violations) each trigger exactly one re-prompt
        carrying the error message, up to the retry cap.  Returns the last
        parsed output, or None when the agent gave up and idles.
        """
        feedback = error_feedback
        output: Optional[PlannerOutput] = None
        for _ in range(self.config.max_retries + 1):
            output = self._plan_step(agent, scene, feedback)
            if output is None:
                return None
            try:
                parsed = al.parse_plan(output.plan)
            except al.PlanParseError as exc:
                self.rejected[agent].append([scene, output.plan, str(exc.error)])
                self.reflections[agent].append(
                    f"My plan at scene {scene} did not parse: {exc.error.message}"
                )
                feedback = str(exc.error)
                continue

            requests = [a for a in parsed if a.is_request]
            executables = [a for a in parsed if not a.is_request]
            if requests:
                self._record_request_event(agent, requests, scene)
            self._record_response_event(agent, executables, scene)

            invalid = None
            for action in executables:
                error = al.validate(action, agent, self.state)
                if error is not None:
                    invalid = (action, error)
                    break
            if invalid is None:
                self.pending[agent] = executables
                self._sync_pending(agent)
                return output
            action, error = invalid
            self.rejected[agent].append([scene, action.canonical(), str(error)])
            self.reflections[agent].append(
                f"'{action.canonical()}' was rejected: {error.message}"
            )
            self.observer.on_rejected(scene, agent, action.canonical(), str(error))
            feedback = str(error)
        self.pending[agent] = []
        self._sync_pending(agent)
        return output

    def _run_channel(self, initiator: str, initiator_say: str, scene: int, planned: set) -> None:
        turns = 1
        speaker, say = initiator, initiator_say
        closing = END in say
        while turns < self.config.max_rounds:
            if say.strip() == NOTHING:
                return
            responder = other_agent(speaker)
            output = self._plan_and_commit(responder, scene)
            planned.add(responder)
            turns += 1
            if output is None:
                return
            if output.say.strip() != NOTHING:
                self.transcript.append([scene, responder, output.say])
                self.observer.on_say(scene, responder, output.say)
            if closing:
                return
            speaker, say = responder, output.say
            closing = END in say
        return

    def _planning_phase(self, scene: int) -> None:
        planned: set[str] = set()
        for agent in PLANNING_ORDER:
            if agent in planned or self.pending[agent]:
                continue
            output = self._plan_and_commit(agent, scene)
            planned.add(agent)
            if output is None:
                continue
            if output.say.strip() != NOTHING:
                self.transcript.append([scene, agent, output.say])
                self.observer.on_say(scene, agent, output.say)
                self._run_channel(agent, output.say, scene, planned)

    # -- execution --------------------------------------------------------

    def _execute_agent(self, agent: str, scene: int) -> None:
        retries = 0
        while self.pending[agent]:
            action = self.pending[agent][0]
            outcome = apply_action(self.state, agent, action)
            if outcome.accepted(agent):
                self.pending[agent].pop(0)
                self.state = outcome.new_state
                self._sync_pending(agent)
                self.records[agent].append(action.canonical(), scene)
                self.observer.on_accepted(scene, agent, action.canonical())
                error = outcome.error(agent)
                if error is not None:  # wrong delivery: executed but reported
                    self.rejected[agent].append([scene, action.canonical(), str(error)])
                    self.reflections[agent].append(
                        f"'{action.canonical()}' misfired: {error.message}"
                    )
                if outcome.delivered_correct:
                    self.success = True
                return
            error = outcome.error(agent)
            self.rejected[agent].append([scene, action.canonical(), str(error)])
            self.reflections[agent].append(
                f"'{action.canonical()}' was rejected: {error.message}"
            )
            self.observer.on_rejected(scene, agent, action.canonical(), str(error))
            if retries >= self.config.max_retries:
                self.pending[agent] = []
                self._sync_pending(agent)
                return
            retries += 1
            output = self._plan_and_commit(agent, scene, error_feedback=str(error))
            if output is None:
                return

    # -- main loop ---------------------------------------------------------

    def run(self) -> EpisodeReport:
        time_limit = self.state.time_limit
        timesteps_used = 0
        try:
            while True:
                scene = self.state.timestep
                self.observer.on_scene(self.state)
                self._planning_phase(scene)
                for agent in EXECUTION_ORDER:
                    self._execute_agent(agent, scene)
                    if self.success:
                        break
                if self.success:
                    timesteps_used = scene + 1
                    break
                self.state = tick(self.state)
                if self.state.timestep >= time_limit:
                    self.failure_cause = "time_limit"
                    timesteps_used = self.state.timestep
                    break
        except BudgetExceeded as exc:
            self.failure_cause = f"budget_exceeded: {exc}"
            timesteps_used = self.state.timestep
        except BackendError as exc:
            self.failure_cause = f"backend_error: {exc}"
            timesteps_used = self.state.timestep

        report = self._report(timesteps_used, time_limit)
        self.observer.on_end(report)
        return report

    def _report(self, timesteps_used: int, time_limit: int) -> EpisodeReport:
        tes_by_agent = {
            agent: tes(self.records[agent].actions, self.rat_sets[agent], self.metric_config)
            for agent in PLANNING_ORDER
        }
        pc_value = pc(
            {agent: self.records[agent].actions for agent in PLANNING_ORDER},
            self.rat_sets,
            self.metric_config,
        )
        request_values = [e.ites_value for e in self.events if e.kind == "request"]
        response_values = [e.ites_value for e in self.events if e.kind == "response"]
        metrics_doc = {
            "sr": 1 if self.success else 0,
            "pc": pc_value,
            "tes": {agent: tes_by_agent[agent] for agent in sorted(tes_by_agent)},
            "ic": ic(request_values, self.n_required),
            "rc": rc(response_values, self.n_required),
            "n_required": self.n_required,
            "per_event_ites": [e.ites_value for e in self.events],
        }
        return EpisodeReport(
            schema_version=REPORT_SCHEMA_VERSION,
            task_name=self.task.name,
            level=self.task.level,
            gamma=self.config.gamma,
            beta=self.config.beta,
            seed=self.config.seed,
            backends={a: self.backends[a].describe() for a in sorted(self.backends)},
            success=self.success,
            failure_cause=self.failure_cause,
            timesteps_used=timesteps_used,
            time_limit=time_limit,
            min_timesteps=self.task.min_timesteps,
            histories={
                agent: [[t, a] for a, t in zip(rec.actions, rec.timesteps)]
                for agent, rec in sorted(self.records.items())
            },
            rejected={agent: list(rows) for agent, rows in sorted(self.rejected.items())},
            events=[_event_dict(e) for e in self.events],
            transcript=[list(row) for row in self.transcript],
            tokens={agent: dict(counts) for agent, counts in sorted(self.tokens.items())},
            metrics=metrics_doc,
        )


def run_episode(
    task: TaskSpec,
    backends: dict[str, PlannerBackend],
    config: Optional[EpisodeConfig] = None,
    observer: Optional[EpisodeObserver] = None,
) -> EpisodeReport:
    """Run one full episode and return its report.

    Deterministic given the task, deterministic backends and the config;
    two runs with the same seed and recorded-mock backends produce
    byte-identical reports.
    """
    if config is None:
        config = EpisodeConfig()
    missing = {BOB, ALICE} - set(backends)
    if missing:
        raise ValueError(f"backends missing for agents: {sorted(missing)}")
    return _EpisodeRunner(task, backends, config, observer).run()
