"""Live session service: REST endpoints plus a long-poll message stream.

A session binds one task to a role assignment (human, scripted oracle,
recorded mock or remote LLM per agent) and an optional per-step time limit
of 10, 15 or 20 seconds.  The episode loop runs server-side; human roles
are bridged through a blocking backend that waits for a plan_submit and,
when the scene deadline passes first, auto-submits wait(1) and logs a
DeadlineViolation.  The server is authoritative: a submission arriving
after the broadcast deadline is never applied to the world.

Wire protocol (versioned, documented in docs/wire_protocol.md): every
message is ``{"v": 1, "seq": n, "kind": ..., "agent_id": ..., "payload"
...}`` with kinds state_broadcast, prompt_view, say, timer, verdict and
episode_end.  Clients poll GET /sessions/<id>/messages?since=<seq>.
"""

from __future__ import annotations

import json
import queue
import threading
import time
import uuid
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Optional
from urllib.parse import parse_qs, urlparse

from .actions import ACTION_SPACES, AGENTS, ARITY, other_agent
from .backends import (
    BackendConfig,
    BackendError,
    BackendReply,
    build_backend,
    render_planner_text,
)
from .episode import EpisodeConfig, EpisodeObserver, EpisodeReport, run_episode
from .prompts import RECIPE_HOLDER, build_prompt
from .tasks import TaskSpec, catalog
from .world import WorldState, observe, state_to_dict

PROTOCOL_VERSION = 1
STEP_LIMIT_CHOICES = (10, 15, 20)


class SessionNotFound(KeyError):
    pass


class SessionError(ValueError):
    pass


def _now_ms() -> int:
    return int(time.time() * 1000)


@dataclass
class _Message:
    seq: int
    kind: str
    agent_id: Optional[str]
    payload: dict

    def to_dict(self, session_id: str) -> dict:
        return {
            "v": PROTOCOL_VERSION,
            "seq": self.seq,
            "kind": self.kind,
            "session_id": session_id,
            "agent_id": self.agent_id,
            "payload": self.payload,
        }


class Session:
    """One live episode with its message log and human bridges."""

    def __init__(
        self,
        session_id: str,
        task: TaskSpec,
        roles: dict[str, dict],
        gamma: float,
        step_limit_ms: Optional[int],
        seed: int = 0,
    ):
        self.id = session_id
        self.task = task
        self.roles = roles
        self.gamma = gamma
        self.step_limit_ms = step_limit_ms
        self.seed = seed
        self.status = "waiting"
        self.claimed: set[str] = set()
        self.lock = threading.RLock()
        self.message_cond = threading.Condition(self.lock)
        self.messages: list[_Message] = []
        self.report: Optional[EpisodeReport] = None
        self.human_agents = {a for a, doc in roles.items() if doc.get("kind") == "human"}
        self._queues: dict[str, queue.Queue] = {a: queue.Queue() for a in self.human_agents}
        self.scene_deadline_ms: Optional[int] = None
        self._deadline_scene: Optional[int] = None
        self.current_scene = 0
        self.last_state: WorldState = task.initial_state(gamma)
        self.closed = threading.Event()
        self._thread: Optional[threading.Thread] = None
        self.violations: list[dict] = []

    # -- message log -------------------------------------------------------

    def post(self, kind: str, agent_id: Optional[str], payload: dict) -> None:
        with self.message_cond:
            msg = _Message(len(self.messages), kind, agent_id, payload)
            self.messages.append(msg)
            self.message_cond.notify_all()

    def messages_since(
        self, since: int, timeout: float, role: Optional[str] = None
    ) -> tuple[list[dict], int]:
        """Messages after ``since`` plus the next cursor value.

        With ``role`` set, another agent's prompt_view messages are
        withheld: a prompt embeds everything that agent knows (Bob's
        carries the recipe), and a client must never see more than its own
        role would.  The cursor still advances past withheld messages.
        """
        deadline = time.time() + timeout
        with self.message_cond:
            while len(self.messages) <= since:
                remaining = deadline - time.time()
                if remaining <= 0:
                    break
                self.message_cond.wait(remaining)
            raw = self.messages[since:]
            next_since = since + len(raw)
            visible = [
                m
                for m in raw
                if role is None
                or m.kind != "prompt_view"
                or m.agent_id == role
            ]
            return [m.to_dict(self.id) for m in visible], next_since

    # -- deadline handling ---------------------------------------------------

    def _ensure_deadline(self, scene: int) -> Optional[int]:
        with self.lock:
            if self.step_limit_ms is None:
                return None
            if self._deadline_scene != scene:
                self._deadline_scene = scene
                self.scene_deadline_ms = _now_ms() + self.step_limit_ms
                self.post(
                    "timer",
                    None,
                    {"scene": scene, "deadline_epoch_ms": self.scene_deadline_ms},
                )
            return self.scene_deadline_ms

    def submit(self, role: str, plan: str, say: str, scene: Optional[int] = None) -> dict:
        """Route a human submission into the episode; server-side deadline.

        A submission may target a specific scene; one that arrives for an
        already-finished scene, or after the current scene's broadcast
        deadline, is never applied to the world and is logged as a
        DeadlineViolation.
        """
        with self.lock:
            if role not in self.human_agents:
                raise SessionError(f"role '{role}' is not a human role in this session")
            if self.status != "running":
                raise SessionError(f"session is {self.status}; no submissions accepted")
            deadline = self.scene_deadline_ms
            stale = scene is not None and scene != self.current_scene
            expired = deadline is not None and _now_ms() > deadline
            if stale or expired:
                violation = {
                    "scene": self.current_scene if scene is None else scene,
                    "agent": role,
                    "error": "DeadlineViolation",
                    "detail": "plan_submit arrived after the scene deadline",
                }
                self.violations.append(violation)
                self.post("verdict", role, {"accepted": False, **violation})
                return {"accepted": False, "error": "DeadlineViolation"}
        self._queues[role].put({"plan": plan, "say": say})
        return {"accepted": True}

    # -- episode thread ------------------------------------------------------

    def start(self) -> None:
        with self.lock:
            if self._thread is not None:
                return
            self.status = "running"
            self._thread = threading.Thread(target=self._run, daemon=True)
            self._thread.start()

    def close(self) -> None:
        self.closed.set()
        with self.lock:
            if self.status in ("waiting", "running"):
                self.status = "closed"
        for q in self._queues.values():
            q.put(None)  # unblock any waiting bridge

    def _run(self) -> None:
        backends = {}
        for agent in AGENTS:
            doc = self.roles[agent]
            if doc.get("kind") == "human":
                backends[agent] = _HumanBridgeBackend(self, agent)
            else:
                backends[agent] = build_backend(
                    BackendConfig.from_dict(doc), self.task, agent
                )
        config = EpisodeConfig(gamma=self.gamma, seed=self.seed)
        observer = _SessionObserver(self)
        try:
            report = run_episode(self.task, backends, config, observer)
            with self.lock:
                self.report = report
                if self.status != "closed":
                    self.status = "finished"
        except Exception as exc:  # noqa: BLE001 - surface the failure to clients
            with self.lock:
                if self.status != "closed":
                    self.status = "failed"
            self.post("episode_end", None, {"error": str(exc)})

    # -- views ---------------------------------------------------------------

    def view(self, role: str) -> dict:
        """Client session view with strict information parity.

        The payload carries exactly what the corresponding agent prompt
        would contain: the recipe appears only for the knowledge-holding
        role.
        """
        if role not in AGENTS:
            raise SessionError(f"unknown role '{role}'")
        with self.lock:
            state = self.last_state
            recipe = self.task.recipe if role == RECIPE_HOLDER else None
            transcript = [
                m.to_dict(self.id)
                for m in self.messages
                if m.kind == "say"
            ]
            return {
                "session_id": self.id,
                "role": role,
                "status": self.status,
                "task": self.task.name,
                "level": self.task.level,
                "order": self.task.order,
                "recipe": recipe,
                "scene": state.timestep,
                "deadline_epoch_ms": self.scene_deadline_ms,
                "step_limit_ms": self.step_limit_ms,
                "observation": observe(state, role),
                "world": state_to_dict(state),
                "transcript": transcript,
                "palette": palette_for(role, state),
            }


def palette_for(role: str, state: WorldState) -> dict:
    """Structured action palette: the role's action space with the argument
    choices the current layout offers.  Entries another role owns are never
    listed, so an invalid combination cannot be composed."""
    reachable = [
        el for el in state.elements.values() if el.owner in (role, "shared")
    ]
    items = sorted(state.known_items())
    utensils = [el.id for el in reachable if el.kind == "utensil"]
    picks = [el.id for el in reachable if el.kind in ("dispenser", "counter", "utensil")]
    arg_options = {
        "pickup": [items, sorted(picks)],
        "put_obj_in_utensil": [sorted(utensils)],
        "fill_dish_with_food": [sorted(utensils)],
        "cut": [sorted(e.id for e in reachable if e.utensil_type == "chopping_board")],
        "stir": [sorted(e.id for e in reachable if e.utensil_type == "blender")],
        "cook": [sorted(e.id for e in reachable if e.utensil_type == "pot")],
        "bake": [sorted(e.id for e in reachable if e.utensil_type == "oven")],
        "wait": [["1"]],
        "place_obj_on_counter": [],
        "deliver": [],
    }
    functions = []
    for func in ACTION_SPACES[role]:
        functions.append(
            {
                "name": func,
                "arity": ARITY[func],
                "arg_options": arg_options.get(func, []),
            }
        )
    return {"functions": functions, "requestable": list(ACTION_SPACES[other_agent(role)])}


class _SessionObserver(EpisodeObserver):
    def __init__(self, session: Session):
        self.session = session

    def on_scene(self, state: WorldState) -> None:
        s = self.session
        if s.closed.is_set():
            raise BackendError("session closed")
        with s.lock:
            s.current_scene = state.timestep
            s.last_state = state
        s.post("state_broadcast", None, {"scene": state.timestep, "state": state_to_dict(state)})
        s._ensure_deadline(state.timestep)

    def on_say(self, scene: int, speaker: str, text: str) -> None:
        self.session.post("say", speaker, {"scene": scene, "text": text})

    def on_accepted(self, scene: int, agent: str, action: str) -> None:
        self.session.post(
            "verdict", agent, {"accepted": True, "scene": scene, "action": action}
        )

    def on_rejected(self, scene: int, agent: str, action: str, error: str) -> None:
        self.session.post(
            "verdict",
            agent,
            {"accepted": False, "scene": scene, "action": action, "error": error},
        )

    def on_end(self, report: EpisodeReport) -> None:
        self.session.post(
            "episode_end",
            None,
            {"success": report.success, "metrics": report.metrics, "report": report.to_dict()},
        )


class _HumanBridgeBackend:
    """Planner backend that waits for a human submission until the deadline."""

    def __init__(self, session: Session, agent: str):
        self.session = session
        self.agent = agent

    def describe(self) -> str:
        return "human_session"

    def plan(self, agent: str, scene: int, prompt: str) -> BackendReply:
        session = self.session
        if session.closed.is_set():
            raise BackendError("session closed")
        deadline_ms = session._ensure_deadline(scene)
        session.post(
            "prompt_view",
            self.agent,
            {"scene": scene, "prompt": prompt, "deadline_epoch_ms": deadline_ms},
        )
        timeout = None
        if deadline_ms is not None:
            timeout = max(0.0, deadline_ms / 1000.0 - time.time())
        try:
            submission = session._queues[self.agent].get(timeout=timeout)
        except queue.Empty:
            violation = {
                "scene": scene,
                "agent": self.agent,
                "error": "DeadlineViolation",
                "detail": "no plan_submit before the deadline; wait(1) auto-submitted",
            }
            with session.lock:
                session.violations.append(violation)
            session.post("verdict", self.agent, {"accepted": False, **violation})
            text = render_planner_text("(deadline missed)", "wait(1)", "[NOTHING]")
            return BackendReply(text, max(1, len(prompt) // 4), 8)
        if submission is None:
            raise BackendError("session closed")
        text = render_planner_text(
            "(human)", submission.get("plan", ""), submission.get("say") or "[NOTHING]"
        )
        return BackendReply(text, max(1, len(prompt) // 4), max(1, len(text) // 4))


class SessionManager:
    def __init__(self, registry_dir: Optional[str] = None, default_step_limit: Optional[int] = None):
        self.registry_dir = registry_dir
        self.default_step_limit = default_step_limit
        self.sessions: dict[str, Session] = {}
        self.lock = threading.Lock()
        self._tasks = {t.name: t for t in catalog(registry_dir)}

    def create(self, doc: dict) -> Session:
        task_name = doc.get("task")
        if task_name not in self._tasks:
            raise SessionError(f"unknown task '{task_name}'")
        step_limit_ms: Optional[int]
        if "step_limit_ms" in doc and doc["step_limit_ms"] not in (0, None):
            # Practice/testing override: any positive millisecond budget.
            step_limit_ms = int(doc["step_limit_ms"])
            if step_limit_ms <= 0:
                raise SessionError("step_limit_ms must be positive")
        else:
            step_limit = doc.get("step_limit_seconds", self.default_step_limit)
            if step_limit in (0, None, "unlimited"):
                step_limit_ms = None
            else:
                step_limit = int(step_limit)
                if step_limit not in STEP_LIMIT_CHOICES:
                    raise SessionError(
                        f"step_limit_seconds must be one of {STEP_LIMIT_CHOICES} or unlimited"
                    )
                step_limit_ms = step_limit * 1000
        roles_doc = doc.get("roles", {})
        roles = {}
        for agent in AGENTS:
            entry = roles_doc.get(agent, {"kind": "scripted_rat"})
            if isinstance(entry, str):
                entry = {"kind": entry}
            roles[agent] = entry
        session = Session(
            session_id=uuid.uuid4().hex[:12],
            task=self._tasks[task_name],
            roles=roles,
            gamma=float(doc.get("gamma", 1.5)),
            step_limit_ms=step_limit_ms,
            seed=int(doc.get("seed", 0)),
        )
        with self.lock:
            self.sessions[session.id] = session
        if not session.human_agents:
            session.start()
        return session

    def get(self, session_id: str) -> Session:
        with self.lock:
            if session_id not in self.sessions:
                raise SessionNotFound(session_id)
            return self.sessions[session_id]

    def join(self, session_id: str, role: str) -> Session:
        session = self.get(session_id)
        with session.lock:
            if role not in AGENTS:
                raise SessionError(f"unknown role '{role}'")
            if role in session.claimed:
                raise SessionError(f"role '{role}' is already claimed")
            session.claimed.add(role)
            humans_ready = session.human_agents <= session.claimed
        if humans_ready and session.status == "waiting":
            session.start()
        return session

    def close(self, session_id: str) -> None:
        self.get(session_id).close()

    def list(self) -> list[dict]:
        with self.lock:
            sessions = list(self.sessions.values())
        return [
            {
                "session_id": s.id,
                "task": s.task.name,
                "level": s.task.level,
                "status": s.status,
                "roles": {a: s.roles[a].get("kind") for a in AGENTS},
                "claimed": sorted(s.claimed),
                "step_limit_ms": s.step_limit_ms,
            }
            for s in sessions
        ]


class _Handler(BaseHTTPRequestHandler):
    manager: SessionManager = None  # set by serve_sessions

    def log_message(self, fmt, *args):  # quiet by default
        pass

    def _send(self, code: int, doc: dict) -> None:
        body = json.dumps(doc, sort_keys=True).encode()
        self.send_response(code)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, DELETE, OPTIONS")
        self.end_headers()
        self.wfile.write(body)

    def _body(self) -> dict:
        length = int(self.headers.get("Content-Length") or 0)
        if length == 0:
            return {}
        try:
            return json.loads(self.rfile.read(length))
        except json.JSONDecodeError as exc:
            raise SessionError(f"malformed JSON body: {exc}") from exc

    def _route(self, method: str) -> None:
        parsed = urlparse(self.path)
        parts = [p for p in parsed.path.split("/") if p]
        query = {k: v[0] for k, v in parse_qs(parsed.query).items()}
        try:
            doc = self._dispatch(method, parts, query)
            self._send(200, doc)
        except SessionNotFound as exc:
            self._send(404, {"error": f"SessionNotFound: {exc}"})
        except SessionError as exc:
            self._send(400, {"error": str(exc)})
        except Exception as exc:  # noqa: BLE001
            self._send(500, {"error": str(exc)})

    def _dispatch(self, method: str, parts: list[str], query: dict) -> dict:
        manager = self.manager
        if parts == ["health"]:
            return {"ok": True}
        if parts == ["sessions"]:
            if method == "GET":
                return {"sessions": manager.list()}
            if method == "POST":
                session = manager.create(self._body())
                return {"session_id": session.id, "status": session.status}
        if len(parts) >= 2 and parts[0] == "sessions":
            session_id = parts[1]
            rest = parts[2:]
            if not rest:
                if method == "DELETE":
                    manager.close(session_id)
                    return {"ok": True}
                if method == "GET":
                    session = manager.get(session_id)
                    return {
                        "session_id": session.id,
                        "status": session.status,
                        "task": session.task.name,
                    }
            if rest == ["join"] and method == "POST":
                body = self._body()
                session = manager.join(session_id, body.get("role", ""))
                return {"ok": True, "view": session.view(body.get("role", ""))}
            if rest == ["view"] and method == "GET":
                session = manager.get(session_id)
                return session.view(query.get("role", ""))
            if rest == ["messages"] and method == "GET":
                session = manager.get(session_id)
                since = int(query.get("since", 0))
                timeout = min(float(query.get("timeout", 10.0)), 25.0)
                role = query.get("role") or None
                messages, next_since = session.messages_since(since, timeout, role)
                return {"messages": messages, "next_since": next_since}
            if rest == ["submit"] and method == "POST":
                body = self._body()
                session = manager.get(session_id)
                role = body.get("role", "")
                if body.get("kind", "plan") not in ("plan", "say"):
                    raise SessionError("kind must be 'plan' or 'say'")
                plan = body.get("plan", "")
                say = body.get("say", "")
                if body.get("kind") == "say" and not say:
                    say = body.get("text", "")
                scene = body.get("scene")
                return session.submit(role, plan, say, None if scene is None else int(scene))
            if rest == ["report"] and method == "GET":
                session = manager.get(session_id)
                with session.lock:
                    if session.report is None:
                        return {"status": session.status, "report": None}
                    return {"status": session.status, "report": session.report.to_dict()}
        raise SessionError(f"no route for {method} /{'/'.join(parts)}")

    def do_GET(self):
        self._route("GET")

    def do_POST(self):
        self._route("POST")

    def do_DELETE(self):
        self._route("DELETE")

    def do_OPTIONS(self):
        self._send(200, {"ok": True})


def serve_sessions(
    bind_address: str = "127.0.0.1:8723",
    registry_dir: Optional[str] = None,
    default_step_limit: Optional[int] = None,
) -> ThreadingHTTPServer:
    """Start the session service; returns the listening server object.

    The caller owns the lifetime: call ``serve_forever()`` to block, or run
    it from a thread and ``shutdown()`` to stop (tests do the latter).
    """
    host, _, port = bind_address.partition(":")
    manager = SessionManager(registry_dir, default_step_limit)
    handler = type("BoundHandler", (_Handler,), {"manager": manager})
    server = ThreadingHTTPServer((host or "127.0.0.1", int(port or 8723)), handler)
    server.manager = manager  # type: ignore[attr-defined]
    return server
