"""Batch experiment runner, report aggregation and offline rescoring.

A batch run executes repetitions x tasks episodes, persists every episode
report, and emits an aggregate as canonical JSON plus a per-level CSV
summary (Success Rate and mean Progress Completeness per level, with the
capability means alongside).  Failed episodes are recorded with their
cause, never silently dropped.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from .actions import AGENTS
from .backends import BackendConfig, build_backend
from .episode import EpisodeConfig, EpisodeReport, run_episode
from .metrics import MetricConfig, ic as ic_metric, ites, pc as pc_metric, rc as rc_metric, tes
from .tasks import TaskSpec, catalog


@dataclass
class RunConfig:
    tasks: Optional[Sequence[str]] = None
    levels: Optional[Sequence[int]] = None
    repetitions: int = 10
    gamma: float = 1.5
    beta: float = 0.95
    seed: int = 0
    output_dir: Optional[str] = None
    backend_configs: dict[str, BackendConfig] = field(
        default_factory=lambda: {a: BackendConfig(kind="scripted_rat") for a in AGENTS}
    )
    registry_dir: Optional[str] = None
    max_rounds: int = 4
    max_retries: int = 3
    token_budget: Optional[int] = None

    def __post_init__(self):
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")


def _mean(values: list[float]) -> Optional[float]:
    if not values:
        return None
    return sum(values) / len(values)


def select_tasks(config: RunConfig) -> list[TaskSpec]:
    tasks = catalog(config.registry_dir)
    if config.tasks:
        wanted = set(config.tasks)
        tasks = [t for t in tasks if t.name in wanted]
        missing = wanted - {t.name for t in tasks}
        if missing:
            raise KeyError(f"unknown tasks requested: {sorted(missing)}")
    if config.levels:
        levels = set(config.levels)
        tasks = [t for t in tasks if t.level in levels]
    if not tasks:
        raise ValueError("no tasks selected")
    return tasks


def run_batch(config: RunConfig) -> dict:
    """Execute the batch and return the aggregate report document."""
    tasks = select_tasks(config)
    out_dir = Path(config.output_dir) if config.output_dir else None
    if out_dir is not None:
        (out_dir / "episodes").mkdir(parents=True, exist_ok=True)

    episode_rows = []
    for task in tasks:
        for rep in range(config.repetitions):
            # Fresh backends per episode: recorded mocks hold replay
            # cursors, and repetitions must be independent.
            try:
                backends = {
                    agent: build_backend(config.backend_configs[agent], task, agent)
                    for agent in AGENTS
                }
                build_error = None
            except Exception as exc:  # noqa: BLE001 - record, then keep going
                backends, build_error = None, str(exc)
            episode_config = EpisodeConfig(
                gamma=config.gamma,
                beta=config.beta,
                seed=config.seed + rep,
                max_rounds=config.max_rounds,
                max_retries=config.max_retries,
                token_budget=config.token_budget,
            )
            if build_error is not None:
                doc = _failed_episode_stub(task, episode_config, build_error)
                episode_rows.append(doc)
                doc["repetition"] = rep
                if out_dir is not None:
                    name = f"{task.name}_gamma{config.gamma}_rep{rep}.json"
                    (out_dir / "episodes" / name).write_text(
                        json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"
                    )
                continue
            try:
                report = run_episode(task, backends, episode_config)
                doc = report.to_dict()
            except Exception as exc:  # noqa: BLE001 - a crashed episode is data
                doc = _failed_episode_stub(task, episode_config, str(exc))
            doc["repetition"] = rep
            episode_rows.append(doc)
            if out_dir is not None:
                name = f"{task.name}_gamma{config.gamma}_rep{rep}.json"
                path = out_dir / "episodes" / name
                path.write_text(
                    json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"
                )

    aggregate = aggregate_episodes(episode_rows, config)
    if out_dir is not None:
        (out_dir / "aggregate.json").write_text(
            json.dumps(aggregate, sort_keys=True, separators=(",", ":")) + "\n"
        )
        write_level_csv(aggregate, out_dir / "aggregate.csv")
    return aggregate


def _failed_episode_stub(task: TaskSpec, config: EpisodeConfig, cause: str) -> dict:
    return {
        "schema_version": "1",
        "task_name": task.name,
        "level": task.level,
        "gamma": config.gamma,
        "beta": config.beta,
        "seed": config.seed,
        "backends": {},
        "success": False,
        "failure_cause": f"harness_error: {cause}",
        "timesteps_used": 0,
        "time_limit": task.time_limit(config.gamma),
        "min_timesteps": task.min_timesteps,
        "histories": {agent: [] for agent in AGENTS},
        "rejected": {agent: [] for agent in AGENTS},
        "events": [],
        "transcript": [],
        "tokens": {agent: {"prompt": 0, "completion": 0} for agent in AGENTS},
        "metrics": {
            "sr": 0,
            "pc": 0.0,
            "tes": {agent: 0.0 for agent in AGENTS},
            "ic": None,
            "rc": None,
            "n_required": 0,
            "per_event_ites": [],
        },
    }


def aggregate_episodes(episodes: list[dict], config: RunConfig) -> dict:
    """Fold per-episode reports into per-task and per-level summaries.

    Every value is recomputable by hand from the persisted episode files:
    SR is successes / repetitions x 100 and the means run over completed
    repetitions (capability means skip episodes where they do not apply).
    """
    by_task: dict[str, list[dict]] = {}
    for doc in episodes:
        by_task.setdefault(doc["task_name"], []).append(doc)

    task_rows = []
    for name in sorted(by_task):
        docs = by_task[name]
        sr = 100.0 * sum(d["metrics"]["sr"] for d in docs) / len(docs)
        ic_values = [d["metrics"]["ic"] for d in docs if d["metrics"]["ic"] is not None]
        rc_values = [d["metrics"]["rc"] for d in docs if d["metrics"]["rc"] is not None]
        all_ites = [v for d in docs for v in d["metrics"]["per_event_ites"]]
        task_rows.append(
            {
                "task": name,
                "level": docs[0]["level"],
                "episodes": len(docs),
                "sr": sr,
                "pc": _mean([d["metrics"]["pc"] for d in docs]),
                "ic": _mean(ic_values),
                "rc": _mean(rc_values),
                "mean_timesteps": _mean([float(d["timesteps_used"]) for d in docs]),
                "ites_mean": _mean(all_ites),
                "tokens_prompt": sum(
                    t["prompt"] for d in docs for t in d["tokens"].values()
                ),
                "tokens_completion": sum(
                    t["completion"] for d in docs for t in d["tokens"].values()
                ),
                "failures": sorted(
                    {d["failure_cause"] for d in docs if d["failure_cause"]}
                ),
            }
        )

    level_rows = []
    for level in sorted({row["level"] for row in task_rows}):
        docs = [d for d in episodes if d["level"] == level]
        ic_values = [d["metrics"]["ic"] for d in docs if d["metrics"]["ic"] is not None]
        rc_values = [d["metrics"]["rc"] for d in docs if d["metrics"]["rc"] is not None]
        level_rows.append(
            {
                "level": level,
                "tasks": len({d["task_name"] for d in docs}),
                "episodes": len(docs),
                "sr": 100.0 * sum(d["metrics"]["sr"] for d in docs) / len(docs),
                "pc": _mean([d["metrics"]["pc"] for d in docs]),
                "ic": _mean(ic_values),
                "rc": _mean(rc_values),
            }
        )

    return {
        "schema_version": "1",
        "gamma": config.gamma,
        "beta": config.beta,
        "repetitions": config.repetitions,
        "seed": config.seed,
        "tasks": task_rows,
        "levels": level_rows,
    }


def write_level_csv(aggregate: dict, path: str | Path) -> None:
    """Per-level summary in the leaderboard column layout (SR / PC pairs)."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["level", "tasks", "episodes", "SR", "PC", "IC", "RC"])
        for row in aggregate["levels"]:
            writer.writerow(
                [
                    row["level"],
                    row["tasks"],
                    row["episodes"],
                    f"{row['sr']:.2f}",
                    "" if row["pc"] is None else f"{100.0 * row['pc']:.2f}",
                    "" if row["ic"] is None else f"{100.0 * row['ic']:.2f}",
                    "" if row["rc"] is None else f"{100.0 * row['rc']:.2f}",
                ]
            )


class SchemaVersionMismatch(ValueError):
    """A trace file uses an unsupported episode schema."""


def rescore_episode(doc: dict, task: TaskSpec) -> dict:
    """Recompute SR / PC / IC / RC of one stored episode from raw data.

    Efficiency scores come from the recorded accepted-action trajectories
    against the task's reference set; every collaboration event is rescored
    at its historical position (the first ``history_len`` actions of the
    executing agent), exactly as it was scored live.
    """
    if doc.get("schema_version") != "1":
        raise SchemaVersionMismatch(
            f"episode schema {doc.get('schema_version')!r} is not supported"
        )
    config = MetricConfig(beta=float(doc["beta"]))
    histories = {
        agent: [action for _, action in rows] for agent, rows in doc["histories"].items()
    }
    rat_sets = {agent: task.rat_set(agent) for agent in histories}
    tes_values = {
        agent: tes(histories[agent], rat_sets[agent], config) for agent in histories
    }
    pc_value = pc_metric(histories, rat_sets, config)
    n_required = doc["metrics"]["n_required"]

    request_values = []
    response_values = []
    per_event = []
    for event in doc["events"]:
        agent = event["scored_against"]
        prefix = histories[agent][: event["history_len"]]
        value = ites(tuple(event["actions"]), prefix, rat_sets[agent], config)
        per_event.append(value)
        if event["kind"] == "request":
            request_values.append(value)
        else:
            response_values.append(value)

    return {
        "sr": 1 if doc["success"] else 0,
        "pc": pc_value,
        "tes": {agent: tes_values[agent] for agent in sorted(tes_values)},
        "ic": ic_metric(request_values, n_required),
        "rc": rc_metric(response_values, n_required),
        "n_required": n_required,
        "per_event_ites": per_event,
    }


def score_traces(paths: Sequence[str | Path], registry_dir: Optional[str] = None) -> dict:
    """Rescore stored episode traces; must reproduce their stored metrics."""
    tasks = {t.name: t for t in catalog(registry_dir)}
    rows = []
    for path in paths:
        doc = json.loads(Path(path).read_text())
        task = tasks.get(doc["task_name"])
        if task is None:
            raise KeyError(f"{path}: task '{doc['task_name']}' is not in the registry")
        recomputed = rescore_episode(doc, task)
        rows.append(
            {
                "path": str(path),
                "task": doc["task_name"],
                "level": doc["level"],
                "stored": doc["metrics"],
                "recomputed": recomputed,
            }
        )
    return {"schema_version": "1", "episodes": rows}
