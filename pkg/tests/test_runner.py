"""Batch execution, aggregation arithmetic and offline rescoring."""

from __future__ import annotations

import copy
import csv
import json
from pathlib import Path

import pytest

from coopkitchen.backends import BackendConfig
from coopkitchen.runner import (
    RunConfig,
    SchemaVersionMismatch,
    rescore_episode,
    run_batch,
    score_traces,
    select_tasks,
)
from coopkitchen.tasks import find_task


def _scripted_config(**kw) -> RunConfig:
    defaults = dict(
        repetitions=2,
        gamma=1.5,
        seed=11,
        backend_configs={a: BackendConfig(kind="scripted_rat") for a in ("alice", "bob")},
    )
    defaults.update(kw)
    return RunConfig(**defaults)


def test_scripted_batch_is_perfect_at_every_level(tmp_path):
    config = _scripted_config(output_dir=str(tmp_path))
    aggregate = run_batch(config)
    assert {row["level"] for row in aggregate["levels"]} == {1, 2, 3, 4, 5, 6}
    for row in aggregate["levels"]:
        assert row["sr"] == 100.0
        assert row["pc"] == pytest.approx(1.0, abs=1e-12)
        assert row["ic"] == 1.0 and row["rc"] == 1.0
    episodes = list((tmp_path / "episodes").glob("*.json"))
    assert len(episodes) == 7 * 2  # tasks x repetitions, all persisted


def test_aggregate_matches_hand_recomputation(tmp_path):
    config = _scripted_config(output_dir=str(tmp_path), tasks=["baked_bell_pepper"], repetitions=3)
    aggregate = run_batch(config)
    docs = [json.loads(p.read_text()) for p in (tmp_path / "episodes").glob("*.json")]
    assert len(docs) == 3
    sr = 100.0 * sum(d["metrics"]["sr"] for d in docs) / len(docs)
    pc = sum(d["metrics"]["pc"] for d in docs) / len(docs)
    row = aggregate["tasks"][0]
    assert row["sr"] == pytest.approx(sr)
    assert row["pc"] == pytest.approx(pc)


def test_idle_backend_batch_scores_zero(tmp_path):
    config = _scripted_config(
        tasks=["baked_bell_pepper"],
        backend_configs={a: BackendConfig(kind="idle") for a in ("alice", "bob")},
        output_dir=str(tmp_path),
    )
    aggregate = run_batch(config)
    row = aggregate["tasks"][0]
    assert row["sr"] == 0.0
    assert row["pc"] == pytest.approx(0.0)


def test_gamma_monotone_success_for_scripted_oracles():
    results = {}
    for gamma in (0.5, 1.0, 1.5, 2.0):
        config = _scripted_config(tasks=["baked_pumpkin_soup"], repetitions=1, gamma=gamma)
        aggregate = run_batch(config)
        results[gamma] = aggregate["tasks"][0]["sr"]
    assert results[0.5] == 0.0
    assert results[1.0] == results[1.5] == results[2.0] == 100.0
    ordered = [results[g] for g in sorted(results)]
    assert ordered == sorted(ordered)


def test_level_csv_layout(tmp_path):
    config = _scripted_config(output_dir=str(tmp_path), levels=[1, 2])
    run_batch(config)
    with open(tmp_path / "aggregate.csv") as handle:
        rows = list(csv.reader(handle))
    assert rows[0] == ["level", "tasks", "episodes", "SR", "PC", "IC", "RC"]
    assert [r[0] for r in rows[1:]] == ["1", "2"]
    assert rows[1][3] == "100.00"


def test_select_tasks_unknown_name_fails_fast():
    with pytest.raises(KeyError):
        select_tasks(_scripted_config(tasks=["no_such_dish"]))


def test_rescoring_reproduces_stored_metrics(tmp_path):
    config = _scripted_config(output_dir=str(tmp_path), tasks=["baked_pumpkin_soup"], repetitions=1)
    run_batch(config)
    paths = sorted((tmp_path / "episodes").glob("*.json"))
    result = score_traces(paths)
    for row in result["episodes"]:
        stored, recomputed = row["stored"], row["recomputed"]
        assert recomputed["sr"] == stored["sr"]
        assert recomputed["pc"] == pytest.approx(stored["pc"], abs=1e-12)
        assert recomputed["ic"] == stored["ic"]
        assert recomputed["rc"] == stored["rc"]
        assert recomputed["per_event_ites"] == pytest.approx(stored["per_event_ites"], abs=1e-12)


def test_rescoring_detects_injected_redundant_action(tmp_path):
    config = _scripted_config(output_dir=str(tmp_path), tasks=["baked_pumpkin_soup"], repetitions=1)
    run_batch(config)
    path = sorted((tmp_path / "episodes").glob("*.json"))[0]
    doc = json.loads(path.read_text())
    edited = copy.deepcopy(doc)
    # Hand-edit a redundant action into Alice's history mid-sequence.
    edited["histories"]["alice"].insert(2, [1, "wait(1)"])
    task = find_task("baked_pumpkin_soup")
    original = rescore_episode(doc, task)
    tampered = rescore_episode(edited, task)
    assert tampered["pc"] < original["pc"]


def test_rescoring_rejects_unknown_schema(tmp_path):
    doc = {"schema_version": "999"}
    with pytest.raises(SchemaVersionMismatch):
        rescore_episode(doc, find_task("baked_bell_pepper"))


def test_score_traces_empty_input_is_empty_report():
    assert score_traces([]) == {"schema_version": "1", "episodes": []}


def test_failed_episode_recorded_with_cause(tmp_path):
    class Boom(BackendConfig):
        pass

    config = _scripted_config(
        tasks=["baked_bell_pepper"],
        repetitions=1,
        output_dir=str(tmp_path),
        backend_configs={
            "alice": BackendConfig(kind="scripted_rat"),
            "bob": BackendConfig(kind="recorded_mock", recording_path="/nonexistent.json"),
        },
    )
    aggregate = run_batch(config)
    row = aggregate["tasks"][0]
    assert row["sr"] == 0.0
    assert row["failures"], "the crash cause must be preserved"
    docs = [json.loads(p.read_text()) for p in (tmp_path / "episodes").glob("*.json")]
    assert docs[0]["failure_cause"].startswith("harness_error")


def test_recorded_mock_repetitions_are_independent(tmp_path):
    """Replay cursors must not leak across repetitions of a batch.

    Two entries on the same (agent, timestep) key: a leaked cursor would
    start repetition 2 at the second entry and change its transcript.
    """
    recording = tmp_path / "bob.json"
    recording.write_text(
        json.dumps(
            [
                {
                    "agent": "bob",
                    "timestep": 0,
                    "plan": "request('pickup(bell_pepper, ingredient_dispenser)')",
                    "say": "Alice, grab a bell pepper. [END]",
                },
                {
                    "agent": "bob",
                    "timestep": 0,
                    "plan": "wait(1)",
                    "say": "second attempt text. [END]",
                },
            ]
        )
    )
    config = _scripted_config(
        tasks=["baked_bell_pepper"],
        repetitions=2,
        seed=5,
        output_dir=str(tmp_path / "out"),
        backend_configs={
            "alice": BackendConfig(kind="idle"),
            "bob": BackendConfig(kind="recorded_mock", recording_path=str(recording)),
        },
    )
    run_batch(config)
    docs = [
        json.loads(p.read_text())
        for p in sorted((tmp_path / "out" / "episodes").glob("*.json"))
    ]
    assert len(docs) == 2
    for doc in docs:
        doc.pop("repetition")
        doc.pop("seed")
    assert docs[0] == docs[1]
