"""CLI surface: run, score and catalog subcommands."""

from __future__ import annotations

import json

from coopkitchen.cli import main


def test_catalog_lists_all_levels(capsys):
    assert main(["catalog"]) == 0
    out = capsys.readouterr().out
    assert "baked_pumpkin_soup" in out
    for level in "123456":
        assert f"\n{level:>5}  " in out or out.startswith(f"{level:>5}  ")


def test_run_and_score_round_trip(tmp_path, capsys):
    out_dir = tmp_path / "run"
    code = main(
        [
            "run",
            "--tasks",
            "baked_bell_pepper",
            "--reps",
            "2",
            "--seed",
            "3",
            "--out",
            str(out_dir),
        ]
    )
    assert code == 0
    assert (out_dir / "aggregate.json").exists()
    assert (out_dir / "aggregate.csv").exists()
    episodes = sorted((out_dir / "episodes").glob("*.json"))
    assert len(episodes) == 2
    capsys.readouterr()

    score_out = tmp_path / "metrics.json"
    code = main(["score", *[str(p) for p in episodes], "--out", str(score_out)])
    assert code == 0, "rescoring stored traces must reproduce their metrics"
    doc = json.loads(score_out.read_text())
    assert len(doc["episodes"]) == 2


def test_run_gamma_sweep_writes_one_report_per_gamma(tmp_path, capsys):
    out_dir = tmp_path / "sweep"
    code = main(
        [
            "run",
            "--tasks",
            "baked_bell_pepper",
            "--reps",
            "1",
            "--gamma",
            "1.0",
            "1.5",
            "2.0",
            "--out",
            str(out_dir),
        ]
    )
    assert code == 0
    for gamma in ("1.0", "1.5", "2.0"):
        assert (out_dir / f"gamma_{gamma}" / "aggregate.json").exists()


def test_backend_config_file(tmp_path, capsys):
    config = tmp_path / "backends.json"
    config.write_text(
        json.dumps(
            {
                "alice": {"kind": "idle"},
                "bob": {"kind": "idle"},
            }
        )
    )
    out_dir = tmp_path / "idle_run"
    code = main(
        [
            "run",
            "--tasks",
            "baked_bell_pepper",
            "--reps",
            "1",
            "--backend-config",
            str(config),
            "--out",
            str(out_dir),
        ]
    )
    assert code == 0
    aggregate = json.loads((out_dir / "aggregate.json").read_text())
    assert aggregate["tasks"][0]["sr"] == 0.0
