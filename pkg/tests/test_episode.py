"""End-to-end episode behaviour with scripted and mock backends."""

from __future__ import annotations

import pytest

from coopkitchen.backends import (
    BackendReply,
    IdleBackend,
    RecordedMockBackend,
    ScriptedRatBackend,
    render_planner_text,
)
from coopkitchen.episode import (
    EpisodeConfig,
    PlannerFormatError,
    parse_planner_output,
    run_episode,
)
from coopkitchen.tasks import find_task


def _scripted(task):
    return {agent: ScriptedRatBackend(task, agent) for agent in ("alice", "bob")}


def test_parse_planner_output_three_fields():
    out = parse_planner_output("Analysis: thinking\nPlan: wait(1); deliver()\nSay: hello [END]")
    assert out.analysis == "thinking"
    assert out.plan == "wait(1); deliver()"
    assert out.say == "hello [END]"


def test_parse_planner_output_multiline_and_case():
    out = parse_planner_output("analysis: a\nb\nPLAN: wait(1)\nsay: [NOTHING]")
    assert out.analysis == "a\nb"
    assert out.plan == "wait(1)"


def test_parse_planner_output_requires_plan():
    with pytest.raises(PlannerFormatError):
        parse_planner_output("just some prose with no fields")


def test_oracle_episode_completes_every_task(all_tasks):
    for task in all_tasks:
        report = run_episode(task, _scripted(task), EpisodeConfig(gamma=1.5))
        assert report.success, task.name
        assert report.timesteps_used == task.min_timesteps
        assert report.metrics["pc"] == pytest.approx(1.0, abs=1e-12)
        assert report.metrics["ic"] == 1.0
        assert report.metrics["rc"] == 1.0
        n = report.metrics["n_required"]
        kinds = [e["kind"] for e in report.events]
        assert kinds.count("request") == n
        assert kinds.count("response") == n
        assert all(e["positive"] for e in report.events)


def test_oracle_histories_equal_references(pumpkin_soup):
    report = run_episode(pumpkin_soup, _scripted(pumpkin_soup), EpisodeConfig())
    rat = pumpkin_soup.rats[0]
    for agent in ("alice", "bob"):
        history = [action for _, action in report.histories[agent]]
        assert history == list(rat.per_agent[agent])
    assert report.rejected == {"alice": [], "bob": []}


def test_events_scored_at_historical_state_not_retroactively(pumpkin_soup):
    report = run_episode(pumpkin_soup, _scripted(pumpkin_soup), EpisodeConfig())
    requests = [e for e in report.events if e["kind"] == "request"]
    assert [e["history_len"] for e in requests] == list(range(len(requests)))


def test_wait_only_backends_time_out_with_zero_progress(bell_pepper):
    backends = {"alice": IdleBackend(), "bob": IdleBackend()}
    report = run_episode(bell_pepper, backends, EpisodeConfig(gamma=1.5))
    assert not report.success
    assert report.failure_cause == "time_limit"
    assert report.timesteps_used == report.time_limit
    assert report.metrics["pc"] == 0.0
    assert report.metrics["sr"] == 0


def test_gamma_below_one_aborts_at_limit(pumpkin_soup):
    report = run_episode(pumpkin_soup, _scripted(pumpkin_soup), EpisodeConfig(gamma=0.5))
    assert not report.success
    assert report.failure_cause == "time_limit"
    assert report.timesteps_used == pumpkin_soup.time_limit(0.5)
    # Partial progress still counts toward completeness.
    assert 0.0 < report.metrics["pc"] < 1.0


def test_gamma_exactly_one_succeeds(pumpkin_soup):
    report = run_episode(pumpkin_soup, _scripted(pumpkin_soup), EpisodeConfig(gamma=1.0))
    assert report.success
    assert report.timesteps_used == report.time_limit == pumpkin_soup.min_timesteps


def test_recorded_mock_determinism_byte_identical(bell_pepper):
    entries = [
        {"agent": "bob", "timestep": 0, "plan": "request('pickup(bell_pepper, ingredient_dispenser)')", "say": "Alice, grab a bell pepper please. [END]"},
        {"agent": "alice", "timestep": 0, "plan": "pickup(bell_pepper, ingredient_dispenser)", "say": "[NOTHING]"},
        {"agent": "alice", "timestep": 1, "plan": "place_obj_on_counter()", "say": "[NOTHING]"},
        {"agent": "bob", "timestep": 2, "plan": "pickup(bell_pepper, counter); put_obj_in_utensil(oven0); bake(oven0)", "say": "[NOTHING]"},
        {"agent": "bob", "timestep": 6, "plan": "pickup(baked_bell_pepper, oven0); deliver()", "say": "[NOTHING]"},
    ]

    def once():
        backends = {
            "alice": RecordedMockBackend(entries),
            "bob": RecordedMockBackend(entries),
        }
        return run_episode(bell_pepper, backends, EpisodeConfig(gamma=1.5, seed=42))

    first, second = once(), once()
    assert first.to_json() == second.to_json()
    assert first.success


class _CountingRetryBackend:
    """Returns malformed text a fixed number of times, then a valid plan."""

    def __init__(self, bad_times: int, good_plan: str = "wait(1)"):
        self.bad_times = bad_times
        self.good_plan = good_plan
        self.calls = 0

    def describe(self) -> str:
        return "counting_mock"

    def plan(self, agent, scene, prompt):
        self.calls += 1
        if self.calls <= self.bad_times:
            return BackendReply("garbled output with no fields", 1, 1)
        return BackendReply(render_planner_text("", self.good_plan, "[NOTHING]"), 1, 1)


def test_format_error_retries_then_recovers(bell_pepper):
    bob = _CountingRetryBackend(bad_times=2)
    backends = {"alice": IdleBackend(), "bob": bob}
    report = run_episode(bell_pepper, backends, EpisodeConfig(gamma=1.5, max_retries=3))
    # Two bad calls then a good one, within the same planning step.
    assert bob.calls >= 3
    bob_history = [a for _, a in report.histories["bob"]]
    assert "wait(1)" in bob_history


def test_format_error_exhausts_retries_and_idles(bell_pepper):
    bob = _CountingRetryBackend(bad_times=10_000)
    backends = {"alice": IdleBackend(), "bob": bob}
    report = run_episode(bell_pepper, backends, EpisodeConfig(gamma=1.5, max_retries=3))
    assert not report.success
    assert report.histories["bob"] == []  # nothing parseable was ever committed
    # max_retries + 1 calls per scene, one planning step per scene.
    assert bob.calls == report.time_limit * 4


class _PromptCapturingBackend:
    """Wraps recorded outputs and keeps every prompt it was shown."""

    def __init__(self, entries):
        self.inner = RecordedMockBackend(entries)
        self.prompts: list[str] = []

    def describe(self) -> str:
        return "capturing_mock"

    def plan(self, agent, scene, prompt):
        self.prompts.append(prompt)
        return self.inner.plan(agent, scene, prompt)


def test_validation_error_round_trips_into_retry_prompt():
    task = find_task("mashed_cauliflower_and_lentil_patty")
    alice = _PromptCapturingBackend(
        [
            {"agent": "alice", "timestep": 0, "plan": "pickup(cauliflower, dispenser)", "say": "[NOTHING]"},
        ]
    )
    backends = {"alice": alice, "bob": IdleBackend()}
    config = EpisodeConfig(gamma=0.25, max_retries=2)  # short episode, enough scenes
    report = run_episode(task, backends, config)
    # The rejected attempt is logged, never in the history.
    rejected = [row for row in report.rejected["alice"] if "dispenser" in row[1]]
    assert rejected and "UnknownArgument" in rejected[0][2]
    assert all("pickup(cauliflower,dispenser)" != a for _, a in report.histories["alice"])
    # The retry prompt carries the validator message verbatim.
    retry_prompts = [p for p in alice.prompts if "UnknownArgument" in p]
    assert retry_prompts, "no retry prompt contained the validation error"
    assert any("unknown argument 'dispenser'" in p for p in retry_prompts)


def test_dynamic_rejection_reprompts_once_per_attempt(bell_pepper):
    # Bob tries to pick from the empty counter: semantically invalid now.
    bob = _PromptCapturingBackend(
        [
            {"agent": "bob", "timestep": 0, "plan": "pickup(bell_pepper, counter)", "say": "[NOTHING]"},
        ]
    )
    backends = {"alice": IdleBackend(), "bob": bob}
    report = run_episode(bell_pepper, backends, EpisodeConfig(gamma=1.5, max_retries=2))
    scene0_rejections = [r for r in report.rejected["bob"] if r[0] == 0]
    assert len(scene0_rejections) == 3  # initial try + two re-planned attempts
    error_prompts = [p for p in bob.prompts if "NoSuchElement" in p]
    assert len(error_prompts) >= 2


def test_asymmetric_knowledge_no_recipe_in_any_alice_prompt(pumpkin_soup):
    captured = _PromptCapturingBackend([])

    class AliceScripted:
        def __init__(self, task):
            self.inner = ScriptedRatBackend(task, "alice")

        def describe(self):
            return self.inner.describe()

        def plan(self, agent, scene, prompt):
            captured.prompts.append(prompt)
            return self.inner.plan(agent, scene, prompt)

    backends = {"alice": AliceScripted(pumpkin_soup), "bob": ScriptedRatBackend(pumpkin_soup, "bob")}
    report = run_episode(pumpkin_soup, backends, EpisodeConfig())
    assert report.success
    assert captured.prompts
    recipe_lines = [l for l in pumpkin_soup.recipe.splitlines() if l.strip()]
    for prompt in captured.prompts:
        for line in recipe_lines:
            assert line not in prompt


def test_token_budget_aborts_cleanly(pumpkin_soup):
    backends = _scripted(pumpkin_soup)
    report = run_episode(pumpkin_soup, backends, EpisodeConfig(token_budget=50))
    assert not report.success
    assert report.failure_cause.startswith("budget_exceeded")


def test_communication_round_cap(bell_pepper):
    chatty = [
        {"agent": "bob", "timestep": 0, "plan": "", "say": "are you there?"},
        {"agent": "alice", "timestep": 0, "plan": "", "say": "yes, and you?"},
        {"agent": "bob", "timestep": 0, "plan": "", "say": "still here."},
        {"agent": "alice", "timestep": 0, "plan": "", "say": "me too."},
        {"agent": "bob", "timestep": 0, "plan": "", "say": "chatting on."},
        {"agent": "alice", "timestep": 0, "plan": "", "say": "forever."},
    ]
    backends = {"alice": RecordedMockBackend(chatty), "bob": RecordedMockBackend(chatty)}
    report = run_episode(bell_pepper, backends, EpisodeConfig(gamma=1.0, max_rounds=4))
    scene0 = [row for row in report.transcript if row[0] == 0]
    assert len(scene0) == 4  # the cap, counting the opening turn
