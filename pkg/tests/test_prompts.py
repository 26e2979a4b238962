"""Instruction-builder contract: asymmetric knowledge and determinism."""

from __future__ import annotations

from coopkitchen.prompts import PromptBundle, build_prompt


def _bundle(task, agent, **overrides) -> PromptBundle:
    defaults = dict(
        state=task.initial_state(),
        task=task,
        memory=[],
        reflections=[],
        conversation=[],
        error_feedback=None,
    )
    defaults.update(overrides)
    return build_prompt(agent, **defaults)


def test_bob_prompt_contains_recipe_and_order(pumpkin_soup):
    text = _bundle(pumpkin_soup, "bob").render()
    assert "Baked Pumpkin Soup" in text
    assert "COOKING STEPs" in text
    assert "Order:baked_pumpkin_soup" in text
    assert "<pot0> is empty" in text


def test_alice_prompt_never_contains_recipe(pumpkin_soup):
    text = _bundle(pumpkin_soup, "alice").render()
    assert "COOKING STEPs" not in text
    assert "Baked Pumpkin Soup" not in text
    for line in pumpkin_soup.recipe.splitlines():
        if line.strip():
            assert line not in text


def test_rendering_is_byte_stable(pumpkin_soup):
    first = _bundle(pumpkin_soup, "bob").render()
    second = _bundle(pumpkin_soup, "bob").render()
    assert first == second


def test_history_and_reflections_render_in_slots(pumpkin_soup):
    text = _bundle(
        pumpkin_soup,
        "alice",
        memory=["pickup(pumpkin,ingredient_dispenser)"],
        reflections=["'cut(chopping_board0)' was rejected: the board is empty."],
    ).render()
    assert "Successful Action History: [pickup(pumpkin,ingredient_dispenser)]" in text
    assert "Lessons from failures:" in text


def test_memory_window_caps_history(pumpkin_soup):
    memory = [f"wait({i})" for i in range(1, 100)]
    text = _bundle(pumpkin_soup, "alice", memory=memory, memory_window=10).render()
    assert "wait(99)" in text
    assert "wait(89)" not in text


def test_error_feedback_slot_round_trips_the_message(pumpkin_soup):
    message = (
        "UnknownArgument: unknown argument 'dispenser' in pickup(cauliflower,dispenser)"
    )
    text = _bundle(pumpkin_soup, "alice", error_feedback=message).render()
    assert message in text


def test_conversation_slot_lists_turns(pumpkin_soup):
    text = _bundle(
        pumpkin_soup,
        "alice",
        conversation=["Bob: please pick up a pumpkin. [END]"],
    ).render()
    assert "Conversation so far:" in text
    assert "Bob: please pick up a pumpkin. [END]" in text


def test_action_spaces_listed_per_role(pumpkin_soup):
    alice_text = _bundle(pumpkin_soup, "alice").render()
    bob_text = _bundle(pumpkin_soup, "bob").render()
    assert "Action space for Alice:" in alice_text
    assert "cut(chopping_board_name)" in alice_text
    assert "deliver()" not in alice_text.split("Your teammate")[0].split("Action space")[1]
    assert "Action space for Bob:" in bob_text
    assert "bake(oven_name)" in bob_text
