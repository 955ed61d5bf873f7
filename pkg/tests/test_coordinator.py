import random

import pytest

from app.schemas.context import CoordinatorConfig, EvolvingContext, FailureStreak
from app.services.coordinator import CoordinatorService, summarize_guidance
from tests.helpers import failing, fold, fp, scripted


# ============================================
# update
# ============================================


def test_first_failure():
    context = fold(["A"])
    assert len(context.entries) == 1
    assert context.consecutive_same == FailureStreak(fingerprint=fp("A"), length=1)
    assert context.last_code_hash is not None


def test_streak_increments():
    context = fold(["A", "A", "A"])
    assert context.consecutive_same.length == 3


def test_resolution_flags():
    context = fold(["A", "A", "B", "B"])
    assert [e.resolved for e in context.entries] == [True, True, False, False]
    assert context.consecutive_same == FailureStreak(fingerprint=fp("B"), length=2)


def test_reappearing_fingerprint_reopens_older_entries():
    context = fold(["A", "B", "A"])
    assert [e.resolved for e in context.entries] == [False, True, False]
    context = fold(["A", "A", "B", "A"])
    assert [e.resolved for e in context.entries] == [False, False, True, False]


def test_fixed_error_leaves_the_open_section_after_a_streak():
    context = fold(["A", "A", "A", "A", "B"])
    text = CoordinatorService.render(context, 8)
    _, open_ = text.split("\n\n")
    assert "[OutputMismatch:A]" not in open_
    assert open_.count("- iteration") == 1
    assert "iteration 5" in open_


def test_update_leaves_input_untouched():
    before = fold(["A"])
    record, report = failing(2, "B")
    CoordinatorService.update(before, record, report, CoordinatorConfig())
    assert len(before.entries) == 1


def test_summaries_are_bounded():
    text = "word " * 200
    summary = summarize_guidance(text, 60)
    assert len(summary) <= 60
    assert summary.endswith("...")
    assert summarize_guidance("  short   text ", 60) == "short text"


# ============================================
# check_stagnation
# ============================================


@pytest.mark.parametrize(
    "length, restarts, expected",
    [(3, 0, False), (4, 0, True), (9, 3, False)],
)
def test_stagnation(length, restarts, expected):
    config = CoordinatorConfig(stagnation_threshold=4, max_restarts=3)
    context = EvolvingContext(
        restart_count=restarts,
        consecutive_same=FailureStreak(fingerprint=fp("A"), length=length),
    )
    assert CoordinatorService.check_stagnation(context, config) is expected


# ============================================
# restart
# ============================================


async def test_restart_distills_insight(adder_task):
    config = CoordinatorConfig(stagnation_threshold=4)
    context = fold(["A"] * 4, config)
    backend = scripted(
        [{"tag": "coordinator", "response": "1. validate first interval before detection"}]
    )
    restarted = await CoordinatorService.restart(context, adder_task, backend, config)
    assert restarted.insights == ["validate first interval before detection"]
    assert restarted.entries == []
    assert restarted.restart_count == 1
    assert restarted.consecutive_same == FailureStreak()


async def test_restart_falls_back_to_streak_guidance(adder_task):
    config = CoordinatorConfig()
    context = fold(["B", "A", "A"], config)
    backend = scripted([{"contains": "*", "error": "service unavailable"}])
    restarted = await CoordinatorService.restart(context, adder_task, backend, config)
    assert restarted.insights == ["fix A"]
    assert restarted.restart_count == 1


async def test_insights_are_capped_and_deduplicated(adder_task):
    config = CoordinatorConfig(insight_limit=3)
    context = EvolvingContext(insights=["keep ports", "reset first"])
    backend = scripted([{"contains": "*", "response": "- reset first\n- new one\n- another\n- more"}])
    restarted = await CoordinatorService.restart(fold(["A"], config, context), adder_task, backend, config)
    assert restarted.insights == ["keep ports", "reset first", "new one"]


async def test_restart_budget(adder_task):
    config = CoordinatorConfig(stagnation_threshold=2, max_restarts=2)
    backend = scripted([{"contains": "*", "response": "- insight {call_index}"}])
    context = EvolvingContext()
    restarts = 0
    for index in range(1, 13):
        record, report = failing(index, "A")
        context = CoordinatorService.update(context, record, report, config)
        if CoordinatorService.check_stagnation(context, config):
            context = await CoordinatorService.restart(context, adder_task, backend, config)
            restarts += 1
    assert restarts == 2
    assert context.restart_count == 2
    assert context.consecutive_same.length == 8


# ============================================
# render
# ============================================


def test_render_empty():
    assert CoordinatorService.render(EvolvingContext(), 8) == ""


def test_render_insights_only():
    text = CoordinatorService.render(EvolvingContext(insights=["keep the carry"]), 8)
    assert text.startswith("INSIGHTS")
    assert "- keep the carry" in text
    assert "OPEN" not in text and "RESOLVED" not in text


def test_render_depth_keeps_newest():
    context = fold(["A", "A", "A"])
    text = CoordinatorService.render(context, 2)
    assert "iteration 1" not in text
    assert text.index("iteration 2") < text.index("iteration 3")


def test_render_sections_and_progress():
    context = fold(["A", "B"]).model_copy(update={"insights": ["one"]})
    text = CoordinatorService.render(context, 8)
    insights, resolved, open_ = text.split("\n\n")
    assert insights.startswith("INSIGHTS")
    assert resolved.startswith("RESOLVED") and "iteration 1: fix A" in resolved
    assert open_.startswith("OPEN") and "[OutputMismatch:B]" in open_
    assert "passed 3/4" in open_


def test_render_is_deterministic():
    context = fold(["A", "B", "A", "C"])
    assert CoordinatorService.render(context, 8) == CoordinatorService.render(context, 8)


# ============================================
# Randomized properties
# ============================================


async def test_context_properties_over_random_sequences(adder_task):
    rng = random.Random(2024)
    backend = scripted([{"contains": "*", "response": "- insight {call_index}\n- shared"}])

    for _ in range(10_000):
        config = CoordinatorConfig(
            stagnation_threshold=rng.randint(2, 4),
            max_restarts=rng.randint(0, 2),
            insight_limit=rng.randint(1, 4),
        )
        context = EvolvingContext()
        expected_streak = 0
        previous = None

        for index in range(1, rng.randint(1, 14) + 1):
            name = rng.choice("ABC")
            record, report = failing(index, name)
            context = CoordinatorService.update(context, record, report, config)

            expected_streak = expected_streak + 1 if name == previous else 1
            previous = name
            assert context.consecutive_same.length == expected_streak

            current = context.entries[-1].fingerprint.digest
            for entry in context.entries:
                assert entry.resolved == (entry.fingerprint.digest != current)

            stagnant = CoordinatorService.check_stagnation(context, config)
            assert stagnant == (
                expected_streak >= config.stagnation_threshold
                and context.restart_count < config.max_restarts
            )
            if stagnant:
                insights_before = list(context.insights)
                context = await CoordinatorService.restart(context, adder_task, backend, config)
                assert context.insights[: len(insights_before)] == insights_before
                assert len(context.insights) <= config.insight_limit
                expected_streak = 0
                previous = None

            assert context.restart_count <= config.max_restarts
