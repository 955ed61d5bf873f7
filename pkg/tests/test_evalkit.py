import random
from math import comb

import pytest

from app.core.exceptions import EvalError
from app.schemas.metrics import ProblemEntry, RunMatrix
from app.schemas.orchestrator import IterationAccounting, OutcomeFile
from app.services.evalkit import (
    OVERALL,
    aggregate_outcomes,
    apr,
    build_metric_report,
    emit_report,
    expected_min_iterations,
    pass_at_1,
    pass_at_k,
    pass_at_k_table,
)


def matrix(successes, runs: int = 5, categories=None, agentic: bool = False) -> RunMatrix:
    """One problem per entry of `successes`, the first n runs of each passing"""
    categories = categories or ["cid003"] * len(successes)
    problems = [ProblemEntry(id=f"p{i}", category=c) for i, c in enumerate(categories)]
    results = {f"p{i}": [r < n for r in range(runs)] for i, n in enumerate(successes)}
    return RunMatrix(problems=problems, runs_per_problem=runs, results=results, agentic=agentic)


# ============================================
# Pass@1 and APR
# ============================================


@pytest.mark.parametrize(
    "successes, expected_pass, expected_apr",
    [
        ([5], 100.0, 100.0),
        ([5, 0], 50.0, 50.0),
        ([1, 0], 10.0, 50.0),
        ([3, 5, 0], 53.33, 66.67),
    ],
)
def test_hand_computed_values(successes, expected_pass, expected_apr):
    grid = matrix(successes)
    assert pass_at_1(grid)[OVERALL] == pytest.approx(expected_pass, abs=0.01)
    assert apr(grid)[OVERALL] == pytest.approx(expected_apr, abs=0.01)


def test_per_category_scores():
    grid = matrix([5, 0, 2], categories=["cid003", "cid003", "cid016"])
    assert pass_at_1(grid) == pytest.approx({"cid003": 50.0, "cid016": 40.0, OVERALL: 140 / 3})
    assert apr(grid) == pytest.approx({"cid003": 50.0, "cid016": 100.0, OVERALL: 200 / 3})


def test_single_run_metrics_coincide():
    grid = matrix([1, 0, 1, 1], runs=1)
    assert pass_at_1(grid) == apr(grid)


def test_empty_matrix():
    with pytest.raises(EvalError):
        pass_at_1(RunMatrix(problems=[], runs_per_problem=5, results={}))


def test_ragged_matrix_is_rejected():
    with pytest.raises(ValueError):
        RunMatrix(
            problems=[ProblemEntry(id="p0", category="cid003")],
            runs_per_problem=3,
            results={"p0": [True]},
        )


def test_pass_rate_never_exceeds_apr_on_random_matrices():
    rng = random.Random(7)
    for _ in range(10_000):
        runs = rng.randint(1, 6)
        size = rng.randint(1, 6)
        categories = [rng.choice(["cid002", "cid003", "cid016"]) for _ in range(size)]
        grid = RunMatrix(
            problems=[ProblemEntry(id=f"p{i}", category=c) for i, c in enumerate(categories)],
            runs_per_problem=runs,
            results={f"p{i}": [rng.random() < 0.4 for _ in range(runs)] for i in range(size)},
        )
        rates = pass_at_1(grid)
        solved = apr(grid)
        for category, value in rates.items():
            assert 0.0 <= value <= solved[category] + 1e-9 <= 100.0 + 1e-9


# ============================================
# pass@k and expected minimum
# ============================================


def test_pass_at_k_edges():
    assert pass_at_k(5, 0, 1) == 0.0
    assert pass_at_k(5, 5, 3) == 1.0
    assert pass_at_k(5, 2, 1) == pytest.approx(0.4)
    assert pass_at_k(5, 2, 4) == 1.0


@pytest.mark.parametrize("n, c, k", [(10, 3, 2), (20, 7, 5), (6, 1, 6)])
def test_pass_at_k_matches_combinatorial_form(n, c, k):
    assert pass_at_k(n, c, k) == pytest.approx(1 - comb(n - c, k) / comb(n, k))


@pytest.mark.parametrize("n, c, k", [(5, 1, 0), (5, 1, 6), (5, 6, 1)])
def test_pass_at_k_rejects(n, c, k):
    with pytest.raises(EvalError):
        pass_at_k(n, c, k)


def test_pass_at_k_table_skips_large_k():
    table = pass_at_k_table(matrix([3, 5, 0]))
    assert set(table[OVERALL]) == {"pass@1", "pass@5"}
    assert table[OVERALL]["pass@1"] == pytest.approx(pass_at_1(matrix([3, 5, 0]))[OVERALL])
    assert table[OVERALL]["pass@5"] == pytest.approx(apr(matrix([3, 5, 0]))[OVERALL])


def test_expected_minimum_of_uniform_draws():
    values = list(range(1, 21))
    assert expected_min_iterations(values, 1) == pytest.approx(10.5)
    expected = sum(((21 - v) / 20) ** 5 for v in values)
    assert expected_min_iterations(values, 5) == pytest.approx(expected)
    assert expected_min_iterations(values, 5) == pytest.approx(3.854, abs=0.01)


def test_expected_minimum_rejects_empty():
    with pytest.raises(EvalError):
        expected_min_iterations([], 5)


# ============================================
# Reports
# ============================================


def test_markdown_report():
    report = build_metric_report(matrix([3, 5, 0], categories=["cid003", "cid003", "cid016"]))
    text = emit_report(report, "markdown")
    assert "| Category | Problems | Pass@1 | APR |" in text
    assert "| cid003 (SpecToRtl) | 2 | 80.00 | 100.00 |" in text
    assert "| cid016 (CodeDebugging) | 1 | 0.00 | 0.00 |" in text
    assert "| Overall | 3 | 53.33 | 66.67 |" in text
    assert "Iterations to success" not in text


def test_markdown_is_reproducible():
    grid = matrix([3, 5, 0])
    first = emit_report(build_metric_report(grid), "markdown")
    second = emit_report(build_metric_report(grid), "markdown")
    assert first == second


def test_report_with_iteration_stats():
    stats = IterationAccounting(
        pairs=3, mean_parallel_iterations=4.0, mean_solo_iterations=11.33, speedup=2.83
    )
    text = emit_report(build_metric_report(matrix([5]), stats), "markdown")
    assert "| 3 | 11.33 | 4.00 | 2.83x |" in text


def test_agentic_single_run_hides_pass_rate():
    report = build_metric_report(matrix([1, 0], runs=1, agentic=True))
    assert report.overall.pass_at_1 is None
    assert "| Overall | 2 | - | 50.00 |" in emit_report(report)


def test_json_report_round_trips():
    report = build_metric_report(matrix([3, 5, 0]))
    text = emit_report(report, "json")
    assert type(report).model_validate_json(text) == report


def test_unknown_format():
    with pytest.raises(EvalError):
        emit_report(build_metric_report(matrix([1])), "html")


# ============================================
# Aggregation
# ============================================


def outcome(task_id, run_index, winner=0, iterations=None, baseline=False, category="cid003"):
    return OutcomeFile(
        task_id=task_id,
        category=category,
        run_index=run_index,
        processes=1 if baseline else 5,
        baseline=baseline,
        winner=winner,
        iterations_to_success=iterations if winner is not None else None,
    )


def test_aggregate_builds_matrix_and_pairs_baselines():
    outcomes = [
        outcome("a", 0, iterations=3),
        outcome("a", 1, winner=None),
        outcome("a", 0, iterations=9, baseline=True),
        outcome("a", 1, iterations=12, baseline=True),
        outcome("b", 0, iterations=2, category="cid016"),
        outcome("b", 1, iterations=4, category="cid016"),
        outcome("b", 1, iterations=10, baseline=True, category="cid016"),
    ]
    grid, stats = aggregate_outcomes(outcomes)
    assert grid.runs_per_problem == 2
    assert grid.results == {"a": [True, False], "b": [True, True]}
    assert [p.category for p in grid.problems] == ["cid003", "cid016"]
    assert not grid.agentic
    assert stats.pairs == 2
    assert stats.speedup == pytest.approx(9.5 / 3.5)


def test_aggregate_skips_tasks_with_odd_run_counts():
    outcomes = [outcome("a", 0), outcome("a", 1), outcome("b", 0), outcome("b", 1), outcome("c", 0)]
    grid, stats = aggregate_outcomes(outcomes)
    assert [p.id for p in grid.problems] == ["a", "b"]
    assert stats is None


def test_aggregate_needs_raced_outcomes():
    with pytest.raises(EvalError):
        aggregate_outcomes([outcome("a", 0, baseline=True)])
