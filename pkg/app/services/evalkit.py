"""
Evaluation Kit
Pass@1 / agentic pass rate over run matrices, iteration accounting and report
documents
"""

import logging
from collections import defaultdict
from datetime import datetime, timezone
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from app.core.exceptions import EvalError
from app.schemas.metrics import CategoryMetrics, MetricReport, ProblemEntry, RunMatrix
from app.schemas.orchestrator import IterationAccounting, OutcomeFile
from app.schemas.task import TaskCategory
from app.services.orchestrator import accounting_from_iterations

logger = logging.getLogger(__name__)

OVERALL = "overall"
REPORT_FORMATS = ("json", "markdown")
DEFAULT_KS = (1, 5, 10)


def _by_category(matrix: RunMatrix) -> Dict[str, List[ProblemEntry]]:
    groups: Dict[str, List[ProblemEntry]] = defaultdict(list)
    for problem in matrix.problems:
        groups[problem.category].append(problem)
    return dict(sorted(groups.items()))


def _per_category(matrix: RunMatrix, score) -> Dict[str, float]:
    if not matrix.problems:
        raise EvalError("Run matrix has no problems")
    scores: Dict[str, float] = {}
    for category, problems in _by_category(matrix).items():
        scores[category] = score(problems)
    scores[OVERALL] = score(matrix.problems)
    return scores


def pass_at_1(matrix: RunMatrix) -> Dict[str, float]:
    """Mean per-problem success rate ×100, per category plus "overall" """

    def score(problems: List[ProblemEntry]) -> float:
        rates = [np.mean(matrix.results[p.id]) for p in problems]
        return float(np.mean(rates) * 100)

    return _per_category(matrix, score)


def apr(matrix: RunMatrix) -> Dict[str, float]:
    """Share of problems solved in at least one run ×100, per category plus "overall" """

    def score(problems: List[ProblemEntry]) -> float:
        solved = sum(any(matrix.results[p.id]) for p in problems)
        return 100.0 * solved / len(problems)

    return _per_category(matrix, score)


def pass_at_k(n: int, c: int, k: int) -> float:
    """
    Unbiased pass@k estimate from n samples of which c passed.

    Raises:
        EvalError: k outside 1..n or c outside 0..n
    """
    if not 1 <= k <= n or not 0 <= c <= n:
        raise EvalError(f"pass@k needs 1 <= k <= n and 0 <= c <= n (n={n}, c={c}, k={k})")
    if n - c < k:
        return 1.0
    return float(1.0 - np.prod(1.0 - k / np.arange(n - c + 1, n + 1)))


def pass_at_k_table(matrix: RunMatrix, ks: Iterable[int] = DEFAULT_KS) -> Dict[str, Dict[str, float]]:
    """pass@k ×100 per category for every k not above runs_per_problem"""
    n = matrix.runs_per_problem
    usable = [k for k in ks if k <= n]

    def score(problems: List[ProblemEntry], k: int) -> float:
        return float(
            np.mean([pass_at_k(n, sum(matrix.results[p.id]), k) for p in problems]) * 100
        )

    table: Dict[str, Dict[str, float]] = {}
    groups = _by_category(matrix)
    groups[OVERALL] = matrix.problems
    for category, problems in groups.items():
        table[category] = {f"pass@{k}": score(problems, k) for k in usable}
    return table


def expected_min_iterations(values: Sequence[int], processes: int) -> float:
    """
    Exact expectation of the minimum of `processes` independent draws, each
    uniform over `values` (repeats weight a value).

    Raises:
        EvalError: empty values or processes < 1
    """
    if len(values) == 0 or processes < 1:
        raise EvalError("expected_min_iterations needs values and processes >= 1")
    ordered = np.sort(np.asarray(values, dtype=float))
    distinct = np.unique(ordered)
    # P(min >= v) = (share of values >= v) ** processes
    at_least = np.array([(ordered >= v).mean() for v in distinct]) ** processes
    mass = at_least - np.append(at_least[1:], 0.0)
    return float(np.dot(distinct, mass))


# ============================================
# Reports
# ============================================


def _category_label(category: str) -> str:
    if category == OVERALL:
        return "Overall"
    try:
        return f"{category} ({TaskCategory(category).label})"
    except ValueError:
        return category


def build_metric_report(
    matrix: RunMatrix,
    iteration_stats: Optional[IterationAccounting] = None,
    ks: Iterable[int] = DEFAULT_KS,
) -> MetricReport:
    """
    Metrics per category and overall, rounded to 2 decimals. Pass@1 is left out
    for agentic matrices with one run per problem, where it equals APR.
    """
    suppress = matrix.agentic and matrix.runs_per_problem == 1
    p1 = pass_at_1(matrix)
    rates = apr(matrix)
    at_k = pass_at_k_table(matrix, ks)
    sizes = {category: len(problems) for category, problems in _by_category(matrix).items()}
    sizes[OVERALL] = len(matrix.problems)

    def metrics(category: str) -> CategoryMetrics:
        return CategoryMetrics(
            category=category,
            problems=sizes[category],
            pass_at_1=None if suppress else round(p1[category], 2),
            apr=round(rates[category], 2),
            pass_at_k={k: round(v, 2) for k, v in at_k[category].items()},
        )

    return MetricReport(
        runs_per_problem=matrix.runs_per_problem,
        agentic=matrix.agentic,
        categories=[metrics(c) for c in sizes if c != OVERALL],
        overall=metrics(OVERALL),
        iteration_stats=iteration_stats,
        generated_at=datetime.now(timezone.utc).isoformat(),
    )


def _markdown(report: MetricReport) -> str:
    def cell(value: Optional[float]) -> str:
        return "-" if value is None else f"{value:.2f}"

    lines = [
        "# Benchmark report",
        "",
        f"Runs per problem: {report.runs_per_problem}",
        "",
        "| Category | Problems | Pass@1 | APR |",
        "|---|---:|---:|---:|",
    ]
    for row in [*report.categories, report.overall]:
        lines.append(
            f"| {_category_label(row.category)} | {row.problems} | "
            f"{cell(row.pass_at_1)} | {cell(row.apr)} |"
        )

    stats = report.iteration_stats
    if stats is not None:
        lines += [
            "",
            "## Iterations to success",
            "",
            "| Pairs | Solo | Parallel | Speedup |",
            "|---:|---:|---:|---:|",
            f"| {stats.pairs} | {stats.mean_solo_iterations:.2f} | "
            f"{stats.mean_parallel_iterations:.2f} | {stats.speedup:.2f}x |",
        ]
    return "\n".join(lines) + "\n"


def emit_report(report: MetricReport, fmt: str = "markdown") -> str:
    """
    Render a report document.

    Raises:
        EvalError: unknown format
    """
    if fmt == "json":
        return report.model_dump_json(indent=2) + "\n"
    if fmt == "markdown":
        return _markdown(report)
    raise EvalError(f"Unknown report format {fmt!r}; expected one of {', '.join(REPORT_FORMATS)}")


# ============================================
# Aggregation of run directories
# ============================================


def aggregate_outcomes(
    outcomes: Sequence[OutcomeFile],
) -> Tuple[RunMatrix, Optional[IterationAccounting]]:
    """
    Build a run matrix from raced outcomes and pair solo baselines with them.

    Tasks whose run count differs from the most common count are skipped with a
    warning. Baselines pair with the raced run of the same task and run index.

    Raises:
        EvalError: no raced outcome at all
    """
    raced: Dict[str, Dict[int, OutcomeFile]] = defaultdict(dict)
    solo: Dict[Tuple[str, int], OutcomeFile] = {}
    for outcome in outcomes:
        if outcome.baseline:
            solo[(outcome.task_id, outcome.run_index)] = outcome
        else:
            raced[outcome.task_id][outcome.run_index] = outcome
    if not raced:
        raise EvalError("No outcomes to aggregate")

    counts = [len(runs) for runs in raced.values()]
    runs_per_problem = max(set(counts), key=lambda c: (counts.count(c), c))

    problems: List[ProblemEntry] = []
    results: Dict[str, List[bool]] = {}
    solo_iterations: List[float] = []
    raced_iterations: List[float] = []
    for task_id in sorted(raced):
        runs = raced[task_id]
        if len(runs) != runs_per_problem:
            logger.warning(
                f"Skipping {task_id}: {len(runs)} runs recorded, {runs_per_problem} expected"
            )
            continue
        first = runs[min(runs)]
        problems.append(ProblemEntry(id=task_id, category=first.category))
        results[task_id] = [runs[i].winner is not None for i in sorted(runs)]

        for run_index in sorted(runs):
            baseline = solo.get((task_id, run_index))
            outcome = runs[run_index]
            if baseline is None:
                continue
            if baseline.iterations_to_success and outcome.iterations_to_success:
                solo_iterations.append(baseline.iterations_to_success)
                raced_iterations.append(outcome.iterations_to_success)

    matrix = RunMatrix(problems=problems, runs_per_problem=runs_per_problem, results=results)
    stats = None
    if solo_iterations:
        stats = accounting_from_iterations(solo_iterations, raced_iterations)
    return matrix, stats
