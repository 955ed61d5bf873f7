"""
Coordinator Service
Aggregates debugging history into an evolving context, detects stagnation and
restarts the design from distilled insights
"""

import logging
import re
from typing import List, Tuple

from app.core.exceptions import GatewayError
from app.core.hasher import DigestHelper
from app.schemas.context import (
    CoordinatorConfig,
    EvolvingContext,
    FailureStreak,
    HistoryEntry,
)
from app.schemas.llm import ChatMessage, ChatRequest, ChatRole
from app.schemas.reflection import DiagnosticReport
from app.schemas.task import RtlTask
from app.schemas.trajectory import IterationRecord
from app.utils.llm_component.base import BaseBackend
from app.utils.llm_component.service import complete
from app.utils.prompts import get_distill_prompt, get_distill_system_message

logger = logging.getLogger(__name__)

COORDINATOR_TAG = "coordinator"
LIST_MARKER = re.compile(r"^\s*(?:[-*•]|\d+[.)])\s*")


def summarize_guidance(text: str, limit: int) -> str:
    """Collapse whitespace and cut at the last word boundary within limit"""
    flat = " ".join(text.split())
    if len(flat) <= limit:
        return flat
    cut = flat[: limit - 3].rsplit(" ", 1)[0]
    return f"{cut}..."


def _with_resolution(entries: List[HistoryEntry]) -> List[HistoryEntry]:
    # Only the newest fingerprint is still failing; every entry sharing it is open,
    # so a fingerprint that comes back reopens all of its older entries
    if not entries:
        return []
    current = entries[-1].fingerprint.digest
    return [
        entry.model_copy(update={"resolved": entry.fingerprint.digest != current})
        for entry in entries
    ]


def _parse_insights(text: str) -> List[str]:
    insights = []
    for line in text.splitlines():
        sentence = LIST_MARKER.sub("", line).strip()
        if sentence:
            insights.append(sentence)
    return insights


def _extend_insights(current: List[str], new: List[str], limit: int) -> Tuple[List[str], int]:
    merged = list(current)
    added = 0
    for insight in new:
        if len(merged) >= limit:
            break
        if insight not in merged:
            merged.append(insight)
            added += 1
    return merged, added


class CoordinatorService:
    """Pure context transforms plus one LLM call for restart distillation"""

    @staticmethod
    def update(
        context: EvolvingContext,
        record: IterationRecord,
        report: DiagnosticReport,
        config: CoordinatorConfig,
    ) -> EvolvingContext:
        """
        Fold one failing iteration into the context.

        Args:
            context: Context before the iteration
            record: The failing iteration
            report: Its diagnostic report
            config: Coordinator knobs (summary length)

        Returns:
            New context; the input is left untouched
        """
        feedback = record.verdict.feedback
        entry = HistoryEntry(
            iteration=record.index,
            fingerprint=report.fingerprint,
            guidance_summary=summarize_guidance(
                report.fix_guidance, config.guidance_summary_chars
            ),
            root_cause=summarize_guidance(report.root_cause, config.guidance_summary_chars),
            failure_class=feedback.failure_class.value if feedback else record.verdict.kind.value,
            tests_passed=feedback.tests_passed if feedback else None,
            tests_total=feedback.tests_total if feedback else None,
        )

        streak = context.consecutive_same
        if context.entries and streak.fingerprint == report.fingerprint:
            streak = FailureStreak(fingerprint=report.fingerprint, length=streak.length + 1)
        else:
            streak = FailureStreak(fingerprint=report.fingerprint, length=1)

        return context.model_copy(
            update={
                "entries": _with_resolution([*context.entries, entry]),
                "consecutive_same": streak,
                "last_code_hash": DigestHelper.short(record.generated_code),
            }
        )

    @staticmethod
    def check_stagnation(context: EvolvingContext, config: CoordinatorConfig) -> bool:
        return (
            context.consecutive_same.length >= config.stagnation_threshold
            and context.restart_count < config.max_restarts
        )

    @staticmethod
    async def restart(
        context: EvolvingContext,
        task: RtlTask,
        backend: BaseBackend,
        config: CoordinatorConfig,
        temperature: float = 0.2,
        max_tokens: int = 4096,
    ) -> EvolvingContext:
        """
        Discard the failing streak and keep what it taught.

        One gateway call distills the streak into constraint sentences. A gateway
        failure or an empty answer falls back to the streak's distinct guidance
        summaries; the loop is never aborted here.

        Returns:
            Context with entries cleared, insights extended (capped at
            insight_limit), restart_count incremented and the streak reset
        """
        streak = context.streak_entries()
        fallback = list(dict.fromkeys(entry.guidance_summary for entry in streak))

        request = ChatRequest(
            messages=[
                ChatMessage(role=ChatRole.SYSTEM, content=get_distill_system_message()),
                ChatMessage(
                    role=ChatRole.USER,
                    content=get_distill_prompt(
                        task.specification, streak, config.insight_limit
                    ),
                ),
            ],
            temperature=temperature,
            max_tokens=max_tokens,
            tag=COORDINATOR_TAG,
        )

        try:
            response = await complete(backend, request)
            distilled = _parse_insights(response.content)[: config.insight_limit]
            if not distilled:
                logger.warning("Distillation returned no insights; using streak guidance")
                distilled = fallback
        except GatewayError as e:
            logger.warning(f"Distillation failed ({e.message}); using streak guidance")
            distilled = fallback

        insights, added = _extend_insights(context.insights, distilled, config.insight_limit)
        logger.info(
            f"Restart {context.restart_count + 1}/{config.max_restarts}: "
            f"{len(streak)}-iteration streak dropped, {added} insight(s) added"
        )
        return EvolvingContext(
            entries=[],
            insights=insights,
            restart_count=context.restart_count + 1,
            consecutive_same=FailureStreak(),
            last_code_hash=context.last_code_hash,
        )

    @staticmethod
    def render(context: EvolvingContext, depth: int) -> str:
        """
        Deterministic text view of the context: INSIGHTS, RESOLVED, then the
        newest `depth` OPEN entries (newest last). Empty context renders "".
        """
        sections = []

        if context.insights:
            lines = ["INSIGHTS (constraints learned from discarded attempts):"]
            lines += [f"- {insight}" for insight in context.insights]
            sections.append("\n".join(lines))

        resolved = [e for e in context.entries if e.resolved]
        if resolved:
            lines = ["RESOLVED (fixed in earlier attempts, keep them fixed):"]
            lines += [f"- iteration {e.iteration}: {e.guidance_summary}" for e in resolved]
            sections.append("\n".join(lines))

        unresolved = [e for e in context.entries if not e.resolved]
        shown = unresolved[-depth:] if depth > 0 else []
        if shown:
            lines = ["OPEN (still failing, newest last):"]
            for e in shown:
                progress = ""
                if e.tests_total:
                    progress = f", passed {e.tests_passed}/{e.tests_total}"
                label = e.fingerprint.label or e.fingerprint.digest
                lines.append(f"- iteration {e.iteration} [{label}] ({e.failure_class}{progress})")
                if e.root_cause:
                    lines.append(f"  cause: {e.root_cause}")
                lines.append(f"  guidance: {e.guidance_summary}")
            sections.append("\n".join(lines))

        return "\n\n".join(sections)
