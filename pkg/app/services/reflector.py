"""
Reflector Service
Turns simulation feedback into a diagnostic report with root cause and fix
guidance, and computes the error fingerprints the coordinator tracks
"""

import logging
import re
from typing import Dict, Optional

from app.core.exceptions import EmptyReflection
from app.core.hasher import DigestHelper
from app.schemas.context import EvolvingContext
from app.schemas.llm import ChatMessage, ChatRequest, ChatRole
from app.schemas.reflection import DiagnosticReport, ErrorFingerprint
from app.schemas.sim import StructuredFeedback
from app.schemas.task import RtlTask
from app.services.coordinator import CoordinatorService
from app.utils.llm_component.base import BaseBackend
from app.utils.llm_component.service import complete
from app.utils.prompts import get_reflector_prompt, get_reflector_system_message

logger = logging.getLogger(__name__)

REFLECTOR_TAG = "reflector"
FINGERPRINT_LENGTH = 12
# Unresolved history entries shown to the reflector
REFLECTOR_HISTORY_DEPTH = 3

VERILOG_LITERAL = re.compile(r"\b\d*\s*'[sS]?[bodhBODH]\s*[0-9a-fA-FxXzZ_?]+")
HEX_LITERAL = re.compile(r"\b0x[0-9a-f]+\b")
NUMBER = re.compile(r"\b\d+(?:\.\d+)?\b")

SECTION = re.compile(
    r"^[\s*#>_-]*(ROOT[_ ]CAUSE|FIX[_ ]GUIDANCE)[\s*_]*:[\s*]*",
    re.IGNORECASE | re.MULTILINE,
)


def normalize_message(message: str) -> str:
    text = message.lower()
    text = VERILOG_LITERAL.sub("#", text)
    text = HEX_LITERAL.sub("#", text)
    text = NUMBER.sub("#", text)
    return " ".join(text.split())


def fingerprint(feedback: StructuredFeedback) -> ErrorFingerprint:
    """
    Identity of a failure, insensitive to simulation times and literal values.

    The digest covers the failure class, the sorted mismatching signal names and
    the normalized error message.
    """
    signals = sorted({m.signal for m in feedback.mismatches})
    normalized = normalize_message(feedback.error_message)
    material = f"{feedback.failure_class.value}|{','.join(signals)}|{normalized}"

    label = feedback.failure_class.value
    if signals:
        label += ":" + ",".join(signals)
    return ErrorFingerprint(
        digest=DigestHelper.short(material, FINGERPRINT_LENGTH), label=label
    )


def parse_report(text: str) -> Dict[str, str]:
    """Split a reply at ROOT_CAUSE / FIX_GUIDANCE markers; last occurrence wins"""
    sections: Dict[str, str] = {}
    markers = list(SECTION.finditer(text))
    for position, marker in enumerate(markers):
        end = markers[position + 1].start() if position + 1 < len(markers) else len(text)
        key = marker.group(1).upper().replace(" ", "_")
        sections[key] = text[marker.end() : end].strip()
    return sections


class ReflectorService:
    @staticmethod
    async def reflect(
        task: RtlTask,
        buggy_code: str,
        feedback: StructuredFeedback,
        context: Optional[EvolvingContext],
        backend: BaseBackend,
        temperature: float = 0.2,
        max_tokens: int = 4096,
    ) -> DiagnosticReport:
        """
        Diagnose the primary failure of one candidate.

        Args:
            task: The design problem
            buggy_code: Candidate that failed
            feedback: Structured feedback of the failing verdict
            context: Evolving context, read only; recent open entries are shown
            backend: Reflector backend

        Returns:
            DiagnosticReport whose fingerprint is always computed locally

        Raises:
            EmptyReflection: the backend answered with an empty reply
            GatewayError: propagated from the backend
        """
        history = ""
        if context is not None and context.entries:
            history = CoordinatorService.render(
                context.model_copy(update={"insights": []}), REFLECTOR_HISTORY_DEPTH
            )

        request = ChatRequest(
            messages=[
                ChatMessage(role=ChatRole.SYSTEM, content=get_reflector_system_message()),
                ChatMessage(
                    role=ChatRole.USER,
                    content=get_reflector_prompt(
                        task.specification, buggy_code, feedback, history
                    ),
                ),
            ],
            temperature=temperature,
            max_tokens=max_tokens,
            tag=REFLECTOR_TAG,
        )
        response = await complete(backend, request)

        reply = response.content.strip()
        if not reply:
            raise EmptyReflection("Reflector returned an empty reply")

        sections = parse_report(reply)
        guidance = sections.get("FIX_GUIDANCE", "")
        if guidance:
            report = DiagnosticReport(
                root_cause=sections.get("ROOT_CAUSE", ""),
                fix_guidance=guidance,
                fingerprint=fingerprint(feedback),
                structured=True,
            )
        else:
            logger.warning("Reflector reply has no FIX_GUIDANCE section; using it whole")
            report = DiagnosticReport(
                root_cause="",
                fix_guidance=reply,
                fingerprint=fingerprint(feedback),
                structured=False,
            )

        logger.debug(f"Diagnosis [{report.fingerprint.label}]: {report.root_cause}")
        return report

    @staticmethod
    def degraded_report(feedback: StructuredFeedback) -> DiagnosticReport:
        """Unstructured report built from the feedback alone"""
        guidance = feedback.error_message or f"Resolve the {feedback.failure_class.value}"
        return DiagnosticReport(
            fix_guidance=guidance, fingerprint=fingerprint(feedback), structured=False
        )
