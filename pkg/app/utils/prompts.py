from functools import lru_cache
from pathlib import Path
from typing import List, Optional

from app.core.config import settings
from app.core.exceptions import ConfigError
from app.schemas.context import HistoryEntry
from app.schemas.forge import PairKind, PoolExample
from app.schemas.sim import StructuredFeedback
from app.schemas.task import TaskCategory

BUNDLED_TEMPLATES = Path(__file__).resolve().parent.parent / "templates"

# Mismatches listed in a reflector prompt
MAX_LISTED_MISMATCHES = 8


@lru_cache(maxsize=None)
def _read_template(directory: str, name: str) -> str:
    path = Path(directory) / f"{name}.txt"
    if not path.is_file():
        path = BUNDLED_TEMPLATES / f"{name}.txt"
    try:
        return path.read_text(encoding="utf-8").strip()
    except OSError as e:
        raise ConfigError(f"Cannot read prompt template {path}: {e}")


def load_template(name: str) -> str:
    """Template text by name; files in settings.prompt_dir shadow bundled ones"""
    return _read_template(settings.prompt_dir or str(BUNDLED_TEMPLATES), name)


# ============================================
# GENERATOR
# ============================================


def get_generator_system_message() -> str:
    return load_template("generator_system")


def get_category_instruction(category: TaskCategory) -> str:
    return load_template(f"category_{category.value}")


def get_output_instruction(top_module: str) -> str:
    return load_template("generator_output").format(top_module=top_module)


# ============================================
# REFLECTOR
# ============================================


def get_reflector_system_message() -> str:
    return load_template("reflector_system")


def _format_mismatches(feedback: StructuredFeedback) -> str:
    if not feedback.mismatches:
        return ""
    lines = ["mismatches:"]
    for m in feedback.mismatches[:MAX_LISTED_MISMATCHES]:
        at = f" at {m.time}" if m.time else ""
        lines.append(f"  - {m.signal}{at}: expected {m.expected}, got {m.actual}")
    hidden = len(feedback.mismatches) - MAX_LISTED_MISMATCHES
    if hidden > 0:
        lines.append(f"  ... {hidden} more")
    return "\n".join(lines)


def get_reflector_prompt(
    specification: str,
    code: str,
    feedback: StructuredFeedback,
    history: Optional[str] = None,
) -> str:
    progress = ""
    if feedback.tests_total:
        progress = f"tests passed: {feedback.tests_passed}/{feedback.tests_total}\n"
    history_block = f"EARLIER DIAGNOSES:\n{history}\n" if history else ""
    return load_template("reflector_user").format(
        specification=specification.strip(),
        code=code.strip(),
        failure_class=feedback.failure_class.value,
        error_message=feedback.error_message or "(none)",
        mismatches=_format_mismatches(feedback),
        progress=progress,
        log_excerpt=feedback.log_excerpt.strip() or "(empty)",
        history=history_block,
    )


# ============================================
# COORDINATOR
# ============================================


def get_distill_system_message() -> str:
    return load_template("coordinator_system")


def get_distill_prompt(
    specification: str, streak: List[HistoryEntry], limit: int
) -> str:
    attempts = "\n".join(
        f"- iteration {entry.iteration}: {entry.root_cause or 'unknown cause'}; "
        f"suggested: {entry.guidance_summary}"
        for entry in streak
    )
    label = streak[-1].fingerprint.label if streak else ""
    return load_template("coordinator_distill").format(
        specification=specification.strip(),
        count=len(streak),
        label=label or "unlabelled",
        attempts=attempts,
        limit=limit,
    )


# ============================================
# DATA FORGE
# ============================================


def get_forge_system_message() -> str:
    return load_template("forge_system")


def get_pair_prompt(kind: PairKind, example: PoolExample, script: str) -> str:
    faulty_section = ""
    if kind != PairKind.GENERATION:
        faulty_section = (
            "FAULTY_CODE:\n```verilog\n<a simplified or intentionally faulty "
            "version of the golden code>\n```\n"
        )
    return load_template("forge_pair").format(
        kind=kind.value,
        example_specification=example.specification.strip(),
        example_code=example.golden_code.strip(),
        script=script.strip(),
        faulty_section=faulty_section,
    )
