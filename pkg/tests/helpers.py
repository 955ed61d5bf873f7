import asyncio
import shutil
from pathlib import Path
from typing import List, Optional

from app.schemas.context import CoordinatorConfig, EvolvingContext
from app.schemas.llm import BackendKind, BackendSpec
from app.schemas.reflection import DiagnosticReport, ErrorFingerprint
from app.schemas.sim import FailureClass, SignalMismatch, SimVerdict, StructuredFeedback
from app.schemas.task import RtlTask
from app.schemas.trajectory import IterationRecord
from app.services.coordinator import CoordinatorService
from app.utils.llm_component.scripted import ScriptedBackend
from app.utils.llm_component.service import AgentBackends

FIXTURES = Path(__file__).parent / "fixtures"
TASKS = FIXTURES / "tasks"
GOLDEN = FIXTURES / "golden"
CANDIDATES = FIXTURES / "candidates"
SCRIPTS = FIXTURES / "scripts"

HAS_IVERILOG = shutil.which("iverilog") is not None and shutil.which("vvp") is not None

# task directory -> golden module stem
FIXTURE_TASKS = {
    "adder_spec2rtl": "adder8",
    "counter_completion": "counter4",
    "arbiter_debug": "arbiter4",
}

BUGGY = {
    "adder_spec2rtl": (CANDIDATES / "adder8_buggy.v").read_text(),
    "counter_completion": (GOLDEN / "counter4.v").read_text().replace("else if (en)", "else"),
    "arbiter_debug": (TASKS / "arbiter_debug" / "prior.v").read_text(),
}


def fenced(code: str) -> str:
    return f"```verilog\n{code.rstrip()}\n```"


def scripted(rules: List[dict], seed: int = 0) -> ScriptedBackend:
    return ScriptedBackend(BackendSpec(kind=BackendKind.SCRIPTED, rules=rules), seed=seed)


def two_stage_rules(buggy: str, golden: str) -> List[dict]:
    """Buggy code until the prompt carries repair history, golden afterwards"""
    return [
        {"tag": "generator", "contains": "PREVIOUS ATTEMPTS", "response": fenced(golden)},
        {"tag": "generator", "contains": "*", "response": fenced(buggy)},
    ]


REFLECTOR_RULES = [
    {
        "tag": "reflector",
        "contains": "*",
        "response": "ROOT_CAUSE: the output does not follow the specification\n"
        "FIX_GUIDANCE: re-derive the output logic from the port description",
    }
]

COORDINATOR_RULES = [
    {"tag": "coordinator", "contains": "*", "response": "- drive every output from every input it depends on"}
]


def agent_backends(generator_rules: List[dict], seed: int = 0) -> AgentBackends:
    return AgentBackends(
        generator=scripted(generator_rules, seed),
        reflector=scripted(REFLECTOR_RULES, seed),
        coordinator=scripted(COORDINATOR_RULES, seed),
    )


def mismatch_feedback(signal: str = "sum", time: str = "40", expected: str = "8", actual: str = "7"):
    return StructuredFeedback(
        failure_class=FailureClass.OUTPUT_MISMATCH,
        error_message=f"TB_FAIL signal={signal} time={time} expected={expected} actual={actual}",
        mismatches=[SignalMismatch(signal=signal, time=time, expected=expected, actual=actual)],
        tests_passed=3,
        tests_total=4,
    )


class FakeVerifier:
    """Passes candidates containing the PASS marker; fails the rest on one mismatch"""

    def __init__(self, delay: float = 0.0):
        self.delay = delay
        self.calls: List[str] = []

    async def verify(self, task: RtlTask, candidate_code: str, cancel: Optional[asyncio.Event] = None):
        self.calls.append(candidate_code)
        if self.delay:
            await asyncio.sleep(self.delay)
        if "PASS" in candidate_code:
            return SimVerdict.passing()
        return SimVerdict.fail(mismatch_feedback())


def fp(name: str) -> ErrorFingerprint:
    return ErrorFingerprint(digest=name, label=f"OutputMismatch:{name}")


def failing(index: int, name: str, guidance: Optional[str] = None):
    """A failing iteration record and its report, fingerprinted as `name`"""
    record = IterationRecord(
        index=index,
        generated_code=f"module m; // {index}\nendmodule",
        verdict=SimVerdict.fail(mismatch_feedback()),
        diagnostic=DiagnosticReport(fix_guidance=guidance or f"fix {name}", fingerprint=fp(name)),
    )
    return record, record.diagnostic


def fold(names, config: Optional[CoordinatorConfig] = None, context: Optional[EvolvingContext] = None):
    """Context after one failing iteration per fingerprint name"""
    config = config or CoordinatorConfig()
    context = context or EvolvingContext()
    start = len(context.entries)
    for offset, name in enumerate(names, start=start + 1):
        record, report = failing(offset, name)
        context = CoordinatorService.update(context, record, report, config)
    return context
