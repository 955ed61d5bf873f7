"""
Simulation log parsing

Tier 1 is the machine-readable contract of the bundled testbenches:
    TB_PASS
    TB_FAIL signal=<s> time=<t> expected=<e> actual=<a>
    TB_ASSERT <message>
    TB_SUMMARY passed=<p> total=<n>
Tier 2 is a regex ladder for foreign testbenches.
"""

import logging
import re
from typing import Dict, List, Optional, Tuple, Union

from pydantic import ValidationError

from app.schemas.sim import FailureClass, PassSignal, SignalMismatch, StructuredFeedback

logger = logging.getLogger(__name__)

TRUNCATION_MARKER = "\n...[log truncated]...\n"

TB_PASS = re.compile(r"^\s*TB_PASS\b")
TB_FAIL = re.compile(
    r"^\s*TB_FAIL\s+signal=(?P<signal>\S+)"
    r"(?:\s+time=(?P<time>\S+))?"
    r"\s+expected=(?P<expected>\S+)\s+actual=(?P<actual>\S+)"
)
TB_ASSERT = re.compile(r"^\s*TB_ASSERT\b\s*(?P<message>.*)$")
TB_SUMMARY = re.compile(r"^\s*TB_SUMMARY\s+passed=(?P<passed>\d+)\s+total=(?P<total>\d+)")

ASSERTION = re.compile(
    r"assert(?:ion)?\s*(?:failed|failure|violat)|assertion\b.*\bfail", re.IGNORECASE
)
MISMATCH = re.compile(
    r"expected\b[\s:=]*(?P<expected>[^\s,;]+)[\s,;]*(?:but\s+)?"
    r"(?:got|actual|received|is)\b[\s:=]*(?P<actual>[^\s,;]+)",
    re.IGNORECASE,
)
RUNTIME_MARKER = re.compile(r"\$fatal|\$error|\bFATAL\b|\bERROR\b", re.IGNORECASE)
TIME_HINT = re.compile(r"(?:\btime\b\s*[=:]?\s*|@\s*)(?P<time>\d+)", re.IGNORECASE)
IDENTIFIER = re.compile(r"[A-Za-z_][\w.\[\]]*")

_SIGNAL_STOPWORDS = {
    "error", "mismatch", "at", "time", "fail", "failed", "failure", "ns", "ps",
    "output", "on", "signal", "value", "for", "in", "test", "check", "warning",
    "the", "of", "tb_fail", "expected",
}


def _tier2_mismatch(line: str) -> Optional[SignalMismatch]:
    match = MISMATCH.search(line)
    if not match:
        return None
    expected, actual = match.group("expected"), match.group("actual")
    if expected == actual:
        return None
    prefix = line[: match.start()]
    signal = "?"
    for candidate in reversed(IDENTIFIER.findall(prefix)):
        if candidate.lower() not in _SIGNAL_STOPWORDS:
            signal = candidate
            break
    time_match = TIME_HINT.search(line)
    return SignalMismatch(
        signal=signal,
        time=time_match.group("time") if time_match else None,
        expected=expected,
        actual=actual,
    )


def is_failure_line(line: str) -> bool:
    return bool(
        TB_FAIL.match(line)
        or TB_ASSERT.match(line)
        or ASSERTION.search(line)
        or (MISMATCH.search(line) and _tier2_mismatch(line))
        or RUNTIME_MARKER.search(line)
    )


def truncate_log(raw_log: str, max_bytes: int) -> Tuple[str, bool]:
    """
    Bound a log to max_bytes (UTF-8), keeping the first failing line whenever one
    exists. Returns (excerpt, truncated).
    """
    data = raw_log.encode("utf-8")
    if len(data) <= max_bytes:
        return raw_log, False

    marker = TRUNCATION_MARKER.encode("utf-8")
    budget = max_bytes - len(marker)

    offset = 0
    failure_span = None
    for line in raw_log.splitlines(keepends=True):
        encoded = len(line.encode("utf-8"))
        if is_failure_line(line):
            failure_span = (offset, offset + encoded)
            break
        offset += encoded

    if failure_span is None or failure_span[1] <= budget:
        excerpt = data[:budget] + marker
    else:
        head_keep = budget // 4
        start = failure_span[0]
        excerpt = data[:head_keep] + marker + data[start : start + budget - head_keep]

    return excerpt.decode("utf-8", errors="ignore"), True


def parse_log(
    raw_log: str,
    exit_status: int,
    timed_out: bool = False,
    max_log_bytes: int = 65536,
) -> Union[StructuredFeedback, PassSignal]:
    """
    Classify a simulation log.

    Rule ladder (highest precedence first): Timeout > AssertionFail >
    OutputMismatch > RuntimeError > Unclassified. PassSignal only for the
    explicit pass marker with zero exit status and no failure evidence.
    """
    lines = raw_log.splitlines()
    first_line: Dict[FailureClass, str] = {}
    mismatches: List[SignalMismatch] = []
    saw_pass = False
    tests_passed: Optional[int] = None
    tests_total: Optional[int] = None

    def note(failure_class: FailureClass, line: str) -> None:
        first_line.setdefault(failure_class, line.strip())

    for line in lines:
        if TB_PASS.match(line):
            saw_pass = True
            continue

        summary = TB_SUMMARY.match(line)
        if summary:
            tests_passed = int(summary.group("passed"))
            tests_total = int(summary.group("total"))
            continue

        tb_fail = TB_FAIL.match(line)
        if tb_fail:
            try:
                mismatches.append(
                    SignalMismatch(
                        signal=tb_fail.group("signal"),
                        time=tb_fail.group("time"),
                        expected=tb_fail.group("expected"),
                        actual=tb_fail.group("actual"),
                    )
                )
                note(FailureClass.OUTPUT_MISMATCH, line)
            except ValidationError:
                logger.debug(f"Ignoring TB_FAIL line with equal values: {line.strip()}")
            continue

        tb_assert = TB_ASSERT.match(line)
        if tb_assert:
            note(FailureClass.ASSERTION_FAIL, tb_assert.group("message").strip() or line)
            continue

        if ASSERTION.search(line):
            note(FailureClass.ASSERTION_FAIL, line)
            continue

        mismatch = _tier2_mismatch(line)
        if mismatch:
            mismatches.append(mismatch)
            note(FailureClass.OUTPUT_MISMATCH, line)
            continue

        if exit_status != 0 and RUNTIME_MARKER.search(line):
            note(FailureClass.RUNTIME_ERROR, line)

    if timed_out:
        note(FailureClass.TIMEOUT, "simulation exceeded its time limit")

    excerpt, _ = truncate_log(raw_log, max_log_bytes)

    if not first_line:
        if saw_pass and exit_status == 0:
            return PassSignal(tests_passed=tests_passed, tests_total=tests_total)
        if exit_status != 0:
            message = f"simulator exited with status {exit_status}"
        else:
            message = "testbench finished without reporting success"
        return StructuredFeedback(
            failure_class=FailureClass.UNCLASSIFIED,
            error_message=message,
            log_excerpt=excerpt,
            tests_passed=tests_passed,
            tests_total=tests_total,
        )

    winner = max(first_line, key=lambda c: c.precedence)
    return StructuredFeedback(
        failure_class=winner,
        error_message=first_line[winner],
        mismatches=mismatches,
        log_excerpt=excerpt,
        tests_passed=tests_passed,
        tests_total=tests_total,
    )


def first_compiler_error(output: str) -> str:
    """First line of compiler output that reports an error"""
    lines = [line.strip() for line in output.splitlines() if line.strip()]
    for line in lines:
        if re.search(r"error|syntax", line, re.IGNORECASE):
            return line
    return lines[0] if lines else "compilation failed"
