"""
Simulation Schemas
Tool configuration, parsed feedback and verdicts
"""

from enum import Enum
from pathlib import Path
from typing import List, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator


class SimConfig(BaseModel):
    compiler_command: str = "iverilog"
    simulator_command: str = "vvp"
    compile_flags: List[str] = Field(default_factory=lambda: ["-g2012"])
    sim_flags: List[str] = Field(default_factory=lambda: ["-n"])
    compile_timeout: float = Field(default=30.0, gt=0)
    sim_timeout: float = Field(default=10.0, gt=0)
    max_log_bytes: int = Field(default=65536, ge=4096)


class FailureClass(str, Enum):
    ASSERTION_FAIL = "AssertionFail"
    OUTPUT_MISMATCH = "OutputMismatch"
    COMPILE_ERROR = "CompileError"
    RUNTIME_ERROR = "RuntimeError"
    TIMEOUT = "Timeout"
    UNCLASSIFIED = "Unclassified"

    @property
    def precedence(self) -> int:
        """Higher wins when several patterns match one log"""
        return {
            FailureClass.COMPILE_ERROR: 5,
            FailureClass.TIMEOUT: 4,
            FailureClass.ASSERTION_FAIL: 3,
            FailureClass.OUTPUT_MISMATCH: 2,
            FailureClass.RUNTIME_ERROR: 1,
            FailureClass.UNCLASSIFIED: 0,
        }[self]


class SignalMismatch(BaseModel):
    model_config = ConfigDict(frozen=True)

    signal: str
    time: Optional[str] = None
    expected: str
    actual: str

    @model_validator(mode="after")
    def check_differs(self):
        if self.expected == self.actual:
            raise ValueError("a mismatch needs expected != actual")
        return self


class StructuredFeedback(BaseModel):
    model_config = ConfigDict(frozen=True)

    failure_class: FailureClass
    error_message: str = ""
    mismatches: List[SignalMismatch] = Field(default_factory=list)
    log_excerpt: str = ""
    tests_passed: Optional[int] = None
    tests_total: Optional[int] = None

    @model_validator(mode="after")
    def check_mismatches(self):
        if self.failure_class == FailureClass.OUTPUT_MISMATCH and not self.mismatches:
            raise ValueError("OutputMismatch feedback needs at least one mismatch")
        return self


class PassSignal(BaseModel):
    """Parser result for a log that carries the pass marker with zero exit status"""

    model_config = ConfigDict(frozen=True)

    tests_passed: Optional[int] = None
    tests_total: Optional[int] = None


class VerdictKind(str, Enum):
    PASS = "Pass"
    FAIL = "Fail"
    COMPILE_ERROR = "CompileError"
    TIMEOUT = "Timeout"
    TOOL_ERROR = "ToolError"


class SimVerdict(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: VerdictKind
    feedback: Optional[StructuredFeedback] = None
    message: Optional[str] = None

    @property
    def passed(self) -> bool:
        return self.kind == VerdictKind.PASS

    @property
    def failed(self) -> bool:
        return self.kind in (
            VerdictKind.FAIL,
            VerdictKind.COMPILE_ERROR,
            VerdictKind.TIMEOUT,
        )

    @classmethod
    def passing(cls) -> "SimVerdict":
        return cls(kind=VerdictKind.PASS)

    @classmethod
    def fail(cls, feedback: StructuredFeedback) -> "SimVerdict":
        return cls(kind=VerdictKind.FAIL, feedback=feedback)

    @classmethod
    def compile_error(cls, feedback: StructuredFeedback) -> "SimVerdict":
        return cls(kind=VerdictKind.COMPILE_ERROR, feedback=feedback)

    @classmethod
    def timeout(cls, feedback: StructuredFeedback) -> "SimVerdict":
        return cls(kind=VerdictKind.TIMEOUT, feedback=feedback)

    @classmethod
    def tool_error(cls, message: str) -> "SimVerdict":
        return cls(kind=VerdictKind.TOOL_ERROR, message=message)


class SimRun(BaseModel):
    """Raw outcome of one simulator invocation"""

    raw_log: str
    log_excerpt: str
    exit_status: int
    timed_out: bool = False
    truncated: bool = False


class CompileOutcome(BaseModel):
    artifact: Optional[Path] = None
    feedback: Optional[StructuredFeedback] = None

    @property
    def ok(self) -> bool:
        return self.artifact is not None
