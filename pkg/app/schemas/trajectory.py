"""
Trajectory Schemas
Per-iteration records of one agent loop
"""

from enum import Enum
from typing import List, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.schemas.generator import AttemptKind
from app.schemas.reflection import DiagnosticReport
from app.schemas.sim import SimVerdict


class IterationRecord(BaseModel):
    model_config = ConfigDict(frozen=True)

    index: int = Field(..., ge=1)
    attempt_kind: AttemptKind = AttemptKind.REPAIR
    generated_code: str
    verdict: SimVerdict
    diagnostic: Optional[DiagnosticReport] = None
    restarted: bool = False
    wall_time: float = 0.0

    @model_validator(mode="after")
    def check_diagnostic(self):
        if self.verdict.failed != (self.diagnostic is not None):
            raise ValueError("a diagnostic is present iff the verdict failed")
        return self


class OutcomeKind(str, Enum):
    SOLVED = "Solved"
    EXHAUSTED = "Exhausted"
    CANCELLED = "Cancelled"


class TrajectoryOutcome(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: OutcomeKind
    at_iteration: Optional[int] = None

    @classmethod
    def solved(cls, iteration: int) -> "TrajectoryOutcome":
        return cls(kind=OutcomeKind.SOLVED, at_iteration=iteration)

    @classmethod
    def exhausted(cls) -> "TrajectoryOutcome":
        return cls(kind=OutcomeKind.EXHAUSTED)

    @classmethod
    def cancelled(cls) -> "TrajectoryOutcome":
        return cls(kind=OutcomeKind.CANCELLED)


class Trajectory(BaseModel):
    model_config = ConfigDict(frozen=True)

    task_id: str
    process_id: int = 0
    seed: int = 0
    records: List[IterationRecord] = Field(default_factory=list)
    outcome: TrajectoryOutcome
    restart_count: int = 0
    error: Optional[str] = None

    @property
    def solved(self) -> bool:
        return self.outcome.kind == OutcomeKind.SOLVED

    @property
    def iterations(self) -> int:
        return len(self.records)

    @property
    def final_code(self) -> Optional[str]:
        return self.records[-1].generated_code if self.records else None


def outcome_from_records(
    records: List[IterationRecord], max_iterations: int
) -> Optional[TrajectoryOutcome]:
    """
    Outcome implied by the records alone: Solved at the first passing record,
    Exhausted when the budget is used up, None while the loop could still continue.
    """
    for record in records:
        if record.verdict.passed:
            return TrajectoryOutcome.solved(record.index)
    if len(records) >= max_iterations:
        return TrajectoryOutcome.exhausted()
    return None
