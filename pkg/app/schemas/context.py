"""
Coordinator Schemas
The self-evolving debugging context and its knobs
"""

from typing import List, Optional

from pydantic import BaseModel, ConfigDict, Field

from app.schemas.reflection import ErrorFingerprint


class CoordinatorConfig(BaseModel):
    stagnation_threshold: int = Field(default=4, ge=2)
    max_restarts: int = Field(default=3, ge=0)
    history_depth: int = Field(default=8, ge=0)
    insight_limit: int = Field(default=10, ge=1)
    guidance_summary_chars: int = Field(default=400, ge=40)


class HistoryEntry(BaseModel):
    model_config = ConfigDict(frozen=True)

    iteration: int = Field(..., ge=1)
    fingerprint: ErrorFingerprint
    guidance_summary: str
    root_cause: str = ""
    failure_class: str = ""
    tests_passed: Optional[int] = None
    tests_total: Optional[int] = None
    resolved: bool = False


class FailureStreak(BaseModel):
    model_config = ConfigDict(frozen=True)

    fingerprint: Optional[ErrorFingerprint] = None
    length: int = 0


class EvolvingContext(BaseModel):
    model_config = ConfigDict(frozen=True)

    entries: List[HistoryEntry] = Field(default_factory=list)
    insights: List[str] = Field(default_factory=list)
    restart_count: int = 0
    consecutive_same: FailureStreak = Field(default_factory=FailureStreak)
    last_code_hash: Optional[str] = None

    @property
    def is_empty(self) -> bool:
        return not self.entries and not self.insights

    def streak_entries(self) -> List[HistoryEntry]:
        """Entries of the current failing streak, oldest first"""
        length = self.consecutive_same.length
        return list(self.entries[-length:]) if length else []
