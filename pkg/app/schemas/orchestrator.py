"""
Orchestrator Schemas
Loop/race configuration and race outcomes
"""

from typing import List, Optional

from pydantic import BaseModel, Field

from app.schemas.context import CoordinatorConfig
from app.schemas.trajectory import OutcomeKind, Trajectory


class LoopConfig(BaseModel):
    max_iterations: int = Field(default=30, ge=1)
    generator_temperature: float = Field(default=1.2, ge=0)
    reflector_temperature: float = Field(default=0.2, ge=0)
    coordinator_temperature: float = Field(default=0.2, ge=0)
    max_tokens: int = Field(default=4096, gt=0)
    prompt_char_budget: int = Field(default=100_000, gt=0)
    coordinator: CoordinatorConfig = Field(default_factory=CoordinatorConfig)
    seed: int = 0


class ParallelConfig(BaseModel):
    processes: int = Field(default=5, ge=1)
    loop: Optional[LoopConfig] = None
    cancellation_grace: float = Field(default=5.0, ge=0)
    seed_stride: int = Field(default=1, ge=1)


class ProcessSummary(BaseModel):
    process_id: int
    seed: int
    outcome: OutcomeKind
    solved_at: Optional[int] = None
    iterations: int
    restart_count: int
    error: Optional[str] = None


class ParallelOutcome(BaseModel):
    task_id: str
    processes: int
    winner: Optional[int] = None
    winning_code: Optional[str] = None
    trajectories: List[Trajectory] = Field(default_factory=list)
    total_iterations_executed: int = 0
    iterations_to_success: Optional[int] = None
    error: Optional[str] = None
    cancel_issued_at: Optional[float] = None

    @property
    def solved(self) -> bool:
        return self.winner is not None

    def summaries(self) -> List[ProcessSummary]:
        return [
            ProcessSummary(
                process_id=t.process_id,
                seed=t.seed,
                outcome=t.outcome.kind,
                solved_at=t.outcome.at_iteration,
                iterations=t.iterations,
                restart_count=t.restart_count,
                error=t.error,
            )
            for t in self.trajectories
        ]


class OutcomeFile(BaseModel):
    """Summary persisted as outcome.json in a run directory"""

    task_id: str
    category: str
    run_index: int = 0
    seed: int = 0
    processes: int
    baseline: bool = False
    winner: Optional[int] = None
    iterations_to_success: Optional[int] = None
    total_iterations_executed: int = 0
    error: Optional[str] = None
    process_summaries: List[ProcessSummary] = Field(default_factory=list)
    started_at: Optional[str] = None
    finished_at: Optional[str] = None


class IterationAccounting(BaseModel):
    pairs: int
    mean_parallel_iterations: float
    mean_solo_iterations: float
    speedup: float
