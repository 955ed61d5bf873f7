from typing import Dict, List, Optional

from pydantic import BaseModel, Field, model_validator

from app.schemas.orchestrator import IterationAccounting


class ProblemEntry(BaseModel):
    id: str
    category: str


class RunMatrix(BaseModel):
    problems: List[ProblemEntry]
    runs_per_problem: int = Field(..., ge=1)
    results: Dict[str, List[bool]]
    agentic: bool = False

    @model_validator(mode="after")
    def check_grid(self):
        ids = [p.id for p in self.problems]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate problem id")
        for problem_id in ids:
            row = self.results.get(problem_id)
            if row is None or len(row) != self.runs_per_problem:
                raise ValueError(
                    f"problem {problem_id} needs exactly {self.runs_per_problem} results"
                )
        return self


class CategoryMetrics(BaseModel):
    category: str
    problems: int
    pass_at_1: Optional[float] = None
    apr: float
    pass_at_k: Dict[str, float] = Field(default_factory=dict)


class MetricReport(BaseModel):
    runs_per_problem: int
    agentic: bool = False
    categories: List[CategoryMetrics]
    overall: CategoryMetrics
    iteration_stats: Optional[IterationAccounting] = None
    generated_at: Optional[str] = None
