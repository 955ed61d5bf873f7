"""
Data Forge Schemas
Corpus items, pipeline knobs and filter accounting
"""

from enum import Enum
from typing import Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator


class RawScript(BaseModel):
    model_config = ConfigDict(frozen=True)

    id: str
    source: str = ""
    content: str

    @property
    def line_count(self) -> int:
        return len(self.content.splitlines())


class TokenGranularity(str, Enum):
    WORD = "word"
    CHAR_5GRAM = "char-5gram"


class ForgeStages(BaseModel):
    dedup: bool = True
    machine_generated: bool = True
    line_bounds: bool = True
    syntax: bool = True
    contamination: bool = True


class ForgeConfig(BaseModel):
    min_lines: int = Field(default=30, gt=0)
    max_lines: int = Field(default=2000, gt=0)
    similarity_threshold: float = Field(default=0.8, gt=0, le=1)
    token_granularity: TokenGranularity = TokenGranularity.WORD
    stages: ForgeStages = Field(default_factory=ForgeStages)
    workers: int = Field(default=4, ge=1)
    banner_scan_lines: int = Field(default=20, ge=1)
    primitive_density: float = Field(default=0.5, gt=0, le=1)
    escaped_identifier_density: float = Field(default=0.3, gt=0, le=1)
    pair_seed: int = 0

    @model_validator(mode="after")
    def check_bounds(self):
        if not self.min_lines < self.max_lines:
            raise ValueError("min_lines must be below max_lines")
        return self


class StageReport(BaseModel):
    name: str
    input: int
    rejected: int
    retained: int


class Rejection(BaseModel):
    stage: str
    reason: str
    detail: Optional[str] = None
    similarity: Optional[float] = None


class FilterReport(BaseModel):
    stages: List[StageReport] = Field(default_factory=list)
    rejections: Dict[str, Rejection] = Field(default_factory=dict)

    @property
    def retained(self) -> int:
        return self.stages[-1].retained if self.stages else 0

    def add_stage(
        self, name: str, input_count: int, rejected: Dict[str, Rejection]
    ) -> None:
        self.stages.append(
            StageReport(
                name=name,
                input=input_count,
                rejected=len(rejected),
                retained=input_count - len(rejected),
            )
        )
        self.rejections.update(rejected)


class PairKind(str, Enum):
    GENERATION = "generation"
    MODIFICATION = "modification"
    DEBUGGING = "debugging"


class PoolExample(BaseModel):
    specification: str
    golden_code: str
    kind: PairKind


class ExamplePool(BaseModel):
    examples: List[PoolExample] = Field(..., min_length=1)

    @property
    def size(self) -> int:
        return len(self.examples)


class SpecCodePair(BaseModel):
    specification: str
    golden_code: str
    kind: PairKind
    provenance: str


class PairGenerationResult(BaseModel):
    pairs: List[SpecCodePair] = Field(default_factory=list)
    reason: Optional[str] = None
