"""
Task Schemas
Design problems, task bundles and isolated workspaces
"""

import re
from datetime import datetime
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

HDL_IDENTIFIER = re.compile(r"^[A-Za-z_][A-Za-z0-9_$]*$")


class TaskCategory(str, Enum):
    """Problem categories, serialized by their category id"""

    CODE_COMPLETION = "cid002"
    SPEC_TO_RTL = "cid003"
    CODE_MODIFICATION = "cid004"
    CODE_DEBUGGING = "cid016"

    @property
    def needs_prior_code(self) -> bool:
        return self in (TaskCategory.CODE_MODIFICATION, TaskCategory.CODE_DEBUGGING)

    @property
    def label(self) -> str:
        return {
            TaskCategory.CODE_COMPLETION: "CodeCompletion",
            TaskCategory.SPEC_TO_RTL: "SpecToRtl",
            TaskCategory.CODE_MODIFICATION: "CodeModification",
            TaskCategory.CODE_DEBUGGING: "CodeDebugging",
        }[self]


class SourceFile(BaseModel):
    """A named HDL file"""

    model_config = ConfigDict(frozen=True)

    name: str = Field(..., min_length=1)
    content: str


class RtlTask(BaseModel):
    """One design problem"""

    model_config = ConfigDict(frozen=True)

    id: str = Field(..., min_length=1)
    category: TaskCategory
    specification: str = Field(..., min_length=1)
    prior_code: Optional[str] = None
    testbench_sources: List[SourceFile]
    top_module: str
    sim_timeout: float = Field(default=10.0, gt=0)

    @model_validator(mode="after")
    def check_invariants(self):
        if self.category.needs_prior_code and not self.prior_code:
            raise ValueError(
                f"category {self.category.value} requires prior_code"
            )
        if not self.category.needs_prior_code and self.prior_code is not None:
            raise ValueError(
                f"category {self.category.value} must not carry prior_code"
            )
        if not self.testbench_sources:
            raise ValueError("testbench_sources must not be empty")
        if not HDL_IDENTIFIER.match(self.top_module):
            raise ValueError(f"top_module {self.top_module!r} is not an HDL identifier")
        return self

    @property
    def candidate_filename(self) -> str:
        return f"{self.top_module}.v"


class TaskManifest(BaseModel):
    """On-disk task.json of a task bundle"""

    id: str
    category: str
    top_module: str
    sim_timeout: float = 10.0
    spec_file: str
    prior_code_file: Optional[str] = None
    testbench_files: List[str]


class Workspace(BaseModel):
    """Isolated scratch directory holding one candidate and its testbench"""

    model_config = ConfigDict(frozen=True)

    root: Path
    files: Dict[str, str]
    created_at: datetime

    def path(self, name: str) -> Path:
        return self.root / name
