from enum import Enum
from typing import Optional

from pydantic import BaseModel, ConfigDict, model_validator


class AttemptKind(str, Enum):
    FRESH = "Fresh"
    REPAIR = "Repair"
    RESTART = "Restart"


class GeneratorPrompt(BaseModel):
    model_config = ConfigDict(frozen=True)

    system: str
    spec: str
    prior_code: Optional[str] = None
    context_render: str = ""
    attempt_kind: AttemptKind
    user: str

    @model_validator(mode="after")
    def check_kind(self):
        if self.attempt_kind == AttemptKind.FRESH and self.context_render:
            raise ValueError("a fresh attempt carries no context")
        return self

    @property
    def size(self) -> int:
        return len(self.system) + len(self.user)
