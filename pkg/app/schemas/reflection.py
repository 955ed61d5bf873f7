from pydantic import BaseModel, ConfigDict, Field


class ErrorFingerprint(BaseModel):
    """Normalized identity of a failure, used to tell whether an error persists"""

    model_config = ConfigDict(frozen=True)

    digest: str = Field(..., min_length=1)
    label: str = ""

    def __str__(self) -> str:
        return self.digest


class DiagnosticReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    root_cause: str = ""
    fix_guidance: str = Field(..., min_length=1)
    fingerprint: ErrorFingerprint
    structured: bool = True
