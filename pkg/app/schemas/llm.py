"""
LLM Gateway Schemas
Chat messages, requests/responses and backend specifications
"""

from enum import Enum
from typing import Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator


class ChatRole(str, Enum):
    SYSTEM = "system"
    USER = "user"
    ASSISTANT = "assistant"


class ChatMessage(BaseModel):
    model_config = ConfigDict(frozen=True)

    role: ChatRole
    content: str

    @model_validator(mode="after")
    def check_content(self):
        if self.role != ChatRole.SYSTEM and not self.content:
            raise ValueError(f"{self.role.value} message must not be empty")
        return self


class ChatRequest(BaseModel):
    model_config = ConfigDict(frozen=True)

    messages: List[ChatMessage] = Field(..., min_length=1)
    temperature: float = Field(default=0.2, ge=0)
    max_tokens: int = Field(default=4096, gt=0)
    tag: str = ""

    @model_validator(mode="after")
    def check_order(self):
        for message in self.messages[1:]:
            if message.role == ChatRole.SYSTEM:
                raise ValueError("only the first message may be a system message")
        return self

    @property
    def last_user_message(self) -> str:
        for message in reversed(self.messages):
            if message.role == ChatRole.USER:
                return message.content
        return ""


class TokenUsage(BaseModel):
    prompt_tokens: Optional[int] = None
    completion_tokens: Optional[int] = None
    total_tokens: Optional[int] = None


class ChatResponse(BaseModel):
    content: str
    backend_id: str
    latency: float = 0.0
    token_usage: Optional[TokenUsage] = None


class BackendKind(str, Enum):
    HTTP = "http"
    SCRIPTED = "scripted"
    REPLAY = "replay"


class ScriptRule(BaseModel):
    """
    One rule of a scripted backend. All given constraints must hold; the first
    matching rule of the script answers the request.
    """

    contains: Optional[str] = None
    pattern: Optional[str] = None
    tag: Optional[str] = None
    seed: Optional[int] = None
    call_index: Optional[int] = None
    min_call_index: Optional[int] = None
    max_call_index: Optional[int] = None
    times: Optional[int] = Field(default=None, ge=1)
    response: Optional[str] = None
    response_file: Optional[str] = None
    error: Optional[str] = None

    @model_validator(mode="after")
    def check_action(self):
        actions = [self.response is not None, self.response_file is not None, self.error is not None]
        if sum(actions) != 1:
            raise ValueError("a rule needs exactly one of response, response_file, error")
        return self


class BackendSpec(BaseModel):
    kind: BackendKind

    # Http
    endpoint: Optional[str] = None
    model: Optional[str] = None
    auth_env_var: Optional[str] = None
    request_timeout: Optional[float] = None
    extra_headers: Optional[Dict[str, str]] = None

    # Scripted
    script_path: Optional[str] = None
    rules: Optional[List[ScriptRule]] = None

    # Replay
    cassette_path: Optional[str] = None
    fallback: Optional[Literal["error", "record"]] = None
    inner: Optional["BackendSpec"] = None

    # Http retries, spaced by the SDK's exponential backoff
    max_retries: int = Field(default=3, ge=0)

    @model_validator(mode="after")
    def check_kind_fields(self):
        http_fields = {
            "endpoint": self.endpoint,
            "model": self.model,
            "auth_env_var": self.auth_env_var,
            "request_timeout": self.request_timeout,
            "extra_headers": self.extra_headers,
        }
        scripted_fields = {"script_path": self.script_path, "rules": self.rules}
        replay_fields = {
            "cassette_path": self.cassette_path,
            "fallback": self.fallback,
            "inner": self.inner,
        }
        own = {
            BackendKind.HTTP: http_fields,
            BackendKind.SCRIPTED: scripted_fields,
            BackendKind.REPLAY: replay_fields,
        }
        for kind, fields in own.items():
            if kind == self.kind:
                continue
            stray = [name for name, value in fields.items() if value is not None]
            if stray:
                raise ValueError(
                    f"{self.kind.value} backend must not set {', '.join(stray)}"
                )

        if self.kind == BackendKind.HTTP and not (self.endpoint and self.model):
            raise ValueError("http backend needs endpoint and model")
        if self.kind == BackendKind.SCRIPTED and (
            (self.script_path is None) == (self.rules is None)
        ):
            raise ValueError("scripted backend needs exactly one of script_path, rules")
        if self.kind == BackendKind.REPLAY:
            if not self.cassette_path:
                raise ValueError("replay backend needs cassette_path")
            if self.fallback == "record" and self.inner is None:
                raise ValueError("record fallback needs an inner backend")
        return self

    def replay_fallback(self) -> str:
        return self.fallback or "error"


BackendSpec.model_rebuild()


class CassetteEntry(BaseModel):
    hash: str
    request: Dict
    response: ChatResponse


class GatewayCall(BaseModel):
    """Call log entry kept by every backend"""

    tag: str
    started_at: float
    request_hash: str
