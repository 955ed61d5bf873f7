from app.utils.llm_component.base import (
    BaseBackend,
    canonical_request_hash,
    canonical_request_payload,
)
from app.utils.llm_component.http import HttpBackend
from app.utils.llm_component.replay import ReplayBackend
from app.utils.llm_component.scripted import ScriptedBackend
from app.utils.llm_component.service import (
    AgentBackends,
    build_backend,
    complete,
    make_backend_factory,
)

__all__ = [
    "AgentBackends",
    "BaseBackend",
    "HttpBackend",
    "ReplayBackend",
    "ScriptedBackend",
    "build_backend",
    "canonical_request_hash",
    "canonical_request_payload",
    "complete",
    "make_backend_factory",
]
