import logging
from dataclasses import dataclass
from typing import Callable, Optional

from app.core.config import GlobalConfig
from app.core.limiter import RequestLimiter, get_request_limiter
from app.schemas.llm import BackendKind, BackendSpec, ChatRequest, ChatResponse
from app.utils.llm_component.base import BaseBackend
from app.utils.llm_component.http import HttpBackend
from app.utils.llm_component.replay import ReplayBackend
from app.utils.llm_component.scripted import ScriptedBackend

logger = logging.getLogger(__name__)


def build_backend(
    spec: BackendSpec, seed: int = 0, limiter: Optional[RequestLimiter] = None
) -> BaseBackend:
    """
    Instantiate the backend a spec describes.

    Args:
        spec: Validated backend spec
        seed: Process seed; scripted rules may key on it
        limiter: Shared in-flight cap for live endpoints
    """
    if spec.kind == BackendKind.HTTP:
        return HttpBackend(spec, limiter=limiter)
    if spec.kind == BackendKind.SCRIPTED:
        return ScriptedBackend(spec, seed=seed)
    inner = build_backend(spec.inner, seed, limiter) if spec.inner is not None else None
    return ReplayBackend(spec, inner=inner)


async def complete(backend: BaseBackend, request: ChatRequest) -> ChatResponse:
    """Gateway entry point shared by every agent role"""
    response = await backend.complete(request)
    logger.debug(
        f"[{backend.backend_id}] {request.tag} answered in {response.latency:.2f}s "
        f"({len(response.content)} chars)"
    )
    return response


@dataclass
class AgentBackends:
    """The three role backends of one agent process"""

    generator: BaseBackend
    reflector: BaseBackend
    coordinator: BaseBackend

    def all(self):
        return [self.generator, self.reflector, self.coordinator]

    async def close(self) -> None:
        closed = set()
        for backend in self.all():
            if id(backend) not in closed:
                closed.add(id(backend))
                await backend.close()


BackendFactory = Callable[[int, int], AgentBackends]


def make_backend_factory(config: GlobalConfig) -> BackendFactory:
    """
    Build a factory yielding fresh per-process backends. The factory takes
    (process_id, seed); live backends share one request limiter.
    """
    limiter = get_request_limiter(config.max_concurrent_requests)

    def factory(process_id: int, seed: int) -> AgentBackends:
        roles = config.backends.roles()
        built = {}
        # Replay roles over one cassette share a single backend so hashes are
        # served in recording order across roles
        by_spec = {}
        for role, spec in roles.items():
            key = spec.model_dump_json()
            if spec.kind == BackendKind.REPLAY and key in by_spec:
                built[role] = by_spec[key]
                continue
            built[role] = build_backend(spec, seed=seed, limiter=limiter)
            by_spec[key] = built[role]
        logger.debug(f"Backends for process {process_id} (seed {seed}) ready")
        return AgentBackends(**built)

    return factory
