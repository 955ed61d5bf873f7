import logging
import time
from typing import Any, Dict, List

from app.core.hasher import DigestHelper
from app.schemas.llm import ChatRequest, ChatResponse, GatewayCall

logger = logging.getLogger(__name__)


def canonical_request_hash(request: ChatRequest) -> str:
    """
    Stable digest of a request. Covers the role/content sequence, temperature and
    max_tokens only; tags and timestamps never change the digest.
    """
    return DigestHelper.digest_payload(canonical_request_payload(request))


def canonical_request_payload(request: ChatRequest) -> Dict[str, Any]:
    return {
        "messages": [
            {"role": m.role.value, "content": m.content} for m in request.messages
        ],
        "temperature": request.temperature,
        "max_tokens": request.max_tokens,
    }


class BaseBackend:
    """Base chat-completion backend; subclasses implement _complete"""

    kind = "base"

    def __init__(self, backend_id: str):
        self.backend_id = backend_id
        self.call_log: List[GatewayCall] = []

    async def complete(self, request: ChatRequest) -> ChatResponse:
        """
        Answer one chat request.

        Args:
            request: Validated chat request

        Returns:
            ChatResponse with content, backend id and latency

        Raises:
            GatewayError: backend-specific failure
        """
        started = time.monotonic()
        self.call_log.append(
            GatewayCall(
                tag=request.tag,
                started_at=started,
                request_hash=canonical_request_hash(request),
            )
        )
        logger.debug(f"[{self.backend_id}] {request.tag} request ({len(request.messages)} messages)")

        response = await self._complete(request)

        if not response.latency:
            response = response.model_copy(update={"latency": time.monotonic() - started})
        return response

    async def _complete(self, request: ChatRequest) -> ChatResponse:
        raise NotImplementedError

    async def close(self) -> None:
        """Release network resources"""
        return None
