import logging
import os
from contextlib import nullcontext
from typing import Optional

import httpx
import openai
from openai import AsyncOpenAI

from app.core.exceptions import AuthMissing, BackendFailure, RetriesExhausted
from app.core.limiter import RequestLimiter
from app.schemas.llm import BackendSpec, ChatRequest, ChatResponse, TokenUsage
from app.utils.llm_component.base import BaseBackend

logger = logging.getLogger(__name__)

# Sent when the endpoint needs no auth; the SDK refuses an empty key
LOCAL_API_KEY = "sk-local"


def base_url(endpoint: str) -> str:
    """Accept either the API root or the full chat-completions URL"""
    return endpoint.rstrip("/").replace("/chat/completions", "")


class HttpBackend(BaseBackend):
    """
    OpenAI-compatible chat endpoint. Retries on connection errors, 429 and 5xx
    use the SDK's exponential backoff with jitter.
    """

    kind = "http"

    def __init__(
        self,
        spec: BackendSpec,
        limiter: Optional[RequestLimiter] = None,
        transport: Optional[httpx.AsyncBaseTransport] = None,
    ):
        super().__init__(f"http:{spec.model}")
        self.spec = spec
        self.limiter = limiter
        self._transport = transport
        self._client: Optional[AsyncOpenAI] = None

    def _api_key(self) -> str:
        if not self.spec.auth_env_var:
            return LOCAL_API_KEY
        token = os.environ.get(self.spec.auth_env_var)
        if not token:
            raise AuthMissing(f"Environment variable {self.spec.auth_env_var} is not set")
        return token

    def _get_client(self) -> AsyncOpenAI:
        if self._client is None:
            self._client = AsyncOpenAI(
                api_key=self._api_key(),
                base_url=base_url(self.spec.endpoint),
                timeout=self.spec.request_timeout or 600.0,
                max_retries=self.spec.max_retries,
                default_headers=self.spec.extra_headers,
                http_client=(
                    httpx.AsyncClient(transport=self._transport)
                    if self._transport is not None
                    else None
                ),
            )
        return self._client

    async def close(self):
        """Close the OpenAI client and release resources"""
        if self._client is not None:
            await self._client.close()
            self._client = None

    async def _complete(self, request: ChatRequest) -> ChatResponse:
        client = self._get_client()
        attempts = self.spec.max_retries + 1
        try:
            async with self.limiter or nullcontext():
                completion = await client.chat.completions.create(
                    model=self.spec.model,
                    messages=[
                        {"role": m.role.value, "content": m.content}
                        for m in request.messages
                    ],
                    temperature=request.temperature,
                    max_tokens=request.max_tokens,
                )
        except (openai.APIConnectionError, openai.RateLimitError, openai.InternalServerError) as e:
            raise RetriesExhausted(f"{attempts} attempts to {self.spec.endpoint} failed: {e}")
        except openai.APIStatusError as e:
            raise BackendFailure(f"HTTP {e.status_code} from {self.spec.endpoint}: {e.message}")
        except openai.APIError as e:
            raise BackendFailure(f"Chat request to {self.spec.endpoint} failed: {e}")

        choices = getattr(completion, "choices", None)
        if not choices or getattr(choices[0], "message", None) is None:
            logger.error(f"Response structure: {completion}")
            raise BackendFailure(f"Malformed chat response from {self.spec.endpoint}")

        usage = getattr(completion, "usage", None)
        return ChatResponse(
            content=(choices[0].message.content or "").strip(),
            backend_id=self.backend_id,
            token_usage=TokenUsage(
                prompt_tokens=usage.prompt_tokens,
                completion_tokens=usage.completion_tokens,
                total_tokens=usage.total_tokens,
            )
            if usage is not None
            else None,
        )
