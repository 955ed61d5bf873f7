import asyncio
import logging
from typing import Optional

logger = logging.getLogger(__name__)


class RequestLimiter:
    """
    Caps the number of in-flight requests to live LLM endpoints.

    One limiter is shared by every backend of a parallel race so that P processes
    never exceed the configured API concurrency.
    """

    def __init__(self, max_concurrent: int):
        if max_concurrent < 1:
            raise ValueError("max_concurrent must be >= 1")
        self.max_concurrent = max_concurrent
        self._semaphore = asyncio.Semaphore(max_concurrent)
        self.in_flight = 0
        self.peak = 0

    async def __aenter__(self):
        await self._semaphore.acquire()
        self.in_flight += 1
        self.peak = max(self.peak, self.in_flight)
        return self

    async def __aexit__(self, exc_type, exc, tb):
        self.in_flight -= 1
        self._semaphore.release()
        return False


_shared_limiter: Optional[RequestLimiter] = None
_shared_loop: Optional[asyncio.AbstractEventLoop] = None


def _running_loop() -> Optional[asyncio.AbstractEventLoop]:
    try:
        return asyncio.get_running_loop()
    except RuntimeError:
        return None


def get_request_limiter(max_concurrent: int) -> RequestLimiter:
    """Limiter shared within one event loop; a new loop gets a fresh one"""
    global _shared_limiter, _shared_loop
    loop = _running_loop()
    if (
        _shared_limiter is None
        or _shared_limiter.max_concurrent != max_concurrent
        or _shared_loop is not loop
    ):
        # Semaphores bind to the loop they first block in
        _shared_limiter = RequestLimiter(max_concurrent)
        _shared_loop = loop
        logger.debug(f"Request limiter created (max {max_concurrent} in flight)")
    return _shared_limiter
