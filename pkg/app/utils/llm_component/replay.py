import json
import logging
import threading
from collections import Counter, defaultdict
from pathlib import Path
from typing import Dict, List, Optional

from app.core.exceptions import CassetteMiss, ConfigError
from app.schemas.llm import BackendSpec, CassetteEntry, ChatRequest, ChatResponse
from app.utils.llm_component.base import (
    BaseBackend,
    canonical_request_hash,
    canonical_request_payload,
)

logger = logging.getLogger(__name__)


class ReplayBackend(BaseBackend):
    """
    Serves recorded responses keyed by the canonical request hash. Repeated
    identical requests are served in recording order; after the recorded ones run
    out the last response is repeated. A miss either fails or is delegated to the
    wrapped backend and appended to the cassette; in record mode a request past
    its recordings counts as a miss.
    """

    kind = "replay"

    def __init__(self, spec: BackendSpec, inner: Optional[BaseBackend] = None):
        super().__init__(f"replay:{Path(spec.cassette_path).name}")
        self.cassette = Path(spec.cassette_path)
        self.fallback = spec.replay_fallback()
        self.inner = inner
        self._entries: Dict[str, List[ChatResponse]] = defaultdict(list)
        self._served: Counter = Counter()
        self._lock = threading.Lock()
        self._load()

    def _load(self) -> None:
        if not self.cassette.exists():
            if self.fallback == "error":
                logger.warning(f"Cassette {self.cassette} does not exist; every request will miss")
            return
        try:
            lines = self.cassette.read_text(encoding="utf-8").splitlines()
        except OSError as e:
            raise ConfigError(f"Cannot read cassette {self.cassette}: {e}")
        for number, line in enumerate(lines, start=1):
            if not line.strip():
                continue
            try:
                entry = CassetteEntry.model_validate_json(line)
            except ValueError as e:
                raise ConfigError(f"Corrupt cassette line {number} in {self.cassette}: {e}")
            self._entries[entry.hash].append(entry.response)

    def _next_recorded(self, digest: str, repeat_last: bool = True) -> Optional[ChatResponse]:
        with self._lock:
            recorded = self._entries.get(digest)
            if not recorded:
                return None
            if not repeat_last and self._served[digest] >= len(recorded):
                return None
            position = min(self._served[digest], len(recorded) - 1)
            self._served[digest] += 1
            return recorded[position]

    def _append(self, digest: str, request: ChatRequest, response: ChatResponse) -> None:
        entry = CassetteEntry(
            hash=digest, request=canonical_request_payload(request), response=response
        )
        with self._lock:
            self._entries[digest].append(response)
            self._served[digest] = len(self._entries[digest])
            self.cassette.parent.mkdir(parents=True, exist_ok=True)
            with self.cassette.open("a", encoding="utf-8") as handle:
                handle.write(json.dumps(entry.model_dump(mode="json"), sort_keys=True) + "\n")

    async def _complete(self, request: ChatRequest) -> ChatResponse:
        digest = canonical_request_hash(request)

        if self.fallback == "record":
            # Unserved recordings first; a repeat past them is a new sample
            recorded = self._next_recorded(digest, repeat_last=False)
            if recorded is not None:
                return recorded
            response = await self.inner.complete(request)
            self._append(digest, request, response)
            return response

        recorded = self._next_recorded(digest)
        if recorded is None:
            raise CassetteMiss(f"No recorded response for request {digest[:12]} in {self.cassette}")
        return recorded

    async def close(self) -> None:
        if self.inner is not None:
            await self.inner.close()
