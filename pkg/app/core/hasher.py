import hashlib
import json
from typing import Any


class DigestHelper:
    @staticmethod
    def canonical_json(payload: Any) -> str:
        """Serialize with sorted keys and no whitespace so digests are platform stable."""
        return json.dumps(
            payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False
        )

    @staticmethod
    def sha256(text: str) -> str:
        return hashlib.sha256(text.encode("utf-8")).hexdigest()

    @staticmethod
    def digest_payload(payload: Any) -> str:
        return DigestHelper.sha256(DigestHelper.canonical_json(payload))

    @staticmethod
    def short(text: str, length: int = 12) -> str:
        return DigestHelper.sha256(text)[:length]
