import json
import logging
import re
import threading
from collections import Counter
from pathlib import Path
from typing import List, Optional

from pydantic import ValidationError

from app.core.exceptions import BackendFailure, ConfigError, ScriptNoMatch
from app.schemas.llm import BackendSpec, ChatRequest, ChatResponse, ScriptRule
from app.utils.llm_component.base import BaseBackend

logger = logging.getLogger(__name__)


def load_script(path: Path) -> List[ScriptRule]:
    """Read a JSON script: either a list of rules or {"rules": [...]}"""
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"Cannot load script {path}: {e}")
    raw_rules = data.get("rules", []) if isinstance(data, dict) else data
    try:
        return [ScriptRule.model_validate(rule) for rule in raw_rules]
    except ValidationError as e:
        raise ConfigError(f"Invalid rule in script {path}: {e}")


class ScriptedBackend(BaseBackend):
    """
    Deterministic backend answering from an ordered rule list; the first rule
    whose constraints all hold wins. Call indices are counted per request tag.
    """

    kind = "scripted"

    def __init__(self, spec: BackendSpec, seed: int = 0):
        self.seed = seed
        self.base_dir: Optional[Path] = None
        if spec.script_path:
            script = Path(spec.script_path)
            self.rules = load_script(script)
            self.base_dir = script.parent
            super().__init__(f"scripted:{script.stem}:{seed}")
        else:
            self.rules = list(spec.rules or [])
            super().__init__(f"scripted:inline:{seed}")

        self._calls: Counter = Counter()
        self._fired: Counter = Counter()
        self._lock = threading.Lock()

    def _matches(self, rule: ScriptRule, request: ChatRequest, call_index: int) -> bool:
        text = request.last_user_message
        if rule.tag is not None and rule.tag != request.tag:
            return False
        if rule.seed is not None and rule.seed != self.seed:
            return False
        if rule.call_index is not None and rule.call_index != call_index:
            return False
        if rule.min_call_index is not None and call_index < rule.min_call_index:
            return False
        if rule.max_call_index is not None and call_index > rule.max_call_index:
            return False
        if rule.contains not in (None, "*") and rule.contains not in text:
            return False
        if rule.pattern is not None and not re.search(rule.pattern, text, re.DOTALL):
            return False
        return True

    def _render(self, rule: ScriptRule, call_index: int) -> str:
        if rule.response_file is not None:
            path = Path(rule.response_file)
            if not path.is_absolute() and self.base_dir is not None:
                path = self.base_dir / path
            try:
                text = path.read_text(encoding="utf-8")
            except OSError as e:
                raise ConfigError(f"Cannot read scripted response {path}: {e}")
        else:
            text = rule.response
        return text.replace("{call_index}", str(call_index)).replace("{seed}", str(self.seed))

    async def _complete(self, request: ChatRequest) -> ChatResponse:
        with self._lock:
            call_index = self._calls[request.tag]
            self._calls[request.tag] += 1
            chosen = None
            for position, rule in enumerate(self.rules):
                if rule.times is not None and self._fired[position] >= rule.times:
                    continue
                if self._matches(rule, request, call_index):
                    self._fired[position] += 1
                    chosen = rule
                    break

        if chosen is None:
            raise ScriptNoMatch(
                f"No rule of {self.backend_id} matches {request.tag!r} call {call_index}"
            )
        if chosen.error is not None:
            raise BackendFailure(chosen.error)
        return ChatResponse(content=self._render(chosen, call_index), backend_id=self.backend_id)
