"""
Run Store
Persists run directories (trajectory JSONL per process, outcome.json, winning
code) and reads them back for reporting
"""

import json
import logging
import threading
from pathlib import Path
from typing import List, Optional, Tuple, Union

from pydantic import ValidationError

from app.core.exceptions import WorkspaceError
from app.schemas.context import EvolvingContext
from app.schemas.orchestrator import OutcomeFile
from app.schemas.trajectory import IterationRecord, Trajectory

logger = logging.getLogger(__name__)

OUTCOME_NAME = "outcome.json"


def trajectory_filename(process_id: int) -> str:
    return f"trajectory_p{process_id}.jsonl"


class TrajectoryWriter:
    """Appends iteration lines as they happen; one file per process."""

    def __init__(self, run_dir: Union[str, Path]):
        self.run_dir = Path(run_dir)
        self._lock = threading.Lock()
        try:
            self.run_dir.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise WorkspaceError(f"Cannot create run directory {self.run_dir}: {e}")

    def _append(self, process_id: int, payload: dict) -> None:
        line = json.dumps(payload, sort_keys=True)
        with self._lock:
            with (self.run_dir / trajectory_filename(process_id)).open("a", encoding="utf-8") as f:
                f.write(line + "\n")

    def iteration(
        self, process_id: int, record: IterationRecord, context: EvolvingContext
    ) -> None:
        self._append(
            process_id,
            {
                "type": "iteration",
                "record": record.model_dump(mode="json"),
                "context": context.model_dump(mode="json"),
            },
        )

    def finish(self, trajectory: Trajectory) -> None:
        self._append(
            trajectory.process_id,
            {
                "type": "outcome",
                "task_id": trajectory.task_id,
                "seed": trajectory.seed,
                "outcome": trajectory.outcome.model_dump(mode="json"),
                "iterations": trajectory.iterations,
                "restart_count": trajectory.restart_count,
                "error": trajectory.error,
            },
        )

    def write_outcome(self, outcome: OutcomeFile) -> Path:
        path = self.run_dir / OUTCOME_NAME
        path.write_text(outcome.model_dump_json(indent=2), encoding="utf-8")
        return path

    def write_code(self, filename: str, code: str) -> Path:
        path = self.run_dir / filename
        path.write_text(code if code.endswith("\n") else code + "\n", encoding="utf-8")
        return path


def read_trajectory(path: Union[str, Path]) -> Tuple[List[IterationRecord], Optional[dict]]:
    """Iteration records and the closing outcome line (None if the run was cut short)"""
    records: List[IterationRecord] = []
    closing = None
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        payload = json.loads(line)
        if payload.get("type") == "iteration":
            records.append(IterationRecord.model_validate(payload["record"]))
        elif payload.get("type") == "outcome":
            closing = payload
    return records, closing


def load_outcomes(runs_root: Union[str, Path]) -> List[OutcomeFile]:
    """
    Every outcome.json below runs_root, sorted by path. Unreadable or invalid
    files are skipped with a warning.
    """
    outcomes: List[OutcomeFile] = []
    for path in sorted(Path(runs_root).rglob(OUTCOME_NAME)):
        try:
            outcomes.append(OutcomeFile.model_validate_json(path.read_text(encoding="utf-8")))
        except (OSError, ValidationError, ValueError) as e:
            logger.warning(f"Skipping corrupt outcome file {path}: {e}")
    return outcomes
