"""
Workspace Service
Task bundle loading and isolated scratch directories for candidate designs
"""

import itertools
import json
import logging
import os
import shutil
import uuid
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, Optional, Union

from pydantic import ValidationError

from app.core.exceptions import (
    InvalidCandidate,
    SchemaViolation,
    UnknownCategory,
    WorkspaceError,
)
from app.schemas.task import RtlTask, SourceFile, TaskCategory, TaskManifest, Workspace

logger = logging.getLogger(__name__)

MANIFEST_NAME = "workspace.json"
TASK_MANIFEST = "task.json"

_counter = itertools.count()


class WorkspaceService:
    """Creates one directory per candidate under a shared scratch root."""

    def __init__(self, scratch_root: Union[str, Path], keep: bool = False, retain_failed: bool = True):
        """
        Args:
            scratch_root: Parent directory for all workspaces
            keep: Keep every workspace, passing or not
            retain_failed: Keep workspaces of failing candidates for post-mortem
        """
        self.scratch_root = Path(scratch_root)
        self.keep = keep
        self.retain_failed = retain_failed

    def _unique_root(self, label: str) -> Path:
        safe_label = "".join(c if c.isalnum() or c in "-_" else "_" for c in label)
        name = f"{safe_label}-p{os.getpid()}-{next(_counter)}-{uuid.uuid4().hex[:8]}"
        return self.scratch_root / name

    def create(self, label: str, files: Dict[str, str]) -> Workspace:
        """
        Write files into a fresh directory.

        Raises:
            WorkspaceError: directory creation failed or a name escapes the root
        """
        root = self._unique_root(label)
        try:
            root.mkdir(parents=True, exist_ok=False)
        except OSError as e:
            raise WorkspaceError(f"Cannot create workspace {root}: {e}")

        resolved_root = root.resolve()
        for name, content in files.items():
            target = (root / name).resolve()
            if resolved_root not in target.parents:
                shutil.rmtree(root, ignore_errors=True)
                raise WorkspaceError(f"File name escapes workspace: {name}")
            try:
                target.parent.mkdir(parents=True, exist_ok=True)
                target.write_text(content, encoding="utf-8")
            except OSError as e:
                raise WorkspaceError(f"Cannot write {name} into {root}: {e}")

        return Workspace(
            root=root, files=dict(files), created_at=datetime.now(timezone.utc)
        )

    def materialize(self, task: RtlTask, candidate_code: str) -> Workspace:
        """
        Lay out the candidate, every testbench source and a manifest.

        Raises:
            InvalidCandidate: empty candidate code
            WorkspaceError: name collision or filesystem failure
        """
        if not candidate_code or not candidate_code.strip():
            raise InvalidCandidate("Candidate code is empty")

        dut_name = task.candidate_filename
        files: Dict[str, str] = {dut_name: candidate_code}
        for source in task.testbench_sources:
            if source.name in files or source.name == MANIFEST_NAME:
                raise WorkspaceError(
                    f"Testbench file {source.name} collides with a workspace file"
                )
            files[source.name] = source.content

        manifest = {
            "task_id": task.id,
            "top_module": task.top_module,
            "dut": dut_name,
            "testbench": [s.name for s in task.testbench_sources],
        }
        files[MANIFEST_NAME] = json.dumps(manifest, indent=2, sort_keys=True)
        return self.create(task.id, files)

    def release(self, workspace: Workspace, passed: bool) -> None:
        """Delete a workspace unless the retention policy keeps it"""
        if self.keep or (not passed and self.retain_failed):
            return
        shutil.rmtree(workspace.root, ignore_errors=True)


# ============================================
# Task bundles
# ============================================


def _read(bundle: Path, name: str) -> str:
    path = bundle / name
    try:
        return path.read_text(encoding="utf-8")
    except OSError as e:
        raise SchemaViolation(f"Cannot read {path}: {e}")


def load_task(path: Union[str, Path]) -> RtlTask:
    """
    Load and validate a task bundle directory.

    Raises:
        SchemaViolation: missing field, unreadable file or invariant violation
        UnknownCategory: category tag is not a known category id
    """
    bundle = Path(path)
    manifest_path = bundle / TASK_MANIFEST
    if not manifest_path.is_file():
        raise SchemaViolation(f"No {TASK_MANIFEST} in {bundle}")

    try:
        manifest = TaskManifest.model_validate_json(manifest_path.read_text(encoding="utf-8"))
    except OSError as e:
        raise SchemaViolation(f"Cannot read {manifest_path}: {e}")
    except ValidationError as e:
        raise SchemaViolation(f"Malformed {manifest_path}: {e}")

    try:
        category = TaskCategory(manifest.category)
    except ValueError:
        raise UnknownCategory(f"Unknown task category {manifest.category!r}")

    prior_code: Optional[str] = None
    if manifest.prior_code_file:
        prior_code = _read(bundle, manifest.prior_code_file)

    try:
        return RtlTask(
            id=manifest.id,
            category=category,
            specification=_read(bundle, manifest.spec_file),
            prior_code=prior_code,
            testbench_sources=[
                SourceFile(name=Path(name).name, content=_read(bundle, name))
                for name in manifest.testbench_files
            ],
            top_module=manifest.top_module,
            sim_timeout=manifest.sim_timeout,
        )
    except ValidationError as e:
        raise SchemaViolation(f"Task {manifest.id} violates the task schema: {e}")


def dump_task(task: RtlTask, path: Union[str, Path]) -> Path:
    """Write a task as a bundle directory that load_task reads back"""
    bundle = Path(path)
    bundle.mkdir(parents=True, exist_ok=True)

    (bundle / "spec.md").write_text(task.specification, encoding="utf-8")
    prior_code_file = None
    if task.prior_code is not None:
        prior_code_file = "prior.v"
        (bundle / prior_code_file).write_text(task.prior_code, encoding="utf-8")
    for source in task.testbench_sources:
        (bundle / source.name).write_text(source.content, encoding="utf-8")

    manifest = TaskManifest(
        id=task.id,
        category=task.category.value,
        top_module=task.top_module,
        sim_timeout=task.sim_timeout,
        spec_file="spec.md",
        prior_code_file=prior_code_file,
        testbench_files=[s.name for s in task.testbench_sources],
    )
    (bundle / TASK_MANIFEST).write_text(
        manifest.model_dump_json(indent=2, exclude_none=True), encoding="utf-8"
    )
    return bundle


def discover_tasks(suite_dir: Union[str, Path]):
    """Task bundle directories directly under suite_dir, sorted by name"""
    root = Path(suite_dir)
    if not root.is_dir():
        return []
    return sorted(p for p in root.iterdir() if (p / TASK_MANIFEST).is_file())
