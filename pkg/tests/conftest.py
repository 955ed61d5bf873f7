from typing import Dict

import pytest

from app.schemas.sim import SimConfig
from app.schemas.task import RtlTask
from app.services.sim_harness import SimHarnessService
from app.services.workspace import WorkspaceService, load_task
from tests.helpers import GOLDEN, HAS_IVERILOG, TASKS


def pytest_collection_modifyitems(config, items):
    skip = pytest.mark.skip(reason="iverilog/vvp not on PATH")
    for item in items:
        if "requires_iverilog" in item.keywords and not HAS_IVERILOG:
            item.add_marker(skip)


@pytest.fixture
def adder_task() -> RtlTask:
    return load_task(TASKS / "adder_spec2rtl")


@pytest.fixture
def golden() -> Dict[str, str]:
    return {p.stem: p.read_text(encoding="utf-8") for p in GOLDEN.glob("*.v")}


@pytest.fixture
def workspaces(tmp_path) -> WorkspaceService:
    return WorkspaceService(tmp_path / "scratch")


@pytest.fixture
def harness(workspaces) -> SimHarnessService:
    return SimHarnessService(SimConfig(sim_timeout=10.0), workspaces)
