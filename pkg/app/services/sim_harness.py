"""
Simulation Harness
Compiles and simulates candidate designs with Icarus Verilog and turns raw logs
into structured feedback
"""

import asyncio
import logging
import os
import signal
from pathlib import Path
from typing import List, Optional, Tuple

from app.core.exceptions import InvalidCandidate, RunCancelled, tool_errors
from app.schemas.sim import (
    CompileOutcome,
    FailureClass,
    PassSignal,
    SimConfig,
    SimRun,
    SimVerdict,
    StructuredFeedback,
)
from app.schemas.task import RtlTask, Workspace
from app.services.log_parser import first_compiler_error, parse_log, truncate_log
from app.services.workspace import WorkspaceService

logger = logging.getLogger(__name__)

ARTIFACT_NAME = "sim.vvp"
SIM_LOG_NAME = "sim.log"
HDL_SUFFIXES = (".v", ".sv", ".vh", ".svh")
# Hard cap on captured output of a runaway simulation
CAPTURE_FACTOR = 64


def _kill_group(process: asyncio.subprocess.Process) -> None:
    if process.returncode is not None:
        return
    try:
        os.killpg(process.pid, signal.SIGKILL)
    except ProcessLookupError:
        pass
    except OSError:
        try:
            process.kill()
        except ProcessLookupError:
            pass


async def _drain(stream: asyncio.StreamReader, limit: int) -> bytes:
    chunks: List[bytes] = []
    kept = 0
    while True:
        chunk = await stream.read(65536)
        if not chunk:
            break
        if kept < limit:
            chunks.append(chunk[: limit - kept])
            kept += len(chunks[-1])
    return b"".join(chunks)


class SimHarnessService:
    """Compile → simulate → parse over isolated workspaces."""

    def __init__(self, config: SimConfig, workspaces: WorkspaceService):
        self.config = config
        self.workspaces = workspaces

    @tool_errors
    async def _run(
        self,
        command: List[str],
        cwd: Path,
        timeout: float,
        cancel: Optional[asyncio.Event] = None,
    ) -> Tuple[str, int, bool]:
        """
        Run one tool invocation in its own process group.

        Returns:
            (combined output, exit status, timed_out)

        Raises:
            RunCancelled: cancel was set while the process ran (group killed)
        """
        process = await asyncio.create_subprocess_exec(
            *command,
            cwd=str(cwd),
            stdout=asyncio.subprocess.PIPE,
            stderr=asyncio.subprocess.STDOUT,
            start_new_session=True,
        )
        reader = asyncio.create_task(
            _drain(process.stdout, self.config.max_log_bytes * CAPTURE_FACTOR)
        )
        waiter = asyncio.create_task(process.wait())
        watched = {waiter}
        cancel_waiter = None
        if cancel is not None:
            cancel_waiter = asyncio.create_task(cancel.wait())
            watched.add(cancel_waiter)

        try:
            done, _ = await asyncio.wait(
                watched, timeout=timeout, return_when=asyncio.FIRST_COMPLETED
            )
        except asyncio.CancelledError:
            _kill_group(process)
            reader.cancel()
            raise
        finally:
            if cancel_waiter is not None:
                cancel_waiter.cancel()

        timed_out = waiter not in done
        if timed_out:
            _kill_group(process)
            await process.wait()

        output = (await reader).decode("utf-8", errors="replace")

        if timed_out and cancel is not None and cancel.is_set():
            logger.debug(f"Killed {command[0]} in {cwd} on cancellation")
            raise RunCancelled(f"{command[0]} cancelled")
        return output, process.returncode, timed_out

    def _sources(self, workspace: Workspace) -> List[str]:
        return [name for name in workspace.files if name.endswith(HDL_SUFFIXES)]

    async def compile(
        self,
        workspace: Workspace,
        sources: Optional[List[str]] = None,
        top: Optional[str] = None,
        cancel: Optional[asyncio.Event] = None,
    ) -> CompileOutcome:
        """
        Compile every HDL source of a workspace into a simulation artifact.

        Returns:
            CompileOutcome with the artifact path, or feedback classed
            CompileError (first compiler error line) or Timeout

        Raises:
            ToolError: compiler missing or not executable
        """
        files = sources if sources is not None else self._sources(workspace)
        if not files:
            raise InvalidCandidate(f"No HDL sources in workspace {workspace.root}")

        command = [self.config.compiler_command, *self.config.compile_flags]
        if top:
            command += ["-s", top]
        command += ["-o", ARTIFACT_NAME, *files]

        output, status, timed_out = await self._run(
            command, workspace.root, self.config.compile_timeout, cancel
        )
        excerpt, _ = truncate_log(output, self.config.max_log_bytes)

        if timed_out:
            return CompileOutcome(
                feedback=StructuredFeedback(
                    failure_class=FailureClass.TIMEOUT,
                    error_message=f"compilation exceeded {self.config.compile_timeout}s",
                    log_excerpt=excerpt,
                )
            )

        artifact = workspace.path(ARTIFACT_NAME)
        if status != 0 or not artifact.exists():
            return CompileOutcome(
                feedback=StructuredFeedback(
                    failure_class=FailureClass.COMPILE_ERROR,
                    error_message=first_compiler_error(output),
                    log_excerpt=excerpt,
                )
            )
        return CompileOutcome(artifact=artifact)

    async def simulate(
        self,
        artifact: Path,
        timeout: Optional[float] = None,
        cancel: Optional[asyncio.Event] = None,
    ) -> SimRun:
        """
        Run the compiled artifact. raw_log holds the whole captured output; the
        excerpt bounded by max_log_bytes is persisted next to the artifact as
        sim.log.

        Raises:
            ToolError: simulator missing or not executable
            RunCancelled: cancel observed while simulating
        """
        limit = timeout or self.config.sim_timeout
        command = [self.config.simulator_command, *self.config.sim_flags, artifact.name]
        output, status, timed_out = await self._run(command, artifact.parent, limit, cancel)

        excerpt, truncated = truncate_log(output, self.config.max_log_bytes)
        try:
            (artifact.parent / SIM_LOG_NAME).write_text(excerpt, encoding="utf-8")
        except OSError as e:
            logger.warning(f"Could not persist {SIM_LOG_NAME}: {e}")

        if timed_out:
            logger.info(f"Simulation timed out after {limit}s in {artifact.parent}")
        return SimRun(
            raw_log=output,
            log_excerpt=excerpt,
            exit_status=status,
            timed_out=timed_out,
            truncated=truncated,
        )

    async def verify(
        self,
        task: RtlTask,
        candidate_code: str,
        cancel: Optional[asyncio.Event] = None,
    ) -> SimVerdict:
        """
        Materialize, compile, simulate and parse one candidate.

        Raises:
            ToolError: tool missing or not executable
            RunCancelled: cancel observed during a tool run
        """
        try:
            workspace = self.workspaces.materialize(task, candidate_code)
        except InvalidCandidate as e:
            return SimVerdict.compile_error(
                StructuredFeedback(
                    failure_class=FailureClass.COMPILE_ERROR, error_message=e.message
                )
            )

        passed = False
        try:
            compiled = await self.compile(workspace, cancel=cancel)
            if not compiled.ok:
                feedback = compiled.feedback
                if feedback.failure_class == FailureClass.TIMEOUT:
                    return SimVerdict.timeout(feedback)
                return SimVerdict.compile_error(feedback)

            run = await self.simulate(compiled.artifact, task.sim_timeout, cancel)
            parsed = parse_log(
                run.raw_log,
                run.exit_status,
                timed_out=run.timed_out,
                max_log_bytes=self.config.max_log_bytes,
            )
            if isinstance(parsed, PassSignal):
                passed = True
                return SimVerdict.passing()
            if parsed.failure_class == FailureClass.TIMEOUT:
                return SimVerdict.timeout(parsed)
            return SimVerdict.fail(parsed)
        finally:
            self.workspaces.release(workspace, passed)

    async def check_syntax(self, label: str, files: dict, top: Optional[str] = None) -> CompileOutcome:
        """Compile-only check of loose sources in a throwaway workspace"""
        workspace = self.workspaces.create(label, files)
        try:
            return await self.compile(workspace, top=top)
        finally:
            self.workspaces.release(workspace, passed=True)
