"""
Orchestrator Service
Runs the generate / verify / reflect / coordinate loop and races several loops
on one task, cancelling the rest at the first success
"""

import asyncio
import logging
import time
from dataclasses import dataclass
from typing import Dict, List, Optional, Protocol, Sequence, Tuple

from app.core.exceptions import (
    EmptyReflection,
    EvalError,
    GatewayError,
    NoCodeBlock,
    PromptOverflow,
    RunCancelled,
    ToolError,
)
from app.schemas.context import EvolvingContext
from app.schemas.generator import AttemptKind
from app.schemas.orchestrator import (
    IterationAccounting,
    LoopConfig,
    ParallelConfig,
    ParallelOutcome,
)
from app.schemas.sim import FailureClass, SimVerdict, StructuredFeedback, VerdictKind
from app.schemas.task import RtlTask
from app.schemas.trajectory import IterationRecord, Trajectory, TrajectoryOutcome
from app.services.coordinator import CoordinatorService
from app.services.generator import GeneratorService
from app.services.reflector import ReflectorService
from app.services.run_store import TrajectoryWriter
from app.utils.llm_component.service import AgentBackends, BackendFactory

logger = logging.getLogger(__name__)


class Verifier(Protocol):
    async def verify(
        self, task: RtlTask, candidate_code: str, cancel: Optional[asyncio.Event] = None
    ) -> SimVerdict: ...


@dataclass(frozen=True)
class IterationEvent:
    process_id: int
    iteration: int
    attempt_kind: AttemptKind
    verdict: VerdictKind
    restarted: bool


@dataclass(frozen=True)
class CompletionEvent:
    process_id: int
    trajectory: Trajectory


class _Abort(Exception):
    def __init__(self, message: str):
        self.message = message


class OrchestratorService:
    """Drives agent loops against a verifier (normally the simulation harness)."""

    def __init__(self, verifier: Verifier, writer: Optional[TrajectoryWriter] = None):
        self.verifier = verifier
        self.writer = writer

    # ============================================
    # Serial loop
    # ============================================

    async def run_loop(
        self,
        task: RtlTask,
        backends: AgentBackends,
        config: LoopConfig,
        cancel: Optional[asyncio.Event] = None,
        process_id: int = 0,
        records: Optional[List[IterationRecord]] = None,
        events: Optional[asyncio.Queue] = None,
    ) -> Trajectory:
        """
        Iterate until a candidate passes, the budget runs out or cancel is set.

        Args:
            task: The design problem
            backends: Generator, reflector and coordinator backends
            config: Loop knobs; config.seed is recorded on the trajectory
            cancel: Polled at iteration boundaries and before every external call
            process_id: Identity inside a race
            records: List the loop appends to (lets a supervisor see partial work)
            events: Receives an IterationEvent per completed iteration

        Returns:
            Trajectory ending Solved, Exhausted (error recorded on abort) or Cancelled
        """
        cancel = cancel or asyncio.Event()
        records = records if records is not None else []
        context = EvolvingContext()
        kind = AttemptKind.FRESH
        coordinator_config = config.coordinator

        def finish(outcome: TrajectoryOutcome, error: Optional[str] = None) -> Trajectory:
            trajectory = Trajectory(
                task_id=task.id,
                process_id=process_id,
                seed=config.seed,
                records=list(records),
                outcome=outcome,
                restart_count=context.restart_count,
                error=error,
            )
            if self.writer is not None:
                self.writer.finish(trajectory)
            return trajectory

        def cancelled() -> bool:
            return cancel.is_set()

        for index in range(1, config.max_iterations + 1):
            # Checkpoint: lets racing loops advance in turn
            await asyncio.sleep(0)
            if cancelled():
                logger.info(f"[{task.id} p{process_id}] cancelled before iteration {index}")
                return finish(TrajectoryOutcome.cancelled())

            started = time.monotonic()
            logger.info(f"[{task.id} p{process_id}] iteration {index} ({kind.value})")

            try:
                code, verdict = await self._attempt(task, backends, config, context, kind, cancel)
            except RunCancelled:
                return finish(TrajectoryOutcome.cancelled())
            except _Abort as e:
                logger.error(f"[{task.id} p{process_id}] aborted: {e.message}")
                return finish(TrajectoryOutcome.exhausted(), error=e.message)

            if verdict.passed:
                record = IterationRecord(
                    index=index,
                    attempt_kind=kind,
                    generated_code=code,
                    verdict=verdict,
                    wall_time=time.monotonic() - started,
                )
                self._commit(process_id, record, context, records, events)
                logger.info(f"[{task.id} p{process_id}] solved at iteration {index}")
                return finish(TrajectoryOutcome.solved(index))

            if cancelled():
                return finish(TrajectoryOutcome.cancelled())

            abort_reason = None
            try:
                report = await ReflectorService.reflect(
                    task,
                    code,
                    verdict.feedback,
                    context,
                    backends.reflector,
                    temperature=config.reflector_temperature,
                    max_tokens=config.max_tokens,
                )
            except EmptyReflection:
                logger.warning(f"[{task.id} p{process_id}] empty reflection; degrading")
                report = ReflectorService.degraded_report(verdict.feedback)
            except GatewayError as e:
                report = ReflectorService.degraded_report(verdict.feedback)
                abort_reason = f"reflector: {e.message}"

            record = IterationRecord(
                index=index,
                attempt_kind=kind,
                generated_code=code,
                verdict=verdict,
                diagnostic=report,
                wall_time=time.monotonic() - started,
            )
            context = CoordinatorService.update(context, record, report, coordinator_config)

            if abort_reason is not None:
                self._commit(process_id, record, context, records, events)
                logger.error(f"[{task.id} p{process_id}] aborted: {abort_reason}")
                return finish(TrajectoryOutcome.exhausted(), error=abort_reason)

            kind = AttemptKind.REPAIR
            if CoordinatorService.check_stagnation(context, coordinator_config):
                if cancelled():
                    self._commit(process_id, record, context, records, events)
                    return finish(TrajectoryOutcome.cancelled())
                context = await CoordinatorService.restart(
                    context,
                    task,
                    backends.coordinator,
                    coordinator_config,
                    temperature=config.coordinator_temperature,
                    max_tokens=config.max_tokens,
                )
                record = record.model_copy(update={"restarted": True})
                kind = AttemptKind.RESTART

            record = record.model_copy(update={"wall_time": time.monotonic() - started})
            self._commit(process_id, record, context, records, events)

        return finish(TrajectoryOutcome.exhausted())

    async def _attempt(
        self,
        task: RtlTask,
        backends: AgentBackends,
        config: LoopConfig,
        context: EvolvingContext,
        kind: AttemptKind,
        cancel: asyncio.Event,
    ) -> Tuple[str, SimVerdict]:
        """Generate and verify one candidate"""
        if cancel.is_set():
            raise RunCancelled("cancelled before generation")
        try:
            code = await GeneratorService.generate(
                task,
                context,
                kind,
                backends.generator,
                temperature=config.generator_temperature,
                max_tokens=config.max_tokens,
                depth=config.coordinator.history_depth,
                char_budget=config.prompt_char_budget,
            )
        except NoCodeBlock as e:
            return "", SimVerdict.compile_error(
                StructuredFeedback(
                    failure_class=FailureClass.COMPILE_ERROR, error_message=e.message
                )
            )
        except (GatewayError, PromptOverflow) as e:
            raise _Abort(f"generator: {e.message}")

        if cancel.is_set():
            raise RunCancelled("cancelled before verification")
        try:
            verdict = await self.verifier.verify(task, code, cancel)
        except ToolError as e:
            raise _Abort(f"simulator: {e.message}")
        if verdict.kind == VerdictKind.TOOL_ERROR:
            raise _Abort(f"simulator: {verdict.message}")
        return code, verdict

    def _commit(
        self,
        process_id: int,
        record: IterationRecord,
        context: EvolvingContext,
        records: List[IterationRecord],
        events: Optional[asyncio.Queue],
    ) -> None:
        records.append(record)
        if self.writer is not None:
            self.writer.iteration(process_id, record, context)
        if events is not None:
            events.put_nowait(
                IterationEvent(
                    process_id=process_id,
                    iteration=record.index,
                    attempt_kind=record.attempt_kind,
                    verdict=record.verdict.kind,
                    restarted=record.restarted,
                )
            )

    # ============================================
    # Parallel race
    # ============================================

    async def run_parallel(
        self,
        task: RtlTask,
        backend_factory: BackendFactory,
        pconfig: ParallelConfig,
        loop_config: Optional[LoopConfig] = None,
    ) -> ParallelOutcome:
        """
        Race pconfig.processes independent loops on one task.

        Process k runs with seed loop.seed + k * seed_stride on its own backends.
        The first Solved completion sets the shared cancel event; processes still
        running after cancellation_grace are hard-cancelled. Among solved
        trajectories the lowest solve iteration wins, ties going to the earlier
        completion.
        """
        loop_config = loop_config or pconfig.loop or LoopConfig()
        count = pconfig.processes
        cancel = asyncio.Event()
        channel: asyncio.Queue = asyncio.Queue()
        partial: Dict[int, List[IterationRecord]] = {k: [] for k in range(count)}
        seeds = {k: loop_config.seed + k * pconfig.seed_stride for k in range(count)}

        async def worker(process_id: int) -> None:
            backends = backend_factory(process_id, seeds[process_id])
            config = loop_config.model_copy(update={"seed": seeds[process_id]})
            try:
                trajectory = await self.run_loop(
                    task,
                    backends,
                    config,
                    cancel=cancel,
                    process_id=process_id,
                    records=partial[process_id],
                    events=channel,
                )
            except asyncio.CancelledError:
                raise
            except Exception as e:
                logger.exception(f"[{task.id} p{process_id}] crashed")
                trajectory = Trajectory(
                    task_id=task.id,
                    process_id=process_id,
                    seed=seeds[process_id],
                    records=list(partial[process_id]),
                    outcome=TrajectoryOutcome.exhausted(),
                    restart_count=sum(r.restarted for r in partial[process_id]),
                    error=f"{type(e).__name__}: {e}",
                )
            finally:
                await backends.close()
            channel.put_nowait(CompletionEvent(process_id=process_id, trajectory=trajectory))

        workers = {k: asyncio.create_task(worker(k)) for k in range(count)}
        completed: List[Trajectory] = []
        cancel_issued_at: Optional[float] = None
        deadline: Optional[float] = None

        try:
            while len(completed) < count:
                timeout = None
                if deadline is not None:
                    timeout = max(0.0, deadline - time.monotonic())
                try:
                    event = await asyncio.wait_for(channel.get(), timeout=timeout)
                except asyncio.TimeoutError:
                    break

                if isinstance(event, IterationEvent):
                    logger.debug(
                        f"[{task.id} p{event.process_id}] iteration {event.iteration}: "
                        f"{event.verdict.value}"
                    )
                    continue

                completed.append(event.trajectory)
                if event.trajectory.solved and not cancel.is_set():
                    cancel.set()
                    cancel_issued_at = time.monotonic()
                    deadline = cancel_issued_at + pconfig.cancellation_grace
                    logger.info(
                        f"[{task.id}] p{event.process_id} solved at iteration "
                        f"{event.trajectory.outcome.at_iteration}; cancelling the rest"
                    )
        finally:
            stragglers = [w for w in workers.values() if not w.done()]
            for straggler in stragglers:
                straggler.cancel()
            if stragglers:
                await asyncio.gather(*stragglers, return_exceptions=True)

        finished = {t.process_id for t in completed}
        for process_id in range(count):
            if process_id in finished:
                continue
            logger.warning(f"[{task.id} p{process_id}] hard-cancelled after grace period")
            trajectory = Trajectory(
                task_id=task.id,
                process_id=process_id,
                seed=seeds[process_id],
                records=list(partial[process_id]),
                outcome=TrajectoryOutcome.cancelled(),
                restart_count=sum(r.restarted for r in partial[process_id]),
            )
            if self.writer is not None:
                self.writer.finish(trajectory)
            completed.append(trajectory)

        return self._outcome(task, count, completed, cancel_issued_at)

    @staticmethod
    def _outcome(
        task: RtlTask,
        count: int,
        completed: List[Trajectory],
        cancel_issued_at: Optional[float],
    ) -> ParallelOutcome:
        winner = None
        for trajectory in completed:
            if not trajectory.solved:
                continue
            if winner is None or trajectory.outcome.at_iteration < winner.outcome.at_iteration:
                winner = trajectory

        error = None
        if winner is None and completed and all(t.error for t in completed):
            error = completed[0].error

        ordered = sorted(completed, key=lambda t: t.process_id)
        return ParallelOutcome(
            task_id=task.id,
            processes=count,
            winner=winner.process_id if winner else None,
            winning_code=winner.records[winner.outcome.at_iteration - 1].generated_code
            if winner
            else None,
            trajectories=ordered,
            total_iterations_executed=sum(t.iterations for t in ordered),
            iterations_to_success=winner.outcome.at_iteration if winner else None,
            error=error,
            cancel_issued_at=cancel_issued_at,
        )


# ============================================
# Iteration accounting
# ============================================


def accounting_from_iterations(
    solo: Sequence[float], parallel: Sequence[float]
) -> IterationAccounting:
    """
    Means of paired solo and parallel iteration counts and their ratio.

    Raises:
        EvalError: empty or unequal-length input
    """
    if not solo or len(solo) != len(parallel):
        raise EvalError("Iteration accounting needs equally many solo and parallel values")
    mean_solo = sum(solo) / len(solo)
    mean_parallel = sum(parallel) / len(parallel)
    if mean_parallel <= 0:
        raise EvalError("Mean parallel iterations must be positive")
    return IterationAccounting(
        pairs=len(solo),
        mean_parallel_iterations=mean_parallel,
        mean_solo_iterations=mean_solo,
        speedup=mean_solo / mean_parallel,
    )


def iteration_accounting(
    pairs: Sequence[Tuple[ParallelOutcome, ParallelOutcome]],
) -> IterationAccounting:
    """
    Accounting over (solo baseline, parallel) outcome pairs of the same task.
    Only pairs solved on both sides contribute.

    Raises:
        EvalError: no pair was solved on both sides
    """
    solo, parallel = [], []
    for baseline, raced in pairs:
        if baseline.solved and raced.solved:
            solo.append(baseline.iterations_to_success)
            parallel.append(raced.iterations_to_success)
    if not solo:
        raise EvalError("No solved solo/parallel pair to account")
    return accounting_from_iterations(solo, parallel)
