"""Scheduling and the per-execution state machine.

An execution moves SCHEDULED -> WAITING_DATA -> RUNNING -> SUCCEEDED, or to
FAILED from WAITING_DATA (inputs never complete) or RUNNING (tool failure,
shutdown). No other edge is ever taken; :meth:`ExecutionRecord.transition`
enforces that.
"""

from __future__ import annotations

import logging
import threading
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from enum import Enum
from pathlib import Path
from typing import Any, Protocol

from .broker import (
    EXECUTIONS_FAILED, EXECUTIONS_STARTED, JOBS_CREATED, JOBS_DELETED, PRODUCTS_NEW, BrokerMessage,
)
from .clients import RemoteStatus, ResourceResolver, RunnerClient
from .clock import Clock, SystemClock
from .cron import NoFireWithinHorizon, next_fire_time
from .domain import (
    JobDefinition, JobStatus, ResourceReference, TimeWindow, ValidationError, format_instant,
    parse_instant, validate_job_definition,
)
from .runner import UnknownExecution
from .transport import atomic_write_json
from .wrapper import ResourceQuery

logger = logging.getLogger(__name__)

INPUT_INCOMPLETE = "input data incomplete"


class ExecState(str, Enum):
    SCHEDULED = "SCHEDULED"
    WAITING_DATA = "WAITING_DATA"
    RUNNING = "RUNNING"
    SUCCEEDED = "SUCCEEDED"
    FAILED = "FAILED"


EDGES: dict[ExecState, frozenset[ExecState]] = {
    ExecState.SCHEDULED: frozenset({ExecState.WAITING_DATA}),
    ExecState.WAITING_DATA: frozenset({ExecState.RUNNING, ExecState.FAILED}),
    ExecState.RUNNING: frozenset({ExecState.SUCCEEDED, ExecState.FAILED}),
    ExecState.SUCCEEDED: frozenset(),
    ExecState.FAILED: frozenset(),
}
TERMINAL = frozenset({ExecState.SUCCEEDED, ExecState.FAILED})


class IllegalState(RuntimeError):
    pass


class JobBusy(RuntimeError):
    """The job already has an execution in progress; the trigger was skipped."""


class UnknownJob(LookupError):
    pass


@dataclass
class ExecutionRecord:
    execution_id: str
    job_id: str
    triggered_at: datetime
    state: ExecState = ExecState.SCHEDULED
    attempts: int = 0
    resolved_inputs: dict[str, list[ResourceReference]] = field(default_factory=dict)
    result_references: list[ResourceReference] | None = None
    failure_reason: str | None = None
    process_execution_id: str | None = None
    next_check: datetime | None = None
    transitions: list[tuple[ExecState, ExecState]] = field(default_factory=list)

    def transition(self, new: ExecState) -> None:
        if new not in EDGES[self.state]:
            raise IllegalState(f"execution {self.execution_id}: {self.state.value} -> {new.value} not allowed")
        self.transitions.append((self.state, new))
        self.state = new

    @property
    def terminal(self) -> bool:
        return self.state in TERMINAL

    def to_dict(self) -> dict[str, Any]:
        return {
            "executionId": self.execution_id,
            "jobId": self.job_id,
            "triggeredAt": format_instant(self.triggered_at),
            "state": self.state.value,
            "attempts": self.attempts,
            "resolvedInputs": {k: [r.to_dict() for r in v] for k, v in self.resolved_inputs.items()},
            "resultReferences": (None if self.result_references is None
                                 else [r.to_dict() for r in self.result_references]),
            "failureReason": self.failure_reason,
            "processExecutionId": self.process_execution_id,
            "nextCheck": format_instant(self.next_check) if self.next_check else None,
        }

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "ExecutionRecord":
        refs = doc.get("resultReferences")
        return cls(
            execution_id=doc["executionId"],
            job_id=doc["jobId"],
            triggered_at=parse_instant(doc["triggeredAt"]),
            state=ExecState(doc["state"]),
            attempts=doc["attempts"],
            resolved_inputs={k: [ResourceReference.from_dict(r) for r in v]
                             for k, v in doc["resolvedInputs"].items()},
            result_references=None if refs is None else [ResourceReference.from_dict(r) for r in refs],
            failure_reason=doc.get("failureReason"),
            process_execution_id=doc.get("processExecutionId"),
            next_check=parse_instant(doc["nextCheck"]) if doc.get("nextCheck") else None,
        )


@dataclass(frozen=True)
class RetryPolicy:
    interval: float = 60.0
    max_attempts: int = 10


@dataclass(frozen=True)
class Outcome:
    succeeded: bool
    results: tuple[ResourceReference, ...] = ()
    message: str = ""

    @classmethod
    def ok(cls, results) -> "Outcome":
        return cls(True, tuple(results))

    @classmethod
    def failed(cls, message: str) -> "Outcome":
        return cls(False, (), message)


class JobRegistry(Protocol):
    def get_job(self, job_id: str) -> JobDefinition: ...

    def list_jobs(self) -> list[JobDefinition]: ...

    def update_runtime(self, job_id: str, status: JobStatus, last_finished: datetime | None = None): ...


class Publisher(Protocol):
    def publish(self, key: str, payload: Any) -> str: ...


class CoreEngine:
    """Owns the schedule, execution records and retry policy.

    ``tick()`` does all time-driven work once (due cron fires, data re-checks,
    status polls of running processes); ``start()`` calls it from a loop.
    """

    def __init__(self, broker: Publisher, resolver: ResourceResolver, runner: RunnerClient,
                 clock: Clock | None = None, jobs: JobRegistry | None = None,
                 store_dir: Path | None = None, retry: RetryPolicy = RetryPolicy(),
                 processing_levels: dict[str, str] | None = None, subscribe: bool = True):
        self.broker = broker
        self.resolver = resolver
        self.runner = runner
        self.clock = clock or SystemClock()
        self.job_registry = jobs
        self.store_dir = Path(store_dir) if store_dir else None
        self.retry = retry
        self.processing_levels = dict(processing_levels or {})
        self.skipped: list[tuple[str, datetime]] = []
        self._jobs: dict[str, JobDefinition] = {}
        self._next_fire: dict[str, datetime] = {}
        self._records: dict[str, ExecutionRecord] = {}
        self._active: dict[str, str] = {}  # job id -> execution id
        self._announced: set[str] = set()  # execution ids with products.new sent
        self._handled: set[str] = set()  # broker message ids
        self._lock = threading.RLock()
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None
        if self.store_dir:
            self.store_dir.mkdir(parents=True, exist_ok=True)
            self._recover()
        if jobs is not None:
            for job in jobs.list_jobs():
                self.add_job(job)
                # a crash can leave a job marked running with no live execution
                if job.status is JobStatus.RUNNING and job.id not in self._active:
                    jobs.update_runtime(job.id, JobStatus.FAILED)
        if subscribe:
            broker.subscribe(JOBS_CREATED, "core-engine.jobs", self._on_job_created)
            broker.subscribe(JOBS_DELETED, "core-engine.jobs-deleted", self._on_job_deleted)

    # ------------------------------------------------------------ recovery

    def _persist(self, rec: ExecutionRecord) -> None:
        if self.store_dir:
            atomic_write_json(self.store_dir / f"{rec.execution_id}.json", rec.to_dict())

    def _recover(self) -> None:
        import json

        interrupted = []
        for path in sorted(self.store_dir.glob("*.json")):
            try:
                rec = ExecutionRecord.from_dict(json.loads(path.read_text(encoding="utf-8")))
            except (ValueError, KeyError, ValidationError) as exc:
                logger.error("ignoring unreadable execution record %s: %s", path.name, exc)
                continue
            self._records[rec.execution_id] = rec
            if not rec.terminal:
                interrupted.append(rec)
            elif rec.state is ExecState.SUCCEEDED:
                self._announced.add(rec.execution_id)
        for rec in interrupted:
            if rec.state is ExecState.SCHEDULED:
                rec.transition(ExecState.WAITING_DATA)
            self._fail(rec, "interrupted")

    # ---------------------------------------------------------------- jobs

    def _on_job_created(self, msg: BrokerMessage) -> None:
        if self._seen_message(msg):
            return
        try:
            job = validate_job_definition(msg.payload)
        except ValidationError as exc:
            logger.warning("ignoring invalid job announcement: %s", exc)
            return
        self.add_job(job)

    def _on_job_deleted(self, msg: BrokerMessage) -> None:
        if self._seen_message(msg):
            return
        self.remove_job(msg.payload["jobId"])

    def _seen_message(self, msg: BrokerMessage) -> bool:
        with self._lock:
            if msg.message_id in self._handled:
                return True
            self._handled.add(msg.message_id)
            return False

    def add_job(self, job: JobDefinition) -> None:
        with self._lock:
            if job.id in self._jobs:
                return
            self._jobs[job.id] = job
            try:
                self._next_fire[job.id] = next_fire_time(job.execution_pattern, self.clock.now())
            except NoFireWithinHorizon:
                logger.warning("job %s never fires (%s)", job.id, job.execution_pattern)

    def remove_job(self, job_id: str) -> None:
        with self._lock:
            self._jobs.pop(job_id, None)
            self._next_fire.pop(job_id, None)

    def job(self, job_id: str) -> JobDefinition:
        with self._lock:
            job = self._jobs.get(job_id)
        if job is None and self.job_registry is not None:
            try:
                job = self.job_registry.get_job(job_id)
            except LookupError:
                job = None
        if job is None:
            raise UnknownJob(f"job {job_id} not found")
        return job

    def next_fire(self, job_id: str) -> datetime | None:
        with self._lock:
            return self._next_fire.get(job_id)

    def _set_job_status(self, job_id: str, status: JobStatus, finished: datetime | None = None) -> None:
        if self.job_registry is not None:
            self.job_registry.update_runtime(job_id, status, finished)

    # ---------------------------------------------------------- executions

    def trigger(self, job_id: str, triggered_at: datetime | None = None) -> ExecutionRecord:
        return self.trigger_execution(self.job(job_id), triggered_at or self.clock.now())

    def trigger_execution(self, job: JobDefinition, triggered_at: datetime) -> ExecutionRecord:
        with self._lock:
            if job.id in self._active:
                self.skipped.append((job.id, triggered_at))
                raise JobBusy(f"job {job.id} has execution {self._active[job.id]} in progress")
            rec = ExecutionRecord(str(uuid.uuid4()), job.id, triggered_at)
            self._records[rec.execution_id] = rec
            self._active[job.id] = rec.execution_id
            rec.transition(ExecState.WAITING_DATA)
            self._persist(rec)
            self._set_job_status(job.id, JobStatus.RUNNING)
            self.broker.publish(EXECUTIONS_STARTED, {
                "jobId": job.id, "executionId": rec.execution_id,
                "triggeredAt": format_instant(triggered_at),
            })
            self._attempt(rec, job)
            return rec

    def _attempt(self, rec: ExecutionRecord, job: JobDefinition | None = None) -> None:
        """One input-resolution attempt; submits the process when every input resolves."""
        if job is None:
            try:
                job = self.job(rec.job_id)
            except UnknownJob:
                self._fail(rec, "job deleted")
                return
        rec.attempts += 1
        rec.next_check = None
        window = TimeWindow(rec.triggered_at - timedelta(seconds=job.coverage_seconds), rec.triggered_at)
        level = self.processing_levels.get(job.processing_tool)
        try:
            resolved = {
                s.identifier: self.resolver.query_resources(
                    ResourceQuery(s, window, job.area_of_interest, level))
                for s in job.inputs
            }
        except Exception as exc:
            self._fail(rec, f"resource query failed: {exc}")
            return
        rec.resolved_inputs = resolved
        if all(resolved.values()):
            # newest reference per slot; results are already sorted newest first
            chosen = {slot: refs[0] for slot, refs in resolved.items()}
            try:
                rec.process_execution_id = self.runner.execute(job.processing_tool, chosen, {})
            except Exception as exc:
                self._fail(rec, f"process submission failed: {exc}")
                return
            rec.transition(ExecState.RUNNING)
            self._persist(rec)
            return
        if rec.attempts >= self.retry.max_attempts:
            self._fail(rec, INPUT_INCOMPLETE)
            return
        rec.next_check = self.clock.now() + timedelta(seconds=self.retry.interval)
        self._persist(rec)

    def _fail(self, rec: ExecutionRecord, reason: str) -> None:
        rec.transition(ExecState.FAILED)
        rec.failure_reason = reason
        rec.next_check = None
        self._persist(rec)
        if self._active.get(rec.job_id) == rec.execution_id:
            del self._active[rec.job_id]
        self._set_job_status(rec.job_id, JobStatus.FAILED)
        self.broker.publish(EXECUTIONS_FAILED, {
            "jobId": rec.job_id, "executionId": rec.execution_id, "failureReason": reason,
        })
        logger.info("execution %s failed: %s", rec.execution_id, reason)

    def complete_execution(self, rec: ExecutionRecord, outcome: Outcome) -> ExecutionRecord:
        with self._lock:
            if rec.state is not ExecState.RUNNING:
                raise IllegalState(f"execution {rec.execution_id} is {rec.state.value}, not RUNNING")
            if not outcome.succeeded:
                self._fail(rec, outcome.message or "process failed")
                return rec
            rec.result_references = list(outcome.results)
            rec.transition(ExecState.SUCCEEDED)
            self._persist(rec)
            if self._active.get(rec.job_id) == rec.execution_id:
                del self._active[rec.job_id]
            finished = self.clock.now()
            job = self._jobs.get(rec.job_id)
            if job is None and self.job_registry is not None:
                try:
                    job = self.job_registry.get_job(rec.job_id)
                except LookupError:
                    job = None
            self._set_job_status(rec.job_id, JobStatus.WAITING, finished)
            if rec.execution_id not in self._announced and job is not None:
                self._announced.add(rec.execution_id)
                self.broker.publish(PRODUCTS_NEW, {
                    "jobId": rec.job_id,
                    "executionId": rec.execution_id,
                    "productCollection": job.product_collection,
                    "processingTool": job.processing_tool,
                    "areaOfInterest": {"extent": job.area_of_interest.extent},
                    "triggeredAt": format_instant(rec.triggered_at),
                    "results": [r.to_dict() for r in rec.result_references],
                })
            return rec

    def _poll(self, rec: ExecutionRecord) -> None:
        try:
            status: RemoteStatus = self.runner.get_status(rec.process_execution_id)
        except UnknownExecution:
            self.complete_execution(rec, Outcome.failed("process execution lost"))
            return
        except Exception as exc:
            logger.warning("status poll for %s failed: %s", rec.execution_id, exc)
            return
        if status.status == "SUCCEEDED":
            self.complete_execution(rec, Outcome.ok(status.results))
        elif status.status == "FAILED":
            self.complete_execution(rec, Outcome.failed(status.message))

    # -------------------------------------------------------------- timing

    def tick(self) -> None:
        now = self.clock.now()
        with self._lock:
            due = [(jid, t) for jid, t in self._next_fire.items() if t <= now]
            for job_id, fire_at in due:
                job = self._jobs[job_id]
                # missed fires collapse into the latest one
                latest = fire_at
                try:
                    nxt = next_fire_time(job.execution_pattern, fire_at)
                    while nxt <= now:
                        latest, nxt = nxt, next_fire_time(job.execution_pattern, nxt)
                    self._next_fire[job_id] = nxt
                except NoFireWithinHorizon:
                    del self._next_fire[job_id]
                try:
                    self.trigger_execution(job, latest)
                except JobBusy:
                    logger.info("job %s still running; skipped fire at %s", job_id, format_instant(latest))
            for rec in list(self._records.values()):
                if rec.state is ExecState.WAITING_DATA and rec.next_check and rec.next_check <= now:
                    self._attempt(rec)
            for rec in list(self._records.values()):
                if rec.state is ExecState.RUNNING:
                    self._poll(rec)

    def start(self, interval: float = 0.2) -> None:
        def loop():
            while not self._stop.is_set():
                try:
                    self.tick()
                except Exception:
                    logger.exception("scheduler tick failed")
                self._stop.wait(interval)

        self._thread = threading.Thread(target=loop, name="core-engine", daemon=True)
        self._thread.start()

    def shutdown(self, reason: str = "shutdown") -> None:
        """Stop the loop and fail every unfinished execution with ``reason``."""
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=5)
        with self._lock:
            for rec in list(self._records.values()):
                if rec.state in (ExecState.WAITING_DATA, ExecState.RUNNING):
                    self._fail(rec, reason)

    # ------------------------------------------------------------- queries

    def get_execution(self, execution_id: str) -> ExecutionRecord:
        with self._lock:
            return self._records[execution_id]

    def executions(self, job_id: str | None = None) -> list[ExecutionRecord]:
        with self._lock:
            recs = [r for r in self._records.values() if job_id is None or r.job_id == job_id]
        return sorted(recs, key=lambda r: (r.triggered_at, r.execution_id))

    def active(self) -> list[ExecutionRecord]:
        with self._lock:
            return [r for r in self._records.values() if not r.terminal]

    def run_until_idle(self, timeout: float = 10.0, poll: float = 0.01) -> bool:
        """Tick until no execution is RUNNING (waiting-for-data ones need the clock)."""
        import time

        deadline = time.monotonic() + timeout
        while time.monotonic() < deadline:
            self.tick()
            if not any(r.state is ExecState.RUNNING for r in self.active()):
                return True
            time.sleep(poll)
        return False
