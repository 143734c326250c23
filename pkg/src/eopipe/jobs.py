"""Job definitions: durable store and the user-facing manager."""

from __future__ import annotations

import json
import logging
import threading
from dataclasses import replace
from datetime import datetime
from pathlib import Path
from typing import Any

from .broker import JOBS_CREATED, JOBS_DELETED, Broker
from .clock import Clock, SystemClock
from .domain import (
    BAD_FORMAT, FieldError, JobDefinition, JobStatus, ValidationError, format_instant, new_id, validate_job_definition,
)
from .transport import atomic_write_json

logger = logging.getLogger(__name__)


class NotFound(LookupError):
    pass


class DuplicateId(ValueError):
    pass


class ValidationFailed(ValueError):
    def __init__(self, error: ValidationError):
        self.errors = error.errors
        super().__init__(str(error))


class JobStore:
    """One JSON document per job under ``directory``, written then renamed."""

    def __init__(self, directory: Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._jobs: dict[str, JobDefinition] = {}
        for path in sorted(self.directory.glob("*.json")):
            try:
                job = validate_job_definition(json.loads(path.read_text(encoding="utf-8")))
            except (ValueError, ValidationError) as exc:
                logger.error("ignoring unreadable job file %s: %s", path.name, exc)
                continue
            self._jobs[job.id] = job

    def _path(self, job_id: str) -> Path:
        return self.directory / f"{job_id}.json"

    def update(self, job_id: str, **changes: Any) -> JobDefinition:
        """Replace fields of a stored job; a concurrently deleted job stays deleted."""
        with self._lock:
            job = self._jobs.get(job_id)
            if job is None:
                raise NotFound(f"job {job_id} not found")
            job = replace(job, **changes)
            atomic_write_json(self._path(job.id), job.to_dict())
            self._jobs[job.id] = job
            return job

    def insert(self, job: JobDefinition) -> None:
        with self._lock:
            if job.id in self._jobs:
                raise DuplicateId(f"job {job.id} already exists")
            atomic_write_json(self._path(job.id), job.to_dict())
            self._jobs[job.id] = job

    def remove(self, job_id: str) -> JobDefinition:
        with self._lock:
            job = self._jobs.pop(job_id, None)
            if job is None:
                raise NotFound(f"job {job_id} not found")
            self._path(job_id).unlink(missing_ok=True)
            return job

    def get(self, job_id: str) -> JobDefinition:
        with self._lock:
            job = self._jobs.get(job_id)
        if job is None:
            raise NotFound(f"job {job_id} not found")
        return job

    def all(self) -> list[JobDefinition]:
        with self._lock:
            return sorted(self._jobs.values(), key=lambda j: (j.created, j.id))


class JobManager:
    def __init__(self, store: JobStore, broker: Broker, clock: Clock | None = None):
        self.store = store
        self.broker = broker
        self.clock = clock or SystemClock()

    def create_job(self, doc: Any) -> JobDefinition:
        if not isinstance(doc, dict):
            raise ValidationFailed(ValidationError([FieldError(BAD_FORMAT, "", "expected a JSON object")]))
        doc = dict(doc)
        doc.setdefault("id", new_id())
        doc.setdefault("created", format_instant(self.clock.now()))
        doc.pop("lastFinishedExecution", None)  # server-managed
        doc["status"] = JobStatus.WAITING.value
        try:
            job = validate_job_definition(doc)
        except ValidationError as exc:
            raise ValidationFailed(exc) from exc
        self.store.insert(job)
        self.broker.publish(JOBS_CREATED, job.to_dict())
        logger.info("job %s created (%s)", job.id, job.name)
        return job

    def get_job(self, job_id: str) -> JobDefinition:
        return self.store.get(job_id)

    def list_jobs(self) -> list[JobDefinition]:
        return self.store.all()

    def delete_job(self, job_id: str) -> None:
        job = self.store.remove(job_id)
        self.broker.publish(JOBS_DELETED, {"jobId": job.id})
        logger.info("job %s deleted", job.id)

    def update_runtime(self, job_id: str, status: JobStatus,
                       last_finished: datetime | None = None) -> JobDefinition | None:
        """Record execution progress on a stored job; None if it was deleted meanwhile."""
        changes: dict[str, Any] = {"status": status}
        if last_finished is not None:
            changes["last_finished_execution"] = last_finished
        try:
            return self.store.update(job_id, **changes)
        except NotFound:
            return None

