"""Uniform asynchronous process execution over registered tool adapters.

Clients describe, execute, poll and fetch results through one contract
regardless of which adapter does the work. Inputs are passed as references
(URLs) and resolved here, inside the processing environment.
"""

from __future__ import annotations

import json
import logging
import shutil
import threading
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from pathlib import Path
from typing import Any, Callable

from .clock import Clock, SystemClock
from .domain import ResourceReference, format_instant
from .raster import looks_like_grid
from .tools import ProcessDescription, ToolAdapter, ToolFailed, builtin_tools
from .transport import FetchFailed, fetch_url, file_url

logger = logging.getLogger(__name__)

MAX_REQUEST_BYTES = 4096
MAX_LITERAL_CHARS = 256


class RunnerError(Exception):
    status_code = 400


class UnknownProcess(RunnerError, LookupError):
    status_code = 404


class UnknownExecution(RunnerError, LookupError):
    status_code = 404


class MissingInput(RunnerError):
    def __init__(self, slot: str):
        self.slot = slot
        super().__init__(f"required input {slot!r} not bound")


class BadRequest(RunnerError):
    pass


class RequestTooLarge(BadRequest):
    status_code = 413


class NotReady(RunnerError):
    status_code = 409


class ProcessStatus(str, Enum):
    ACCEPTED = "ACCEPTED"
    RUNNING = "RUNNING"
    SUCCEEDED = "SUCCEEDED"
    FAILED = "FAILED"


_NEXT = {
    ProcessStatus.ACCEPTED: {ProcessStatus.RUNNING, ProcessStatus.FAILED},
    ProcessStatus.RUNNING: {ProcessStatus.SUCCEEDED, ProcessStatus.FAILED},
    ProcessStatus.SUCCEEDED: set(),
    ProcessStatus.FAILED: set(),
}


@dataclass
class ProcessExecutionRecord:
    execution_id: str
    process_id: str
    inputs: dict[str, list[dict]]
    parameters: dict[str, Any]
    status: ProcessStatus = ProcessStatus.ACCEPTED
    results: dict[str, ResourceReference] = field(default_factory=dict)
    started_at: datetime | None = None
    finished_at: datetime | None = None
    message: str = ""
    history: list[ProcessStatus] = field(default_factory=lambda: [ProcessStatus.ACCEPTED])

    def advance(self, status: ProcessStatus) -> None:
        if status not in _NEXT[self.status]:
            raise RuntimeError(f"illegal status change {self.status.value} -> {status.value}")
        self.status = status
        self.history.append(status)

    def to_dict(self) -> dict[str, Any]:
        return {
            "executionId": self.execution_id,
            "processId": self.process_id,
            "status": self.status.value,
            "inputs": self.inputs,
            "parameters": self.parameters,
            "results": {k: v.to_dict() for k, v in self.results.items()},
            "startedAt": format_instant(self.started_at) if self.started_at else None,
            "finishedAt": format_instant(self.finished_at) if self.finished_at else None,
            "message": self.message,
        }


def build_execute_request(inputs: dict[str, Any], parameters: dict[str, Any] | None = None) -> bytes:
    """Encode an execute request; references become ``{"href", "type"}`` items."""
    doc_inputs: dict[str, list[dict]] = {}
    for slot, bound in inputs.items():
        items = bound if isinstance(bound, list) else [bound]
        out = []
        for item in items:
            if isinstance(item, ResourceReference):
                out.append({"href": item.url, "type": item.media_type})
            elif isinstance(item, dict):
                out.append(item)
            else:
                out.append({"value": item})
        doc_inputs[slot] = out
    return json.dumps({"inputs": doc_inputs, "parameters": parameters or {}},
                      sort_keys=True, separators=(",", ":")).encode("utf-8")


class ProcessRunner:
    """Registry plus executor. ``base_url`` switches result URLs from file:// to HTTP."""

    def __init__(self, root: Path, clock: Clock | None = None, parallelism: int = 2,
                 base_url: str | None = None, retain_failed_logs: bool = True,
                 tools: list[ToolAdapter] | None = None, fetcher: Callable[[str], bytes] = fetch_url):
        self.root = Path(root)
        self.work_dir = self.root / "work"
        self.results_dir = self.root / "results"
        self.work_dir.mkdir(parents=True, exist_ok=True)
        self.results_dir.mkdir(parents=True, exist_ok=True)
        self.clock = clock or SystemClock()
        self.base_url = base_url.rstrip("/") if base_url else None
        self.retain_failed_logs = retain_failed_logs
        self.fetcher = fetcher
        self.request_log: list[bytes] = []
        self._tools: dict[str, ToolAdapter] = {}
        self._records: dict[str, ProcessExecutionRecord] = {}
        self._done: dict[str, threading.Event] = {}
        self._lock = threading.RLock()
        self._pool = ThreadPoolExecutor(max_workers=parallelism, thread_name_prefix="runner")
        for tool in builtin_tools() if tools is None else tools:
            self.register(tool)

    # ------------------------------------------------------------- registry

    def register(self, tool: ToolAdapter) -> None:
        pid = tool.description.process_id
        with self._lock:
            if pid in self._tools:
                raise ValueError(f"process {pid!r} already registered")
            self._tools[pid] = tool

    def list_processes(self) -> list[ProcessDescription]:
        with self._lock:
            return [self._tools[k].description for k in sorted(self._tools)]

    def describe_process(self, process_id: str) -> ProcessDescription:
        with self._lock:
            tool = self._tools.get(process_id)
        if tool is None:
            raise UnknownProcess(f"unknown process {process_id!r}")
        return tool.description

    # ------------------------------------------------------------ execution

    def execute(self, process_id: str, inputs: dict[str, Any], parameters: dict[str, Any] | None = None) -> str:
        return self.submit(process_id, build_execute_request(inputs, parameters))

    def submit(self, process_id: str, body: bytes) -> str:
        """Accept a raw execute request body; returns the execution id immediately."""
        with self._lock:
            self.request_log.append(bytes(body))
        desc = self.describe_process(process_id)
        if len(body) > MAX_REQUEST_BYTES:
            raise RequestTooLarge(f"request body {len(body)} B exceeds {MAX_REQUEST_BYTES} B; pass references")
        try:
            doc = json.loads(body)
        except ValueError as exc:
            raise BadRequest(f"body is not JSON: {exc}") from exc
        if not isinstance(doc, dict) or set(doc) - {"inputs", "parameters"}:
            raise BadRequest("body must be an object with 'inputs' and optional 'parameters'")
        inputs = doc.get("inputs") or {}
        parameters = doc.get("parameters") or {}
        if not isinstance(inputs, dict) or not isinstance(parameters, dict):
            raise BadRequest("'inputs' and 'parameters' must be objects")
        inputs = {k: v if isinstance(v, list) else [v] for k, v in inputs.items()}
        self._check_inputs(desc, inputs)
        known = {p.name for p in desc.parameters}
        if set(parameters) - known:
            raise BadRequest(f"unknown parameters {sorted(set(parameters) - known)}")

        record = ProcessExecutionRecord(str(uuid.uuid4()), process_id, inputs, parameters)
        with self._lock:
            self._records[record.execution_id] = record
            self._done[record.execution_id] = threading.Event()
        self._pool.submit(self._run, record)
        return record.execution_id

    def _check_inputs(self, desc: ProcessDescription, inputs: dict[str, list]) -> None:
        for slot in desc.input_slots:
            bound = inputs.get(slot.identifier, [])
            if len(bound) < slot.min_occurs:
                raise MissingInput(slot.identifier)
            if len(bound) > slot.max_occurs:
                raise BadRequest(f"slot {slot.identifier!r} accepts at most {slot.max_occurs} values")
        for name, items in inputs.items():
            if desc.slot(name) is None:
                raise BadRequest(f"unknown input {name!r}")
            for item in items:
                if not isinstance(item, dict):
                    raise BadRequest(f"input {name!r}: items must be objects")
                if "href" in item:
                    if not isinstance(item["href"], str) or set(item) - {"href", "type"}:
                        raise BadRequest(f"input {name!r}: malformed reference")
                elif set(item) == {"value"}:
                    value = item["value"]
                    if not isinstance(value, (int, float, str, bool)):
                        raise BadRequest(f"input {name!r}: literals must be scalars")
                    if isinstance(value, str) and (len(value) > MAX_LITERAL_CHARS or looks_like_grid(value)):
                        raise BadRequest(f"input {name!r}: literal too large; pass a reference")
                else:
                    raise BadRequest(f"input {name!r}: expected 'href' or 'value'")

    def _run(self, record: ProcessExecutionRecord) -> None:
        eid = record.execution_id
        workdir = self.work_dir / eid
        log_lines: list[str] = []
        with self._lock:
            record.started_at = self.clock.now()
            record.advance(ProcessStatus.RUNNING)
        try:
            tool = self._tools[record.process_id]
            (workdir / "inputs").mkdir(parents=True, exist_ok=True)
            fetched: dict[str, list[Path]] = {}
            for slot, items in record.inputs.items():
                paths = []
                for i, item in enumerate(items):
                    if "href" not in item:
                        continue
                    target = workdir / "inputs" / f"{slot}_{i}.asc"
                    log_lines.append(f"fetch {item['href']}")
                    target.write_bytes(self.fetcher(item["href"]))
                    paths.append(target)
                fetched[slot] = paths
            literals = {s: [it["value"] for it in items if "value" in it]
                        for s, items in record.inputs.items()}
            params = {p.name: p.default for p in tool.description.parameters}
            params.update(record.parameters)
            params.update({s: v[0] for s, v in literals.items() if v})
            outputs = tool.run(workdir, fetched, params)
            expected = {o.identifier: o for o in tool.description.output_slots}
            if set(outputs) != set(expected):
                raise ToolFailed(f"tool produced outputs {sorted(outputs)}, expected {sorted(expected)}")
            store = self.results_dir / eid
            store.mkdir(parents=True, exist_ok=True)
            finished = self.clock.now()
            results = {}
            for out_id, path in outputs.items():
                dest = store / f"{out_id}.asc"
                shutil.copyfile(path, dest)
                url = (f"{self.base_url}/executions/{eid}/results/{out_id}" if self.base_url
                       else file_url(dest))
                results[out_id] = ResourceReference(out_id, url, expected[out_id].media_type, finished)
            shutil.rmtree(workdir, ignore_errors=True)
            with self._lock:
                record.results = results
                record.finished_at = finished
                record.message = "ok"
                record.advance(ProcessStatus.SUCCEEDED)
        except FetchFailed as exc:
            self._fail(record, workdir, log_lines, f"FetchFailed: {exc}")
        except ToolFailed as exc:
            self._fail(record, workdir, log_lines, f"ToolFailed: {exc}")
        except Exception as exc:  # adapter bugs must not leave RUNNING forever
            logger.exception("execution %s crashed", eid)
            self._fail(record, workdir, log_lines, f"ToolFailed: {type(exc).__name__}: {exc}")
        finally:
            self._done[eid].set()

    def _fail(self, record: ProcessExecutionRecord, workdir: Path, log_lines: list[str], message: str) -> None:
        shutil.rmtree(self.results_dir / record.execution_id, ignore_errors=True)
        shutil.rmtree(workdir, ignore_errors=True)
        if self.retain_failed_logs:
            workdir.mkdir(parents=True, exist_ok=True)
            (workdir / "execution.log").write_text("\n".join(log_lines + [message]) + "\n")
        with self._lock:
            record.finished_at = self.clock.now()
            record.message = message
            record.advance(ProcessStatus.FAILED)
        logger.info("execution %s failed: %s", record.execution_id, message)

    # -------------------------------------------------------------- queries

    def get_status(self, execution_id: str) -> ProcessExecutionRecord:
        with self._lock:
            record = self._records.get(execution_id)
        if record is None:
            raise UnknownExecution(f"unknown execution {execution_id!r}")
        return record

    def get_result(self, execution_id: str, output: str) -> tuple[bytes, str]:
        record = self.get_status(execution_id)
        if record.status is not ProcessStatus.SUCCEEDED:
            raise NotReady(f"execution {execution_id} is {record.status.value}")
        ref = record.results.get(output)
        if ref is None:
            raise UnknownExecution(f"execution {execution_id} has no output {output!r}")
        return (self.results_dir / execution_id / f"{output}.asc").read_bytes(), ref.media_type

    def wait(self, execution_id: str, timeout: float | None = None) -> ProcessExecutionRecord:
        self.get_status(execution_id)
        self._done[execution_id].wait(timeout)
        return self.get_status(execution_id)

    def shutdown(self) -> None:
        self._pool.shutdown(wait=False, cancel_futures=True)
