"""Service clients used between components.

Each service is reachable either in-process or over HTTP behind the same
small interface, so components never depend on where a peer runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Protocol

import httpx

from .domain import ResourceReference
from .runner import (
    BadRequest, MissingInput, NotReady, ProcessRunner, RunnerError, UnknownExecution, UnknownProcess,
    build_execute_request,
)
from .wrapper import DataWrapper, ResourceQuery


class Unreachable(ConnectionError):
    pass


@dataclass
class RemoteStatus:
    status: str
    results: list[ResourceReference] = field(default_factory=list)
    message: str = ""


class ResourceResolver(Protocol):
    def query_resources(self, q: ResourceQuery) -> list[ResourceReference]: ...


class RunnerClient(Protocol):
    def execute(self, process_id: str, inputs: dict[str, Any], parameters: dict[str, Any] | None = None) -> str: ...

    def get_status(self, execution_id: str) -> RemoteStatus: ...

    def get_result(self, execution_id: str, output: str) -> tuple[bytes, str]: ...


class LocalResolver:
    def __init__(self, wrapper: DataWrapper):
        self.wrapper = wrapper

    def query_resources(self, q: ResourceQuery) -> list[ResourceReference]:
        return self.wrapper.query_resources(q)


class LocalRunnerClient:
    """In-process runner access that still goes through the encoded request body."""

    def __init__(self, runner: ProcessRunner):
        self.runner = runner

    def execute(self, process_id, inputs, parameters=None):
        return self.runner.submit(process_id, build_execute_request(inputs, parameters))

    def get_status(self, execution_id):
        rec = self.runner.get_status(execution_id)
        return RemoteStatus(rec.status.value, list(rec.results.values()), rec.message)

    def get_result(self, execution_id, output):
        return self.runner.get_result(execution_id, output)


def _request(client: httpx.Client, method: str, url: str, **kw) -> httpx.Response:
    try:
        return client.request(method, url, **kw)
    except httpx.HTTPError as exc:
        raise Unreachable(f"{method} {url}: {exc}") from exc


def _detail(resp: httpx.Response) -> str:
    try:
        return str(resp.json().get("detail", resp.text))
    except ValueError:
        return resp.text


class HttpResolver:
    def __init__(self, base_url: str, timeout: float = 10.0):
        self.client = httpx.Client(base_url=base_url.rstrip("/"), timeout=timeout)

    def query_resources(self, q: ResourceQuery) -> list[ResourceReference]:
        resp = _request(self.client, "POST", "/resources/query", json=q.to_dict())
        if resp.status_code != 200:
            raise RuntimeError(f"resource query failed: HTTP {resp.status_code} {_detail(resp)}")
        return [ResourceReference.from_dict(d) for d in resp.json()]


class HttpRunnerClient:
    def __init__(self, base_url: str, timeout: float = 10.0):
        self.client = httpx.Client(base_url=base_url.rstrip("/"), timeout=timeout)

    def _raise(self, resp: httpx.Response) -> None:
        detail = _detail(resp)
        if resp.status_code == 404:
            raise (UnknownExecution if "execution" in detail else UnknownProcess)(detail)
        if resp.status_code == 409:
            raise NotReady(detail)
        if resp.status_code == 400 and "required input" in detail:
            raise MissingInput(detail.split("'")[1] if "'" in detail else detail)
        if 400 <= resp.status_code < 500:
            raise BadRequest(detail)
        raise RunnerError(f"HTTP {resp.status_code}: {detail}")

    def execute(self, process_id, inputs, parameters=None):
        body = build_execute_request(inputs, parameters)
        resp = _request(self.client, "POST", f"/processes/{process_id}/execution", content=body,
                        headers={"Content-Type": "application/json"})
        if resp.status_code != 201:
            self._raise(resp)
        return resp.json()["executionId"]

    def get_status(self, execution_id):
        resp = _request(self.client, "GET", f"/executions/{execution_id}")
        if resp.status_code != 200:
            self._raise(resp)
        doc = resp.json()
        return RemoteStatus(doc["status"], [ResourceReference.from_dict(r) for r in doc["results"].values()],
                            doc.get("message", ""))

    def get_result(self, execution_id, output):
        resp = _request(self.client, "GET", f"/executions/{execution_id}/results/{output}")
        if resp.status_code != 200:
            self._raise(resp)
        return resp.content, resp.headers.get("content-type", "application/octet-stream")
