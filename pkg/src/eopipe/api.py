"""REST faces of the services, one FastAPI app per service."""

from __future__ import annotations

from typing import Any

from fastapi import Body, FastAPI, Request
from fastapi.responses import JSONResponse, Response

from .clock import Clock, SimulatedClock
from .domain import ValidationError
from .engine import CoreEngine, JobBusy, UnknownJob
from .jobs import DuplicateId, JobManager, NotFound, ValidationFailed
from .observer import CatalogSource, DatasourceObserver
from .runner import ProcessRunner, RunnerError
from .wrapper import DataWrapper, ResourceQuery


def _error(status: int, detail: Any) -> JSONResponse:
    return JSONResponse({"detail": detail}, status_code=status)


def _invalid(errors) -> JSONResponse:
    return _error(422, [e.to_dict() for e in errors])


def jobs_app(manager: JobManager) -> FastAPI:
    app = FastAPI(title="job-manager")

    @app.post("/jobs", status_code=201)
    def create(doc: Any = Body(...)):
        try:
            return manager.create_job(doc).to_dict()
        except ValidationFailed as exc:
            return _invalid(exc.errors)
        except DuplicateId as exc:
            return _error(409, str(exc))

    @app.get("/jobs")
    def list_jobs():
        return [j.to_dict() for j in manager.list_jobs()]

    @app.get("/jobs/{job_id}")
    def get(job_id: str):
        try:
            return manager.get_job(job_id).to_dict()
        except NotFound as exc:
            return _error(404, str(exc))

    @app.delete("/jobs/{job_id}", status_code=204)
    def delete(job_id: str):
        try:
            manager.delete_job(job_id)
        except NotFound as exc:
            return _error(404, str(exc))
        return Response(status_code=204)

    return app


def wrapper_app(wrapper: DataWrapper) -> FastAPI:
    app = FastAPI(title="data-wrapper")

    @app.post("/resources/query")
    def query(doc: Any = Body(...)):
        try:
            q = ResourceQuery.from_dict(doc)
        except ValidationError as exc:
            return _invalid(exc.errors)
        return [r.to_dict() for r in wrapper.query_resources(q)]

    return app


def engine_app(engine: CoreEngine, clock: Clock | None = None) -> FastAPI:
    app = FastAPI(title="core-engine")

    @app.post("/jobs/{job_id}/trigger", status_code=202)
    def trigger(job_id: str):
        try:
            return engine.trigger(job_id).to_dict()
        except UnknownJob as exc:
            return _error(404, str(exc))
        except JobBusy as exc:
            return _error(409, str(exc))

    @app.get("/jobs/{job_id}/executions")
    def executions(job_id: str):
        return [r.to_dict() for r in engine.executions(job_id)]

    if isinstance(clock, SimulatedClock):
        @app.post("/clock/advance")
        def advance(doc: dict = Body(...)):
            try:
                now = clock.advance(float(doc.get("seconds", 0)))
            except (TypeError, ValueError) as exc:
                return _error(400, str(exc))
            engine.tick()
            return {"now": now.isoformat()}

    return app


def runner_app(runner: ProcessRunner) -> FastAPI:
    app = FastAPI(title="process-runner")

    def fail(exc: RunnerError) -> JSONResponse:
        return _error(exc.status_code, str(exc))

    @app.get("/processes")
    def list_processes():
        return [d.to_dict() for d in runner.list_processes()]

    @app.get("/processes/{process_id}")
    def describe(process_id: str):
        try:
            return runner.describe_process(process_id).to_dict()
        except RunnerError as exc:
            return fail(exc)

    @app.post("/processes/{process_id}/execution", status_code=201)
    async def execute(process_id: str, request: Request):
        # the raw body goes to the runner untouched so its size rule sees what was sent
        body = await request.body()
        try:
            eid = runner.submit(process_id, body)
        except RunnerError as exc:
            return fail(exc)
        return {"executionId": eid, "status": "ACCEPTED"}

    @app.get("/executions/{execution_id}")
    def status(execution_id: str):
        try:
            return runner.get_status(execution_id).to_dict()
        except RunnerError as exc:
            return fail(exc)

    @app.get("/executions/{execution_id}/results/{output}")
    def result(execution_id: str, output: str):
        try:
            data, media_type = runner.get_result(execution_id, output)
        except RunnerError as exc:
            return fail(exc)
        return Response(content=data, media_type=media_type)

    return app


def observer_app(observer: DatasourceObserver) -> FastAPI:
    app = FastAPI(title="datasource-observer")

    @app.get("/catalogs")
    def sources():
        return [s.to_dict() for s in observer.sources]

    @app.post("/catalogs", status_code=201)
    def register(doc: dict = Body(...)):
        try:
            source = CatalogSource.from_dict(doc)
        except (KeyError, TypeError, ValueError) as exc:
            return _error(422, str(exc))
        observer.register_source(source)
        published = observer.poll_source(source.name) if doc.get("pollNow", True) else []
        return {**source.to_dict(), "published": len(published)}

    return app
