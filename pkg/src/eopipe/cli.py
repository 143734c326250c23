"""Operator command line: ``serve`` plus thin REST clients for the services."""

from __future__ import annotations

import argparse
import json
import logging
import signal
import sys
import threading
from pathlib import Path
from typing import Any, Sequence

import httpx

from .config import ConfigInvalid, SystemConfig
from .transport import file_url


class CliError(Exception):
    pass


def _table(rows: list[dict], columns: Sequence[str]) -> str:
    if not rows:
        return "(none)"
    widths = {c: max(len(c), *(len(str(r.get(c, ""))) for r in rows)) for c in columns}
    lines = ["  ".join(c.ljust(widths[c]) for c in columns)]
    lines += ["  ".join(str(r.get(c, "")).ljust(widths[c]) for c in columns) for r in rows]
    return "\n".join(line.rstrip() for line in lines)


class Client:
    def __init__(self, config: SystemConfig, timeout: float = 10.0):
        self.config = config
        self.timeout = timeout

    def call(self, service: str, method: str, path: str, **kw) -> Any:
        url = self.config.url(service) + path
        try:
            resp = httpx.request(method, url, timeout=self.timeout, **kw)
        except httpx.HTTPError as exc:
            raise CliError(f"{service} service unreachable at {self.config.url(service)}: {exc}") from exc
        if resp.status_code == 404:
            raise CliError("not found: " + _detail(resp))
        if resp.status_code == 422:
            raise CliError("validation failed:\n" + _format_errors(_detail_raw(resp)))
        if resp.status_code >= 400:
            raise CliError(f"HTTP {resp.status_code}: {_detail(resp)}")
        return resp.json() if resp.content else None


def _detail_raw(resp: httpx.Response) -> Any:
    try:
        return resp.json().get("detail", resp.text)
    except ValueError:
        return resp.text


def _detail(resp: httpx.Response) -> str:
    detail = _detail_raw(resp)
    return detail if isinstance(detail, str) else json.dumps(detail)


def _format_errors(detail: Any) -> str:
    if isinstance(detail, list):
        return "\n".join(f"  {e.get('kind')}: {e.get('field')}: {e.get('message')}" for e in detail)
    return f"  {detail}"


# ------------------------------------------------------------------ commands


def cmd_submit_job(client: Client, args) -> tuple[Any, str]:
    try:
        doc = json.loads(Path(args.file).read_text(encoding="utf-8"))
    except OSError as exc:
        raise CliError(f"cannot read {args.file}: {exc.strerror}") from exc
    except ValueError as exc:
        raise CliError(f"{args.file} is not JSON: {exc}") from exc
    job = client.call("jobs", "POST", "/jobs", json=doc)
    return job, job["id"]


def cmd_list_jobs(client: Client, args) -> tuple[Any, str]:
    jobs = client.call("jobs", "GET", "/jobs")
    rows = [{"id": j["id"], "status": j["status"], "pattern": j["execution"]["pattern"],
             "name": j["name"]} for j in jobs]
    return jobs, _table(rows, ("id", "status", "pattern", "name"))


def cmd_job_status(client: Client, args) -> tuple[Any, str]:
    job = client.call("jobs", "GET", f"/jobs/{args.id}")
    rows = [{"field": k, "value": job.get(k, "")}
            for k in ("id", "name", "status", "created", "lastFinishedExecution", "processingTool",
                      "productCollection")]
    return job, _table(rows, ("field", "value"))


def cmd_trigger(client: Client, args) -> tuple[Any, str]:
    rec = client.call("engine", "POST", f"/jobs/{args.id}/trigger")
    return rec, f"{rec['executionId']} {rec['state']}"


def cmd_executions(client: Client, args) -> tuple[Any, str]:
    recs = client.call("engine", "GET", f"/jobs/{args.id}/executions")
    rows = [{"executionId": r["executionId"], "triggeredAt": r["triggeredAt"], "state": r["state"],
             "attempts": r["attempts"], "failureReason": r["failureReason"] or ""} for r in recs]
    return recs, _table(rows, ("executionId", "triggeredAt", "state", "attempts", "failureReason"))


def cmd_catalog_load(client: Client, args) -> tuple[Any, str]:
    path = Path(args.file)
    if not path.is_file():
        raise CliError(f"not found: {path}")
    doc = {"name": args.name or path.stem, "location": file_url(path), "pollInterval": args.interval}
    result = client.call("observer", "POST", "/catalogs", json=doc)
    return result, f"catalog {result['name']}: {result['published']} new scene(s)"


def cmd_serve(config: SystemConfig, args) -> int:
    from .system import System, parse_components

    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    system = System(config, parse_components(args.components), serve_http=True)
    stop = threading.Event()
    for sig in (signal.SIGTERM, signal.SIGINT):
        signal.signal(sig, lambda *_: stop.set())
    system.start()
    counts = system.subscriber_counts()
    print("ready: " + ", ".join(system.components), flush=True)
    print("subscribers: " + ", ".join(f"{k}={n}" for k, n in counts.items()), flush=True)
    stop.wait()
    system.shutdown()
    print("stopped", flush=True)
    return 0


def cmd_demo(args) -> int:
    from .demo import run_demo

    result = run_demo(Path(args.directory), stage2=args.stage2)
    if args.json:
        print(json.dumps({"products": result.products, "executions": result.executions}, indent=2))
    else:
        for rec in result.executions:
            print(f"{rec['executionId']} {rec['state']}")
        for path, digest in result.products.items():
            print(f"{digest}  {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="eopipe", description="Event-driven EO processing pipeline")
    p.add_argument("--json", action="store_true", help="machine-readable output")
    p.add_argument("--config", help="system configuration (service addresses)")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("serve", help="run the configured components")
    s.add_argument("--config", dest="serve_config", required=True)
    s.add_argument("--components", help="comma-separated subset of components")

    s = sub.add_parser("submit-job", help="submit a job definition file")
    s.add_argument("file")
    sub.add_parser("list-jobs", help="list job definitions")
    s = sub.add_parser("job-status", help="show one job")
    s.add_argument("id")
    s = sub.add_parser("trigger", help="trigger a job now")
    s.add_argument("id")
    s = sub.add_parser("executions", help="list executions of a job")
    s.add_argument("id")

    s = sub.add_parser("catalog", help="catalog sources")
    csub = s.add_subparsers(dest="catalog_command", required=True)
    c = csub.add_parser("load", help="register a scene catalog file and poll it now")
    c.add_argument("file")
    c.add_argument("--name")
    c.add_argument("--interval", type=float, default=60.0)

    s = sub.add_parser("demo", help="run the scripted demo in-process on a simulated clock")
    s.add_argument("directory")
    s.add_argument("--stage2", action="store_true", help="also run the product-consuming job")
    return p


COMMANDS = {
    "submit-job": cmd_submit_job,
    "list-jobs": cmd_list_jobs,
    "job-status": cmd_job_status,
    "trigger": cmd_trigger,
    "executions": cmd_executions,
}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "demo":
            return cmd_demo(args)
        config_path = getattr(args, "serve_config", None) or args.config
        config = SystemConfig.load(config_path) if config_path else SystemConfig.from_dict({})
        if args.command == "serve":
            return cmd_serve(config, args)
        handler = cmd_catalog_load if args.command == "catalog" else COMMANDS[args.command]
        data, text = handler(Client(config), args)
    except (CliError, ConfigInvalid, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(data, indent=2) if args.json else text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
