"""Assembly of the components into one running system."""

from __future__ import annotations

import errno
import json
import logging
import socket
import threading
import time
from pathlib import Path
from typing import Any

from .broker import ROUTING_KEYS, Broker, BrokerMessage
from .clients import HttpResolver, HttpRunnerClient, LocalResolver, LocalRunnerClient
from .clock import Clock, SimulatedClock, SystemClock
from .config import COMPONENTS, ConfigInvalid, SystemConfig
from .engine import CoreEngine, RetryPolicy
from .jobs import JobManager, JobStore
from .listener import FilesystemImporter, HttpImporter, ProductListener
from .observer import DatasourceObserver
from .runner import ProcessRunner
from .tools import ToolAdapter
from .wrapper import DataWrapper

logger = logging.getLogger(__name__)


class PortInUse(OSError):
    def __init__(self, host: str, port: int):
        self.host, self.port = host, port
        super().__init__(f"port {port} on {host} is already in use")


class EventLog:
    """Catch-all subscriber keeping every distinct message in order; also appended to a file."""

    def __init__(self, broker: Broker, path: Path | None = None):
        self.path = path
        self.messages: list[BrokerMessage] = []
        self._ids: set[str] = set()
        self._lock = threading.Lock()
        self.subscription = broker.subscribe("wacodis.#", "event-log", self._on_message)

    def _on_message(self, msg: BrokerMessage) -> None:
        with self._lock:
            if msg.message_id in self._ids:
                return
            self._ids.add(msg.message_id)
            self.messages.append(msg)
            if self.path is not None:
                with self.path.open("a", encoding="utf-8") as fh:
                    fh.write(json.dumps({"messageId": msg.message_id, "routingKey": msg.routing_key,
                                         "payload": msg.payload}, sort_keys=True) + "\n")

    def keys(self) -> list[str]:
        with self._lock:
            return [m.routing_key for m in self.messages]


def check_port_free(host: str, port: int) -> None:
    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as s:
        try:
            s.bind((host, port))
        except OSError as exc:
            if exc.errno == errno.EADDRINUSE:
                raise PortInUse(host, port) from exc
            raise


class System:
    """All configured components wired over one embedded broker.

    Construction follows dependency order: broker, then every subscriber,
    then the producers, then the core engine. :meth:`start` launches the
    scheduler and poll loops last, so every routing key already has a
    consumer when the first timed event can occur. Components left out of
    ``components`` are reached over HTTP at their configured addresses.
    """

    def __init__(self, config: SystemConfig, components: tuple[str, ...] = COMPONENTS,
                 clock: Clock | None = None, tools: list[ToolAdapter] | None = None,
                 redeliver: int = 1, serve_http: bool = False):
        config.validate_components(components)
        self.config = config
        self.components = tuple(components)
        self.serve_http = serve_http
        if clock is None:
            clock = SimulatedClock(config.clock_start) if config.clock_mode == "simulated" else SystemClock()
        self.clock = clock
        data = config.data_dir
        data.mkdir(parents=True, exist_ok=True)

        self.broker = Broker(config.buffer_size, clock, redeliver=redeliver)

        # subscribers
        self.wrapper = self.listener = None
        if "data-wrapper" in components:
            self.wrapper = DataWrapper(self.broker, data / "envelopes.jsonl")
        if "product-listener" in components:
            self.listener = ProductListener(self.broker, self.build_importers(), data / "listener-ledger.json",
                                            clock)
        self.events = EventLog(self.broker, data / "events.jsonl")

        # producers
        self.jobs = self.runner = self.observer = None
        if "job-manager" in components:
            self.jobs = JobManager(JobStore(data / "jobs"), self.broker, clock)
        if "process-runner" in components:
            base_url = config.url("runner") if serve_http else None
            self.runner = ProcessRunner(data / "runner", clock, config.parallelism, base_url,
                                        config.retain_failed_logs, tools)
        if "datasource-observer" in components:
            self.observer = DatasourceObserver(self.broker, clock, data / "observer.json")
            for source in config.catalogs:
                self.observer.register_source(source)

        self.engine = None
        if "core-engine" in components:
            resolver = LocalResolver(self.wrapper) if self.wrapper else HttpResolver(config.url("wrapper"))
            runner = LocalRunnerClient(self.runner) if self.runner else HttpRunnerClient(config.url("runner"))
            self.engine = CoreEngine(
                self.broker, resolver, runner, clock, self.jobs, data / "executions",
                RetryPolicy(config.retry_interval, config.retry_max_attempts),
                config.processing_levels,
            )
        self._servers: list[Any] = []
        self._started = False

    def build_importers(self) -> list:
        importers = []
        for spec in self.config.importers:
            if spec["type"] == "filesystem":
                importers.append(FilesystemImporter(self.config.importer_root(spec), spec["name"]))
            else:
                importers.append(HttpImporter(spec["url"], spec["name"]))
        return importers

    def subscriber_counts(self) -> dict[str, int]:
        return {key: len(self.broker.subscribers_for(key)) for key in ROUTING_KEYS}

    # ------------------------------------------------------------ running

    def apps(self) -> dict[str, Any]:
        from . import api

        apps = {}
        if self.jobs:
            apps["jobs"] = api.jobs_app(self.jobs)
        if self.wrapper:
            apps["wrapper"] = api.wrapper_app(self.wrapper)
        if self.engine:
            apps["engine"] = api.engine_app(self.engine, self.clock)
        if self.runner:
            apps["runner"] = api.runner_app(self.runner)
        if self.observer:
            apps["observer"] = api.observer_app(self.observer)
        return apps

    def start(self, tick_interval: float = 0.2) -> None:
        apps = self.apps() if self.serve_http else {}
        for name in apps:
            addr = self.config.services[name]
            check_port_free(addr.host, addr.port)
        for name, app in apps.items():
            self._serve(name, app)
        if self.observer:
            self.observer.start(tick_interval)
        if self.engine:
            self.engine.start(tick_interval)
        self._started = True
        logger.info("system ready: %s", ", ".join(self.components))

    def _serve(self, name: str, app: Any) -> None:
        import uvicorn

        addr = self.config.services[name]
        server = uvicorn.Server(uvicorn.Config(app, host=addr.host, port=addr.port, log_level="warning",
                                               lifespan="off"))
        server.install_signal_handlers = lambda: None  # signals belong to the main thread
        thread = threading.Thread(target=server.run, name=f"http-{name}", daemon=True)
        thread.start()
        deadline = time.monotonic() + 10
        while not server.started:
            if not thread.is_alive() or time.monotonic() > deadline:
                raise PortInUse(addr.host, addr.port)
            time.sleep(0.02)
        self._servers.append((server, thread))

    def shutdown(self) -> None:
        """Stop loops, fail unfinished executions with reason "shutdown", close servers."""
        if self.observer:
            self.observer.stop()
        if self.engine:
            self.engine.shutdown("shutdown")
        self.broker.wait_idle(5)
        for server, thread in self._servers:
            server.should_exit = True
            thread.join(timeout=5)
        if self.runner:
            self.runner.shutdown()
        self.broker.stop()


def parse_components(text: str | None) -> tuple[str, ...]:
    if not text:
        return COMPONENTS
    names = tuple(dict.fromkeys(c.strip() for c in text.split(",") if c.strip()))
    for name in names:
        if name not in COMPONENTS:
            raise ConfigInvalid("components", f"unknown component {name!r}; choose from {', '.join(COMPONENTS)}")
    return names

