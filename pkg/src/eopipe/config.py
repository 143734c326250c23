"""System configuration: one JSON document, scalars overridable from the environment.

Every scalar leaf has an environment name built from its path, e.g.
``retry.maxAttempts`` -> ``WACODIS_RETRY_MAX_ATTEMPTS`` and
``services.jobs.port`` -> ``WACODIS_SERVICES_JOBS_PORT``.
"""

from __future__ import annotations

import copy
import json
import os
import re
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path
from typing import Any, Mapping

from .domain import parse_instant
from .observer import CatalogSource

ENV_PREFIX = "WACODIS_"

COMPONENTS = (
    "job-manager", "data-wrapper", "datasource-observer", "process-runner", "core-engine", "product-listener",
)
SERVICES = {
    "job-manager": "jobs",
    "data-wrapper": "wrapper",
    "datasource-observer": "observer",
    "process-runner": "runner",
    "core-engine": "engine",
}

DEFAULTS: dict[str, Any] = {
    "dataDir": "./wacodis-data",
    "clock": {"mode": "real", "start": "2020-08-01T00:00:00Z"},
    "broker": {"bufferSize": 10000},
    "services": {
        "jobs": {"host": "127.0.0.1", "port": 8081},
        "wrapper": {"host": "127.0.0.1", "port": 8082},
        "engine": {"host": "127.0.0.1", "port": 8083},
        "runner": {"host": "127.0.0.1", "port": 8084},
        "observer": {"host": "127.0.0.1", "port": 8085},
    },
    "catalogs": [],
    "retry": {"interval": 60.0, "maxAttempts": 10},
    "importers": [{"type": "filesystem", "name": "filesystem", "root": "products"}],
    "runner": {"parallelism": 2, "retainFailedLogs": True},
    "processingLevels": {},
}


class ConfigInvalid(ValueError):
    def __init__(self, field: str, reason: str):
        self.field = field
        super().__init__(f"{field}: {reason}")


def _merge(base: dict, override: Mapping) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, Mapping) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _env_name(path: tuple[str, ...]) -> str:
    parts = [re.sub(r"(?<!^)(?=[A-Z])", "_", p).upper() for p in path]
    return ENV_PREFIX + "_".join(parts)


def _coerce(text: str, like: Any, field: str) -> Any:
    try:
        if isinstance(like, bool):
            if text.lower() not in ("1", "0", "true", "false", "yes", "no"):
                raise ValueError(text)
            return text.lower() in ("1", "true", "yes")
        if isinstance(like, int):
            return int(text)
        if isinstance(like, float):
            return float(text)
    except ValueError as exc:
        raise ConfigInvalid(field, f"cannot parse {text!r} from the environment") from exc
    return text


def _apply_env(doc: dict, env: Mapping[str, str], path: tuple[str, ...] = ()) -> None:
    for key, value in doc.items():
        sub = path + (key,)
        if isinstance(value, dict):
            _apply_env(value, env, sub)
        elif not isinstance(value, list):
            name = _env_name(sub)
            if name in env:
                doc[key] = _coerce(env[name], value, ".".join(sub))


@dataclass(frozen=True)
class ServiceAddress:
    host: str
    port: int

    @property
    def url(self) -> str:
        return f"http://{self.host}:{self.port}"


@dataclass(frozen=True)
class SystemConfig:
    data_dir: Path
    clock_mode: str
    clock_start: datetime
    buffer_size: int
    services: dict[str, ServiceAddress]
    catalogs: tuple[CatalogSource, ...]
    retry_interval: float
    retry_max_attempts: int
    importers: tuple[dict, ...]
    parallelism: int
    retain_failed_logs: bool
    processing_levels: dict[str, str]

    @classmethod
    def from_dict(cls, doc: Mapping | None = None, env: Mapping[str, str] | None = None,
                  base_dir: Path | None = None) -> "SystemConfig":
        raw = _merge(DEFAULTS, doc or {})
        _apply_env(raw, os.environ if env is None else env)
        unknown = set(raw) - set(DEFAULTS)
        if unknown:
            raise ConfigInvalid(sorted(unknown)[0], "unknown field")

        data_dir = Path(raw["dataDir"])
        if not data_dir.is_absolute() and base_dir is not None:
            data_dir = base_dir / data_dir

        mode = raw["clock"]["mode"]
        if mode not in ("real", "simulated"):
            raise ConfigInvalid("clock.mode", "expected 'real' or 'simulated'")
        try:
            start = parse_instant(raw["clock"]["start"])
        except (TypeError, ValueError) as exc:
            raise ConfigInvalid("clock.start", str(exc)) from exc

        services = {}
        seen_ports: dict[int, str] = {}
        for name, addr in raw["services"].items():
            if name not in SERVICES.values():
                raise ConfigInvalid(f"services.{name}", "unknown service")
            port = addr.get("port")
            if not isinstance(port, int) or not 0 < port < 65536:
                raise ConfigInvalid(f"services.{name}.port", "expected an integer in 1..65535")
            if port in seen_ports:
                raise ConfigInvalid(f"services.{name}.port", f"port {port} already used by {seen_ports[port]}")
            seen_ports[port] = name
            services[name] = ServiceAddress(str(addr.get("host", "127.0.0.1")), port)

        try:
            catalogs = tuple(CatalogSource.from_dict(c) for c in raw["catalogs"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigInvalid("catalogs", str(exc)) from exc

        retry = raw["retry"]
        if not retry["interval"] > 0:
            raise ConfigInvalid("retry.interval", "must be positive")
        if not isinstance(retry["maxAttempts"], int) or retry["maxAttempts"] < 1:
            raise ConfigInvalid("retry.maxAttempts", "must be an integer >= 1")

        importers = []
        names = set()
        for i, imp in enumerate(raw["importers"]):
            kind = imp.get("type")
            if kind == "filesystem":
                if not imp.get("root"):
                    raise ConfigInvalid(f"importers[{i}].root", "required")
            elif kind == "http":
                if not imp.get("url"):
                    raise ConfigInvalid(f"importers[{i}].url", "required")
            else:
                raise ConfigInvalid(f"importers[{i}].type", "expected 'filesystem' or 'http'")
            name = imp.get("name", kind)
            if name in names:
                raise ConfigInvalid(f"importers[{i}].name", f"duplicate importer name {name!r}")
            names.add(name)
            importers.append({**imp, "name": name})

        runner = raw["runner"]
        if not isinstance(runner["parallelism"], int) or runner["parallelism"] < 1:
            raise ConfigInvalid("runner.parallelism", "must be an integer >= 1")
        buffer_size = raw["broker"]["bufferSize"]
        if not isinstance(buffer_size, int) or buffer_size < 1:
            raise ConfigInvalid("broker.bufferSize", "must be an integer >= 1")

        return cls(
            data_dir=data_dir,
            clock_mode=mode,
            clock_start=start,
            buffer_size=buffer_size,
            services=services,
            catalogs=catalogs,
            retry_interval=float(retry["interval"]),
            retry_max_attempts=retry["maxAttempts"],
            importers=tuple(importers),
            parallelism=runner["parallelism"],
            retain_failed_logs=bool(runner["retainFailedLogs"]),
            processing_levels=dict(raw["processingLevels"]),
        )

    @classmethod
    def load(cls, path: Path | str, env: Mapping[str, str] | None = None) -> "SystemConfig":
        path = Path(path)
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigInvalid("config", f"cannot read {path}: {exc.strerror}") from exc
        except ValueError as exc:
            raise ConfigInvalid("config", f"{path} is not JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigInvalid("config", "top level must be an object")
        return cls.from_dict(doc, env, base_dir=path.parent.resolve())

    def validate_components(self, components: tuple[str, ...]) -> None:
        for comp in components:
            if comp not in COMPONENTS:
                raise ConfigInvalid("components", f"unknown component {comp!r}")
        if "product-listener" in components and not self.importers:
            raise ConfigInvalid("importers", "product-listener needs at least one importer")
        try:
            self.data_dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ConfigInvalid("dataDir", f"not creatable: {exc.strerror}") from exc

    def url(self, service: str) -> str:
        return self.services[service].url

    def importer_root(self, spec: dict) -> Path:
        root = Path(spec["root"])
        return root if root.is_absolute() else self.data_dir / root
