"""Catalog polling: turns newly listed scenes into data-available events."""

from __future__ import annotations

import json
import logging
import threading
from dataclasses import dataclass
from datetime import datetime, timedelta
from pathlib import Path
from typing import Any

from .broker import DATA_AVAILABLE, Broker
from .clock import Clock, SystemClock
from .domain import (
    BoundingBox, DataEnvelope, FieldError, SourceType, ValidationError, _Collector, _is_url,
    format_instant, new_id,
)
from .transport import FetchFailed, atomic_write_json, fetch_url, read_json

logger = logging.getLogger(__name__)

SCENE_FIELDS = (
    "sceneId", "satellite", "sensingTime", "cloudCoverage", "processingLevel",
    "footprint", "accessUrl", "mediaType",
)


class CatalogUnreachable(IOError):
    pass


@dataclass(frozen=True)
class CatalogScene:
    scene_id: str
    satellite: str
    sensing_time: datetime
    cloud_coverage: float
    processing_level: str
    footprint: BoundingBox
    access_url: str
    media_type: str

    @classmethod
    def from_dict(cls, raw: Any) -> "CatalogScene":
        c = _Collector()
        if not isinstance(raw, dict):
            raise ValidationError([FieldError("BadFormat", "", "expected a JSON object")])
        c.reject_unknown(raw, SCENE_FIELDS)
        scene_id = c.require(raw, "sceneId")
        satellite = c.require(raw, "satellite")
        sensing = c.instant(raw, "sensingTime")
        cloud = c.require(raw, "cloudCoverage", float)
        if cloud is not None and not 0 <= cloud <= 100:
            c.add("InvariantViolation", "cloudCoverage", "must lie in [0, 100]")
        level = c.require(raw, "processingLevel")
        footprint = c.bbox(raw, "footprint", extent_key=None)
        url = c.require(raw, "accessUrl")
        if url is not None and not _is_url(url):
            c.add("InvariantViolation", "accessUrl", "not a URL")
        media_type = c.require(raw, "mediaType")
        c.raise_if_any()
        return cls(scene_id, satellite, sensing, float(cloud), level, footprint, url, media_type)

    def to_dict(self) -> dict[str, Any]:
        return {
            "sceneId": self.scene_id,
            "satellite": self.satellite,
            "sensingTime": format_instant(self.sensing_time),
            "cloudCoverage": self.cloud_coverage,
            "processingLevel": self.processing_level,
            "footprint": self.footprint.extent,
            "accessUrl": self.access_url,
            "mediaType": self.media_type,
        }


@dataclass(frozen=True)
class CatalogSource:
    name: str
    location: str
    poll_interval: float = 60.0

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("source name must be non-empty")
        if self.poll_interval < 1:
            raise ValueError("pollInterval must be >= 1 s")

    def to_dict(self) -> dict[str, Any]:
        return {"name": self.name, "location": self.location, "pollInterval": self.poll_interval}

    @classmethod
    def from_dict(cls, raw: dict) -> "CatalogSource":
        return cls(raw["name"], raw["location"], float(raw.get("pollInterval", 60.0)))


def read_catalog(location: str) -> list[CatalogScene]:
    try:
        data = fetch_url(location)
    except FetchFailed as exc:
        raise CatalogUnreachable(str(exc)) from exc
    scenes = []
    for lineno, line in enumerate(data.decode("utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            scenes.append(CatalogScene.from_dict(json.loads(line)))
        except (ValueError, ValidationError) as exc:
            logger.warning("%s:%d: skipping malformed scene (%s)", location, lineno, exc)
    return scenes


def poll_catalog(source: CatalogSource, seen: set[str]) -> list[CatalogScene]:
    """Scenes of ``source`` not yet in ``seen``, oldest first; adds them to ``seen``.

    Raises CatalogUnreachable without touching ``seen``.
    """
    fresh: dict[str, CatalogScene] = {}
    for scene in read_catalog(source.location):
        if scene.scene_id not in seen and scene.scene_id not in fresh:
            fresh[scene.scene_id] = scene
    ordered = sorted(fresh.values(), key=lambda s: (s.sensing_time, s.scene_id))
    seen.update(fresh)
    return ordered


def scene_to_envelope(scene: CatalogScene, discovered: datetime) -> DataEnvelope:
    return DataEnvelope(
        envelope_id=new_id(),
        source_type=SourceType.COPERNICUS,
        sensing_time=scene.sensing_time,
        spatial_footprint=scene.footprint,
        access_url=scene.access_url,
        media_type=scene.media_type,
        discovered=discovered,
        satellite=scene.satellite,
        cloud_coverage=scene.cloud_coverage,
        processing_level=scene.processing_level,
    )


class DatasourceObserver:
    """Keeps registered sources, their dedupe sets, and the poll schedule.

    State (sources and seen scene ids) is persisted to ``state_path`` before
    envelopes are published, so a scene is never announced twice.
    """

    def __init__(self, broker: Broker, clock: Clock | None = None, state_path: Path | None = None):
        self.broker = broker
        self.clock = clock or SystemClock()
        self.state_path = Path(state_path) if state_path else None
        self.poll_count = 0
        self.errors: list[str] = []
        self._sources: dict[str, CatalogSource] = {}
        self._seen: dict[str, set[str]] = {}
        self._next_due: dict[str, datetime] = {}
        self._source_locks: dict[str, threading.Lock] = {}
        self._lock = threading.Lock()
        self._stop = threading.Event()
        self._threads: dict[str, threading.Thread] = {}
        self._running = False
        self._load()

    def _load(self) -> None:
        if self.state_path is None:
            return
        state = read_json(self.state_path, {"sources": [], "seen": {}})
        now = self.clock.now()
        for raw in state["sources"]:
            src = CatalogSource.from_dict(raw)
            self._sources[src.name] = src
            self._source_locks[src.name] = threading.Lock()
            self._next_due[src.name] = now + timedelta(seconds=src.poll_interval)
        self._seen = {k: set(v) for k, v in state["seen"].items()}

    def _save(self) -> None:
        if self.state_path is None:
            return
        atomic_write_json(self.state_path, {
            "sources": [s.to_dict() for s in self._sources.values()],
            "seen": {k: sorted(v) for k, v in self._seen.items()},
        })

    @property
    def sources(self) -> list[CatalogSource]:
        with self._lock:
            return list(self._sources.values())

    def seen(self, name: str) -> set[str]:
        with self._lock:
            return set(self._seen.get(name, ()))

    def register_source(self, source: CatalogSource) -> None:
        """Add or replace a source; its first scheduled poll is one interval from now."""
        with self._lock:
            self._sources[source.name] = source
            self._source_locks.setdefault(source.name, threading.Lock())
            self._seen.setdefault(source.name, set())
            self._next_due[source.name] = self.clock.now() + timedelta(seconds=source.poll_interval)
            self._save()
        if self._running:
            self._start_loop(source.name)

    def poll_source(self, name: str) -> list[DataEnvelope]:
        """Poll one source now and publish an envelope per new scene."""
        with self._lock:
            source = self._sources[name]
            lock = self._source_locks[name]
        with lock:
            with self._lock:
                seen = set(self._seen.get(name, ()))
            self.poll_count += 1
            try:
                scenes = poll_catalog(source, seen)
            except CatalogUnreachable as exc:
                logger.warning("catalog %s unreachable: %s", name, exc)
                self.errors.append(str(exc))
                return []
            if not scenes:
                return []
            with self._lock:
                self._seen[name] = seen
                self._save()
            now = self.clock.now()
            envelopes = [scene_to_envelope(s, now) for s in scenes]
            for env in envelopes:
                self.broker.publish(DATA_AVAILABLE, env.to_dict())
            logger.info("catalog %s: %d new scene(s)", name, len(envelopes))
            return envelopes

    def tick(self) -> int:
        """Run every poll that is due; returns the number of polls made."""
        polls = 0
        for name in [s.name for s in self.sources]:
            polls += self._catch_up(name)
        return polls

    def _catch_up(self, name: str) -> int:
        polls = 0
        while True:
            with self._lock:
                source = self._sources.get(name)
                due = self._next_due.get(name)
                if source is None or due is None or due > self.clock.now():
                    return polls
                self._next_due[name] = due + timedelta(seconds=source.poll_interval)
            self.poll_source(name)
            polls += 1

    # ------------------------------------------------------------- loops

    def start(self, idle: float = 0.2) -> None:
        self._idle = idle
        self._running = True
        for name in [s.name for s in self.sources]:
            self._start_loop(name)

    def _start_loop(self, name: str) -> None:
        thread = self._threads.get(name)
        if thread is not None and thread.is_alive():
            return

        def loop():
            while not self._stop.is_set():
                self._catch_up(name)
                self._stop.wait(self._idle)

        thread = threading.Thread(target=loop, name=f"observer-{name}", daemon=True)
        self._threads[name] = thread
        thread.start()

    def stop(self) -> None:
        self._stop.set()
        self._running = False
        for thread in self._threads.values():
            thread.join(timeout=5)
