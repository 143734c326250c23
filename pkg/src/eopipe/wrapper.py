"""Envelope index and constraint-based resolution of subsets to references."""

from __future__ import annotations

import json
import logging
import math
import threading
from array import array
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from . import kernels
from .broker import DATA_AVAILABLE, Broker, BrokerMessage
from .domain import (
    BoundingBox, DataEnvelope, FieldError, ResourceReference, SourceType, SubsetDefinition,
    TimeWindow, ValidationError, bbox_intersects, epoch_ms, window_contains,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ResourceQuery:
    subset: SubsetDefinition
    window: TimeWindow
    area_of_interest: BoundingBox
    required_processing_level: str | None = None

    def to_dict(self) -> dict[str, Any]:
        doc = {
            "subset": self.subset.to_dict(),
            "window": self.window.to_dict(),
            "areaOfInterest": {"extent": self.area_of_interest.extent},
        }
        if self.required_processing_level is not None:
            doc["requiredProcessingLevel"] = self.required_processing_level
        return doc

    @classmethod
    def from_dict(cls, raw: Any) -> "ResourceQuery":
        if not isinstance(raw, dict):
            raise ValidationError([FieldError("BadFormat", "", "expected a JSON object")])
        errors = [FieldError("BadFormat", k, "unknown field") for k in raw
                  if k not in ("subset", "window", "areaOfInterest", "requiredProcessingLevel")]
        subset = window = box = None
        try:
            subset = SubsetDefinition.from_dict(raw.get("subset"), "subset.")
        except ValidationError as exc:
            errors += exc.errors
        try:
            window = TimeWindow.from_dict(raw["window"])
        except (KeyError, TypeError, ValueError) as exc:
            errors.append(FieldError("BadFormat", "window", str(exc)))
        try:
            box = BoundingBox.from_extent((raw.get("areaOfInterest") or {}).get("extent"))
        except (TypeError, ValueError, AttributeError) as exc:
            errors.append(FieldError("BadFormat", "areaOfInterest", str(exc)))
        level = raw.get("requiredProcessingLevel")
        if level is not None and not isinstance(level, str):
            errors.append(FieldError("BadFormat", "requiredProcessingLevel", "expected string"))
        if errors:
            raise ValidationError(errors)
        return cls(subset, window, box, level)


def match_envelope(subset: SubsetDefinition, q: ResourceQuery, env: DataEnvelope) -> bool:
    """True iff ``env`` satisfies every constraint of ``subset`` under query ``q``.

    Cloud coverage is an inclusive upper bound; an envelope without a cloud
    value never satisfies a cloud limit.
    """
    if env.source_type is not subset.source_type:
        return False
    if subset.source_type is SourceType.COPERNICUS:
        if env.satellite != subset.satellite:
            return False
        limit = subset.maximum_cloud_coverage
        if limit is not None and (env.cloud_coverage is None or env.cloud_coverage > limit):
            return False
        level = q.required_processing_level
        if level is not None and env.processing_level != level:
            return False
    elif env.product_collection != subset.product_collection:
        return False
    return window_contains(q.window, env.sensing_time) and bbox_intersects(q.area_of_interest, env.spatial_footprint)


def to_reference(subset: SubsetDefinition, env: DataEnvelope) -> ResourceReference:
    return ResourceReference(subset.identifier, env.access_url, env.media_type, env.sensing_time)


class _ReadWriteLock:
    def __init__(self):
        self._cond = threading.Condition()
        self._readers = 0
        self._writing = False

    def read(self):
        return _Guard(self._acquire_read, self._release_read)

    def write(self):
        return _Guard(self._acquire_write, self._release_write)

    def _acquire_read(self):
        with self._cond:
            while self._writing:
                self._cond.wait()
            self._readers += 1

    def _release_read(self):
        with self._cond:
            self._readers -= 1
            if not self._readers:
                self._cond.notify_all()

    def _acquire_write(self):
        with self._cond:
            while self._writing or self._readers:
                self._cond.wait()
            self._writing = True

    def _release_write(self):
        with self._cond:
            self._writing = False
            self._cond.notify_all()


class _Guard:
    def __init__(self, enter, leave):
        self._enter, self._leave = enter, leave

    def __enter__(self):
        self._enter()

    def __exit__(self, *exc):
        self._leave()


class _Codes:
    """Interns strings to small ints so the kernel compares integers."""

    def __init__(self):
        self._codes: dict[str, int] = {}

    def intern(self, value: str | None) -> int:
        if value is None:
            return -1
        return self._codes.setdefault(value, len(self._codes))

    def lookup(self, value: str | None) -> int:
        # -2 matches no stored row (stored rows hold >= -1)
        return self._codes.get(value, -2) if value is not None else -1


_SOURCE_CODE = {SourceType.COPERNICUS: 0, SourceType.PRODUCT: 1}


class EnvelopeIndex:
    """Envelopes keyed by id, stored column-wise for the matching kernel."""

    def __init__(self):
        self._lock = _ReadWriteLock()
        self._envelopes: list[DataEnvelope] = []
        self._by_id: dict[str, int] = {}
        self._satellites, self._collections, self._levels = _Codes(), _Codes(), _Codes()
        self._source = array("i")
        self._satellite = array("i")
        self._collection = array("i")
        self._level = array("i")
        self._time = array("q")
        self._min_lon, self._min_lat = array("d"), array("d")
        self._max_lon, self._max_lat = array("d"), array("d")
        self._cloud = array("d")

    def __len__(self) -> int:
        return len(self._envelopes)

    def __contains__(self, envelope_id: str) -> bool:
        return envelope_id in self._by_id

    def add(self, env: DataEnvelope) -> bool:
        """Index ``env``; returns False (no-op) if its id is already present."""
        with self._lock.write():
            if env.envelope_id in self._by_id:
                return False
            self._by_id[env.envelope_id] = len(self._envelopes)
            self._envelopes.append(env)
            box = env.spatial_footprint
            self._source.append(_SOURCE_CODE[env.source_type])
            self._satellite.append(self._satellites.intern(env.satellite))
            self._collection.append(self._collections.intern(env.product_collection))
            self._level.append(self._levels.intern(env.processing_level))
            self._time.append(epoch_ms(env.sensing_time))
            self._min_lon.append(box.min_lon)
            self._min_lat.append(box.min_lat)
            self._max_lon.append(box.max_lon)
            self._max_lat.append(box.max_lat)
            self._cloud.append(math.nan if env.cloud_coverage is None else env.cloud_coverage)
            return True

    def envelopes(self) -> list[DataEnvelope]:
        with self._lock.read():
            return list(self._envelopes)

    def get(self, envelope_id: str) -> DataEnvelope | None:
        with self._lock.read():
            i = self._by_id.get(envelope_id)
            return None if i is None else self._envelopes[i]

    def match(self, q: ResourceQuery) -> list[DataEnvelope]:
        s, box = q.subset, q.area_of_interest
        copernicus = s.source_type is SourceType.COPERNICUS
        with self._lock.read():
            rows = kernels.match_rows(
                len(self._envelopes),
                self._source, self._satellite, self._collection, self._level, self._time,
                self._min_lon, self._min_lat, self._max_lon, self._max_lat, self._cloud,
                _SOURCE_CODE[s.source_type],
                copernicus,
                self._satellites.lookup(s.satellite) if copernicus else -1,
                math.nan if s.maximum_cloud_coverage is None else s.maximum_cloud_coverage,
                self._levels.lookup(q.required_processing_level),
                self._collections.lookup(s.product_collection) if not copernicus else -1,
                epoch_ms(q.window.start), epoch_ms(q.window.end),
                box.min_lon, box.min_lat, box.max_lon, box.max_lat,
            )
            return [self._envelopes[i] for i in rows]


def sort_newest_first(envelopes: list[DataEnvelope]) -> list[DataEnvelope]:
    return sorted(envelopes, key=lambda e: (-epoch_ms(e.sensing_time), e.envelope_id))


class DataWrapper:
    """Index service: consumes data-available events and answers resource queries.

    When ``log_path`` is set, every newly indexed envelope is appended there
    and replayed on construction.
    """

    def __init__(self, broker: Broker | None = None, log_path: Path | None = None):
        self.index = EnvelopeIndex()
        self.log_path = Path(log_path) if log_path else None
        self._log_lock = threading.Lock()
        self.rejected = 0
        if self.log_path and self.log_path.exists():
            self._replay()
        self.subscription = None
        if broker is not None:
            self.subscription = broker.subscribe(DATA_AVAILABLE, "data-wrapper", self._on_message)

    def _replay(self) -> None:
        for line in self.log_path.read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            try:
                self.index.add(DataEnvelope.from_dict(json.loads(line)))
            except (ValueError, ValidationError):
                logger.warning("skipping corrupt envelope log line")

    def _on_message(self, msg: BrokerMessage) -> None:
        try:
            env = DataEnvelope.from_dict(msg.payload)
        except ValidationError as exc:
            self.rejected += 1
            logger.warning("rejected envelope %s: %s", msg.message_id, exc)
            return
        self.index_envelope(env)

    def index_envelope(self, env: DataEnvelope) -> None:
        if self.index.add(env) and self.log_path is not None:
            with self._log_lock:
                self.log_path.parent.mkdir(parents=True, exist_ok=True)
                with self.log_path.open("a", encoding="utf-8") as fh:
                    fh.write(json.dumps(env.to_dict(), sort_keys=True) + "\n")
                    fh.flush()

    def query_resources(self, q: ResourceQuery) -> list[ResourceReference]:
        return [to_reference(q.subset, e) for e in sort_newest_first(self.index.match(q))]
