"""Shared domain types, their JSON forms, and spatial/temporal predicates.

All types are frozen dataclasses. ``from_dict`` constructors validate
strictly: unknown keys are rejected and every violation is collected
before raising :class:`ValidationError`.
"""

from __future__ import annotations

import math
import re
import uuid
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from enum import Enum
from typing import Any, Iterable
from urllib.parse import urlparse

from .cron import CronError, CronPattern

MISSING_FIELD = "MissingField"
BAD_FORMAT = "BadFormat"
INVARIANT_VIOLATION = "InvariantViolation"


@dataclass(frozen=True)
class FieldError:
    kind: str
    field: str
    message: str

    def to_dict(self) -> dict[str, str]:
        return {"kind": self.kind, "field": self.field, "message": self.message}


class ValidationError(ValueError):
    """One or more field-level problems in a document."""

    def __init__(self, errors: Iterable[FieldError]):
        self.errors = list(errors)
        super().__init__("; ".join(f"{e.kind}({e.field}): {e.message}" for e in self.errors))

    @property
    def fields(self) -> list[str]:
        return [e.field for e in self.errors]


class DurationError(ValueError):
    pass


class BadDurationFormat(DurationError):
    pass


class ZeroDuration(DurationError):
    pass


# --------------------------------------------------------------------------- time

_INSTANT_RE = re.compile(
    r"^(\d{4})-(\d{2})-(\d{2})T(\d{2}):(\d{2}):(\d{2})(?:\.(\d+))?(Z|[+-]\d{2}:\d{2})$"
)


def parse_instant(text: str) -> datetime:
    """RFC 3339 timestamp with explicit offset -> aware UTC datetime, truncated to ms."""
    if not isinstance(text, str):
        raise ValueError(f"expected timestamp string, got {type(text).__name__}")
    m = _INSTANT_RE.match(text)
    if not m:
        raise ValueError(f"not an RFC 3339 timestamp: {text!r}")
    frac = (m.group(7) or "").ljust(3, "0")[:3]
    offset = m.group(8)
    tz = timezone.utc
    if offset != "Z":
        sign = 1 if offset[0] == "+" else -1
        tz = timezone(sign * timedelta(hours=int(offset[1:3]), minutes=int(offset[4:6])))
    t = datetime(*(int(m.group(i)) for i in range(1, 7)), int(frac) * 1000, tzinfo=tz)
    return t.astimezone(timezone.utc)


def format_instant(t: datetime) -> str:
    t = t.astimezone(timezone.utc)
    return t.strftime("%Y-%m-%dT%H:%M:%S.") + f"{t.microsecond // 1000:03d}Z"


def truncate_ms(t: datetime) -> datetime:
    return t.astimezone(timezone.utc).replace(microsecond=t.microsecond // 1000 * 1000)


def epoch_ms(t: datetime) -> int:
    return int((t - _EPOCH) // timedelta(milliseconds=1))


_EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)

# ------------------------------------------------------------------- durations

_DURATION_RE = re.compile(
    r"^P(?:(\d+)Y)?(?:(\d+)M)?(?:(\d+)W)?(?:(\d+)D)?(?:T(?:(\d+)H)?(?:(\d+)M)?(?:(\d+)S)?)?$"
)
# months and years approximated: 30 d and 365 d
_UNIT_SECONDS = (365 * 86400, 30 * 86400, 7 * 86400, 86400, 3600, 60, 1)


def parse_iso_duration(text: str) -> int:
    """ISO-8601 duration -> whole seconds (month = 30 days, year = 365 days)."""
    m = _DURATION_RE.match(text) if isinstance(text, str) else None
    if not m or not any(m.groups()) or text.endswith("T"):
        raise BadDurationFormat(f"not an ISO-8601 duration: {text!r}")
    seconds = sum(int(g) * unit for g, unit in zip(m.groups(), _UNIT_SECONDS) if g)
    if seconds == 0:
        raise ZeroDuration(f"duration {text!r} is zero")
    return seconds


def format_duration(seconds: int) -> str:
    """Canonical day/hour/minute/second form, e.g. 129600 -> ``P1DT12H``."""
    if seconds <= 0:
        raise ZeroDuration("duration must be positive")
    days, rest = divmod(seconds, 86400)
    hours, rest = divmod(rest, 3600)
    minutes, secs = divmod(rest, 60)
    out = "P" + (f"{days}D" if days else "")
    clock = "".join(f"{v}{u}" for v, u in ((hours, "H"), (minutes, "M"), (secs, "S")) if v)
    return out + ("T" + clock if clock else "")


# --------------------------------------------------------------------- geometry


@dataclass(frozen=True)
class BoundingBox:
    min_lon: float
    min_lat: float
    max_lon: float
    max_lat: float

    def __post_init__(self) -> None:
        problems = bbox_problems(self.min_lon, self.min_lat, self.max_lon, self.max_lat)
        if problems:
            raise ValueError("; ".join(problems))

    @classmethod
    def from_extent(cls, extent: Any) -> "BoundingBox":
        if (
            not isinstance(extent, (list, tuple))
            or len(extent) != 4
            or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in extent)
        ):
            raise TypeError("extent must be [minLon, minLat, maxLon, maxLat]")
        return cls(*(float(v) for v in extent))

    @property
    def extent(self) -> list[float]:
        return [self.min_lon, self.min_lat, self.max_lon, self.max_lat]


def bbox_problems(min_lon: float, min_lat: float, max_lon: float, max_lat: float) -> list[str]:
    values = (min_lon, min_lat, max_lon, max_lat)
    if not all(math.isfinite(v) for v in values):
        return ["coordinates must be finite"]
    problems = []
    if not (-180 <= min_lon <= 180 and -180 <= max_lon <= 180):
        problems.append("longitudes must lie in [-180, 180]")
    if not (-90 <= min_lat <= 90 and -90 <= max_lat <= 90):
        problems.append("latitudes must lie in [-90, 90]")
    if min_lon > max_lon:
        problems.append("minLon > maxLon")
    if min_lat > max_lat:
        problems.append("minLat > maxLat")
    return problems


@dataclass(frozen=True)
class TimeWindow:
    start: datetime
    end: datetime

    def __post_init__(self) -> None:
        if self.start > self.end:
            raise ValueError("window start after end")

    def to_dict(self) -> dict[str, str]:
        return {"start": format_instant(self.start), "end": format_instant(self.end)}

    @classmethod
    def from_dict(cls, raw: dict) -> "TimeWindow":
        return cls(parse_instant(raw["start"]), parse_instant(raw["end"]))


def bbox_intersects(a: BoundingBox, b: BoundingBox) -> bool:
    """Closed-rectangle intersection; touching edges or corners count."""
    return (
        a.min_lon <= b.max_lon
        and b.min_lon <= a.max_lon
        and a.min_lat <= b.max_lat
        and b.min_lat <= a.max_lat
    )


def window_contains(w: TimeWindow, t: datetime) -> bool:
    return w.start <= t <= w.end


# ------------------------------------------------------------ document helpers


class _Collector:
    """Accumulates FieldErrors while picking values out of a raw document."""

    def __init__(self, prefix: str = ""):
        self.prefix = prefix
        self.errors: list[FieldError] = []

    def path(self, name: str) -> str:
        return f"{self.prefix}{name}"

    def add(self, kind: str, name: str, message: str) -> None:
        self.errors.append(FieldError(kind, self.path(name), message))

    def reject_unknown(self, raw: dict, allowed: Iterable[str]) -> None:
        for key in raw:
            if key not in allowed:
                self.add(BAD_FORMAT, key, "unknown field")

    def require(self, raw: dict, name: str, kind: type | tuple = str, optional: bool = False):
        if name not in raw or raw[name] is None:
            if not optional:
                self.add(MISSING_FIELD, name, "required field missing")
            return None
        value = raw[name]
        if kind is float:
            kind = (int, float)
        if not isinstance(value, kind) or isinstance(value, bool):
            self.add(BAD_FORMAT, name, f"expected {_kind_name(kind)}")
            return None
        return value

    def instant(self, raw: dict, name: str, optional: bool = False) -> datetime | None:
        text = self.require(raw, name, str, optional)
        if text is None:
            return None
        try:
            return parse_instant(text)
        except ValueError as exc:
            self.add(BAD_FORMAT, name, str(exc))
            return None

    def uuid(self, raw: dict, name: str, optional: bool = False) -> str | None:
        text = self.require(raw, name, str, optional)
        if text is None:
            return None
        try:
            return str(uuid.UUID(text))
        except ValueError:
            self.add(BAD_FORMAT, name, "not a UUID")
            return None

    def bbox(self, raw: dict, name: str, extent_key: str | None = "extent") -> BoundingBox | None:
        container = self.require(raw, name, dict if extent_key else list)
        if container is None:
            return None
        if extent_key:
            self.reject_unknown_nested(container, name, (extent_key,))
            extent = container.get(extent_key)
            fmt_field = f"{name}.{extent_key}"
        else:
            extent, fmt_field = container, name
        try:
            return BoundingBox.from_extent(extent)
        except TypeError as exc:
            self.add(BAD_FORMAT if extent is not None else MISSING_FIELD, fmt_field, str(exc))
        except ValueError as exc:
            self.add(INVARIANT_VIOLATION, name, str(exc))
        return None

    def reject_unknown_nested(self, raw: dict, name: str, allowed: Iterable[str]) -> None:
        for key in raw:
            if key not in allowed:
                self.add(BAD_FORMAT, f"{name}.{key}", "unknown field")

    def raise_if_any(self) -> None:
        if self.errors:
            raise ValidationError(self.errors)


def _kind_name(kind) -> str:
    if isinstance(kind, tuple):
        return "number" if int in kind else "/".join(k.__name__ for k in kind)
    return {str: "string", dict: "object", list: "array", int: "integer"}.get(kind, kind.__name__)


def _is_url(text: str) -> bool:
    parsed = urlparse(text)
    if parsed.scheme == "file":
        return bool(parsed.path)
    return parsed.scheme in ("http", "https") and bool(parsed.netloc)


def _drop_none(d: dict) -> dict:
    return {k: v for k, v in d.items() if v is not None}


# --------------------------------------------------------------------- subsets


class SourceType(str, Enum):
    COPERNICUS = "CopernicusSubsetDefinition"
    PRODUCT = "ProductSubsetDefinition"


_SUBSET_FIELDS = {
    SourceType.COPERNICUS: ("sourceType", "identifier", "satellite", "maximumCloudCoverage"),
    SourceType.PRODUCT: ("sourceType", "identifier", "productCollection"),
}


@dataclass(frozen=True)
class SubsetDefinition:
    source_type: SourceType
    identifier: str
    satellite: str | None = None
    maximum_cloud_coverage: float | None = None
    product_collection: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return _drop_none(
            {
                "sourceType": self.source_type.value,
                "identifier": self.identifier,
                "satellite": self.satellite,
                "maximumCloudCoverage": self.maximum_cloud_coverage,
                "productCollection": self.product_collection,
            }
        )

    @classmethod
    def from_dict(cls, raw: Any, prefix: str = "") -> "SubsetDefinition":
        c = _Collector(prefix)
        subset = _subset_from(c, raw)
        c.raise_if_any()
        return subset


def _subset_from(c: _Collector, raw: Any) -> SubsetDefinition | None:
    if not isinstance(raw, dict):
        c.errors.append(FieldError(BAD_FORMAT, c.prefix.rstrip("."), "expected object"))
        return None
    n_before = len(c.errors)
    kind_text = c.require(raw, "sourceType")
    source_type = None
    if kind_text is not None:
        try:
            source_type = SourceType(kind_text)
        except ValueError:
            c.add(BAD_FORMAT, "sourceType", f"unknown source type {kind_text!r}")
    identifier = c.require(raw, "identifier")
    if identifier == "":
        c.add(INVARIANT_VIOLATION, "identifier", "must be non-empty")
    if source_type is None:
        return None
    c.reject_unknown(raw, _SUBSET_FIELDS[source_type])
    satellite = cloud = collection = None
    if source_type is SourceType.COPERNICUS:
        satellite = c.require(raw, "satellite")
        cloud = c.require(raw, "maximumCloudCoverage", float, optional=True)
        if cloud is not None:
            cloud = float(cloud)
            if not 0.0 <= cloud <= 100.0:
                c.add(INVARIANT_VIOLATION, "maximumCloudCoverage", "must lie in [0, 100]")
    else:
        collection = c.require(raw, "productCollection")
        if collection == "":
            c.add(INVARIANT_VIOLATION, "productCollection", "must be non-empty")
    if len(c.errors) > n_before:
        return None
    return SubsetDefinition(source_type, identifier, satellite, cloud, collection)


# ---------------------------------------------------------------------- jobs


class JobStatus(str, Enum):
    WAITING = "waiting"
    RUNNING = "running"
    FAILED = "failed"


_JOB_FIELDS = (
    "id", "name", "description", "created", "lastFinishedExecution", "status",
    "execution", "temporalCoverage", "areaOfInterest", "processingTool",
    "productCollection", "inputs",
)


@dataclass(frozen=True)
class JobDefinition:
    id: str
    name: str
    created: datetime
    execution_pattern: str
    temporal_coverage_duration: str
    area_of_interest: BoundingBox
    processing_tool: str
    product_collection: str
    inputs: tuple[SubsetDefinition, ...]
    description: str = ""
    status: JobStatus = JobStatus.WAITING
    last_finished_execution: datetime | None = None

    @property
    def coverage_seconds(self) -> int:
        return parse_iso_duration(self.temporal_coverage_duration)

    @property
    def cron(self) -> CronPattern:
        return CronPattern.parse(self.execution_pattern)

    def to_dict(self) -> dict[str, Any]:
        doc: dict[str, Any] = {
            "id": self.id,
            "name": self.name,
            "description": self.description,
            "created": format_instant(self.created),
        }
        if self.last_finished_execution is not None:
            doc["lastFinishedExecution"] = format_instant(self.last_finished_execution)
        doc.update(
            {
                "status": self.status.value,
                "execution": {"pattern": self.execution_pattern},
                "temporalCoverage": {"duration": self.temporal_coverage_duration},
                "areaOfInterest": {"extent": self.area_of_interest.extent},
                "processingTool": self.processing_tool,
                "productCollection": self.product_collection,
                "inputs": [s.to_dict() for s in self.inputs],
            }
        )
        return doc


def validate_job_definition(raw: Any) -> JobDefinition:
    """Validate a parsed job document; raises ValidationError listing every problem."""
    c = _Collector()
    if not isinstance(raw, dict):
        raise ValidationError([FieldError(BAD_FORMAT, "", "expected a JSON object")])
    c.reject_unknown(raw, _JOB_FIELDS)

    job_id = c.uuid(raw, "id")
    name = c.require(raw, "name")
    description = c.require(raw, "description", optional=True) or ""
    created = c.instant(raw, "created")
    last_finished = c.instant(raw, "lastFinishedExecution", optional=True)

    status = JobStatus.WAITING
    status_text = c.require(raw, "status", optional=True)
    if status_text is not None:
        try:
            status = JobStatus(status_text)
        except ValueError:
            c.add(BAD_FORMAT, "status", f"unknown status {status_text!r}")

    pattern = None
    execution = c.require(raw, "execution", dict)
    if execution is not None:
        c.reject_unknown_nested(execution, "execution", ("pattern",))
        sub = _Collector("execution.")
        pattern = sub.require(execution, "pattern")
        c.errors.extend(sub.errors)
        if pattern is not None:
            try:
                pattern = CronPattern.parse(pattern).text
            except CronError as exc:
                c.add(BAD_FORMAT, "execution.pattern", str(exc))
                pattern = None

    duration = None
    coverage = c.require(raw, "temporalCoverage", dict)
    if coverage is not None:
        c.reject_unknown_nested(coverage, "temporalCoverage", ("duration",))
        sub = _Collector("temporalCoverage.")
        duration = sub.require(coverage, "duration")
        c.errors.extend(sub.errors)
        if duration is not None:
            try:
                parse_iso_duration(duration)
            except ZeroDuration as exc:
                c.add(INVARIANT_VIOLATION, "temporalCoverage.duration", str(exc))
                duration = None
            except BadDurationFormat as exc:
                c.add(BAD_FORMAT, "temporalCoverage.duration", str(exc))
                duration = None

    aoi = c.bbox(raw, "areaOfInterest")
    tool = c.require(raw, "processingTool")
    collection = c.require(raw, "productCollection")

    inputs: list[SubsetDefinition] = []
    raw_inputs = c.require(raw, "inputs", list)
    if raw_inputs is not None:
        if not raw_inputs:
            c.add(INVARIANT_VIOLATION, "inputs", "at least one input required")
        seen: set[str] = set()
        for i, item in enumerate(raw_inputs):
            sub = _Collector(f"inputs[{i}].")
            subset = _subset_from(sub, item)
            c.errors.extend(sub.errors)
            if subset is None:
                continue
            if subset.identifier in seen:
                c.add(INVARIANT_VIOLATION, f"inputs[{i}].identifier", f"duplicate identifier {subset.identifier!r}")
            seen.add(subset.identifier)
            inputs.append(subset)

    c.raise_if_any()
    return JobDefinition(
        id=job_id,
        name=name,
        description=description,
        created=created,
        last_finished_execution=last_finished,
        status=status,
        execution_pattern=pattern,
        temporal_coverage_duration=duration,
        area_of_interest=aoi,
        processing_tool=tool,
        product_collection=collection,
        inputs=tuple(inputs),
    )


# ------------------------------------------------------------------ envelopes


_ENVELOPE_FIELDS = (
    "envelopeId", "sourceType", "satellite", "productCollection", "sensingTime",
    "spatialFootprint", "cloudCoverage", "processingLevel", "accessUrl", "mediaType",
    "discovered",
)


@dataclass(frozen=True)
class DataEnvelope:
    envelope_id: str
    source_type: SourceType
    sensing_time: datetime
    spatial_footprint: BoundingBox
    access_url: str
    media_type: str
    discovered: datetime
    satellite: str | None = None
    product_collection: str | None = None
    cloud_coverage: float | None = None
    processing_level: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return _drop_none(
            {
                "envelopeId": self.envelope_id,
                "sourceType": self.source_type.value,
                "satellite": self.satellite,
                "productCollection": self.product_collection,
                "sensingTime": format_instant(self.sensing_time),
                "spatialFootprint": {"extent": self.spatial_footprint.extent},
                "cloudCoverage": self.cloud_coverage,
                "processingLevel": self.processing_level,
                "accessUrl": self.access_url,
                "mediaType": self.media_type,
                "discovered": format_instant(self.discovered),
            }
        )

    @classmethod
    def from_dict(cls, raw: Any) -> "DataEnvelope":
        if not isinstance(raw, dict):
            raise ValidationError([FieldError(BAD_FORMAT, "", "expected a JSON object")])
        c = _Collector()
        c.reject_unknown(raw, _ENVELOPE_FIELDS)
        envelope_id = c.uuid(raw, "envelopeId")
        source_type = None
        kind_text = c.require(raw, "sourceType")
        if kind_text is not None:
            try:
                source_type = SourceType(kind_text)
            except ValueError:
                c.add(BAD_FORMAT, "sourceType", f"unknown source type {kind_text!r}")
        satellite = c.require(raw, "satellite", optional=True)
        collection = c.require(raw, "productCollection", optional=True)
        sensing = c.instant(raw, "sensingTime")
        footprint = c.bbox(raw, "spatialFootprint")
        cloud = c.require(raw, "cloudCoverage", float, optional=True)
        if cloud is not None:
            cloud = float(cloud)
            if not 0.0 <= cloud <= 100.0:
                c.add(INVARIANT_VIOLATION, "cloudCoverage", "must lie in [0, 100]")
        level = c.require(raw, "processingLevel", optional=True)
        url = c.require(raw, "accessUrl")
        if url is not None and not _is_url(url):
            c.add(INVARIANT_VIOLATION, "accessUrl", "not a URL")
        media_type = c.require(raw, "mediaType")
        discovered = c.instant(raw, "discovered")
        c.raise_if_any()
        return cls(
            envelope_id=envelope_id,
            source_type=source_type,
            sensing_time=sensing,
            spatial_footprint=footprint,
            access_url=url,
            media_type=media_type,
            discovered=discovered,
            satellite=satellite,
            product_collection=collection,
            cloud_coverage=cloud,
            processing_level=level,
        )


@dataclass(frozen=True)
class ResourceReference:
    input_identifier: str
    url: str
    media_type: str
    sensing_time: datetime

    def to_dict(self) -> dict[str, str]:
        return {
            "inputIdentifier": self.input_identifier,
            "url": self.url,
            "mediaType": self.media_type,
            "sensingTime": format_instant(self.sensing_time),
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "ResourceReference":
        c = _Collector()
        if not isinstance(raw, dict):
            raise ValidationError([FieldError(BAD_FORMAT, "", "expected a JSON object")])
        c.reject_unknown(raw, ("inputIdentifier", "url", "mediaType", "sensingTime"))
        ident = c.require(raw, "inputIdentifier")
        url = c.require(raw, "url")
        if url is not None and not _is_url(url):
            c.add(INVARIANT_VIOLATION, "url", "not a URL")
        media_type = c.require(raw, "mediaType")
        sensing = c.instant(raw, "sensingTime")
        c.raise_if_any()
        return cls(ident, url, media_type, sensing)


def new_id() -> str:
    return str(uuid.uuid4())


__all__ = [
    "BoundingBox", "DataEnvelope", "FieldError", "JobDefinition", "JobStatus",
    "ResourceReference", "SourceType", "SubsetDefinition", "TimeWindow", "ValidationError",
    "BadDurationFormat", "ZeroDuration", "bbox_intersects", "epoch_ms", "format_duration",
    "format_instant", "new_id", "parse_instant", "parse_iso_duration", "truncate_ms",
    "validate_job_definition", "window_contains",
]
