"""Product ingestion: fetch finished results, hand them to every importer,
and announce the stored product so later jobs can consume it."""

from __future__ import annotations

import errno
import logging
import threading
import uuid
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path
from typing import Any, Callable, Protocol

import httpx

from .broker import DATA_AVAILABLE, PRODUCTS_NEW, Broker, BrokerMessage
from .clients import Unreachable
from .clock import Clock, SystemClock
from .domain import (
    BoundingBox, DataEnvelope, ResourceReference, SourceType, parse_instant,
)
from .transport import FetchFailed, atomic_write_bytes, atomic_write_json, fetch_url, file_url, read_json

logger = logging.getLogger(__name__)

# product envelope ids are derived from (executionId, output) so a replay
# announces the same envelope and the wrapper's id dedupe absorbs it
PRODUCT_NAMESPACE = uuid.UUID("6f1c1d2e-52a4-4c4e-9d0b-2b8f3f0e7a11")


class ImportFailed(RuntimeError):
    def __init__(self, message: str, status: int | None = None):
        self.status = status
        super().__init__(message)


class PermissionDenied(ImportFailed):
    pass


class StorageFull(ImportFailed):
    pass


@dataclass(frozen=True)
class ProductMetadata:
    job_id: str
    execution_id: str
    output: str
    product_collection: str
    sensing_time: datetime
    spatial_footprint: BoundingBox
    media_type: str

    @property
    def stamp(self) -> str:
        return self.sensing_time.strftime("%Y%m%dT%H%M%SZ")


class Importer(Protocol):
    name: str

    def import_product(self, data: bytes, meta: ProductMetadata) -> str:
        """Store ``data``; returns the stored location. Idempotent per (executionId, output)."""


class FilesystemImporter:
    def __init__(self, root: Path, name: str = "filesystem"):
        self.root = Path(root)
        self.name = name

    def path_for(self, meta: ProductMetadata) -> Path:
        return self.root / meta.product_collection / f"{meta.stamp}_{meta.execution_id}.asc"

    def import_product(self, data: bytes, meta: ProductMetadata) -> str:
        path = self.path_for(meta)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            atomic_write_bytes(path, data)
        except OSError as exc:
            if exc.errno in (errno.EACCES, errno.EPERM, errno.EROFS):
                raise PermissionDenied(f"{path}: {exc.strerror}") from exc
            if exc.errno in (errno.ENOSPC, errno.EDQUOT):
                raise StorageFull(f"{path}: {exc.strerror}") from exc
            raise ImportFailed(f"{path}: {exc}") from exc
        return file_url(path)


class HttpImporter:
    """POSTs product bytes to a backend; the response's Location is the stored location."""

    def __init__(self, url: str, name: str = "http", timeout: float = 10.0):
        self.url = url
        self.name = name
        self.timeout = timeout

    def import_product(self, data: bytes, meta: ProductMetadata) -> str:
        headers = {
            "Content-Type": meta.media_type,
            "X-Product-Collection": meta.product_collection,
            "X-Execution-Id": meta.execution_id,
        }
        try:
            resp = httpx.post(self.url, content=data, headers=headers, timeout=self.timeout)
        except httpx.HTTPError as exc:
            raise Unreachable(f"{self.url}: {exc}") from exc
        if not 200 <= resp.status_code < 300:
            raise ImportFailed(f"{self.url} answered {resp.status_code}", resp.status_code)
        return resp.headers.get("location", self.url)


@dataclass
class IngestError:
    execution_id: str
    importer: str
    message: str


class ProductListener:
    """Consumes ``products.new`` and feeds each product to all importers.

    The ledger at ``ledger_path`` holds the stored location per
    (executionId, output, importer) and the set of announced executions, so
    redelivered messages neither re-import nor re-announce.
    """

    def __init__(self, broker: Broker, importers: list[Importer], ledger_path: Path | None = None,
                 clock: Clock | None = None, fetcher: Callable[[str], bytes] = fetch_url,
                 subscribe: bool = True):
        if not importers:
            raise ValueError("at least one importer is required")
        names = [imp.name for imp in importers]
        if len(set(names)) != len(names):
            raise ValueError(f"importer names must be distinct: {names}")
        self.broker = broker
        self.importers = list(importers)
        self.ledger_path = Path(ledger_path) if ledger_path else None
        self.clock = clock or SystemClock()
        self.fetcher = fetcher
        self.errors: list[IngestError] = []
        self.fetches = 0
        self._lock = threading.Lock()
        ledger = read_json(self.ledger_path, None) if self.ledger_path else None
        ledger = ledger or {"stored": {}, "announced": []}
        self._stored: dict[str, str] = dict(ledger["stored"])
        self._announced: set[str] = set(ledger["announced"])
        self.subscription = None
        if subscribe:
            self.subscription = broker.subscribe(PRODUCTS_NEW, "product-listener", self._on_message)

    def _save(self) -> None:
        if self.ledger_path:
            atomic_write_json(self.ledger_path, {"stored": self._stored, "announced": sorted(self._announced)})

    @property
    def announced(self) -> set[str]:
        with self._lock:
            return set(self._announced)

    def _on_message(self, msg: BrokerMessage) -> None:
        try:
            self.on_new_product(msg.payload)
        except FetchFailed as exc:
            logger.error("product %s not retrievable: %s", msg.payload.get("executionId"), exc)

    def on_new_product(self, payload: dict[str, Any]) -> list[str]:
        """Ingest every result of one execution; returns the stored locations."""
        with self._lock:
            execution_id = payload["executionId"]
            results = [ResourceReference.from_dict(r) for r in payload["results"]]
            footprint = BoundingBox.from_extent(payload["areaOfInterest"]["extent"])
            sensing = parse_instant(payload["triggeredAt"])
            pending = [(ref, imp) for ref in results for imp in self.importers
                       if self._key(execution_id, ref.input_identifier, imp) not in self._stored]
            # fetch each needed output once, before any import is attempted
            blobs: dict[str, bytes] = {}
            for ref, _ in pending:
                if ref.input_identifier not in blobs:
                    blobs[ref.input_identifier] = self.fetcher(ref.url)
                    self.fetches += 1
            failed = False
            for ref, imp in pending:
                meta = ProductMetadata(payload["jobId"], execution_id, ref.input_identifier,
                                       payload["productCollection"], sensing, footprint, ref.media_type)
                try:
                    location = imp.import_product(blobs[ref.input_identifier], meta)
                except (ImportFailed, Unreachable) as exc:
                    failed = True
                    self.errors.append(IngestError(execution_id, imp.name, str(exc)))
                    logger.error("importer %s failed for %s: %s", imp.name, execution_id, exc)
                    continue
                self._stored[self._key(execution_id, ref.input_identifier, imp)] = location
                self._save()
            locations = [self._stored[k] for ref in results for imp in self.importers
                         if (k := self._key(execution_id, ref.input_identifier, imp)) in self._stored]
            if failed or execution_id in self._announced:
                return locations
            for ref in results:
                env = DataEnvelope(
                    envelope_id=str(uuid.uuid5(PRODUCT_NAMESPACE, f"{execution_id}/{ref.input_identifier}")),
                    source_type=SourceType.PRODUCT,
                    sensing_time=sensing,
                    spatial_footprint=footprint,
                    access_url=self._stored[self._key(execution_id, ref.input_identifier, self.importers[0])],
                    media_type=ref.media_type,
                    discovered=self.clock.now(),
                    product_collection=payload["productCollection"],
                )
                self.broker.publish(DATA_AVAILABLE, env.to_dict())
            self._announced.add(execution_id)
            self._save()
            return locations

    @staticmethod
    def _key(execution_id: str, output: str, imp: Importer) -> str:
        return f"{execution_id}/{output}/{imp.name}"
