"""Deterministic desk-scale scenario: scene rasters, a scene catalog and two jobs.

Trigger time is :data:`TRIGGER` (the first monthly fire after the sample
job's creation). Of the ten catalog scenes exactly three satisfy the sample
job's constraints at that instant; each of the other seven fails one rule.
"""

from __future__ import annotations

import hashlib
import json
import random
from array import array
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Any

from .domain import SourceType, format_instant
from .raster import Raster, raster_write
from .transport import file_url

TRIGGER = datetime(2020, 8, 1, tzinfo=timezone.utc)
AOI = [6.931, 50.985, 7.607, 51.319]
NODATA = -9999

SAMPLE_JOB: dict[str, Any] = {
    "id": "851956cb-0975-407c-bada-a08247f13c5c",
    "name": "Land cover classification catchment area",
    "description": "Monthly executed land cover classification.",
    "created": "2020-07-07T12:03:26.006Z",
    "lastFinishedExecution": "2020-07-07T14:00:00.000Z",
    "status": "waiting",
    "execution": {"pattern": "0 0 1 * *"},
    "temporalCoverage": {"duration": "P14D"},
    "areaOfInterest": {"extent": AOI},
    "processingTool": "de.hsbo.wacodis.land_cover_classification",
    "productCollection": "land-cover-classification",
    "inputs": [
        {
            "sourceType": "CopernicusSubsetDefinition",
            "identifier": "opticalImage",
            "maximumCloudCoverage": 20.0,
            "satellite": "sentinel-2",
        }
    ],
}

STAGE2_JOB: dict[str, Any] = {
    "id": "4d3f5a0e-8a8e-4a53-9a3c-2f1f5b7f6c01",
    "name": "Water mask catchment area",
    "description": "Water mask derived from the land cover product.",
    "created": "2020-07-08T09:00:00.000Z",
    "execution": {"pattern": "0 6 1 * *"},
    "temporalCoverage": {"duration": "P14D"},
    "areaOfInterest": {"extent": AOI},
    "processingTool": "demo.water_mask",
    "productCollection": "water-mask",
    "inputs": [
        {
            "sourceType": "ProductSubsetDefinition",
            "identifier": "landCover",
            "productCollection": "land-cover-classification",
        }
    ],
}

# (scene id, satellite, days before trigger, cloud %, footprint, matches)
_INSIDE = [7.0, 51.0, 7.5, 51.3]
_SCENES = [
    ("S2A_20200720", "sentinel-2", 12, 5.0, _INSIDE, True),
    ("S2B_20200725", "sentinel-2", 7, 20.0, [6.5, 50.8, 6.931, 51.0], True),  # cloud and edge on the limit
    ("S2A_20200730", "sentinel-2", 2, 12.5, _INSIDE, True),
    ("S2B_20200728", "sentinel-2", 4, 20.5, _INSIDE, False),  # cloud just over
    ("S2A_20200726", "sentinel-2", 6, 64.0, _INSIDE, False),
    ("S1A_20200729", "sentinel-1", 3, 0.0, _INSIDE, False),
    ("S2B_20200710", "sentinel-2", 22, 3.0, _INSIDE, False),  # before the window
    ("S2A_20200803", "sentinel-2", -2, 3.0, _INSIDE, False),  # after the trigger
    ("S2A_20200727_BER", "sentinel-2", 5, 1.0, [13.1, 52.3, 13.8, 52.7], False),
    ("S2B_20200722_SEA", "sentinel-2", 10, 9.0, [4.0, 53.5, 4.6, 53.9], False),
]
MATCHING_SCENES = tuple(s[0] for s in _SCENES if s[5])
NEWEST_MATCH = "S2A_20200730"


def scene_raster(scene_id: str, ncols: int = 8, nrows: int = 8) -> Raster:
    """Vegetation-index-like grid, a pure function of ``scene_id``."""
    rng = random.Random(scene_id)
    values = array("d")
    for _ in range(ncols * nrows):
        if rng.random() < 0.05:
            values.append(NODATA)
        else:
            values.append(round(rng.uniform(-0.3, 0.9), 3))
    return Raster(ncols, nrows, AOI[0], AOI[1], 0.05, NODATA, values)


@dataclass(frozen=True)
class DemoScenario:
    root: Path
    catalog: Path
    job: Path
    stage2_job: Path
    trigger: datetime = TRIGGER


def write_demo(root: Path) -> DemoScenario:
    """Write rasters, the catalog and both job documents below ``root``."""
    root = Path(root)
    rasters = root / "scenes"
    rasters.mkdir(parents=True, exist_ok=True)
    lines = []
    for scene_id, satellite, days, cloud, footprint, _ in _SCENES:
        path = rasters / f"{scene_id}.asc"
        path.write_bytes(raster_write(scene_raster(scene_id)))
        lines.append(json.dumps({
            "sceneId": scene_id,
            "satellite": satellite,
            "sensingTime": format_instant(TRIGGER - timedelta(days=days) + timedelta(hours=10, minutes=30)
                                          if days > 0 else TRIGGER - timedelta(days=days)),
            "cloudCoverage": cloud,
            "processingLevel": "Level-2A",
            "footprint": footprint,
            "accessUrl": file_url(path),
            "mediaType": "text/x-ascii-grid",
        }, sort_keys=True))
    catalog = root / "catalog.jsonl"
    catalog.write_text("\n".join(lines) + "\n", encoding="utf-8")
    job = root / "sample_job.json"
    job.write_text(json.dumps(SAMPLE_JOB, indent=2) + "\n", encoding="utf-8")
    stage2 = root / "stage2.json"
    stage2.write_text(json.dumps(STAGE2_JOB, indent=2) + "\n", encoding="utf-8")
    return DemoScenario(root, catalog, job, stage2)


@dataclass
class DemoResult:
    scenario: DemoScenario
    products: dict[str, str]  # path relative to the import root -> sha256
    executions: list[dict]
    envelopes: int  # everything the data wrapper indexed
    product_envelopes: list[dict]
    request_bodies: list[bytes]  # every execute request the runner received
    data_dir: Path


def run_demo(root: Path, stage2: bool = False, redeliver: int = 1, timeout: float = 10.0) -> DemoResult:
    """Scripted run on a simulated clock: load catalog, submit, trigger, wait.

    With ``stage2`` the water-mask job is submitted and triggered after the
    land cover product has been indexed.
    """
    from .config import SystemConfig
    from .observer import CatalogSource
    from .system import System

    root = Path(root)
    scenario = write_demo(root / "inputs")
    config = SystemConfig.from_dict(
        {"dataDir": str(root / "data"), "clock": {"mode": "simulated", "start": format_instant(TRIGGER)}}, env={})
    system = System(config, redeliver=redeliver)
    try:
        system.observer.register_source(CatalogSource("demo", file_url(scenario.catalog), 60))
        system.observer.poll_source("demo")
        system.broker.wait_idle(timeout)
        jobs = [json.loads(scenario.job.read_text(encoding="utf-8"))]
        if stage2:
            jobs.append(json.loads(scenario.stage2_job.read_text(encoding="utf-8")))
        for doc in jobs:
            job = system.jobs.create_job(doc)
            system.broker.wait_idle(timeout)
            system.engine.trigger(job.id)
            system.engine.run_until_idle(timeout)
            system.broker.wait_idle(timeout)
        import_root = config.importer_root(config.importers[0])
        products = {
            str(p.relative_to(import_root)): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(import_root.rglob("*.asc"))
        }
        envelopes = system.wrapper.index.envelopes()
        return DemoResult(
            scenario, products, [r.to_dict() for r in system.engine.executions()], len(envelopes),
            [e.to_dict() for e in envelopes if e.source_type is SourceType.PRODUCT],
            list(system.runner.request_log), config.data_dir,
        )
    finally:
        system.shutdown()
