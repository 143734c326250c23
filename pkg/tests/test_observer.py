import json
import shutil

import pytest

from conftest import utc
from eopipe.broker import DATA_AVAILABLE, Broker
from eopipe.clock import SimulatedClock
from eopipe.domain import DataEnvelope, SourceType
from eopipe.observer import (
    CatalogScene, CatalogSource, CatalogUnreachable, DatasourceObserver, poll_catalog, read_catalog,
    scene_to_envelope,
)


def test_poll_three_scene_fixture(fixtures_dir):
    seen = set()
    scenes = poll_catalog(CatalogSource("f", str(fixtures_dir / "catalog3.jsonl")), seen)
    assert [s.scene_id for s in scenes] == [
        "S1B_IW_GRDH_20200720", "S2A_MSIL2A_20200725", "S2B_MSIL2A_20200728",
    ]
    assert seen == {s.scene_id for s in scenes}
    assert poll_catalog(CatalogSource("f", str(fixtures_dir / "catalog3.jsonl")), seen) == []


def test_missing_catalog_leaves_seen(tmp_path):
    seen = {"a"}
    with pytest.raises(CatalogUnreachable):
        poll_catalog(CatalogSource("m", str(tmp_path / "nope.jsonl")), seen)
    assert seen == {"a"}


def test_malformed_lines_skipped(tmp_path, fixtures_dir):
    path = tmp_path / "c.jsonl"
    path.write_text((fixtures_dir / "catalog3.jsonl").read_text() + "{broken\n" + json.dumps({"sceneId": 1}) + "\n")
    assert len(read_catalog(str(path))) == 3


def scene(**changes):
    doc = {"sceneId": "s1", "satellite": "sentinel-2", "sensingTime": "2020-07-25T10:30:00.000Z",
           "cloudCoverage": 15.0, "processingLevel": "Level-2A", "footprint": [7.0, 51.0, 7.2, 51.2],
           "accessUrl": "https://scenes.example.org/s1.asc", "mediaType": "text/x-ascii-grid"}
    doc.update(changes)
    return CatalogScene.from_dict(doc)


def test_scene_to_envelope():
    s = scene()
    env = scene_to_envelope(s, utc(2020, 8, 1))
    assert env.source_type is SourceType.COPERNICUS
    assert (env.satellite, env.cloud_coverage, env.spatial_footprint.extent) == ("sentinel-2", 15.0, [7.0, 51.0, 7.2, 51.2])
    assert (env.sensing_time, env.access_url, env.processing_level) == (s.sensing_time, s.access_url, "Level-2A")
    assert env.discovered == utc(2020, 8, 1)
    assert DataEnvelope.from_dict(env.to_dict()) == env
    assert scene_to_envelope(scene(cloudCoverage=0), utc(2020, 8, 1)).cloud_coverage == 0
    other = scene_to_envelope(scene(sceneId="s2"), utc(2020, 8, 1))
    assert other.envelope_id != env.envelope_id


def test_source_invariants():
    with pytest.raises(ValueError):
        CatalogSource("x", "file:///c", 0.5)


@pytest.fixture
def observer(tmp_path, fixtures_dir):
    catalog = tmp_path / "catalog.jsonl"
    shutil.copy(fixtures_dir / "catalog3.jsonl", catalog)
    broker = Broker()
    sub = broker.subscribe(DATA_AVAILABLE, "t")
    clock = SimulatedClock(utc(2020, 8, 1))
    obs = DatasourceObserver(broker, clock, tmp_path / "observer.json")
    obs.register_source(CatalogSource("c", str(catalog), 60))
    return obs, sub, clock, catalog, broker


def test_publishes_each_scene_once(observer, tmp_path):
    obs, sub, clock, catalog, broker = observer
    assert obs.tick() == 0  # first poll is one interval away
    clock.advance(60)
    assert obs.tick() == 1
    payloads = [sub.get(timeout=1).payload for _ in range(3)]
    assert sub.pending() == 0
    for p in payloads:
        DataEnvelope.from_dict(p)
    clock.advance(60)
    obs.tick()
    assert sub.pending() == 0
    # restart: dedupe state persisted
    again = DatasourceObserver(broker, clock, tmp_path / "observer.json")
    assert [s.name for s in again.sources] == ["c"]
    again.poll_source("c")
    assert sub.pending() == 0
    with catalog.open("a") as fh:
        fh.write(json.dumps(scene(sceneId="new").to_dict()) + "\n")
    again.poll_source("c")
    assert sub.get(timeout=1).payload["accessUrl"] == "https://scenes.example.org/s1.asc"


def test_exactly_n_polls(observer):
    obs, _, clock, _, _ = observer
    clock.advance(7 * 60)
    assert obs.tick() == 7
    assert obs.poll_count == 7
    clock.advance(59)
    assert obs.tick() == 0


def test_unreachable_is_not_fatal(observer):
    obs, sub, clock, catalog, _ = observer
    catalog.unlink()
    clock.advance(60)
    assert obs.tick() == 1
    assert obs.errors and sub.pending() == 0
