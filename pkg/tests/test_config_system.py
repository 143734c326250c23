import json
import socket
import threading

import pytest

from conftest import utc
from eopipe.broker import ROUTING_KEYS
from eopipe.config import COMPONENTS, ConfigInvalid, SystemConfig
from eopipe.demo import SAMPLE_JOB, write_demo
from eopipe.domain import JobStatus
from eopipe.observer import CatalogSource
from eopipe.system import PortInUse, System, check_port_free, parse_components
from eopipe.tools import LandCoverTool, NdviTool, WaterMaskTool
from eopipe.transport import file_url


def test_defaults():
    cfg = SystemConfig.from_dict({}, env={})
    assert cfg.url("jobs") == "http://127.0.0.1:8081"
    assert (cfg.retry_interval, cfg.retry_max_attempts) == (60.0, 10)
    assert cfg.clock_mode == "real"


def test_env_overrides():
    cfg = SystemConfig.from_dict({}, env={"WACODIS_RETRY_MAX_ATTEMPTS": "4", "WACODIS_SERVICES_JOBS_PORT": "9001",
                                          "WACODIS_RUNNER_RETAIN_FAILED_LOGS": "false",
                                          "WACODIS_CLOCK_MODE": "simulated"})
    assert cfg.retry_max_attempts == 4 and cfg.services["jobs"].port == 9001
    assert cfg.retain_failed_logs is False and cfg.clock_mode == "simulated"
    with pytest.raises(ConfigInvalid) as err:
        SystemConfig.from_dict({}, env={"WACODIS_RETRY_MAX_ATTEMPTS": "many"})
    assert err.value.field == "retry.maxAttempts"


@pytest.mark.parametrize("doc,field", [
    ({"services": {"wrapper": {"port": 8081}}}, "services.wrapper.port"),
    ({"services": {"nope": {"port": 9}}}, "services.nope"),
    ({"retry": {"maxAttempts": 0}}, "retry.maxAttempts"),
    ({"clock": {"mode": "fast"}}, "clock.mode"),
    ({"importers": [{"type": "s3"}]}, "importers[0].type"),
    ({"importers": [{"type": "filesystem", "root": "a"}, {"type": "filesystem", "root": "b"}]}, "importers[1].name"),
    ({"color": "blue"}, "color"),
])
def test_invalid(doc, field):
    with pytest.raises(ConfigInvalid) as err:
        SystemConfig.from_dict(doc, env={})
    assert err.value.field == field


def test_load_relative_data_dir(tmp_path):
    path = tmp_path / "conf" / "system.json"
    path.parent.mkdir()
    path.write_text(json.dumps({"dataDir": "data"}))
    cfg = SystemConfig.load(path, env={})
    assert cfg.data_dir == path.parent / "data"
    assert cfg.importer_root(cfg.importers[0]) == path.parent / "data" / "products"
    with pytest.raises(ConfigInvalid):
        SystemConfig.load(tmp_path / "missing.json", env={})


def test_parse_components():
    assert parse_components(None) == COMPONENTS
    assert parse_components("core-engine, job-manager,core-engine") == ("core-engine", "job-manager")
    with pytest.raises(ConfigInvalid):
        parse_components("scheduler")


@pytest.fixture
def system(tmp_path):
    cfg = SystemConfig.from_dict({"dataDir": str(tmp_path), "clock": {"mode": "simulated"}}, env={})
    s = System(cfg)
    yield s
    s.shutdown()


def test_every_key_has_a_consumer(system):
    counts = system.subscriber_counts()
    assert set(counts) == set(ROUTING_KEYS) and len(counts) == 6
    assert all(n >= 1 for n in counts.values())
    assert system.clock.now() == utc(2020, 8, 1)


def test_event_log(system, sample_job, tmp_path):
    system.jobs.create_job(sample_job)
    system.broker.wait_idle()
    assert system.events.keys() == ["wacodis.jobs.created"]
    line = json.loads((tmp_path / "events.jsonl").read_text().splitlines()[0])
    assert line["payload"]["id"] == sample_job["id"]


def test_port_in_use():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        s.listen()
        with pytest.raises(PortInUse):
            check_port_free("127.0.0.1", s.getsockname()[1])


class GatedLandCover:
    def __init__(self):
        self.description = LandCoverTool().description
        self.gate = threading.Event()

    def run(self, workdir, inputs, parameters):
        self.gate.wait(10)
        raise RuntimeError("released")


def test_shutdown_during_execution_then_restart(tmp_path):
    scenario = write_demo(tmp_path / "inputs")
    cfg = SystemConfig.from_dict({"dataDir": str(tmp_path / "data"), "clock": {"mode": "simulated"}}, env={})
    tool = GatedLandCover()
    first = System(cfg, tools=[tool, NdviTool(), WaterMaskTool()])
    first.observer.register_source(CatalogSource("demo", file_url(scenario.catalog)))
    first.observer.poll_source("demo")
    first.broker.wait_idle()
    job = first.jobs.create_job(dict(SAMPLE_JOB))
    first.broker.wait_idle()
    rec = first.engine.trigger(job.id)
    assert rec.state.value == "RUNNING"
    first.shutdown()  # what serve does on SIGTERM
    tool.gate.set()
    assert rec.state.value == "FAILED" and rec.failure_reason == "shutdown"

    second = System(cfg)
    try:
        again = second.engine.get_execution(rec.execution_id)
        assert again.state.value == "FAILED" and again.failure_reason == "shutdown"
        assert second.jobs.get_job(job.id).status is JobStatus.FAILED
        assert len(second.wrapper.index) == 10 and second.observer.poll_source("demo") == []
        fresh = second.engine.trigger(job.id)
        assert second.engine.run_until_idle()
        assert fresh.state.value == "SUCCEEDED"
    finally:
        second.shutdown()
