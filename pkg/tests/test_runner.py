import hashlib
import sys
import threading

import pytest

from conftest import utc
from eopipe.domain import ResourceReference
from eopipe.runner import (
    BadRequest, MissingInput, NotReady, ProcessRunner, ProcessStatus, RequestTooLarge, UnknownExecution,
    UnknownProcess, build_execute_request,
)
from eopipe.tools import ExternalCommandTool, InputSlot, OutputSlot, ProcessDescription
from eopipe.transport import file_url, url_to_path

# sha256 of the NDVI output for the 2x2 fixture bands, from oracles.ndvi_scalar values
FIXTURE_NDVI_SHA256 = "671d974f560c603328353e2a2ecadf034feef72ba392e6c119faa2e36b5fbccd"


class CopyTool:
    description = ProcessDescription("test.copy", "Copy", (InputSlot("src"),), (OutputSlot("copy"),))

    def run(self, workdir, inputs, parameters):
        out = workdir / "outputs"
        out.mkdir()
        (out / "copy.asc").write_bytes(inputs["src"][0].read_bytes())
        return {"copy": out / "copy.asc"}


class GatedTool:
    description = ProcessDescription("test.gated", "Waits for a gate", (InputSlot("src"),), (OutputSlot("out"),))

    def __init__(self):
        self.gate = threading.Event()
        self.entered = threading.Event()

    def run(self, workdir, inputs, parameters):
        self.entered.set()
        self.gate.wait(5)
        (workdir / "out.asc").write_bytes(inputs["src"][0].read_bytes())
        return {"out": workdir / "out.asc"}


@pytest.fixture
def runner(tmp_path):
    r = ProcessRunner(tmp_path / "runner")
    yield r
    r.shutdown()


def ref(path, slot="x"):
    return ResourceReference(slot, file_url(path), "text/x-ascii-grid", utc(2020, 8, 1))


def test_registry_listing(runner):
    ids = [d.process_id for d in runner.list_processes()]
    assert "de.hsbo.wacodis.land_cover_classification" in ids and "demo.ndvi" in ids
    assert ids == sorted(ids)
    desc = runner.describe_process("demo.ndvi")
    assert [s.identifier for s in desc.input_slots] == ["red", "nir"]
    assert [s.identifier for s in desc.output_slots] == ["ndvi"]
    with pytest.raises(UnknownProcess):
        runner.describe_process("nope")


def test_ndvi_execution(runner, fixtures_dir):
    eid = runner.execute("demo.ndvi", {"red": ref(fixtures_dir / "red_2x2.asc"),
                                       "nir": ref(fixtures_dir / "nir_2x2.asc")})
    rec = runner.wait(eid, 5)
    assert rec.status is ProcessStatus.SUCCEEDED
    assert rec.history == [ProcessStatus.ACCEPTED, ProcessStatus.RUNNING, ProcessStatus.SUCCEEDED]
    data, media_type = runner.get_result(eid, "ndvi")
    assert media_type == "text/x-ascii-grid"
    assert hashlib.sha256(data).hexdigest() == FIXTURE_NDVI_SHA256
    on_disk = url_to_path(rec.results["ndvi"].url).read_bytes()
    assert data == on_disk
    assert not (runner.work_dir / eid).exists()


def test_missing_input_before_fetch(tmp_path, fixtures_dir):
    fetched = []
    r = ProcessRunner(tmp_path, fetcher=lambda url: fetched.append(url) or b"")
    with pytest.raises(MissingInput) as err:
        r.execute("demo.ndvi", {"red": ref(fixtures_dir / "red_2x2.asc")})
    assert err.value.slot == "nir"
    assert fetched == [] and r.request_log
    r.shutdown()


def test_fetch_failure_cleans_up(runner, fixtures_dir, tmp_path):
    eid = runner.execute("demo.ndvi", {"red": ref(fixtures_dir / "red_2x2.asc"),
                                       "nir": ref(tmp_path / "missing.asc")})
    rec = runner.wait(eid, 5)
    assert rec.status is ProcessStatus.FAILED
    assert rec.message.startswith("FetchFailed")
    assert not (runner.results_dir / eid).exists()
    assert [p.name for p in (runner.work_dir / eid).iterdir()] == ["execution.log"]


def test_tool_failure_is_failed_record(runner, fixtures_dir, tmp_path):
    bad = tmp_path / "bad.asc"
    bad.write_text("garbage\n")
    eid = runner.execute("demo.ndvi", {"red": ref(fixtures_dir / "red_2x2.asc"), "nir": ref(bad)})
    rec = runner.wait(eid, 5)
    assert rec.status is ProcessStatus.FAILED and rec.message.startswith("ToolFailed")


def test_not_ready_while_running(tmp_path, fixtures_dir):
    tool = GatedTool()
    r = ProcessRunner(tmp_path, tools=[tool])
    eid = r.execute("test.gated", {"src": ref(fixtures_dir / "red_2x2.asc")})
    assert tool.entered.wait(5)
    assert r.get_status(eid).status is ProcessStatus.RUNNING
    with pytest.raises(NotReady):
        r.get_result(eid, "out")
    tool.gate.set()
    assert r.wait(eid, 5).status is ProcessStatus.SUCCEEDED
    r.shutdown()


def test_unknown_execution(runner):
    with pytest.raises(UnknownExecution):
        runner.get_status("0000")


def test_runtime_registration_uses_same_flow(runner, fixtures_dir):
    runner.register(CopyTool())
    assert runner.describe_process("test.copy").output_slots[0].identifier == "copy"
    eid = runner.execute("test.copy", {"src": ref(fixtures_dir / "red_2x2.asc")})
    assert runner.wait(eid, 5).status is ProcessStatus.SUCCEEDED
    assert runner.get_result(eid, "copy")[0] == (fixtures_dir / "red_2x2.asc").read_bytes()
    with pytest.raises(ValueError):
        runner.register(CopyTool())


def test_request_bodies_reject_payloads(runner, fixtures_dir):
    grid_text = (fixtures_dir / "red_2x2.asc").read_text()
    with pytest.raises(BadRequest):
        runner.submit("demo.ndvi",
                      build_execute_request({"red": grid_text, "nir": ref(fixtures_dir / "nir_2x2.asc")}))
    big = build_execute_request({"red": ref(fixtures_dir / "red_2x2.asc"), "nir": "x" * 5000})
    with pytest.raises(RequestTooLarge):
        runner.submit("demo.ndvi", big)
    with pytest.raises(BadRequest):
        runner.submit("demo.ndvi", b"not json")
    with pytest.raises(BadRequest):
        runner.execute("demo.ndvi", {"red": ref(fixtures_dir / "red_2x2.asc"),
                                     "nir": ref(fixtures_dir / "nir_2x2.asc"), "blue": ref(fixtures_dir / "nir_2x2.asc")})


def test_request_body_shape(fixtures_dir):
    body = build_execute_request({"red": ref(fixtures_dir / "red_2x2.asc")}, {"t": 1})
    assert body.startswith(b'{"inputs":{"red":[{"href":"file://')
    assert len(body) < 4096


def test_parameters_reach_tool(runner, tmp_path):
    src = tmp_path / "img.asc"
    src.write_text("ncols 2\nnrows 1\nxllcorner 0\nyllcorner 0\ncellsize 1\nNODATA_value -9999\n0.1 0.3\n")
    eid = runner.execute("de.hsbo.wacodis.land_cover_classification", {"opticalImage": ref(src)},
                         {"t_water": 0.15, "t_soil": 0.2, "t_vegetation": 0.9})
    assert runner.wait(eid, 5).status is ProcessStatus.SUCCEEDED
    assert runner.get_result(eid, "landCover")[0].decode().splitlines()[-1] == "1 3"
    with pytest.raises(BadRequest):
        runner.execute("de.hsbo.wacodis.land_cover_classification", {"opticalImage": ref(src)}, {"x": 1})


def test_deterministic_outputs(runner, fixtures_dir):
    inputs = {"red": ref(fixtures_dir / "red_2x2.asc"), "nir": ref(fixtures_dir / "nir_2x2.asc")}
    a, b = runner.execute("demo.ndvi", inputs), runner.execute("demo.ndvi", inputs)
    runner.wait(a, 5), runner.wait(b, 5)
    assert runner.get_result(a, "ndvi")[0] == runner.get_result(b, "ndvi")[0]


def test_external_command_tool(tmp_path, fixtures_dir):
    script = tmp_path / "tool.py"
    script.write_text(
        "import json, shutil, sys, pathlib\n"
        "w = pathlib.Path(sys.argv[1])\n"
        "assert json.loads((w / 'parameters.json').read_text()) == {}\n"
        "shutil.copy(w / 'inputs' / 'src_0.asc', w / 'outputs' / 'copy.asc')\n"
    )
    tool = ExternalCommandTool(
        ProcessDescription("ext.copy", "External copy", (InputSlot("src"),), (OutputSlot("copy"),)),
        [sys.executable, str(script), "{workdir}"],
    )
    r = ProcessRunner(tmp_path / "r", tools=[tool])
    eid = r.execute("ext.copy", {"src": ref(fixtures_dir / "red_2x2.asc")})
    assert r.wait(eid, 10).status is ProcessStatus.SUCCEEDED
    assert r.get_result(eid, "copy")[0] == (fixtures_dir / "red_2x2.asc").read_bytes()
    r.shutdown()


def test_external_command_failure(tmp_path, fixtures_dir):
    tool = ExternalCommandTool(
        ProcessDescription("ext.fail", "Fails", (InputSlot("src"),), (OutputSlot("o"),)),
        [sys.executable, "-c", "import sys; sys.exit(3)"],
    )
    r = ProcessRunner(tmp_path / "r", tools=[tool])
    eid = r.execute("ext.fail", {"src": ref(fixtures_dir / "red_2x2.asc")})
    rec = r.wait(eid, 10)
    assert rec.status is ProcessStatus.FAILED and "exit status 3" in rec.message
    r.shutdown()
