import shutil

import pytest
from fastapi.testclient import TestClient

from eopipe.config import SystemConfig
from eopipe.demo import write_demo
from eopipe.system import System
from eopipe.transport import file_url


@pytest.fixture
def system(tmp_path):
    cfg = SystemConfig.from_dict({"dataDir": str(tmp_path / "data"), "clock": {"mode": "simulated"}}, env={})
    s = System(cfg)
    yield s, {name: TestClient(app) for name, app in s.apps().items()}
    s.shutdown()


def test_jobs_api(system, sample_job):
    _, c = system
    resp = c["jobs"].post("/jobs", json=sample_job)
    assert resp.status_code == 201 and resp.json()["status"] == "waiting"
    assert c["jobs"].post("/jobs", json=sample_job).status_code == 409
    assert [j["id"] for j in c["jobs"].get("/jobs").json()] == [sample_job["id"]]
    assert c["jobs"].get(f"/jobs/{sample_job['id']}").json()["name"] == sample_job["name"]
    bad = dict(sample_job, id=None)
    del bad["id"]
    bad["execution"] = {"pattern": "61 0 1 * *"}
    resp = c["jobs"].post("/jobs", json=bad)
    assert resp.status_code == 422
    assert [e["field"] for e in resp.json()["detail"]] == ["execution.pattern"]
    assert c["jobs"].delete(f"/jobs/{sample_job['id']}").status_code == 204
    assert c["jobs"].get(f"/jobs/{sample_job['id']}").status_code == 404


def test_wrapper_query_validation(system):
    _, c = system
    resp = c["wrapper"].post("/resources/query", json={"subset": {}})
    assert resp.status_code == 422 and resp.json()["detail"]


def test_observer_engine_runner(system, tmp_path):
    s, c = system
    scenario = write_demo(tmp_path / "inputs")
    resp = c["observer"].post("/catalogs", json={"name": "demo", "location": file_url(scenario.catalog)})
    assert resp.status_code == 201 and resp.json()["published"] == 10
    assert [x["name"] for x in c["observer"].get("/catalogs").json()] == ["demo"]
    s.broker.wait_idle()
    job = c["jobs"].post("/jobs", content=scenario.job.read_bytes(),
                         headers={"Content-Type": "application/json"}).json()
    s.broker.wait_idle()
    resp = c["engine"].post(f"/jobs/{job['id']}/trigger")
    assert resp.status_code == 202 and resp.json()["state"] == "RUNNING"
    assert c["engine"].post(f"/jobs/{job['id']}/trigger").status_code == 409
    assert c["engine"].post("/jobs/00000000-0000-0000-0000-000000000000/trigger").status_code == 404
    s.engine.run_until_idle()
    (rec,) = c["engine"].get(f"/jobs/{job['id']}/executions").json()
    assert rec["state"] == "SUCCEEDED"
    procs = [p["id"] for p in c["runner"].get("/processes").json()]
    assert job["processingTool"] in procs
    assert c["runner"].get("/processes/nope").status_code == 404
    assert c["runner"].post("/processes/demo.ndvi/execution", content=b"{").status_code == 400
    assert c["engine"].post("/clock/advance", json={"seconds": 60}).json()["now"].startswith("2020-08-01T00:01")


def test_runner_result_download(system, fixtures_dir, tmp_path):
    s, c = system
    red, nir = tmp_path / "red.asc", tmp_path / "nir.asc"
    shutil.copy(fixtures_dir / "red_2x2.asc", red)
    shutil.copy(fixtures_dir / "nir_2x2.asc", nir)
    body = {"inputs": {"red": [{"href": file_url(red)}], "nir": [{"href": file_url(nir)}]}}
    eid = c["runner"].post("/processes/demo.ndvi/execution", json=body).json()["executionId"]
    s.runner.wait(eid, 5)
    status = c["runner"].get(f"/executions/{eid}").json()
    assert status["status"] == "SUCCEEDED"
    (output,) = status["results"]
    data = c["runner"].get(f"/executions/{eid}/results/{output}")
    assert data.status_code == 200 and data.content.startswith(b"ncols")
    assert c["runner"].get("/executions/nope").status_code == 404
