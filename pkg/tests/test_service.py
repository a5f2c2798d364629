import time

import numpy as np
import pytest
from fastapi.testclient import TestClient

from urbanflux import model_io
from urbanflux.features import save_dataset
from urbanflux.service import ServiceState, create_app, round_sig

NANDA = [88, 19, 10, 18, 72, 103, 112, 3, 122, 44, 108, 71, 0, 27, 90, 16]


@pytest.fixture(scope="module")
def client(tmp_path_factory, models_td, small_dataset):
    out = tmp_path_factory.mktemp("service")
    model_t, model_d = models_td
    model_io.save_model(model_t, out / "model_t.json")
    model_io.save_model(model_d, out / "model_d.json")
    save_dataset(small_dataset, out / "dataset.csv")
    state = ServiceState().load(out / "model_t.json", out / "model_d.json",
                                out / "dataset.csv")
    return TestClient(create_app(state))


def _wait_for_job(client, job_id, timeout=30.0):
    deadline = time.time() + timeout
    while time.time() < deadline:
        body = client.get(f"/jobs/{job_id}").json()
        if body["status"] in ("done", "failed"):
            return body
        time.sleep(0.05)
    raise TimeoutError(f"job {job_id} did not finish")


class TestHealth:
    def test_unready_service_returns_503(self):
        empty = TestClient(create_app(ServiceState()))
        assert empty.get("/health").status_code == 503

    def test_ready_service_reports_versions(self, client):
        r = client.get("/health")
        assert r.status_code == 200
        body = r.json()
        assert body["status"] == "ok"
        assert set(body["model_versions"]) == {"T", "D"}
        assert body["model_versions"]["T"]["format_version"] == 1
        assert body["model_versions"]["D"]["format_version"] == 1


class TestPredict:
    def test_reference_composition(self, client):
        r = client.post("/predict", json={"counts": NANDA})
        assert r.status_code == 200
        body = r.json()
        hourly = body["hourly_vht"]
        assert len(hourly) == 24
        assert all(v >= 0 for v in hourly)
        assert sum(hourly) == pytest.approx(body["total_vht"], rel=1e-6)
        assert sum(body["proportions"]) == pytest.approx(1.0, abs=1e-9)

    def test_all_zero_counts_unprocessable(self, client):
        assert client.post("/predict", json={"counts": [0] * 16}).status_code == 422

    def test_wrong_shape_bad_request(self, client):
        assert client.post("/predict", json={"counts": [1] * 15}).status_code == 400

    def test_negative_bad_request(self, client):
        counts = [1] * 16
        counts[3] = -2
        assert client.post("/predict", json={"counts": counts}).status_code == 400

    def test_non_integer_bad_request(self, client):
        counts = [1] * 16
        counts[0] = 1.5
        assert client.post("/predict", json={"counts": counts}).status_code == 400

    def test_missing_body_bad_request(self, client):
        assert client.post("/predict", json={"qty": [1] * 16}).status_code == 400

    def test_identical_requests_identical_bodies(self, client):
        a = client.post("/predict", json={"counts": NANDA}).text
        b = client.post("/predict", json={"counts": NANDA}).text
        assert a == b


class TestOptimize:
    def _scenario(self, seed=0):
        return {
            "base_counts": NANDA,
            "delta_bound": 10,
            "objective": {"kind": "variance"},
            "ga": {"population": 8, "generations": 5, "seed": seed},
        }

    def test_job_lifecycle(self, client):
        r = client.post("/optimize", json=self._scenario())
        assert r.status_code == 202
        job_id = r.json()["job_id"]
        body = _wait_for_job(client, job_id)
        assert body["status"] == "done"
        result = body["result"]
        assert sum(result["best_counts"]) == sum(NANDA)
        assert result["best_counts"][12] == NANDA[12]
        assert result["best_fitness"] <= result["base_fitness"]
        assert len(result["history"]) == 6  # generations + initial population

    def test_infeasible_scenario_rejected(self, client):
        r = client.post("/optimize", json={"base_counts": [1, 2, 3]})
        assert r.status_code == 400
        r = client.post("/optimize", json={"base_counts": [-1] + [1] * 15})
        assert r.status_code == 400

    def test_unknown_job_404(self, client):
        assert client.get("/jobs/job-999999").status_code == 404

    def test_fifo_ids_and_completion(self, client):
        a = client.post("/optimize", json=self._scenario(seed=1)).json()["job_id"]
        b = client.post("/optimize", json=self._scenario(seed=2)).json()["job_id"]
        assert a < b
        assert _wait_for_job(client, a)["status"] == "done"
        assert _wait_for_job(client, b)["status"] == "done"


class TestDataset:
    def test_summary(self, client, small_dataset):
        body = client.get("/dataset/summary").json()
        assert body["sample_count"] == len(small_dataset)
        assert body["norm_info"]["days"] == small_dataset.norm_info.days
        assert len(body["per_category_totals"]) == 16
        assert "presets" in body

    def test_sample_lookup(self, client, small_dataset):
        row = small_dataset.rows[0]
        body = client.get(f"/samples/{row.sample_id}").json()
        assert body["sample_id"] == row.sample_id
        assert len(body["counts"]) == 16
        assert sum(body["proportions"]) == pytest.approx(1.0, abs=1e-9)
        assert body["counts"] == row.raw.poi_counts.tolist()

    def test_unknown_sample_404(self, client):
        assert client.get("/samples/NOPE").status_code == 404


class TestRounding:
    def test_round_sig_limits_digits(self):
        assert round_sig(0.12345678901234567) == 0.123456789012
        assert round_sig({"a": [1.0000000000001, 2]}) == {"a": [1.0, 2]}
        assert round_sig(float("nan")) != round_sig(1.0)
