# tests/integration/test_api_endpoints.py
import pytest
from fastapi.testclient import TestClient
from prometheus_client import REGISTRY

from app.api.main import app
from app.core.exceptions import NumericFailure
from app.worker.logic import catalog
from app.worker.logic.context import context_to_dict

API = "/api/v1"


@pytest.fixture(scope="module")
def client():
    with TestClient(app) as test_client:
        yield test_client


@pytest.fixture
def interactive_gap_payload():
    return context_to_dict(catalog.interactive_gap_context())


def test_solve_full_surplus(client, two_key_box_payload):
    response = client.post(f"{API}/mechanisms/solve", json={"context": two_key_box_payload, "mechanism": "full-surplus"})
    assert response.status_code == 200
    body = response.json()
    assert body["revenue"] == pytest.approx(1.6)
    assert body["verification"]["valid"] is True
    assert body["contract"]["payments"] == pytest.approx([3.6, -0.4])


def test_solve_rejects_unknown_mechanism(client, two_key_box_payload):
    response = client.post(f"{API}/mechanisms/solve", json={"context": two_key_box_payload, "mechanism": "auction"})
    assert response.status_code == 422
    assert response.json()["message"] == "Validation failed for one or more fields."


def test_solve_rejects_mismatched_shapes(client, two_key_box_payload):
    two_key_box_payload["mu"] = [[0.5, 0.5]]
    response = client.post(f"{API}/mechanisms/solve", json={"context": two_key_box_payload})
    assert response.status_code == 422


def test_domain_errors_map_to_422(client, two_key_box_payload):
    two_key_box_payload["mu"] = [[0.2, 0.3], [0.3, 0.3]]
    response = client.post(f"{API}/mechanisms/solve", json={"context": two_key_box_payload})
    assert response.status_code == 422
    assert response.json()["detail"]["error"] == "InvalidInput"


def test_rank_deficient_context_has_no_full_surplus_contract(client):
    payload = context_to_dict(catalog.two_key_box_uniform())
    response = client.post(f"{API}/mechanisms/solve", json={"context": payload, "mechanism": "full-surplus"})
    assert response.status_code == 422
    assert response.json()["detail"]["error"] == "RankDeficient"


def test_domain_errors_are_counted_by_class(client):
    payload = context_to_dict(catalog.two_key_box_uniform())
    labels = {"error": "RankDeficient"}
    before = REGISTRY.get_sample_value("infomech_api_domain_errors_total", labels) or 0.0
    client.post(f"{API}/mechanisms/solve", json={"context": payload, "mechanism": "full-surplus"})
    assert REGISTRY.get_sample_value("infomech_api_domain_errors_total", labels) == before + 1.0


def test_numeric_failures_map_to_500(client, two_key_box_payload, monkeypatch):
    from app.api.routers import mechanisms as mechanisms_router

    def failing(*args, **kwargs):
        raise NumericFailure("Revenue ordering broken: Re=2 exceeds Rc=1", context="two-key-box")

    monkeypatch.setattr(mechanisms_router, "revenue_report", failing)
    response = client.post(f"{API}/mechanisms/report", json={"context": two_key_box_payload})
    assert response.status_code == 500
    assert response.json()["detail"] == {
        "error": "NumericFailure",
        "message": "Revenue ordering broken: Re=2 exceeds Rc=1",
        "context": "two-key-box",
    }


def test_revenue_report(client, interactive_gap_payload):
    response = client.post(f"{API}/mechanisms/report", json={"context": interactive_gap_payload})
    assert response.status_code == 200
    revenue = response.json()["revenue"]
    assert revenue["Rc"] == pytest.approx(0.4)
    assert revenue["Rp"] == pytest.approx(0.5)


def test_evaluate_protocol(client, interactive_gap_payload):
    response = client.post(
        f"{API}/protocols/evaluate",
        json={"context": interactive_gap_payload, "tree": catalog.interactive_gap_tree_spec(), "mode": "uncommitted"},
    )
    assert response.status_code == 200
    body = response.json()
    assert body["evaluation"]["revenue"] == pytest.approx(0.4665)
    assert body["mode"] == "uncommitted"


def test_evaluate_rejects_a_rootless_tree(client, interactive_gap_payload):
    response = client.post(f"{API}/protocols/evaluate", json={"context": interactive_gap_payload, "tree": {}})
    assert response.status_code == 422


def test_report_job_runs_to_completion(client):
    created = client.post(f"{API}/jobs", json={"kind": "report", "payload": {"fixture": "two-key-box"}})
    assert created.status_code == 202
    assert created.json()["status"] == "PENDING"

    job = client.get(f"{API}/jobs/{created.json()['job_id']}").json()
    assert job["status"] == "COMPLETED"
    assert job["kind"] == "report"
    assert job["result"]["revenue"]["R"] == pytest.approx(1.6)
    assert job["error"] is None


def test_gap_job_with_a_bad_perturbation_fails(client):
    created = client.post(
        f"{API}/jobs",
        json={"kind": "gap", "payload": {"fixture": "two-key-box-uniform", "perturbation": [[1.0, 0.0], [0.0, 0.0]]}},
    )
    job = client.get(f"{API}/jobs/{created.json()['job_id']}").json()
    assert job["status"] == "FAILED"
    assert job["error"].startswith("InvalidPerturbation")


def test_job_payload_needs_a_context(client):
    response = client.post(f"{API}/jobs", json={"kind": "report", "payload": {}})
    assert response.status_code == 422


def test_unknown_job_is_404(client):
    response = client.get(f"{API}/jobs/does-not-exist")
    assert response.status_code == 404
    assert response.json()["detail"] == "Job not found."


def test_health(client):
    response = client.get("/health")
    assert response.status_code == 200
    assert response.json()["services"]["database"] == "healthy"
    assert response.json()["solver"]["fixtures"] == 8
    assert "X-Solve-Time-Ms" in response.headers
