from fractions import Fraction

import pytest
from fastapi.testclient import TestClient

from app.main import app
from app.services.melnikov_service import MelnikovService, get_singleton_melnikov_service

CYCLE_SPEC = {"eta": "1", "n": 1, "f": {"1": [[0, 0, "4"], [0, 1, "-3"]]}}


@pytest.fixture
def client(constants):
    service = MelnikovService()
    service._constants[Fraction(1)] = constants
    app.dependency_overrides[get_singleton_melnikov_service] = lambda: service
    yield TestClient(app)
    app.dependency_overrides.clear()


def test_health(client):
    response = client.get("/health")
    assert response.status_code == 200
    assert response.json() == {"status": "healthy"}


def test_bound(client):
    response = client.get("/api/melnikov/bound", params={"n": 1})
    assert response.status_code == 200
    body = response.json()
    assert body["success"] and body["bound"] == 18 and body["case"] == "general"
    assert client.get("/api/melnikov/bound", params={"n": 3, "case": "smooth"}).json()["bound"] == 3


def test_bound_rejects_bad_input(client):
    response = client.get("/api/melnikov/bound", params={"n": 1, "case": "cusp"})
    assert response.status_code == 422
    assert response.json()["error"] == "DomainError"
    response = client.get("/api/melnikov/bound", params={"n": 0})
    assert response.status_code == 422
    assert response.json()["success"] is False


def test_reduce(client):
    response = client.get("/api/melnikov/reduce", params={"i": 0, "j": 0, "contour": "1"})
    assert response.status_code == 200
    body = response.json()
    assert body["contour"] == "side1"
    assert "I01" in body["repr"]
    response = client.get("/api/melnikov/reduce", params={"i": 0, "j": 0, "contour": "lasso"})
    assert response.status_code == 422


def test_assemble(client):
    response = client.post("/api/melnikov/assemble", json=CYCLE_SPEC)
    assert response.status_code == 200
    body = response.json()
    assert body["structure"]["passed"]
    assert body["expr"]["denom_power"] == 0


def test_assemble_invalid_spec(client):
    response = client.post("/api/melnikov/assemble", json={"eta": "1", "n": 1, "f": {"1": [[2, 0, "1"]]}})
    assert response.status_code == 422
    assert response.json()["error"] == "SpecValidationError"


def test_eval(client):
    response = client.post("/api/melnikov/eval", params={"h": "-3/8"}, json=CYCLE_SPEC)
    assert response.status_code == 200
    assert response.json()["value"] == pytest.approx(0.0, abs=1e-9)
    response = client.post("/api/melnikov/eval", params={"h": "0.1"}, json=CYCLE_SPEC)
    assert response.status_code == 422
    assert response.json()["error"] == "DomainError"


def test_zeros(client):
    response = client.post("/api/melnikov/zeros", params={"samples": 500}, json=CYCLE_SPEC)
    assert response.status_code == 200
    report = response.json()["report"]
    assert report["count"] == 1
    assert report["zeros"][0]["refined_h"] == pytest.approx(-0.375, abs=1e-9)


def test_calibrate_uses_cached_constants(client, constants):
    response = client.post("/api/melnikov/calibrate", params={"eta": "1"})
    assert response.status_code == 200
    assert response.json()["constants"]["c1"] == constants.c1


def test_malformed_rationals_are_rejected(client):
    response = client.get("/api/melnikov/reduce", params={"i": 0, "j": 0, "eta": "abc"})
    assert response.status_code == 422
    assert response.json()["error"] == "DomainError"
    response = client.post("/api/melnikov/calibrate", params={"eta": "x/y"})
    assert response.status_code == 422
    assert response.json()["error"] == "DomainError"
    response = client.post("/api/melnikov/eval", params={"h": "1/0"}, json=CYCLE_SPEC)
    assert response.status_code == 422
