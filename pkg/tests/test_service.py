from __future__ import annotations

import pytest
from fastapi.testclient import TestClient

from mbavm.service import app

SRC = "func f(a, b) {\n t = a + b\n r = t ^ a\n return r\n}"


@pytest.fixture(scope="module")
def client():
    return TestClient(app)


def test_health(client):
    r = client.get("/health")
    assert r.status_code == 200
    assert r.json()["status"] == "ok"


def test_parse(client):
    r = client.post("/parse", json={"source": SRC})
    assert r.status_code == 200
    body = r.json()
    assert body["name"] == "f"
    assert body["params"] == ["a", "b"]
    assert body["instr_count"] == 2


def test_parse_error_is_422(client):
    r = client.post("/parse", json={"source": "func f(a) { b = }"})
    assert r.status_code == 422


def test_eval(client):
    r = client.post("/eval", json={"source": SRC, "args": [2, 6]})
    assert r.status_code == 200
    assert r.json()["result"] == 8 ^ 2


def test_normalize(client):
    r = client.post("/expr/normalize", json={"expr": "(sub (add x y) y)"})
    assert r.status_code == 200
    assert r.json() == {"normalized": "x", "size": 1}


def test_check_equiv(client):
    r = client.post(
        "/expr/check-equiv",
        json={"a": "(add x y)", "b": "(add (xor x y) (mul 2 (and x y)))"},
    )
    assert r.status_code == 200
    assert r.json()["equivalent"] is True
    r = client.post(
        "/expr/check-equiv", json={"a": "(add x y)", "b": "(sub x y)"}
    )
    body = r.json()
    assert body["equivalent"] is False
    assert body["counterexample"]


def test_obfuscate_verify_attack_round_trip(client, db7_path):
    r = client.post(
        "/obfuscate",
        json={
            "source": SRC,
            "seed": 5,
            "db_path": db7_path,
            "handler_count": 6,
        },
    )
    assert r.status_code == 200, r.text
    body = r.json()
    assert body["handlers"] == 6
    assert body["steps"] >= 2

    r = client.post(
        "/verify",
        json={
            "source": SRC,
            "bytecode": body["bytecode"],
            "sidecar": body["sidecar"],
            "inputs": 300,
            "seed": 2,
        },
    )
    assert r.status_code == 200, r.text
    assert r.json() == {"equal": True, "tested": 300, "mismatch": None}

    hid = body["sidecar"]["handlers"][0]["id"]
    r = client.post(
        "/attack",
        json={
            "sidecar": body["sidecar"],
            "handler_id": hid,
            "attack": "taint",
            "mode": "static",
        },
    )
    assert r.status_code == 200, r.text
    rep = r.json()["report"]
    assert rep["attack"] == "taint"
    assert 0.0 <= rep["unmarked_fraction"] <= 1.0

    r = client.post(
        "/attack",
        json={
            "sidecar": body["sidecar"],
            "handler_id": hid,
            "attack": "cegar",
            "mode": "static",
            "budget": 60_000,
        },
    )
    assert r.status_code == 200, r.text
    assert r.json()["report"]["attack"] == "cegar"


def test_obfuscate_requires_db_for_mba(client):
    r = client.post("/obfuscate", json={"source": SRC})
    assert r.status_code == 400


def test_attack_bad_handler_id(client, db7_path):
    r = client.post(
        "/obfuscate",
        json={"source": SRC, "db_path": db7_path, "use_mba": True, "handler_count": 4},
    )
    sidecar = r.json()["sidecar"]
    r = client.post(
        "/attack",
        json={"sidecar": sidecar, "handler_id": 999, "attack": "taint"},
    )
    assert r.status_code == 422


def test_synth_requires_dynamic(client, db7_path):
    r = client.post(
        "/obfuscate",
        json={"source": SRC, "db_path": db7_path, "handler_count": 4},
    )
    sidecar = r.json()["sidecar"]
    hid = sidecar["handlers"][0]["id"]
    r = client.post(
        "/attack",
        json={"sidecar": sidecar, "handler_id": hid, "attack": "synth", "mode": "static"},
    )
    assert r.status_code == 422
