from __future__ import annotations

import os

import pytest

from mbavm.eqdb import load_db, store_db, synthesize_classes

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
DB7_PATH = os.path.join(ROOT, "desk.mbadb")


@pytest.fixture(scope="session")
def db7_path() -> str:
    if not os.path.exists(DB7_PATH):
        db = synthesize_classes(7, seed=7, workers=os.cpu_count() or 1)
        store_db(db, DB7_PATH)
    return DB7_PATH


@pytest.fixture(scope="session")
def db7(db7_path):
    return load_db(db7_path)


@pytest.fixture(scope="session")
def db5():
    return synthesize_classes(5, seed=7, workers=1)
