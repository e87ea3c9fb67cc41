"""Acceptance gate: one criterion per test, one printed pass/fail line each.

Each criterion delegates to the corresponding benchmark experiment at its
full stated scale, so `mbavm bench` rows and this gate measure the same
things; this file only fixes the scales and asserts the verdicts.
"""

from __future__ import annotations

import os

from mbavm import bench

JOBS = min(os.cpu_count() or 1, 8)


def _check(num: int, name: str, rows: list[dict]) -> None:
    ok = all(r["passed"] for r in rows)
    detail = "; ".join(
        f"{r['metric']} = {r['value']} (target {r['target']})" for r in rows
    )
    print(f"[criterion {num:02d}] {name}: {'PASS' if ok else 'FAIL'} -- {detail}")
    assert ok, detail


def test_criterion_01_correctness(db7_path):
    rows = bench.exp_correctness(
        db7_path, seeds=100, random_inputs=10_000, jobs=JOBS, seed=1
    )
    _check(1, "benchmark correctness", rows)


def test_criterion_02_db_soundness(db7):
    _check(2, "equivalence-class soundness", bench.exp_db_soundness(db7, samples=10_000))


def test_criterion_03_db_determinism():
    _check(3, "database determinism", bench.exp_db_determinism(depth=5, seed=7))


def test_criterion_04_rewrite_growth(db7):
    _check(4, "rewriter preservation and growth", bench.exp_rewrite_growth(db7, count=1000, seed=4))


def test_criterion_05_point_property(db7):
    _check(5, "key-encoding point property", bench.exp_point_property(db7, count=1000, seed=5))


def test_criterion_06_static_resilience(db7):
    _check(6, "static symex resilience", bench.exp_static_symex(db7, count=1000, seed=6))


def test_criterion_07_dynamic_symex_trend(db7, db7_path):
    rows = bench.exp_symex_trend(db7, per_bound=100, seed=7, jobs=JOBS, db_path=db7_path)
    _check(7, "dynamic symex trend", rows)


def test_criterion_08_taint_slice_bounds(db7):
    _check(8, "taint/slice bounds", bench.exp_taint_slice(db7, count=1000, seed=8))


def test_criterion_09_synthesis_curve(db7):
    rows = bench.exp_synthesis_curve(db7, per_depth=200, budget=5000, jobs=JOBS, seed=9)
    _check(9, "synthesis-limit curve", rows)


def test_criterion_10_superoperator_effect(db7):
    rows = bench.exp_superop_gap(db7, samples=100, budget=5000, jobs=JOBS, seed=10)
    _check(10, "superoperator synthesis gap", rows)


def test_criterion_11_superoperator_depth():
    _check(11, "superoperator depth distribution", bench.exp_superop_depth(seeds=10, seed=11))


def test_criterion_12_mba_diversity(db7):
    _check(12, "MBA diversity", bench.exp_diversity(db7, count=1000, seed=12))


def test_criterion_13_cegar(db7):
    _check(13, "CEGAR key recovery", bench.exp_cegar(db7, count=40, seed=13))
