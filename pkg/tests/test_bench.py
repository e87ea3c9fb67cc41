from __future__ import annotations

import csv

import pytest

from mbavm import bench
from mbavm.obfuscate import ObfuscationConfig, obfuscate
from mbavm.tac import eval_tac, parse_tac


class TestCorpusHelpers:
    def test_edge_case_set(self):
        assert bench.EDGE_CASES == (
            0x0000000000000000,
            0xFFFFFFFFFFFFFFFF,
            0x8000000000000000,
            0x0000000000000001,
            0xAAAAAAAAAAAAAAAA,
            0x5555555555555555,
        )

    def test_input_tuples_count(self):
        tuples = bench.input_tuples(2, 10_000, seed=0)
        assert len(tuples) == 10_036  # 10,000 random + 6^2 edge pairs
        assert len(bench.input_tuples(1, 100, seed=0)) == 106

    def test_benchmarks_ship_and_parse(self):
        progs = bench.benchmark_programs()
        assert set(progs) == set(bench.BENCHMARK_NAMES)
        for p in progs.values():
            assert len(p.params) == 2
            assert len(p.body) >= 50
            eval_tac(p, [1, 2])  # straight-line and well-formed

    def test_verify_catches_divergence(self, db7):
        from dataclasses import replace

        p = bench.benchmark_programs()["checksum"]
        bp, hs, _ = obfuscate(p, db7, ObfuscationConfig(seed=0))
        tested, mismatch = bench.verify_obfuscation(p, bp, hs, 200, seed=0)
        assert mismatch is None and tested == 236
        bad = replace(bp, constant_pool=tuple(c ^ 1 for c in bp.constant_pool))
        _, mismatch = bench.verify_obfuscation(p, bad, hs, 200, seed=0)
        assert mismatch is not None
        assert eval_tac(p, list(mismatch)) is not None  # reproducible input


class TestDeepExprs:
    def test_random_deep_expr_semantic_depth(self, db7):
        import random

        from mbavm.expr import normalize

        rng = random.Random(0)
        for size in (3, 5, 7):
            e = bench.random_deep_expr(rng, size, db7)
            nf = normalize(e)
            assert nf.size >= size
            rec = db7.lookup(nf)
            assert rec is not None and rec.representative.size == size

    def test_semantics_pool_depth(self, db7):
        pool = bench.semantics_pool(db7, 3)
        assert pool
        assert all(s.semantic_depth_hint == 3 for s in pool)


class TestSuite:
    def test_load_suite_rejects_nested_tables(self, tmp_path):
        path = tmp_path / "s.toml"
        path.write_text("[section]\nkey = 1\n")
        with pytest.raises(ValueError):
            bench.load_suite(str(path))

    def test_tiny_suite_runs_and_writes_csv(self, db7_path, tmp_path):
        suite = tmp_path / "tiny.toml"
        suite.write_text(
            "seed = 3\n"
            "jobs = 1\n"
            f'db_path = "{db7_path}"\n'
            "db_depth = 7\n"
            'experiments = "db_determinism,point_property"\n'
            "determinism_depth = 3\n"
            "point_handlers = 5\n"
        )
        out = str(tmp_path / "rows.csv")
        run = bench.run_suite(str(suite), out)
        assert run.passed
        with open(out, newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert rows
        assert set(rows[0]) == {"experiment", "metric", "value", "target", "passed"}
        experiments = {r["experiment"] for r in rows}
        assert experiments == {"db_determinism", "point_property"}
