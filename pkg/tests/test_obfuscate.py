from __future__ import annotations

import random

import numpy as np
import pytest

from mbavm.expr import Const, RandomSampling, check_equiv, eval_expr, free_vars
from mbavm.obfuscate import (
    ObfuscationConfig,
    build_handlers,
    build_superoperators,
    eval_residual_vec,
    obfuscate,
    random_semantics,
)
from mbavm.tac import eval_tac, parse_tac, to_ssa
from mbavm.vm import run

SRC = """
func blend(a, b) {
  t = a + b
  u = t ^ a
  v = u * 3
  w = v >> 2
  x1 = w & t
  r = x1 - b
  return r
}
"""


def _u64cols(rng, n, count):
    return [
        np.array([rng.getrandbits(64) for _ in range(count)], dtype=np.uint64)
        for _ in range(n)
    ]


class TestSuperoperators:
    def test_residual_preserves_behavior(self):
        p = parse_tac(SRC)
        ssa = to_ssa(p)
        for seed in range(5):
            _, rp = build_superoperators(ssa, (3, 12), seed)
            rng = random.Random(seed)
            a, b = _u64cols(rng, 2, 64)
            env = dict(zip(rp.params, (a, b)))
            got = eval_residual_vec(rp, env)
            want = np.array(
                [eval_tac(p, [int(x), int(y)]) for x, y in zip(a, b)],
                dtype=np.uint64,
            )
            assert (got == want).all()

    def test_two_operand_shape(self):
        _, rp = build_superoperators(to_ssa(parse_tac(SRC)), (3, 12), 1)
        for ins in rp.instrs:
            names = free_vars(ins.sem.expr)
            assert names <= {"x", "y", "c"}
            assert ("c" in names) == (ins.const is not None)

    def test_bounds_zero_keeps_single_instructions(self):
        sems, rp = build_superoperators(to_ssa(parse_tac(SRC)), (0, 0), 0)
        assert len(rp.instrs) == len(parse_tac(SRC).body)
        assert all(s.semantic_depth_hint <= 5 for s in sems)

    def test_depth_hints_grow_with_inlining(self):
        flat, _ = build_superoperators(to_ssa(parse_tac(SRC)), (0, 0), 0)
        deep, _ = build_superoperators(to_ssa(parse_tac(SRC)), (3, 12), 0)
        assert max(s.semantic_depth_hint for s in deep) > max(
            s.semantic_depth_hint for s in flat
        )


class TestRandomSemantics:
    def test_two_variable_pool(self):
        rng = random.Random(4)
        for _ in range(50):
            e = random_semantics(rng, rng.randint(3, 40))
            assert len(free_vars(e)) <= 2

    def test_large_sizes_terminate(self):
        rng = random.Random(9)
        e = random_semantics(rng, 200)
        assert e.size > 50


class TestHandlers:
    def test_slot_counts_and_selection(self, db7):
        sems, _ = build_superoperators(to_ssa(parse_tac(SRC)), (3, 12), 2)
        cfg = ObfuscationConfig(handler_count=4, seed=2)
        hs = build_handlers(sems, cfg, db7)
        for h in hs.handlers:
            assert 3 <= len(h.slots) <= 5
            for i, (enc, sem) in enumerate(h.slots):
                for j, k in enumerate(h.key_set.keys):
                    sel = eval_expr(enc.expr, {"k": k})
                    assert sel == (1 if i == j else 0)
                # the merged expression under key i behaves as slot i
                env = {"x": 123456789, "y": 987654321, "c": 77}
                assert eval_expr(h.merged, {**env, "k": h.key_set.keys[i]}) == eval_expr(
                    sem.expr, env
                )

    def test_slots_compute_distinct_functions(self, db7):
        sems, _ = build_superoperators(to_ssa(parse_tac(SRC)), (3, 12), 3)
        hs = build_handlers(sems, ObfuscationConfig(handler_count=6, seed=3), db7)
        rng = random.Random(1)
        env = {v: rng.getrandbits(64) for v in ("x", "y", "c")}
        for h in hs.handlers:
            outs = [eval_expr(sem.expr, env) for _, sem in h.slots]
            assert len(set(outs)) == len(outs)

    def test_every_semantics_covered(self, db7):
        sems, _ = build_superoperators(to_ssa(parse_tac(SRC)), (3, 12), 5)
        hs = build_handlers(sems, ObfuscationConfig(handler_count=4, seed=5), db7)
        index = hs.semantics_index()
        for s in sems:
            assert s.key() in index


class TestPipeline:
    @pytest.mark.parametrize("use_mba,use_superops", [
        (True, True), (False, True), (True, False), (False, False),
    ])
    def test_end_to_end(self, db7, use_mba, use_superops):
        p = parse_tac(SRC)
        cfg = ObfuscationConfig(
            handler_count=8, use_mba=use_mba, use_superops=use_superops, seed=11
        )
        bp, hs, _ = obfuscate(p, db7 if use_mba else None, cfg)
        rng = random.Random(1)
        for _ in range(25):
            args = [rng.getrandbits(64) for _ in p.params]
            assert run(bp, hs, args) == eval_tac(p, args)

    def test_deterministic(self, db7):
        p = parse_tac(SRC)
        a = obfuscate(p, db7, ObfuscationConfig(handler_count=8, seed=7))
        b = obfuscate(p, db7, ObfuscationConfig(handler_count=8, seed=7))
        assert a[0] == b[0]

    def test_mba_inflates_handlers(self, db7):
        p = parse_tac(SRC)
        plain = obfuscate(
            p, None, ObfuscationConfig(handler_count=8, use_mba=False, seed=3)
        )
        fat = obfuscate(p, db7, ObfuscationConfig(handler_count=8, seed=3))
        mean = lambda hs: sum(h.merged.size for h in hs.handlers) / len(hs.handlers)
        assert mean(fat[1]) > 2 * mean(plain[1])
