from __future__ import annotations

import random

import pytest

from mbavm.attacks import (
    AttackReport,
    AttackTarget,
    Dynamic,
    Static,
    SynthBudget,
    backward_slice,
    cegar_key_recovery,
    lower,
    mba_diversity,
    read_reports,
    symex_simplify,
    synthesize_from_oracle,
    synthesize_semantics,
    taint_forward,
    write_reports,
)
from mbavm.attacks.symex import fold, subst_key
from mbavm.attacks.synthesis import tokens_to_expr
from mbavm.expr import (
    Const,
    RandomSampling,
    check_equiv,
    eval_expr,
    normalize,
    parse_expr,
)
from mbavm.obfuscate import CoreSemantics, ObfuscationConfig, build_handlers
from mbavm.rewrite import RewriteConfig


def _sems():
    return [
        CoreSemantics(parse_expr(t), 3)
        for t in ("(add x y)", "(sub x y)", "(xor x y)", "(and x y)")
    ]


def _handler_set(db, seed=0, use_mba=True, bounds=(20, 30)):
    cfg = ObfuscationConfig(
        handler_count=2,
        rewrite=RewriteConfig(bounds[0], bounds[1], seed=seed),
        use_mba=use_mba,
        seed=seed,
    )
    return build_handlers(_sems(), cfg, db if use_mba else None)


def _target(h, slot, dynamic=True):
    enc, sem = h.slots[slot]
    mode = (
        Dynamic(k=h.key_set.keys[enc.associated_index]) if dynamic else Static()
    )
    return AttackTarget(h, mode, sem, slot)


class TestLower:
    def test_instruction_count_matches_tree(self):
        lo = lower(parse_expr("(add (mul x y) (mul x y))"))
        ops = [i.op for i in lo.instrs if i.op != "input"]
        # shared structure is not deduplicated; every tree node lowers once
        assert ops.count("mul") == 2
        assert ops.count("add") == 1

    def test_output_is_last(self):
        lo = lower(parse_expr("(add x y)"))
        assert lo.output == lo.instrs[-1].idx


class TestTaintSlice:
    def test_dynamic_excludes_key_machinery(self, db7):
        hs = _handler_set(db7, seed=1)
        t = _target(hs.handlers[0], 0, dynamic=True)
        rep = taint_forward(t)
        assert rep.attack == "taint" and rep.mode == "dynamic"
        assert rep.marked + rep.unmarked > 0
        assert 0.0 < rep.unmarked_fraction < 1.0

    def test_static_marks_more(self, db7):
        hs = _handler_set(db7, seed=1)
        h = hs.handlers[0]
        dyn = taint_forward(_target(h, 0, dynamic=True))
        sta = taint_forward(_target(h, 0, dynamic=False))
        assert sta.unmarked_fraction <= dyn.unmarked_fraction

    def test_slice_marks_at_least_taint(self, db7):
        hs = _handler_set(db7, seed=2)
        for h in hs.handlers:
            t = _target(h, 0, dynamic=False)
            assert (
                backward_slice(t).unmarked_fraction
                <= taint_forward(t).unmarked_fraction
            )


class TestSymex:
    def test_subst_key_concretizes(self):
        e = parse_expr("(mul (divisible 15 k) (add x y))")
        assert "k" not in str(subst_key(e, 5))
        assert normalize(fold(subst_key(e, 5))) == normalize(parse_expr("(add x y)"))
        assert normalize(fold(subst_key(e, 7))) == Const(0)

    def test_fold_constants(self):
        assert fold(parse_expr("(add 2 (mul 3 4))")) == Const(14)

    def test_dynamic_recovers_unrewritten_handler(self, db7):
        hs = _handler_set(db7, seed=3, use_mba=False)
        h = hs.handlers[0]
        t = _target(h, 0, dynamic=True)
        rep = symex_simplify(t, db7)
        assert rep.success
        assert check_equiv(
            parse_expr(rep.output), t.ground_truth.expr, RandomSampling(500, 0)
        ).equivalent

    def test_static_fails_on_default_config(self, db7):
        hs = _handler_set(db7, seed=4)
        rep = symex_simplify(_target(hs.handlers[0], 0, dynamic=False), db7)
        assert not rep.success


class TestSynthesis:
    def test_tokens_round_trip(self):
        e = tokens_to_expr((3, 0, 1))  # first binary op over x, y
        assert e is not None and e.size == 3

    def test_oracle_recovery_ignores_irrelevant_parameter(self):
        # observed behavior f(2,2,2)=4, f(10,13,10)=23 ... synthesizes x + y
        def oracle(env):
            return (env["x"] + env["y"]) & ((1 << 64) - 1)

        result, spent = synthesize_from_oracle(
            oracle, SynthBudget(iterations=20_000), seed=1
        )
        assert result is not None
        assert spent <= 20_000
        assert check_equiv(
            result, parse_expr("(add x y)"), RandomSampling(1000, 1)
        ).equivalent
        assert oracle({"x": 2, "y": 2, "c": 2}) == 4
        assert oracle({"x": 10, "y": 13, "c": 10}) == 23

    def test_target_recovery_shallow_handler(self, db7):
        hs = _handler_set(db7, seed=5)
        t = _target(hs.handlers[0], 0, dynamic=True)
        rep = synthesize_semantics(t, SynthBudget(iterations=20_000), seed=2)
        assert rep.attack == "synth"
        assert rep.success

    def test_requires_dynamic_mode(self, db7):
        hs = _handler_set(db7, seed=5)
        with pytest.raises(ValueError):
            synthesize_semantics(
                _target(hs.handlers[0], 0, dynamic=False), SynthBudget()
            )


class TestCegar:
    def test_guided_recovery(self, db7):
        hs = _handler_set(db7, seed=6)
        h = hs.handlers[0]
        for slot, (enc, sem) in enumerate(h.slots):
            t = _target(h, slot, dynamic=False)
            rep = cegar_key_recovery(t, [sem.expr], seed=slot)
            assert rep.success, enc.kind
            k = rep.recovered_key
            env = {"x": 5, "y": 9, "c": 3}
            assert eval_expr(h.merged, {**env, "k": k}) == eval_expr(sem.expr, env)

    def test_requires_static_mode(self, db7):
        hs = _handler_set(db7, seed=6)
        h = hs.handlers[0]
        with pytest.raises(ValueError):
            cegar_key_recovery(_target(h, 0, dynamic=True), [h.slots[0][1].expr])

    def test_blackbox_budget_exhaustion(self, db7):
        cfg = ObfuscationConfig(
            handler_count=1,
            rewrite=RewriteConfig(0, 0),
            use_mba=False,
            prime_bits=32,
            seed=8,
        )
        hs = build_handlers(_sems(), cfg, None)
        for h in hs.handlers:
            for slot, (enc, sem) in enumerate(h.slots):
                if enc.kind != "factorization":
                    continue
                t = _target(h, slot, dynamic=False)
                rep = cegar_key_recovery(
                    t, [sem.expr], budget=20_000, blackbox=True, seed=1
                )
                assert not rep.success
                assert rep.budget_spent >= 20_000
                return
        pytest.skip("no factorization slot generated")


class TestReports:
    def test_jsonl_round_trip(self, tmp_path):
        reps = [
            AttackReport("taint", "static", False, unmarked_fraction=0.25, seed=1),
            AttackReport("cegar", "static", True, recovered_key=42, seed=2),
        ]
        path = str(tmp_path / "r.jsonl")
        write_reports(path, reps)
        docs = read_reports(path)
        assert [d["attack"] for d in docs] == ["taint", "cegar"]
        assert docs[1]["recovered_key"] == 42
        for d in docs:
            assert {"attack", "mode", "success", "time_ms", "budget_spent", "seed"} <= set(d)


class TestDiversity:
    def test_unique_and_disjoint(self, db7):
        sem = parse_expr("(add x y)")
        from mbavm.rewrite import rewrite

        a = [rewrite(sem, db7, RewriteConfig(seed=i)) for i in range(30)]
        b = [rewrite(sem, db7, RewriteConfig(seed=10_000 + i)) for i in range(30)]
        rep = mba_diversity(a, b)
        assert rep.unique_fraction >= 0.9
        assert rep.overlap_fraction <= 0.1
