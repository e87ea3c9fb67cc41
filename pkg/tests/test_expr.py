from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mbavm.expr import (
    Binary,
    Const,
    ExhaustiveNarrow,
    ExprParseError,
    KeyByte,
    MASK,
    RandomSampling,
    Unary,
    Var,
    check_equiv,
    eval_expr,
    eval_expr_vec,
    free_vars,
    normalize,
    parse_expr,
    syntactic_depth,
    to_smt2,
    to_text,
)


def leaves():
    return st.one_of(
        st.sampled_from([Var("x"), Var("y"), Var("c"), Var("k")]),
        st.integers(min_value=0, max_value=MASK).map(Const),
        st.integers(min_value=0, max_value=7).map(KeyByte),
    )


def exprs(max_leaves: int = 12):
    return st.recursive(
        leaves(),
        lambda sub: st.one_of(
            st.tuples(st.sampled_from(["not", "neg"]), sub).map(
                lambda t: Unary(*t)
            ),
            st.tuples(
                st.sampled_from(
                    ["add", "sub", "mul", "and", "or", "xor", "shl", "shr"]
                ),
                sub,
                sub,
            ).map(lambda t: Binary(*t)),
        ),
        max_leaves=max_leaves,
    )


def envs_for(e):
    names = sorted(free_vars(e))
    return st.fixed_dictionaries(
        {n: st.integers(min_value=0, max_value=MASK) for n in names}
    )


class TestEvaluation:
    def test_sum_example(self):
        # x + y under {x: 2, y: 6} evaluates to 8
        assert eval_expr(parse_expr("(add x y)"), {"x": 2, "y": 6}) == 8

    def test_wraparound(self):
        assert eval_expr(Binary("add", Const(MASK), Const(1)), {}) == 0
        assert eval_expr(Binary("sub", Const(0), Const(1)), {}) == MASK

    def test_shift_amounts_masked_to_six_bits(self):
        assert eval_expr(Binary("shl", Const(1), Const(64)), {}) == 1
        assert eval_expr(Binary("shr", Const(4), Const(66)), {}) == 1

    def test_divisible(self):
        e = Binary("divisible", Const(15), Var("k"))
        assert eval_expr(e, {"k": 5}) == 1
        assert eval_expr(e, {"k": 4}) == 0
        assert eval_expr(e, {"k": 0}) == 0

    def test_keybyte(self):
        assert eval_expr(KeyByte(0), {"k": 0x1234}) == 0x34
        assert eval_expr(KeyByte(1), {"k": 0x1234}) == 0x12
        assert eval_expr(KeyByte(7), {"k": 0x1234}) == 0

    def test_synthesized_point_function_chain(self):
        # ((0xff & k) ^ 0xcd) * 0x28cbfbeb9a020a33 over keys
        # (0x1336, 0xabcd, 0x11cd) selects exactly the first
        e = Binary(
            "mul",
            Binary("xor", Binary("and", Const(0xFF), Var("k")), Const(0xCD)),
            Const(0x28CBFBEB9A020A33),
        )
        assert eval_expr(e, {"k": 0x1336}) == 1
        assert eval_expr(e, {"k": 0xABCD}) == 0
        assert eval_expr(e, {"k": 0x11CD}) == 0


class TestDepth:
    def test_depth_oracles(self):
        assert syntactic_depth(parse_expr("(add x y)")) == 3
        # x + y - x + c - c
        e = parse_expr("(sub (add (sub (add x y) x) c) c)")
        assert syntactic_depth(e) == 9
        assert syntactic_depth(
            parse_expr("(mul (add x y) (xor x y))")
        ) == 7
        assert syntactic_depth(
            parse_expr("(shl (mul x c) (or y (xor x c)))")
        ) == 9

    def test_constants_count_as_leaves(self):
        assert syntactic_depth(parse_expr("(add x 7)")) == 3


class TestNormalize:
    def test_add_sub_cancellation(self):
        assert normalize(parse_expr("(sub (add x y) y)")) == Var("x")

    def test_deep_cancellation(self):
        e = parse_expr("(sub (add (sub (add x y) x) c) c)")
        assert normalize(e) == Var("y")

    def test_constant_folding(self):
        assert normalize(parse_expr("(add 2 3)")) == Const(5)

    @settings(max_examples=150, deadline=None)
    @given(exprs())
    def test_idempotent(self, e):
        n = normalize(e)
        assert normalize(n) == n

    @settings(max_examples=150, deadline=None)
    @given(exprs())
    def test_size_non_increasing(self, e):
        assert normalize(e).size <= e.size

    @settings(max_examples=100, deadline=None)
    @given(st.data())
    def test_eval_preserving(self, data):
        e = data.draw(exprs())
        env = data.draw(envs_for(e))
        assert eval_expr(normalize(e), env) == eval_expr(e, env)


class TestVectorEval:
    @settings(max_examples=60, deadline=None)
    @given(st.data())
    def test_matches_scalar(self, data):
        e = data.draw(exprs())
        env = data.draw(envs_for(e))
        venv = {k: np.array([v], dtype=np.uint64) for k, v in env.items()}
        got = eval_expr_vec(e, venv)
        want = eval_expr(e, env)
        scalar = int(got) if got.shape == () else int(got[0])
        assert scalar == want


class TestCheckEquiv:
    def test_mba_identity(self):
        # x + y == (x ^ y) + 2*(x & y)
        a = parse_expr("(add x y)")
        b = parse_expr("(add (xor x y) (mul 2 (and x y)))")
        assert check_equiv(a, b, RandomSampling(2000, 0)).equivalent

    def test_sub_identity(self):
        a = parse_expr("(sub x y)")
        b = parse_expr("(add (add x (not y)) 1)")
        assert check_equiv(a, b, RandomSampling(2000, 0)).equivalent

    def test_inequivalent_with_counterexample(self):
        v = check_equiv(
            parse_expr("(add x y)"), parse_expr("(sub x y)"), RandomSampling(100, 0)
        )
        assert not v.equivalent
        cx = v.counterexample
        assert cx is not None
        assert (cx["x"] + cx["y"]) & MASK != (cx["x"] - cx["y"]) & MASK

    def test_exhaustive_narrow(self):
        a = parse_expr("(xor x y)")
        b = parse_expr("(sub (or x y) (and x y))")
        assert check_equiv(a, b, ExhaustiveNarrow(8)).equivalent

    @settings(max_examples=60, deadline=None)
    @given(exprs())
    def test_reflexive_never_inequivalent(self, e):
        assert check_equiv(e, e, RandomSampling(50, 1)).equivalent


class TestText:
    @settings(max_examples=150, deadline=None)
    @given(exprs())
    def test_round_trip(self, e):
        assert parse_expr(to_text(e)) == e

    def test_parse_error(self):
        with pytest.raises(ExprParseError):
            parse_expr("(add x")
        with pytest.raises(ExprParseError):
            parse_expr("(frob x y)")


class TestSmt:
    def test_qf_bv_export_shape(self):
        txt = to_smt2(parse_expr("(add x y)"), parse_expr("(sub x y)"))
        assert "QF_BV" in txt
        assert "(_ BitVec 64)" in txt
        assert "check-sat" in txt
