from __future__ import annotations

import pytest

from mbavm.tac import (
    ArityMismatch,
    TacSyntaxError,
    UseBeforeDef,
    eval_tac,
    parse_tac,
    render,
    to_ssa,
)

SRC = """
# mixes two words
func mix(a, b) {
  t = a + b
  u = t ^ a; v = u << 3
  w = v - b
  t = w | u
  return t
}
"""


def test_parse_shape():
    p = parse_tac(SRC)
    assert p.name == "mix"
    assert p.params == ("a", "b")
    assert len(p.body) == 5
    assert p.ret == "t"


def test_eval():
    p = parse_tac(SRC)
    a, b = 11, 5
    t = (a + b) & ((1 << 64) - 1)
    u = t ^ a
    v = (u << 3) & ((1 << 64) - 1)
    w = (v - b) & ((1 << 64) - 1)
    assert eval_tac(p, [a, b]) == w | u


def test_render_round_trip():
    p = parse_tac(SRC)
    again = parse_tac(render(p))
    assert again == p
    assert eval_tac(again, [3, 9]) == eval_tac(p, [3, 9])


def test_semicolon_and_comment_tolerance():
    p = parse_tac("func f(a) { b = a * 3; return b }  # trailing")
    assert eval_tac(p, [7]) == 21


def test_unary_and_mov():
    p = parse_tac("func f(a) {\n b = ~a\n c = -b\n d = c\n return d\n}")
    assert eval_tac(p, [0]) == 1  # -(~0) == 1 mod 2^64


def test_use_before_def():
    with pytest.raises(UseBeforeDef):
        parse_tac("func f(a) { b = a + q\n return b }")


def test_syntax_error_position():
    with pytest.raises(TacSyntaxError) as exc:
        parse_tac("func f(a) { b = a +\n return b }")
    assert "line" in str(exc.value)


def test_arity_mismatch():
    p = parse_tac(SRC)
    with pytest.raises(ArityMismatch):
        eval_tac(p, [1])


def test_ssa_single_assignment():
    ssa = to_ssa(parse_tac(SRC))
    dests = [i.dest for i in ssa.body]
    assert len(dests) == len(set(dests))
    assert set(ssa.params).isdisjoint(dests)
    # behavior is preserved
    assert eval_tac(ssa, [123, 456]) == eval_tac(parse_tac(SRC), [123, 456])
