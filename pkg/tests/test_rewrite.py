from __future__ import annotations

import random

import pytest

from mbavm.expr import (
    RandomSampling,
    check_equiv,
    normalize,
    parse_expr,
    syntactic_depth,
)
from mbavm.rewrite import EmptyDb, RewriteConfig, rewrite


def test_config_validation():
    with pytest.raises(ValueError):
        RewriteConfig(bound_min=10, bound_max=5)
    with pytest.raises(ValueError):
        RewriteConfig(bound_min=-1)


def test_zero_bounds_is_identity():
    e = parse_expr("(add x y)")
    assert rewrite(e, None, RewriteConfig(0, 0)) == e


def test_requires_db_for_nonzero_bounds():
    with pytest.raises(EmptyDb):
        rewrite(parse_expr("(add x y)"), None, RewriteConfig(1, 2))


def test_equivalence_preserved(db7):
    rng = random.Random(0)
    from mbavm.obfuscate import random_semantics

    for i in range(25):
        e = random_semantics(rng, rng.randint(3, 9))
        r = rewrite(e, db7, RewriteConfig(seed=i))
        assert check_equiv(e, r, RandomSampling(1000, i)).equivalent


def test_growth(db7):
    e = parse_expr("(add x y)")
    r = rewrite(e, db7, RewriteConfig(20, 30, seed=5))
    assert r.size > e.size
    assert syntactic_depth(normalize(r)) > 3  # normalize cannot fully undo it


def test_deterministic_under_seed(db7):
    e = parse_expr("(xor (add x y) c)")
    a = rewrite(e, db7, RewriteConfig(seed=42))
    b = rewrite(e, db7, RewriteConfig(seed=42))
    assert a == b
    c = rewrite(e, db7, RewriteConfig(seed=43))
    assert a != c


def test_growth_scales_with_bounds(db7):
    e = parse_expr("(add x y)")
    sizes = []
    for b in (0, 10, 20, 30):
        rs = [
            rewrite(e, db7, RewriteConfig(b, b, seed=i)).size for i in range(10)
        ]
        sizes.append(sum(rs) / len(rs))
    assert sizes == sorted(sizes)
    assert sizes[0] < sizes[-1]


def test_node_cap_respected(db7):
    cfg = RewriteConfig(40, 40, seed=1, max_nodes=500)
    r = rewrite(parse_expr("(add x y)"), db7, cfg)
    # one further substitution may overshoot the cap, never runaway growth
    assert r.size < 5000
