"""Randomized recursive expression rewriting against the class database.

Each iteration picks a random subexpression, treats its operands as opaque
leaves bound to (x, y), looks the resulting shape up in the database, and
swaps in a random other member of its equivalence class.  Early iterations
prefer the top two AST levels so growth stays balanced.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass

from .eqdb import EquivClassDb, GRAMMAR_BINARY, GRAMMAR_UNARY, lookup_class
from .expr import (
    Binary,
    Expr,
    RandomSampling,
    Unary,
    Var,
    X,
    Y,
    check_equiv,
    normalize,
    substitute,
    syntactic_depth,
)

MAX_REDRAWS = 8


class EmptyDb(ValueError):
    pass


@dataclass(frozen=True)
class RewriteConfig:
    bound_min: int = 20
    bound_max: int = 30
    top_level_phase_fraction: float = 0.25
    seed: int = 0
    # substitutions duplicate operand subtrees; cap total growth so deep
    # inputs cannot compound into unmanageable trees
    max_nodes: int = 20_000

    def __post_init__(self):
        if not 0 <= self.bound_min <= self.bound_max:
            raise ValueError("bounds must satisfy 0 <= min <= max")


_RULE_CACHE: dict[int, dict] = {}


def _op_rules(db: EquivClassDb) -> dict:
    """Map operator -> list of replacement members for its (x, y) pattern."""
    cached = _RULE_CACHE.get(id(db))
    if cached is not None:
        return cached
    rules: dict[tuple[str, str], list[Expr]] = {}
    for op in GRAMMAR_BINARY:
        pattern = Binary(op, X, Y)
        rec = lookup_class(db, pattern)
        if rec is not None:
            alts = rec.others(pattern)
            if alts:
                rules[("b", op)] = alts
    for op in GRAMMAR_UNARY:
        pattern = Unary(op, X)
        rec = lookup_class(db, pattern)
        if rec is not None:
            alts = rec.others(pattern)
            if alts:
                rules[("u", op)] = alts
    if len(_RULE_CACHE) > 16:
        _RULE_CACHE.clear()
    _RULE_CACHE[id(db)] = rules
    return rules


def _paths(e: Expr, top_only: bool) -> list[tuple[int, ...]]:
    """Paths of all operator nodes (top_only: root and its children)."""
    out: list[tuple[int, ...]] = []
    stack: list[tuple[Expr, tuple[int, ...]]] = [(e, ())]
    while stack:
        node, path = stack.pop()
        if isinstance(node, (Unary, Binary)):
            out.append(path)
        if top_only and len(path) >= 1:
            continue
        for i, ch in enumerate(node.children()):
            stack.append((ch, path + (i,)))
    out.sort()
    return out


def _get(e: Expr, path: tuple[int, ...]) -> Expr:
    for i in path:
        e = e.children()[i]
    return e


def _replace(e: Expr, path: tuple[int, ...], new: Expr) -> Expr:
    if not path:
        return new
    i = path[0]
    if isinstance(e, Unary):
        return Unary(e.op, _replace(e.a, path[1:], new))
    a, b = e.a, e.b
    if i == 0:
        return Binary(e.op, _replace(a, path[1:], new), b)
    return Binary(e.op, a, _replace(b, path[1:], new))


def rewrite(e: Expr, db: EquivClassDb, cfg: RewriteConfig | None = None) -> Expr:
    """Inflate e with semantics-preserving MBA substitutions."""
    if cfg is None:
        cfg = RewriteConfig()
    if cfg.bound_max == 0:
        return e
    if db is None or not db.classes:
        raise EmptyDb("class database has no classes")
    rules = _op_rules(db)
    rng = random.Random(cfg.seed)
    n = rng.randint(cfg.bound_min, cfg.bound_max)
    top_phase = math.ceil(n * cfg.top_level_phase_fraction)
    out = e
    for it in range(n):
        top_only = it < top_phase
        replaced = False
        for _ in range(1 + MAX_REDRAWS):
            paths = _paths(out, top_only)
            if not paths:
                break
            path = paths[rng.randrange(len(paths))]
            node = _get(out, path)
            if isinstance(node, Binary):
                alts = rules.get(("b", node.op))
                if not alts:
                    continue
                member = alts[rng.randrange(len(alts))]
                inst = substitute(member, {"x": node.a, "y": node.b})
            else:
                alts = rules.get(("u", node.op))
                if not alts:
                    continue
                member = alts[rng.randrange(len(alts))]
                inst = substitute(member, {"x": node.a})
            if out.size - node.size + inst.size > cfg.max_nodes:
                continue
            out = _replace(out, path, inst)
            replaced = True
            break
        if not replaced:
            continue  # iteration forfeited
    verdict = check_equiv(e, out, RandomSampling(1000, cfg.seed ^ 0x9E3779B9))
    if not verdict.equivalent:  # pragma: no cover - guards a soundness bug
        raise AssertionError(
            f"rewrite changed semantics: {verdict.counterexample}"
        )
    return out


def rewrite_depth_profile(
    e: Expr,
    db: EquivClassDb,
    bounds: list[int],
    samples: int = 30,
    seed: int = 0,
) -> list[tuple[int, float, float]]:
    """Per-bound (bound, mean normalized depth, mean raw node count)."""
    if sorted(bounds) != list(bounds):
        raise ValueError("bounds must be sorted ascending")
    table = []
    for bound in bounds:
        depths = []
        nodes = []
        for i in range(samples):
            cfg = RewriteConfig(bound, bound, seed=hash((seed, bound, i)) & 0x7FFFFFFF)
            out = rewrite(e, db, cfg)
            depths.append(syntactic_depth(normalize(out)))
            nodes.append(out.size)
        table.append((bound, sum(depths) / samples, sum(nodes) / samples))
    return table
