"""Symbolic simplification attack.

Dynamic mode substitutes the observed key, folds the key encodings to their
0/1 constants (which nullifies non-selected slots), and then tries to undo
MBA rewriting with an inverse rule library built from the equivalence-class
database plus a few classic identities.  Static mode keeps k symbolic; the
merged slots can then never collapse to a single core semantics.
"""

from __future__ import annotations

from ..eqdb import EquivClassDb
from ..expr import (
    Binary,
    Const,
    Expr,
    KeyByte,
    MASK,
    RandomSampling,
    Unary,
    Var,
    _apply_binary,
    check_equiv,
    normalize,
    parse_expr,
    substitute,
    to_text,
)
from .base import AttackReport, AttackTarget, Dynamic, Timer

DEFAULT_RULE_BUDGET = 12


def subst_key(e: Expr, k: int) -> Expr:
    t = type(e)
    if t is Var:
        return Const(k) if e.name == "k" else e
    if t is KeyByte:
        return Const((k >> (8 * e.index)) & 0xFF)
    if t is Unary:
        return Unary(e.op, subst_key(e.a, k))
    if t is Binary:
        return Binary(e.op, subst_key(e.a, k), subst_key(e.b, k))
    return e


def fold(e: Expr) -> Expr:
    """Local constant folding and identity collapse, bottom-up, without
    any commutative reordering (so rewrite-rule instances stay matchable)."""
    t = type(e)
    if t is Unary:
        a = fold(e.a)
        if type(a) is Const:
            return Const((MASK ^ a.value) if e.op == "not" else -a.value)
        if type(a) is Unary and a.op == e.op:
            return a.a
        return e if a is e.a else Unary(e.op, a)
    if t is not Binary:
        return e
    a = fold(e.a)
    b = fold(e.b)
    ca = type(a) is Const
    cb = type(b) is Const
    op = e.op
    if ca and cb:
        return Const(_apply_binary(op, a.value, b.value))
    if op == "mul":
        if (ca and a.value == 0) or (cb and b.value == 0):
            return Const(0)
        if ca and a.value == 1:
            return b
        if cb and b.value == 1:
            return a
    elif op == "add":
        if ca and a.value == 0:
            return b
        if cb and b.value == 0:
            return a
    elif op == "sub":
        if cb and b.value == 0:
            return a
    elif op == "and":
        if (ca and a.value == 0) or (cb and b.value == 0):
            return Const(0)
        if ca and a.value == MASK:
            return b
        if cb and b.value == MASK:
            return a
    elif op == "or":
        if (ca and a.value == MASK) or (cb and b.value == MASK):
            return Const(MASK)
        if ca and a.value == 0:
            return b
        if cb and b.value == 0:
            return a
    elif op == "xor":
        if ca and a.value == 0:
            return b
        if cb and b.value == 0:
            return a
    elif op in ("shl", "shr"):
        if ca and a.value == 0:
            return Const(0)
        if cb and (b.value & 63) == 0:
            return a
    return e if (a is e.a and b is e.b) else Binary(op, a, b)


# ---------------------------------------------------------------------------
# Inverse rule library: trie over preorder pattern tokens


class _Trie:
    __slots__ = ("edges", "rules")

    def __init__(self):
        self.edges: dict = {}
        self.rules: list = []  # (replacement, var_order) at terminal nodes


def _pattern_tokens(p: Expr, order: list[str]) -> list:
    toks: list = []

    def walk(n: Expr):
        t = type(n)
        if t is Var:
            if n.name in order:
                toks.append(("r", order.index(n.name)))
            else:
                order.append(n.name)
                toks.append(("w", len(order) - 1))
        elif t is Const:
            toks.append(("c", n.value))
        elif t is KeyByte:
            toks.append(("kb", n.index))
        elif t is Unary:
            toks.append(("u", n.op))
            walk(n.a)
        else:
            toks.append(("b", n.op))
            walk(n.a)
            walk(n.b)

    walk(p)
    return toks


EXTRA_RULES: list[tuple[str, str]] = [
    ("(add (xor x y) (mul 2 (and x y)))", "(add x y)"),
    ("(add (mul 2 (and x y)) (xor x y))", "(add x y)"),
    ("(and (not x) (not y))", "(not (or x y))"),
    ("(or (not x) (not y))", "(not (and x y))"),
    ("(sub (or x y) (and x y))", "(xor x y)"),
    ("(add (and x y) (or x y))", "(add x y)"),
]


_TRIE_CACHE: dict[int, _Trie] = {}


def build_rule_trie(db: EquivClassDb | None) -> _Trie:
    if db is not None and id(db) in _TRIE_CACHE:
        return _TRIE_CACHE[id(db)]
    root = _Trie()

    def add_rule(pattern: Expr, repl: Expr):
        if repl.size >= pattern.size:
            return
        order: list[str] = []
        toks = _pattern_tokens(pattern, order)
        from ..expr import free_vars

        if not free_vars(repl) <= set(order):
            return
        node = root
        for tok in toks:
            node = node.edges.setdefault(tok, _Trie())
        node.rules.append((repl, tuple(order)))

    for src, dst in EXTRA_RULES:
        add_rule(parse_expr(src), parse_expr(dst))
    if db is not None:
        for rec in db.classes.values():
            for m in rec.members:
                if m != rec.representative:
                    add_rule(m, rec.representative)
        if len(_TRIE_CACHE) > 8:
            _TRIE_CACHE.clear()
        _TRIE_CACHE[id(db)] = root
    return root


def _match(root: _Trie, e: Expr):
    """First rule instance anchored at e, or None.  DFS over the trie with
    a stack of pending subtrees; 'w' edges capture whole subtrees."""
    best: list = []

    def dfs(node: _Trie, pending: tuple, bindings: tuple):
        if best:
            return
        if not pending:
            if node.rules:
                best.append((node.rules[0], bindings))
            return
        head, rest = pending[0], pending[1:]
        for tok, child in node.edges.items():
            kind = tok[0]
            if kind == "w":
                dfs(child, rest, bindings + (head,))
            elif kind == "r":
                if bindings[tok[1]] == head:
                    dfs(child, rest, bindings)
            elif kind == "c":
                if type(head) is Const and head.value == tok[1]:
                    dfs(child, rest, bindings)
            elif kind == "kb":
                if type(head) is KeyByte and head.index == tok[1]:
                    dfs(child, rest, bindings)
            elif kind == "u":
                if type(head) is Unary and head.op == tok[1]:
                    dfs(child, (head.a,) + rest, bindings)
            else:
                if type(head) is Binary and head.op == tok[1]:
                    dfs(child, (head.a, head.b) + rest, bindings)
            if best:
                return

    dfs(root, (e,), ())
    if not best:
        return None
    (repl, order), bindings = best[0]
    env = {name: bindings[i] for i, name in enumerate(order)}
    return substitute(repl, env)


def _rewrite_once(e: Expr, root: _Trie):
    """Replace the first (preorder) matching subexpression; None if no match."""
    m = _match(root, e)
    if m is not None:
        return m
    if type(e) is Unary:
        sub = _rewrite_once(e.a, root)
        if sub is not None:
            return Unary(e.op, sub)
        return None
    if type(e) is Binary:
        sub = _rewrite_once(e.a, root)
        if sub is not None:
            return Binary(e.op, sub, e.b)
        sub = _rewrite_once(e.b, root)
        if sub is not None:
            return Binary(e.op, e.a, sub)
        return None
    return None


def simplify_expr(
    e: Expr, db: EquivClassDb | None, rule_budget: int
) -> tuple[Expr, int]:
    root = build_rule_trie(db)
    out = fold(e)
    spent = 0
    while spent < rule_budget:
        nxt = _rewrite_once(out, root)
        if nxt is None:
            break
        out = fold(nxt)
        spent += 1
    return out, spent


def symex_simplify(
    t: AttackTarget,
    db: EquivClassDb | None = None,
    rule_budget: int = DEFAULT_RULE_BUDGET,
    seed: int = 0,
) -> AttackReport:
    dynamic = isinstance(t.mode, Dynamic)
    with Timer() as tm:
        expr = t.handler.merged
        if dynamic:
            expr = subst_key(expr, t.mode.k)
        result, spent = simplify_expr(expr, db, rule_budget)
        truth = normalize(t.ground_truth.expr)
        success = normalize(result) == truth
        if success:
            # scoring soundness: structural recovery must be real equivalence
            verdict = check_equiv(result, t.ground_truth.expr, RandomSampling(1000, seed))
            success = verdict.equivalent
    return AttackReport(
        attack="symex",
        mode="dynamic" if dynamic else "static",
        success=success,
        time_ms=tm.ms,
        budget_spent=spent,
        seed=seed,
        output=to_text(result),
        expr_size=t.handler.merged.size,
        detail={"result_size": result.size},
    )
