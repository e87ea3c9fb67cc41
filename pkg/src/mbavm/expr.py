"""Expression AST over 64-bit bit-vector semantics.

This is the universal carrier for the whole workbench: handler semantics,
MBA rewrite rules, key encodings, and merged handler bodies are all values
of :class:`Expr`.  Arithmetic wraps modulo 2**64, shift amounts are masked
to their low 6 bits, and ``divisible`` is an opaque binary operation that
evaluates ``(lhs mod rhs) == 0`` to 0/1 (0 when rhs is 0).
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Iterator

import numpy as np

MASK = (1 << 64) - 1
SHIFT_MASK = 63

UNARY_OPS = ("not", "neg")
BINARY_OPS = ("add", "sub", "mul", "and", "or", "xor", "shl", "shr", "divisible")
COMMUTATIVE_OPS = frozenset({"add", "mul", "and", "or", "xor"})

_UNARY_RANK = {op: i for i, op in enumerate(UNARY_OPS)}
_BINARY_RANK = {op: i for i, op in enumerate(BINARY_OPS)}

# Edge-case input patterns used for equivalence sampling and fuzz verification.
EDGE_PATTERNS = (
    0x0000000000000000,
    0xFFFFFFFFFFFFFFFF,
    0x8000000000000000,
    0x0000000000000001,
    0xAAAAAAAAAAAAAAAA,
    0x5555555555555555,
)


class UnboundVariable(KeyError):
    """An expression variable has no binding in the evaluation environment."""


class NarrowingUnsound(ValueError):
    """ExhaustiveNarrow was requested for a non width-polymorphic expression."""


class ExprParseError(ValueError):
    """Malformed canonical expression text."""


class Expr:
    """Base class; all nodes are immutable and hash-cached at construction."""

    __slots__ = ("_hash", "size")

    _hash: int
    size: int  # syntactic depth: variable/constant occurrences + operators

    def __hash__(self) -> int:
        return self._hash

    def children(self) -> tuple["Expr", ...]:
        return ()

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"Expr({to_text(self)})"


class Var(Expr):
    __slots__ = ("name",)

    def __init__(self, name: str):
        object.__setattr__(self, "name", name)
        object.__setattr__(self, "size", 1)
        object.__setattr__(self, "_hash", hash(("v", name)))


class Const(Expr):
    __slots__ = ("value",)

    def __init__(self, value: int):
        object.__setattr__(self, "value", value & MASK)
        object.__setattr__(self, "size", 1)
        object.__setattr__(self, "_hash", hash(("c", self.value)))


class KeyByte(Expr):
    """Extracts byte ``index`` (0 = least significant) of the key ``k``."""

    __slots__ = ("index",)

    def __init__(self, index: int):
        if not 0 <= index < 8:
            raise ValueError(f"key byte index out of range: {index}")
        object.__setattr__(self, "index", index)
        object.__setattr__(self, "size", 1)
        object.__setattr__(self, "_hash", hash(("kb", index)))


class Unary(Expr):
    __slots__ = ("op", "a")

    def __init__(self, op: str, a: Expr):
        if op not in _UNARY_RANK:
            raise ValueError(f"unknown unary op: {op}")
        object.__setattr__(self, "op", op)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "size", 1 + a.size)
        object.__setattr__(self, "_hash", hash(("u", op, a._hash)))

    def children(self):
        return (self.a,)


class Binary(Expr):
    __slots__ = ("op", "a", "b")

    def __init__(self, op: str, a: Expr, b: Expr):
        if op not in _BINARY_RANK:
            raise ValueError(f"unknown binary op: {op}")
        object.__setattr__(self, "op", op)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "size", 1 + a.size + b.size)
        object.__setattr__(self, "_hash", hash(("b", op, a._hash, b._hash)))

    def children(self):
        return (self.a, self.b)


def _eq(a: Expr, b: Expr) -> bool:
    if a is b:
        return True
    if a._hash != b._hash or type(a) is not type(b):
        return False
    t = type(a)
    if t is Var:
        return a.name == b.name
    if t is Const:
        return a.value == b.value
    if t is KeyByte:
        return a.index == b.index
    if t is Unary:
        return a.op == b.op and _eq(a.a, b.a)
    return a.op == b.op and _eq(a.a, b.a) and _eq(a.b, b.b)


for _cls in (Expr, Var, Const, KeyByte, Unary, Binary):
    _cls.__eq__ = _eq  # type: ignore[assignment]
    _cls.__hash__ = Expr.__hash__  # type: ignore[assignment]

X = Var("x")
Y = Var("y")
C = Var("c")
K = Var("k")


def free_vars(e: Expr) -> frozenset[str]:
    """Names of variables occurring in ``e``; KeyByte counts as a use of k."""
    out: set[str] = set()
    stack = [e]
    while stack:
        n = stack.pop()
        t = type(n)
        if t is Var:
            out.add(n.name)
        elif t is KeyByte:
            out.add("k")
        else:
            stack.extend(n.children())
    return frozenset(out)


def subexpressions(e: Expr) -> Iterator[Expr]:
    """All nodes of ``e`` in preorder."""
    stack = [e]
    while stack:
        n = stack.pop()
        yield n
        ch = n.children()
        if ch:
            stack.extend(reversed(ch))


def substitute(e: Expr, env: dict[str, Expr]) -> Expr:
    """Replace variables by expressions (names absent from env stay)."""
    t = type(e)
    if t is Var:
        return env.get(e.name, e)
    if t is Const or t is KeyByte:
        return e
    if t is Unary:
        a = substitute(e.a, env)
        return e if a is e.a else Unary(e.op, a)
    a = substitute(e.a, env)
    b = substitute(e.b, env)
    return e if (a is e.a and b is e.b) else Binary(e.op, a, b)


# ---------------------------------------------------------------------------
# Evaluation


def _apply_binary(op: str, a: int, b: int) -> int:
    if op == "add":
        return (a + b) & MASK
    if op == "sub":
        return (a - b) & MASK
    if op == "mul":
        return (a * b) & MASK
    if op == "and":
        return a & b
    if op == "or":
        return a | b
    if op == "xor":
        return a ^ b
    if op == "shl":
        return (a << (b & SHIFT_MASK)) & MASK
    if op == "shr":
        return a >> (b & SHIFT_MASK)
    # divisible
    if b == 0:
        return 0
    return 1 if a % b == 0 else 0


def eval_expr(e: Expr, env: dict[str, int]) -> int:
    """Evaluate under the fixed 64-bit semantics; raises UnboundVariable."""
    t = type(e)
    if t is Const:
        return e.value
    if t is Var:
        try:
            return env[e.name] & MASK
        except KeyError:
            raise UnboundVariable(e.name) from None
    if t is KeyByte:
        try:
            return (env["k"] >> (8 * e.index)) & 0xFF
        except KeyError:
            raise UnboundVariable("k") from None
    if t is Unary:
        v = eval_expr(e.a, env)
        return (MASK ^ v) if e.op == "not" else ((-v) & MASK)
    a = eval_expr(e.a, env)
    b = eval_expr(e.b, env)
    return _apply_binary(e.op, a, b)


_U64 = np.uint64


def eval_expr_vec(e: Expr, env: dict[str, np.ndarray]) -> np.ndarray:
    """Vectorized evaluation over numpy uint64 arrays (iterative walk)."""
    memo: dict[int, np.ndarray] = {}
    c63 = _U64(SHIFT_MASK)
    with np.errstate(over="ignore"):
        stack: list[tuple[Expr, bool]] = [(e, False)]
        while stack:
            node, ready = stack.pop()
            key = id(node)
            if key in memo:
                continue
            t = type(node)
            if t is Const:
                memo[key] = _U64(node.value)
                continue
            if t is Var:
                try:
                    memo[key] = env[node.name]
                except KeyError:
                    raise UnboundVariable(node.name) from None
                continue
            if t is KeyByte:
                try:
                    kv = env["k"]
                except KeyError:
                    raise UnboundVariable("k") from None
                memo[key] = (kv >> _U64(8 * node.index)) & _U64(0xFF)
                continue
            if not ready:
                stack.append((node, True))
                for ch in node.children():
                    if id(ch) not in memo:
                        stack.append((ch, False))
                continue
            if t is Unary:
                v = memo[id(node.a)]
                memo[key] = ~v if node.op == "not" else (_U64(0) - v)
                continue
            a = memo[id(node.a)]
            b = memo[id(node.b)]
            op = node.op
            if op == "add":
                r = a + b
            elif op == "sub":
                r = a - b
            elif op == "mul":
                r = a * b
            elif op == "and":
                r = a & b
            elif op == "or":
                r = a | b
            elif op == "xor":
                r = a ^ b
            elif op == "shl":
                r = a << (b & c63)
            elif op == "shr":
                r = a >> (b & c63)
            else:  # divisible
                bb = np.where(b == 0, _U64(1), b)
                r = np.where((b != 0) & (a % bb == 0), _U64(1), _U64(0))
            memo[key] = r
    res = memo[id(e)]
    if np.isscalar(res) or getattr(res, "shape", None) == ():
        # broadcast scalar results (e.g. constant expressions) to input shape
        n = 0
        for v in env.values():
            n = max(n, np.size(v))
        res = np.full(max(n, 1), res, dtype=_U64)
    return res


# ---------------------------------------------------------------------------
# Canonical ordering and normalization


def _order_key(e: Expr):
    t = type(e)
    if t is Const:
        return (0, e.value)
    if t is Var:
        return (1, e.name)
    if t is KeyByte:
        return (2, e.index)
    if t is Unary:
        return (3, _UNARY_RANK[e.op], _order_key(e.a))
    return (4, _BINARY_RANK[e.op], _order_key(e.a), _order_key(e.b))


def _add_terms(e: Expr, sign: int, coeffs: dict, order: list, acc: list) -> None:
    """Collect e into an additive chain: coeffs maps core -> signed coeff."""
    t = type(e)
    if t is Const:
        acc[0] = (acc[0] + sign * e.value) & MASK
        return
    if t is Binary:
        if e.op == "add":
            _add_terms(e.a, sign, coeffs, order, acc)
            _add_terms(e.b, sign, coeffs, order, acc)
            return
        if e.op == "sub":
            _add_terms(e.a, sign, coeffs, order, acc)
            _add_terms(e.b, -sign, coeffs, order, acc)
            return
        if e.op == "mul" and type(e.a) is Const:
            core = e.b
            c = e.a.value
            if core not in coeffs:
                coeffs[core] = 0
                order.append(core)
            coeffs[core] = (coeffs[core] + sign * c) % (1 << 64)
            return
    if t is Unary and e.op == "neg":
        _add_terms(e.a, -sign, coeffs, order, acc)
        return
    if e not in coeffs:
        coeffs[e] = 0
        order.append(e)
    coeffs[e] = (coeffs[e] + sign) % (1 << 64)


def _rebuild_sum(const: int, terms: list[tuple[Expr, int]]) -> Expr:
    """terms: (core, coeff mod 2**64). Rebuild canonical +/- chain."""
    items = sorted(
        ((core, c) for core, c in terms if c != 0),
        key=lambda t: _order_key(t[0]),
    )
    if not items:
        return Const(const)
    pos_t = [(core, c) for core, c in items if c < 1 << 63]
    neg_t = [(core, c) for core, c in items if c >= 1 << 63]
    if not pos_t and const == 0:
        # avoid a spurious neg wrapper: keep one big coefficient positive
        for i, (core, c) in enumerate(neg_t):
            if c != MASK:
                pos_t.append((core, c))
                del neg_t[i]
                break
    pos = [core if c == 1 else Binary("mul", Const(c), core) for core, c in pos_t]
    neg = [
        core if c == MASK else Binary("mul", Const((1 << 64) - c), core)
        for core, c in neg_t
    ]
    # keep constants small: a negative constant renders as a trailing sub,
    # but only when a positive term exists to subtract from
    if const >= 1 << 63 and pos:
        neg.insert(0, Const((1 << 64) - const))
    elif const != 0:
        pos.insert(0, Const(const))
    if not pos:
        acc = neg[0]
        for t in neg[1:]:
            acc = Binary("add", acc, t)
        return Unary("neg", acc)
    acc = pos[0]
    for t in pos[1:]:
        acc = Binary("add", acc, t)
    for t in neg:
        acc = Binary("sub", acc, t)
    return acc


def _mul_factors(e: Expr, out: list[Expr], acc: list) -> None:
    t = type(e)
    if t is Const:
        acc[0] = (acc[0] * e.value) & MASK
        return
    if t is Binary and e.op == "mul":
        _mul_factors(e.a, out, acc)
        _mul_factors(e.b, out, acc)
        return
    if t is Unary and e.op == "neg":
        acc[1] = -acc[1]
        _mul_factors(e.a, out, acc)
        return
    out.append(e)


def _bitchain(e: Expr, op: str, out: list[Expr], acc: list) -> None:
    t = type(e)
    if t is Const:
        if op == "and":
            acc[0] &= e.value
        elif op == "or":
            acc[0] |= e.value
        else:
            acc[0] ^= e.value
        return
    if t is Binary and e.op == op:
        _bitchain(e.a, op, out, acc)
        _bitchain(e.b, op, out, acc)
        return
    out.append(e)


def _norm_node(e: Expr) -> Expr:
    """Simplify one node whose children are already normalized."""
    t = type(e)
    if t is Unary:
        a = e.a
        if type(a) is Const:
            return Const((MASK ^ a.value) if e.op == "not" else -a.value)
        if type(a) is Unary and a.op == e.op:
            return a.a  # ~~x, -(-x)
        if e.op == "neg":
            # canonicalize -(x) through the additive chain
            coeffs: dict = {}
            order: list = []
            acc = [0]
            _add_terms(e, 1, coeffs, order, acc)
            return _rebuild_sum(acc[0], [(c, coeffs[c]) for c in order])
        return e
    if t is not Binary:
        return e
    a, b = e.a, e.b
    op = e.op
    if op in ("add", "sub"):
        coeffs: dict = {}
        order: list = []
        acc = [0]
        _add_terms(e, 1, coeffs, order, acc)
        return _rebuild_sum(acc[0], [(c, coeffs[c]) for c in order])
    if op == "mul":
        factors: list[Expr] = []
        acc = [1, 1]
        _mul_factors(e, factors, acc)
        const = (acc[0] * acc[1]) & MASK if acc[1] == 1 else (-acc[0]) & MASK
        if const == 0:
            return Const(0)
        factors.sort(key=_order_key)
        if not factors:
            return Const(const)
        out = factors[0]
        for f in factors[1:]:
            out = Binary("mul", out, f)
        if const == MASK:
            # multiply by -1 renders as negation to keep constants small
            out = Unary("neg", out)
        elif const != 1:
            out = Binary("mul", Const(const), out)
        return out
    if op in ("and", "or", "xor"):
        items: list[Expr] = []
        acc = [MASK if op == "and" else 0]
        _bitchain(e, op, items, acc)
        const = acc[0]
        if op == "and" and const == 0:
            return Const(0)
        if op == "or" and const == MASK:
            return Const(MASK)
        uniq: list[Expr] = []
        if op == "xor":
            counts: dict[Expr, int] = {}
            order2: list[Expr] = []
            for it in items:
                if it not in counts:
                    counts[it] = 0
                    order2.append(it)
                counts[it] ^= 1
            uniq = [it for it in order2 if counts[it]]
        else:
            seen: set[Expr] = set()
            for it in items:
                if it not in seen:
                    seen.add(it)
                    uniq.append(it)
        uniq.sort(key=_order_key)
        if not uniq:
            return Const(const)
        out = uniq[0]
        for it in uniq[1:]:
            out = Binary(op, out, it)
        skip_const = (
            (op == "and" and const == MASK)
            or (op == "or" and const == 0)
            or (op == "xor" and const == 0)
        )
        if not skip_const:
            out = Binary(op, Const(const), out)
        return out
    if op in ("shl", "shr"):
        if type(a) is Const and a.value == 0:
            return Const(0)
        if type(b) is Const:
            amt = b.value & SHIFT_MASK
            if amt == 0:
                return a
            if type(a) is Const:
                return Const(_apply_binary(op, a.value, amt))
            return Binary(op, a, Const(b.value))
        return e
    # divisible
    if type(a) is Const and type(b) is Const:
        return Const(_apply_binary("divisible", a.value, b.value))
    return e


def normalize(e: Expr) -> Expr:
    """Fixed-point normal form: constant folding, identities, commutative
    chains flattened/sorted, additive chains collected with cancellation."""
    t = type(e)
    if t in (Var, Const, KeyByte):
        return e
    if t is Unary:
        a = normalize(e.a)
        node = e if a is e.a else Unary(e.op, a)
        return _norm_node(node)
    a = normalize(e.a)
    b = normalize(e.b)
    node = e if (a is e.a and b is e.b) else Binary(e.op, a, b)
    out = _norm_node(node)
    # _norm_node produces chains of already-normal children; one extra pass
    # catches cross-chain interactions (e.g. a mul folding exposing an add).
    if out is not node and out.size < node.size:
        out2 = normalize(out)
        if out2.size < out.size:
            return out2
    return out


def syntactic_depth(e: Expr) -> int:
    """Count of variable/constant occurrences plus operators."""
    return e.size


# ---------------------------------------------------------------------------
# Equivalence checking


@dataclass(frozen=True)
class RandomSampling:
    n: int = 10_000
    seed: int = 0


@dataclass(frozen=True)
class ExhaustiveNarrow:
    bits: int = 8


@dataclass(frozen=True)
class SmtExport:
    path: str = "query.smt2"


@dataclass(frozen=True)
class EquivVerdict:
    status: str  # equiv_sampling | equiv_exhaustive | inequivalent | unknown
    detail: object = None

    @property
    def equivalent(self) -> bool:
        return self.status in ("equiv_sampling", "equiv_exhaustive")

    @property
    def counterexample(self) -> dict | None:
        return self.detail if self.status == "inequivalent" else None


def _sample_envs(names: list[str], n: int, seed: int) -> dict[str, np.ndarray]:
    """n random 64-bit assignments plus the edge-pattern cartesian product."""
    rng = random.Random(seed)
    cols = {
        name: [rng.getrandbits(64) for _ in range(n)] for name in sorted(names)
    }
    if names:
        import itertools

        for combo in itertools.product(EDGE_PATTERNS, repeat=len(names)):
            for name, v in zip(sorted(names), combo):
                cols[name].append(v)
    return {name: np.array(vals, dtype=_U64) for name, vals in cols.items()}


def is_width_polymorphic(e: Expr, bits: int) -> bool:
    """True when 8-bit exhaustive equivalence transfers to 64 bits: no
    shifts with non-constant or too-large amounts, no divisible/key-byte
    nodes, all constants representable in ``bits`` bits."""
    for n in subexpressions(e):
        t = type(n)
        if t is KeyByte:
            return False
        if t is Const and n.value >= (1 << bits):
            return False
        if t is Binary:
            if n.op == "divisible":
                return False
            if n.op in ("shl", "shr"):
                if type(n.b) is not Const or n.b.value >= bits:
                    return False
    return True


def _eval_narrow(e: Expr, env: dict[str, np.ndarray], bits: int) -> np.ndarray:
    mask = _U64((1 << bits) - 1)
    amt_mask = _U64(bits - 1)
    memo: dict[int, np.ndarray] = {}
    with np.errstate(over="ignore"):
        stack = [(e, False)]
        while stack:
            node, ready = stack.pop()
            if id(node) in memo:
                continue
            t = type(node)
            if t is Const:
                memo[id(node)] = _U64(node.value) & mask
                continue
            if t is Var:
                memo[id(node)] = env[node.name]
                continue
            if not ready:
                stack.append((node, True))
                for ch in node.children():
                    stack.append((ch, False))
                continue
            if t is Unary:
                v = memo[id(node.a)]
                memo[id(node)] = ((~v) if node.op == "not" else (_U64(0) - v)) & mask
                continue
            a = memo[id(node.a)]
            b = memo[id(node.b)]
            op = node.op
            if op == "add":
                r = a + b
            elif op == "sub":
                r = a - b
            elif op == "mul":
                r = a * b
            elif op == "and":
                r = a & b
            elif op == "or":
                r = a | b
            elif op == "xor":
                r = a ^ b
            elif op == "shl":
                r = a << (b & amt_mask)
            else:
                r = a >> (b & amt_mask)
            memo[id(node)] = r & mask
    return memo[id(e)]


def to_smt2(a: Expr, b: Expr) -> str:
    """QF_BV disequality query: sat iff a and b differ somewhere."""

    def conv(e: Expr) -> str:
        t = type(e)
        if t is Const:
            return f"(_ bv{e.value} 64)"
        if t is Var:
            return e.name
        if t is KeyByte:
            lo = 8 * e.index
            return f"((_ zero_extend 56) ((_ extract {lo + 7} {lo}) k))"
        if t is Unary:
            return f"({'bvnot' if e.op == 'not' else 'bvneg'} {conv(e.a)})"
        ops = {
            "add": "bvadd",
            "sub": "bvsub",
            "mul": "bvmul",
            "and": "bvand",
            "or": "bvor",
            "xor": "bvxor",
        }
        if e.op in ops:
            return f"({ops[e.op]} {conv(e.a)} {conv(e.b)})"
        if e.op in ("shl", "shr"):
            fn = "bvshl" if e.op == "shl" else "bvlshr"
            return f"({fn} {conv(e.a)} (bvand {conv(e.b)} (_ bv63 64)))"
        # divisible
        av, bv = conv(e.a), conv(e.b)
        return (
            f"(ite (and (distinct {bv} (_ bv0 64)) "
            f"(= (bvurem {av} {bv}) (_ bv0 64))) (_ bv1 64) (_ bv0 64))"
        )

    names = sorted(free_vars(a) | free_vars(b))
    lines = ["(set-logic QF_BV)"]
    lines += [f"(declare-const {n} (_ BitVec 64))" for n in names]
    lines.append(f"(assert (distinct {conv(a)} {conv(b)}))")
    lines.append("(check-sat)")
    return "\n".join(lines) + "\n"


def check_equiv(a: Expr, b: Expr, strategy=None) -> EquivVerdict:
    """Layered equivalence check between two expressions."""
    if strategy is None:
        strategy = RandomSampling()
    names = sorted(free_vars(a) | free_vars(b))
    if isinstance(strategy, SmtExport):
        with open(strategy.path, "w", encoding="utf-8") as fh:
            fh.write(to_smt2(a, b))
        return EquivVerdict("unknown", strategy.path)
    if isinstance(strategy, ExhaustiveNarrow):
        bits = strategy.bits
        if not (is_width_polymorphic(a, bits) and is_width_polymorphic(b, bits)):
            raise NarrowingUnsound(
                "expressions are not width-polymorphic at the requested width"
            )
        total = (1 << bits) ** max(len(names), 1)
        if total > 1 << 22:
            raise ValueError("exhaustive narrow domain too large")
        grids = np.meshgrid(
            *[np.arange(1 << bits, dtype=_U64) for _ in names], indexing="ij"
        )
        env = {n: g.ravel() for n, g in zip(names, grids)}
        va = _eval_narrow(a, env, bits)
        vb = _eval_narrow(b, env, bits)
        diff = np.nonzero(va != vb)[0]
        if diff.size:
            i = int(diff[0])
            cex = {n: int(env[n][i]) for n in names}
            return EquivVerdict("inequivalent", cex)
        return EquivVerdict("equiv_exhaustive", bits)
    env = _sample_envs(names, strategy.n, strategy.seed)
    va = eval_expr_vec(a, env)
    vb = eval_expr_vec(b, env)
    diff = np.nonzero(va != vb)[0]
    if diff.size:
        i = int(diff[0])
        cex = {n: int(env[n][i]) for n in names}
        return EquivVerdict("inequivalent", cex)
    n_total = strategy.n + (len(EDGE_PATTERNS) ** len(names) if names else 0)
    return EquivVerdict("equiv_sampling", n_total)


# ---------------------------------------------------------------------------
# Canonical text format: fully parenthesized prefix notation


def to_text(e: Expr) -> str:
    t = type(e)
    if t is Var:
        return e.name
    if t is Const:
        return str(e.value) if e.value < 1 << 16 else hex(e.value)
    if t is KeyByte:
        return f"(keybyte {e.index})"
    if t is Unary:
        return f"({e.op} {to_text(e.a)})"
    return f"({e.op} {to_text(e.a)} {to_text(e.b)})"


def _tokenize(text: str) -> list[str]:
    return text.replace("(", " ( ").replace(")", " ) ").split()


def parse_expr(text: str) -> Expr:
    toks = _tokenize(text)
    pos = 0

    def parse() -> Expr:
        nonlocal pos
        if pos >= len(toks):
            raise ExprParseError("unexpected end of expression")
        tok = toks[pos]
        pos += 1
        if tok == ")":
            raise ExprParseError("unexpected ')'")
        if tok != "(":
            return _atom(tok)
        if pos >= len(toks):
            raise ExprParseError("unexpected end after '('")
        head = toks[pos]
        pos += 1
        if head == "keybyte":
            idx_tok = toks[pos]
            pos += 1
            node = KeyByte(int(idx_tok, 0))
        elif head in UNARY_OPS:
            node = Unary(head, parse())
        elif head in BINARY_OPS:
            a = parse()
            b = parse()
            node = Binary(head, a, b)
        else:
            raise ExprParseError(f"unknown operator: {head}")
        if pos >= len(toks) or toks[pos] != ")":
            raise ExprParseError("missing ')'")
        pos += 1
        return node

    def _atom(tok: str) -> Expr:
        if tok[0].isdigit() or (tok[0] == "-" and len(tok) > 1):
            try:
                return Const(int(tok, 0))
            except ValueError:
                raise ExprParseError(f"bad literal: {tok}") from None
        if tok.isidentifier():
            return Var(tok)
        raise ExprParseError(f"bad token: {tok}")

    e = parse()
    if pos != len(toks):
        raise ExprParseError("trailing tokens after expression")
    return e
