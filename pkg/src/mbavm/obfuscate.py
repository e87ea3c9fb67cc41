"""End-to-end obfuscation pipeline.

SSA input -> superoperators (recursive use-def inlining) -> handlers merging
3-5 keyed core semantics -> MBA rewriting -> bytecode emission.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field, replace as dc_replace

import numpy as np

from .bytecode import BytecodeProgram, Step
from .eqdb import EquivClassDb
from .expr import (
    Binary,
    Const,
    Expr,
    Unary,
    Var,
    eval_expr_vec,
    free_vars,
    normalize,
    subexpressions,
    substitute,
    syntactic_depth,
    to_text,
)
from .keyenc import (
    KeyEncoding,
    KeySet,
    check_point_property,
    gen_factorization_encoding,
    make_key_set,
    synthesize_point_function,
)
from .rewrite import RewriteConfig, rewrite
from .tac import SsaProgram, TacProgram, eval_tac, to_ssa

_U64 = np.uint64


class UnmappedSemantics(KeyError):
    pass


class TooManyRegisters(ValueError):
    pass


@dataclass(frozen=True)
class CoreSemantics:
    expr: Expr  # over {x, y, c} only
    semantic_depth_hint: int

    def key(self) -> str:
        return to_text(self.expr)


@dataclass(frozen=True)
class Handler:
    id: int
    key_set: KeySet
    slots: tuple[tuple[KeyEncoding, CoreSemantics], ...]
    merged: Expr


@dataclass(frozen=True)
class HandlerSet:
    handlers: tuple[Handler, ...]
    exit_handler_id: int

    def by_id(self, hid: int) -> Handler:
        for h in self.handlers:
            if h.id == hid:
                return h
        raise KeyError(hid)

    def semantics_index(self) -> dict[str, list[tuple[int, int]]]:
        index: dict[str, list[tuple[int, int]]] = {}
        for h in self.handlers:
            for si, (_, sem) in enumerate(h.slots):
                index.setdefault(sem.key(), []).append((h.id, si))
        return index


@dataclass(frozen=True)
class ObfuscationConfig:
    superop_bounds: tuple[int, int] = (3, 12)
    handler_count: int = 64
    slots_min: int = 3
    slots_max: int = 5
    rewrite: RewriteConfig = field(default_factory=RewriteConfig)
    prime_bits: int = 16
    use_mba: bool = True
    use_superops: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.superop_bounds[0] > self.superop_bounds[1]:
            raise ValueError("superop bounds must satisfy min <= max")
        if not 1 <= self.slots_min <= self.slots_max <= 5:
            raise ValueError("slot count range must lie in [1, 5]")


@dataclass(frozen=True)
class ResidualInstr:
    dest: str
    sem: CoreSemantics
    x_src: str | None
    y_src: str | None
    const: int | None


@dataclass(frozen=True)
class ResidualProgram:
    params: tuple[str, ...]
    instrs: tuple[ResidualInstr, ...]
    ret: str


def eval_residual_vec(rp: ResidualProgram, env: dict[str, np.ndarray]) -> np.ndarray:
    vals = dict(env)
    for ins in rp.instrs:
        sub_env: dict[str, np.ndarray] = {}
        if ins.x_src is not None:
            sub_env["x"] = vals[ins.x_src]
        if ins.y_src is not None:
            sub_env["y"] = vals[ins.y_src]
        if ins.const is not None:
            sub_env["c"] = _U64(ins.const)
        out = eval_expr_vec(ins.sem.expr, sub_env)
        if out.shape == ():
            n = max(np.size(v) for v in env.values())
            out = np.full(n, out, dtype=_U64)
        vals[ins.dest] = out
    return vals[rp.ret]


# ---------------------------------------------------------------------------
# Superoperators


def _instr_expr(ins) -> Expr:
    def op_expr(o):
        return Var(o) if isinstance(o, str) else Const(o)

    if ins.op == "mov":
        return op_expr(ins.lhs)
    if ins.rhs is None:
        return Unary(ins.op, op_expr(ins.lhs))
    return Binary(ins.op, op_expr(ins.lhs), op_expr(ins.rhs))


def _var_paths(e: Expr, names: set[str]) -> list[tuple[int, ...]]:
    out = []
    stack: list[tuple[Expr, tuple[int, ...]]] = [(e, ())]
    while stack:
        node, path = stack.pop()
        if type(node) is Var and node.name in names:
            out.append(path)
        for i, ch in enumerate(node.children()):
            stack.append((ch, path + (i,)))
    out.sort()
    return out


def _replace_at(e: Expr, path: tuple[int, ...], new: Expr) -> Expr:
    if not path:
        return new
    ch = list(e.children())
    ch[path[0]] = _replace_at(ch[path[0]], path[1:], new)
    if isinstance(e, Unary):
        return Unary(e.op, ch[0])
    return Binary(e.op, ch[0], ch[1])


def _distinct_consts(e: Expr) -> set[int]:
    return {n.value for n in subexpressions(e) if type(n) is Const}


def _is_legal(e: Expr) -> bool:
    """A residual instruction offers two variable operands; constants can
    stay literal inside the handler semantics."""
    return len(free_vars(e)) <= 2


def _split_illegal(
    dest: str, e: Expr, fresh: "_NameGen"
) -> list[tuple[str, Expr]]:
    """Split e into instructions each over <=2 variable inputs."""
    out: list[tuple[str, Expr]] = []

    def extract(e: Expr) -> Expr:
        while not _is_legal(e):
            best_path = None
            best_size = 1
            stack: list[tuple[Expr, tuple[int, ...]]] = [(e, ())]
            while stack:
                node, path = stack.pop()
                if path and node.size >= 2 and node.size > best_size and _is_legal(node):
                    best_path, best_size = path, node.size
                for i, ch in enumerate(node.children()):
                    stack.append((ch, path + (i,)))
            if best_path is None:
                # no extractable operation: peel off one constant load
                consts = sorted(_distinct_consts(e))
                tmp = fresh.next()
                out.append((tmp, Const(consts[-1])))
                e = substitute_const(e, consts[-1], Var(tmp))
            else:
                tmp = fresh.next()
                sub = _get_at(e, best_path)
                out.append((tmp, sub))
                e = _replace_at(e, best_path, Var(tmp))
        return e

    final = extract(e)
    out.append((dest, final))
    return out


def substitute_const(e: Expr, value: int, new: Expr) -> Expr:
    t = type(e)
    if t is Const and e.value == value:
        return new
    if t is Unary:
        return Unary(e.op, substitute_const(e.a, value, new))
    if t is Binary:
        return Binary(
            e.op,
            substitute_const(e.a, value, new),
            substitute_const(e.b, value, new),
        )
    return e


def _get_at(e: Expr, path: tuple[int, ...]) -> Expr:
    for i in path:
        e = e.children()[i]
    return e


class _NameGen:
    def __init__(self, taken):
        self.taken = set(taken)
        self.counter = 0

    def next(self) -> str:
        while True:
            self.counter += 1
            name = f"s{self.counter}"
            if name not in self.taken:
                self.taken.add(name)
                return name


def _to_residual_instr(dest: str, e: Expr) -> ResidualInstr:
    names: list[str] = []
    const_counts: dict[int, int] = {}
    for node in _ordered_nodes(e):
        if type(node) is Var and node.name not in names:
            names.append(node.name)
        elif type(node) is Const:
            const_counts[node.value] = const_counts.get(node.value, 0) + 1
    assert len(names) <= 2
    mapping: dict[str, Expr] = {}
    if names:
        mapping[names[0]] = Var("x")
    if len(names) > 1:
        mapping[names[1]] = Var("y")
    sem_expr = substitute(e, mapping)
    # the most frequent constant becomes the handler's c operand; any other
    # constants stay literal inside the semantics
    c_value = None
    if const_counts:
        c_value = max(const_counts, key=lambda v: (const_counts[v], v))
        sem_expr = substitute_const(sem_expr, c_value, Var("c"))
    sem = CoreSemantics(sem_expr, syntactic_depth(normalize(sem_expr)))
    return ResidualInstr(
        dest,
        sem,
        names[0] if names else None,
        names[1] if len(names) > 1 else None,
        c_value,
    )


def _ordered_nodes(e: Expr):
    stack = [e]
    while stack:
        node = stack.pop()
        yield node
        stack.extend(reversed(node.children()))


_FALLBACK_SPLICE_CAP = 24


def build_superoperators(
    p: SsaProgram, bounds: tuple[int, int] = (3, 12), seed: int = 0
) -> tuple[list[CoreSemantics], ResidualProgram]:
    """Inline SSA definitions into uses, then refit to the f(x,y,c) shape."""
    rng = random.Random(seed)
    order = [ins.dest for ins in p.body]
    base: dict[str, Expr] = {ins.dest: _instr_expr(ins) for ins in p.body}
    defined = set(order)
    exprs = dict(base)

    if bounds[1] > 0:
        for dest in order:
            e = exprs[dest]
            r = rng.randint(bounds[0], bounds[1])
            for _ in range(r):
                # splice the single-instruction definition of one used
                # variable into its use site, keeping <=2 variable inputs;
                # multi-use definitions may be duplicated, DCE cleans up
                candidates = []
                for path in _var_paths(e, defined - {dest}):
                    src = _get_at(e, path).name
                    spliced = _replace_at(e, path, base[src])
                    if _is_legal(spliced):
                        candidates.append(spliced)
                        continue
                    # the one-instruction definition brings too many
                    # variables; its fully inlined form may not -- but cap
                    # its size so chained fallbacks cannot compound
                    if exprs[src].size <= _FALLBACK_SPLICE_CAP:
                        spliced = _replace_at(e, path, exprs[src])
                        if _is_legal(spliced):
                            candidates.append(spliced)
                if not candidates:
                    break
                e = candidates[rng.randrange(len(candidates))]
            exprs[dest] = e

    # drop definitions no longer referenced by anything live
    live = {p.ret}
    changed = True
    while changed:
        changed = False
        for dest in order:
            if dest in live:
                for n in free_vars(exprs[dest]):
                    if n in defined and n not in live:
                        live.add(n)
                        changed = True
    kept = [d for d in order if d in live]

    fresh = _NameGen(set(order) | set(p.params))
    pieces: list[tuple[str, Expr]] = []
    for dest in kept:
        pieces.extend(_split_illegal(dest, exprs[dest], fresh))

    instrs = tuple(_to_residual_instr(d, e) for d, e in pieces)
    rp = ResidualProgram(p.params, instrs, p.ret)
    _check_residual(p, rp)
    return [ins.sem for ins in instrs], rp


def _check_residual(p: SsaProgram, rp: ResidualProgram, n: int = 256) -> None:
    rng = random.Random(0xC0FFEE)
    env = {
        name: np.array([rng.getrandbits(64) for _ in range(n)], dtype=_U64)
        for name in p.params
    }
    got = eval_residual_vec(rp, env)
    want = np.array(
        [
            eval_tac(p, [int(env[name][i]) for name in p.params])
            for i in range(n)
        ],
        dtype=_U64,
    )
    if not (got == want).all():  # pragma: no cover - guards a soundness bug
        raise AssertionError("superoperator residual diverges from input program")


# ---------------------------------------------------------------------------
# Handler construction

DECOY_BINARY = ("add", "sub", "mul", "and", "or", "xor", "shl", "shr")
DECOY_UNARY = ("not", "neg")


def random_semantics(rng: random.Random, size: int) -> Expr:
    """Random decoy expression with roughly `size` nodes.

    The variable pool is fixed to two of {x, y, c} up front so decoys
    always satisfy the two-operand handler shape, whatever their size.
    """
    pool = rng.sample(("x", "y", "c"), 2)

    def gen(budget: int) -> Expr:
        if budget <= 1:
            r = rng.random()
            if r < 0.9:
                return Var(rng.choice(pool))
            return Const(rng.getrandbits(8))
        if budget == 2 or rng.random() < 0.15:
            return Unary(rng.choice(DECOY_UNARY), gen(budget - 1))
        left = rng.randint(1, budget - 2)
        op = rng.choice(DECOY_BINARY)
        b = gen(budget - 1 - left)
        if op in ("shl", "shr") and rng.random() < 0.8:
            b = Const(rng.randrange(1, 16))
        return Binary(op, gen(left), b)

    return gen(size)


def _merge_slots(
    slots: list[tuple[KeyEncoding, CoreSemantics]]
) -> Expr:
    terms = [
        Binary("mul", enc.expr, sem.expr) for enc, sem in slots
    ]
    merged = terms[0]
    for t in terms[1:]:
        merged = Binary("add", merged, t)
    return merged


def _verify_handler(h: Handler, n: int = 1000, seed: int = 1) -> bool:
    rng = random.Random(seed)
    env = {
        v: np.array([rng.getrandbits(64) for _ in range(n)], dtype=_U64)
        for v in ("x", "y", "c")
    }
    for (enc, sem), key in zip(h.slots, h.key_set.keys):
        menv = dict(env)
        menv["k"] = _U64(key)
        got = eval_expr_vec(h.merged, menv)
        want = eval_expr_vec(sem.expr, env)
        if got.shape == ():
            got = np.full(n, got, dtype=_U64)
        if want.shape == ():
            want = np.full(n, want, dtype=_U64)
        if not (got == want).all():
            return False
    return True


def build_handlers(
    sems: list[CoreSemantics],
    cfg: ObfuscationConfig,
    db: EquivClassDb | None = None,
) -> HandlerSet:
    if not sems:
        raise ValueError("no core semantics to cover")
    rng = random.Random(cfg.seed + 0x48414E44)
    unique: dict[str, CoreSemantics] = {}
    for s in sems:
        unique.setdefault(s.key(), s)
    required = list(unique.values())

    count = max(cfg.handler_count, (len(required) + cfg.slots_min - 1) // cfg.slots_min)
    slot_counts = [rng.randint(cfg.slots_min, cfg.slots_max) for _ in range(count)]
    # distribute required semantics round-robin, decoys fill the rest
    slot_sems: list[list[CoreSemantics]] = [[] for _ in range(count)]
    hi = 0
    for s in required:
        while len(slot_sems[hi % count]) >= slot_counts[hi % count]:
            hi += 1
        slot_sems[hi % count].append(s)
        hi += 1
    depth_pool = [s.semantic_depth_hint for s in required]
    sig_rng = random.Random(0x5349)
    sig_env = {
        v: np.array(
            [sig_rng.getrandbits(64) for _ in range(32)], dtype=_U64
        )
        for v in ("x", "y", "c")
    }
    for i in range(count):
        # slots of one handler must compute pairwise-distinct functions, or a
        # key selecting a sibling slot reproduces the target semantics
        taken = {eval_expr_vec(s.expr, sig_env).tobytes() for s in slot_sems[i]}
        while len(slot_sems[i]) < slot_counts[i]:
            size = max(3, depth_pool[rng.randrange(len(depth_pool))])
            decoy = random_semantics(rng, size)
            sig = eval_expr_vec(decoy, sig_env).tobytes()
            if sig in taken:
                continue
            taken.add(sig)
            slot_sems[i].append(
                CoreSemantics(decoy, syntactic_depth(normalize(decoy)))
            )

    handlers = []
    for hid in range(count):
        for attempt in range(50):
            h = _build_one_handler(
                hid, slot_sems[hid], cfg, db, rng.getrandbits(32)
            )
            if h is not None:
                handlers.append(h)
                break
        else:  # pragma: no cover - persistent generation failure
            raise RuntimeError(f"could not build handler {hid}")
    return HandlerSet(tuple(handlers), exit_handler_id=count)


def _build_one_handler(
    hid: int,
    sem_list: list[CoreSemantics],
    cfg: ObfuscationConfig,
    db: EquivClassDb | None,
    seed: int,
) -> Handler | None:
    rng = random.Random(seed)
    n = len(sem_list)
    keys = make_key_set(n, rng.getrandbits(32))
    kinds = [rng.choice(("factorization", "point_function")) for _ in range(n)]
    encodings: dict[int, KeyEncoding] = {}
    frozen: set[int] = set()
    ns: list[int] = []
    for i in range(n):
        if kinds[i] == "factorization":
            enc = gen_factorization_encoding(
                keys,
                i,
                cfg.prime_bits,
                seed=rng.getrandbits(32),
                frozen=frozenset(frozen),
                avoid_ns=tuple(ns),
            )
            encodings[i] = enc
            frozen.add(i)
            ns.append(enc.n)
    for i in range(n):
        if kinds[i] == "point_function":
            encodings[i] = synthesize_point_function(
                keys, i, seed=rng.getrandbits(32)
            )
    slots = tuple((encodings[i], sem_list[i]) for i in range(n))
    if not all(check_point_property(enc, keys) for enc, _ in slots):
        return None
    merged = _merge_slots(list(slots))
    if cfg.use_mba and db is not None:
        merged = rewrite(
            merged, db, dc_replace(cfg.rewrite, seed=rng.getrandbits(32))
        )
    h = Handler(hid, keys, slots, merged)
    if not _verify_handler(h):
        return None
    return h


# ---------------------------------------------------------------------------
# Emission


def emit_bytecode(
    rp: ResidualProgram, hs: HandlerSet, seed: int = 0
) -> BytecodeProgram:
    rng = random.Random(seed)
    index = hs.semantics_index()
    regs: dict[str, int] = {}
    for name in rp.params:
        regs[name] = len(regs)
    for ins in rp.instrs:
        if ins.dest not in regs:
            regs[ins.dest] = len(regs)
    if len(regs) > 256:
        raise TooManyRegisters(f"{len(regs)} registers needed")

    const_pool: list[int] = [0]
    key_pool: list[int] = []

    def const_idx(v: int) -> int:
        if v not in const_pool:
            const_pool.append(v)
        return const_pool.index(v)

    def key_idx(v: int) -> int:
        if v not in key_pool:
            key_pool.append(v)
        return key_pool.index(v)

    steps = []
    for ins in rp.instrs:
        sites = index.get(ins.sem.key())
        if not sites:
            raise UnmappedSemantics(ins.sem.key())
        hid, si = sites[rng.randrange(len(sites))]
        h = hs.by_id(hid)
        steps.append(
            Step(
                handler_id=hid,
                x_reg=regs[ins.x_src] if ins.x_src else 0,
                y_reg=regs[ins.y_src] if ins.y_src else 0,
                out_reg=regs[ins.dest],
                const_idx=const_idx(ins.const) if ins.const is not None else 0,
                key_idx=key_idx(h.key_set.keys[si]),
            )
        )
    ret_reg = regs[rp.ret]
    steps.append(Step(hs.exit_handler_id, ret_reg, 0, ret_reg, 0, 0))
    if not key_pool:
        key_pool.append(0)
    return BytecodeProgram(
        register_count=len(regs),
        constant_pool=tuple(const_pool),
        key_pool=tuple(key_pool),
        steps=tuple(steps),
        param_regs=tuple(regs[p] for p in rp.params),
        ret_reg=ret_reg,
    )


def obfuscate(
    p: TacProgram, db: EquivClassDb | None, cfg: ObfuscationConfig | None = None
) -> tuple[BytecodeProgram, HandlerSet, ResidualProgram]:
    """Full pipeline from TAC program to bytecode plus handler set."""
    if cfg is None:
        cfg = ObfuscationConfig()
    ssa = to_ssa(p)
    bounds = cfg.superop_bounds if cfg.use_superops else (0, 0)
    sems, rp = build_superoperators(ssa, bounds, cfg.seed)
    hs = build_handlers(sems, cfg, db)
    bp = emit_bytecode(rp, hs, cfg.seed + 0x454D4954)
    return bp, hs, rp
