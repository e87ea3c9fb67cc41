"""Enumerative synthesis of semantic equivalence classes.

Expressions over the two-variable, constant-free grammar

    S -> x | y | (S op S) | (unop S)
    op ∈ {add, sub, mul, and, or, xor},  unop ∈ {not, neg}

are enumerated by size (number of derivation steps = node count), bucketed
by behavioral signature on a fixed evaluation-vector set, verified against
the smallest member, and persisted as the rewrite-rule database.
"""

from __future__ import annotations

import hashlib
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import expr as E
from .expr import (
    Binary,
    Const,
    EDGE_PATTERNS,
    Expr,
    Unary,
    Var,
    check_equiv,
    ExhaustiveNarrow,
    RandomSampling,
    eval_expr_vec,
    is_width_polymorphic,
    normalize,
    parse_expr,
    to_text,
)

GRAMMAR_BINARY = ("add", "sub", "mul", "and", "or", "xor")
GRAMMAR_UNARY = ("not", "neg")
GRAMMAR_VARS = ("x", "y")

_GRAMMAR_DESC = (
    "S->x|y;binary:" + ",".join(GRAMMAR_BINARY) + ";unary:" + ",".join(GRAMMAR_UNARY)
)
GRAMMAR_HASH = hashlib.sha256(_GRAMMAR_DESC.encode()).hexdigest()[:16]

DEFAULT_VECTORS = 1000
DEFAULT_BUDGET = 5_000_000


class FormatError(ValueError):
    pass


class GrammarMismatch(ValueError):
    pass


class BudgetExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class ClassRecord:
    signature: str  # 128-bit hex digest
    representative: Expr
    members: tuple[Expr, ...]  # includes the representative; all verified

    def others(self, e: Expr) -> list[Expr]:
        return [m for m in self.members if m != e]


@dataclass(frozen=True)
class EquivClassDb:
    grammar_hash: str
    depth: int
    seed: int
    vectors: int
    classes: dict[str, ClassRecord] = field(default_factory=dict)

    @property
    def member_count(self) -> int:
        return sum(len(c.members) for c in self.classes.values())

    def lookup(self, e: Expr) -> ClassRecord | None:
        return lookup_class(self, e)


_ENV_CACHE: dict[tuple[int, int], dict[str, np.ndarray]] = {}


def eval_vector_env(count: int, seed: int) -> dict[str, np.ndarray]:
    """count vectors per variable: (count - 6) seeded random + edge patterns."""
    cached = _ENV_CACHE.get((count, seed))
    if cached is not None:
        return cached
    rng = random.Random(seed)
    env: dict[str, np.ndarray] = {}
    for name in GRAMMAR_VARS:
        vals = [rng.getrandbits(64) for _ in range(count - len(EDGE_PATTERNS))]
        vals.extend(EDGE_PATTERNS)
        env[name] = np.array(vals, dtype=np.uint64)
    if len(_ENV_CACHE) < 8:
        _ENV_CACHE[(count, seed)] = env
    return env


def signature_of(e: Expr, env: dict[str, np.ndarray]) -> str:
    out = eval_expr_vec(e, env)
    return hashlib.blake2b(out.tobytes(), digest_size=16).hexdigest()


def enumerate_grammar(max_size: int) -> list[list[Expr]]:
    """All derivable trees grouped by size, in deterministic order."""
    by_size: list[list[Expr]] = [[]]
    by_size.append([Var(v) for v in GRAMMAR_VARS])
    for n in range(2, max_size + 1):
        level: list[Expr] = []
        for op in GRAMMAR_UNARY:
            level.extend(Unary(op, a) for a in by_size[n - 1])
        for op in GRAMMAR_BINARY:
            for i in range(1, n - 1):
                for a in by_size[i]:
                    for b in by_size[n - 1 - i]:
                        level.append(Binary(op, a, b))
        by_size.append(level)
    return by_size


def grammar_counts(max_size: int) -> list[int]:
    """Closed-form tree counts per size (oracle for enumeration)."""
    t = [0] * (max_size + 1)
    if max_size >= 1:
        t[1] = len(GRAMMAR_VARS)
    for n in range(2, max_size + 1):
        total = len(GRAMMAR_UNARY) * t[n - 1]
        total += len(GRAMMAR_BINARY) * sum(
            t[i] * t[n - 1 - i] for i in range(1, n - 1)
        )
        t[n] = total
    return t


def _chunk_signatures(args) -> list[tuple[int, str, str]]:
    """Worker: normalize + signature for a slice of the enumeration."""
    max_size, start, stop, count, seed = args
    flat: list[Expr] = []
    for level in enumerate_grammar(max_size):
        flat.extend(level)
    env = eval_vector_env(count, seed)
    out = []
    for idx in range(start, stop):
        nf = normalize(flat[idx])
        if nf.size == 1:
            continue  # trivially reducible to a leaf (or the leaf itself)
        out.append((idx, signature_of(nf, env), to_text(nf)))
    return out


def synthesize_classes(
    max_depth: int,
    eval_vectors: int = DEFAULT_VECTORS,
    seed: int = 0,
    workers: int = 1,
    budget: int = DEFAULT_BUDGET,
) -> EquivClassDb:
    """Build the verified equivalence-class database up to max_depth."""
    if max_depth < 3:
        raise ValueError("max_depth must be >= 3")
    if eval_vectors < 100:
        raise ValueError("eval_vectors must be >= 100")
    total = sum(grammar_counts(max_depth))
    if total > budget:
        raise BudgetExceeded(f"{total} candidate expressions exceed budget {budget}")

    env = eval_vector_env(eval_vectors, seed)
    flat: list[Expr] = []
    for level in enumerate_grammar(max_depth):
        flat.extend(level)

    records: list[tuple[int, str, str]] = []
    if workers <= 1:
        for idx, e in enumerate(flat):
            nf = normalize(e)
            if nf.size == 1:
                continue
            records.append((idx, signature_of(nf, env), to_text(nf)))
    else:
        chunk = (len(flat) + workers * 4 - 1) // (workers * 4)
        jobs = [
            (max_depth, s, min(s + chunk, len(flat)), eval_vectors, seed)
            for s in range(0, len(flat), chunk)
        ]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for part in pool.map(_chunk_signatures, jobs):
                records.extend(part)
        records.sort(key=lambda r: r[0])

    # leaves form their own singleton classes
    buckets: dict[str, dict[str, Expr]] = {}
    for v in GRAMMAR_VARS:
        leaf = Var(v)
        buckets.setdefault(signature_of(leaf, env), {})[v] = leaf
    for _, sig, text in records:
        bucket = buckets.setdefault(sig, {})
        if text not in bucket:
            bucket[text] = parse_expr(text)

    classes: dict[str, ClassRecord] = {}
    for sig in sorted(buckets):
        members = sorted(buckets[sig].values(), key=lambda m: (m.size, to_text(m)))
        if members[0].size == 1:
            # a bare variable keeps a singleton class: leaves are never
            # rewrite targets, so equivalents of x would be dead weight
            members = members[:1]
        groups = _verify_split(members)
        for gi, group in enumerate(groups):
            gsig = sig if gi == 0 else f"{sig}-{gi}"
            classes[gsig] = ClassRecord(gsig, group[0], tuple(group))
    return EquivClassDb(GRAMMAR_HASH, max_depth, seed, eval_vectors, classes)


_NARROW_ENV: dict[str, np.ndarray] | None = None


def _narrow_env() -> dict[str, np.ndarray]:
    global _NARROW_ENV
    if _NARROW_ENV is None:
        gx, gy = np.meshgrid(
            np.arange(256, dtype=np.uint64),
            np.arange(256, dtype=np.uint64),
            indexing="ij",
        )
        _NARROW_ENV = {"x": gx.ravel(), "y": gy.ravel()}
    return _NARROW_ENV


def _verify_split(members: list[Expr]) -> list[list[Expr]]:
    """Group signature-colliding members into truly-equivalent sub-classes.

    Members are pre-sorted smallest-first, so the first member of each group
    is its minimal-depth representative.
    """
    if len(members) == 1:
        return [members]
    env = _narrow_env()
    fingerprints: list = []
    wide = None
    for m in members:
        if is_width_polymorphic(m, 8):
            out = E._eval_narrow(m, env, 8)
            fingerprints.append(("n8", hashlib.blake2b(out.tobytes(), digest_size=16).hexdigest()))
        else:
            if wide is None:
                wide = E._sample_envs(["x", "y"], 4096, 0x5EED)
            out = eval_expr_vec(m, wide)
            fingerprints.append(("rnd", hashlib.blake2b(out.tobytes(), digest_size=16).hexdigest()))
    groups: dict = {}
    order: list = []
    for m, fp in zip(members, fingerprints):
        if fp not in groups:
            groups[fp] = []
            order.append(fp)
        groups[fp].append(m)
    return [groups[fp] for fp in order]


def store_db(db: EquivClassDb, path: str) -> None:
    lines = [
        f"#grammar {db.grammar_hash}",
        f"#depth {db.depth}",
        f"#seed {db.seed}",
        f"#vectors {db.vectors}",
    ]
    for sig in sorted(db.classes):
        rec = db.classes[sig]
        lines.append(f"SIG {sig} REP {to_text(rec.representative)}")
        for m in rec.members:
            if m != rec.representative:
                lines.append(f"MEM {to_text(m)}")
    data = "\n".join(lines) + "\n"
    if path.endswith(".gz"):
        import gzip

        with gzip.open(path, "wt", encoding="utf-8") as fh:
            fh.write(data)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(data)


def load_db(path: str) -> EquivClassDb:
    if path.endswith(".gz"):
        import gzip

        with gzip.open(path, "rt", encoding="utf-8") as fh:
            text = fh.read()
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    headers: dict[str, str] = {}
    classes: dict[str, ClassRecord] = {}
    cur_sig: str | None = None
    cur_rep: Expr | None = None
    cur_members: list[Expr] = []

    def flush():
        nonlocal cur_sig, cur_rep, cur_members
        if cur_sig is not None:
            classes[cur_sig] = ClassRecord(cur_sig, cur_rep, tuple([cur_rep] + cur_members))
        cur_sig, cur_rep, cur_members = None, None, []

    for lineno, line in enumerate(text.split("\n"), start=1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            parts = line[1:].split(None, 1)
            if len(parts) != 2:
                raise FormatError(f"line {lineno}: bad header")
            headers[parts[0]] = parts[1]
        elif line.startswith("SIG "):
            flush()
            parts = line.split(" REP ", 1)
            if len(parts) != 2:
                raise FormatError(f"line {lineno}: bad SIG record")
            cur_sig = parts[0][4:].strip()
            try:
                cur_rep = parse_expr(parts[1])
            except E.ExprParseError as exc:
                raise FormatError(f"line {lineno}: {exc}") from None
        elif line.startswith("MEM "):
            if cur_sig is None:
                raise FormatError(f"line {lineno}: MEM before SIG")
            try:
                cur_members.append(parse_expr(line[4:]))
            except E.ExprParseError as exc:
                raise FormatError(f"line {lineno}: {exc}") from None
        else:
            raise FormatError(f"line {lineno}: unrecognized line {line!r}")
    flush()
    for key in ("grammar", "depth", "seed", "vectors"):
        if key not in headers:
            raise FormatError(f"missing #{key} header")
    if headers["grammar"] != GRAMMAR_HASH:
        raise GrammarMismatch(headers["grammar"])
    return EquivClassDb(
        headers["grammar"],
        int(headers["depth"]),
        int(headers["seed"]),
        int(headers["vectors"]),
        classes,
    )


def lookup_class(db: EquivClassDb, e: Expr) -> ClassRecord | None:
    """Class whose behavior matches e, confirmed against the representative."""
    env = eval_vector_env(db.vectors, db.seed)
    nf = normalize(e)
    sig = signature_of(nf, env)
    rec = db.classes.get(sig)
    if rec is None:
        return None
    verdict = check_equiv(nf, rec.representative, RandomSampling(512, db.seed))
    return rec if verdict.equivalent else None
