"""Fuzz verification, experiment runners, and suite orchestration.

The experiment functions here back both the `bench` CLI command and the
acceptance test suite; the suite file scales them down to desk size.
Every experiment is deterministic given its seed and returns rows of
{experiment, metric, value, target, passed}.
"""

from __future__ import annotations

import csv
import itertools
import random
import sys
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .attacks import (
    AttackTarget,
    Dynamic,
    Static,
    SynthBudget,
    backward_slice,
    cegar_key_recovery,
    mba_diversity,
    symex_simplify,
    synthesize_from_oracle,
    taint_forward,
)
from .attacks.lower import lower
from .bytecode import BytecodeProgram
from .eqdb import (
    EquivClassDb,
    GRAMMAR_BINARY,
    GRAMMAR_UNARY,
    eval_vector_env,
    load_db,
    signature_of,
    store_db,
    synthesize_classes,
)
from .expr import (
    EDGE_PATTERNS,
    Expr,
    MASK,
    RandomSampling,
    Var,
    Binary,
    Unary,
    check_equiv,
    eval_expr,
    eval_expr_vec,
    normalize,
    syntactic_depth,
    to_text,
)
from .obfuscate import (
    CoreSemantics,
    Handler,
    HandlerSet,
    ObfuscationConfig,
    build_handlers,
    build_superoperators,
    obfuscate,
)
from .rewrite import RewriteConfig, rewrite
from .tac import TacProgram, eval_tac, parse_tac, to_ssa
from .vm import run_batch

EDGE_CASES = EDGE_PATTERNS

BENCHMARK_NAMES = ("mixer", "keystream", "checksum")


@dataclass(frozen=True)
class BenchRun:
    """Reproducible experiment record: rows follow from (config, seed)."""

    config: dict
    seed: int
    corpus: str
    rows: tuple[dict, ...]

    @property
    def passed(self) -> bool:
        return all(r["passed"] for r in self.rows)


def _row(experiment: str, metric: str, value, target: str, passed: bool) -> dict:
    if isinstance(value, float):
        value = round(value, 4)
    return {
        "experiment": experiment,
        "metric": metric,
        "value": value,
        "target": target,
        "passed": bool(passed),
    }


# ---------------------------------------------------------------------------
# Shipped benchmark programs


def benchmark_source(name: str) -> str:
    return (
        resources.files("mbavm.benchmarks").joinpath(f"{name}.tac").read_text()
    )


def benchmark_programs() -> dict[str, TacProgram]:
    return {name: parse_tac(benchmark_source(name)) for name in BENCHMARK_NAMES}


# ---------------------------------------------------------------------------
# Fuzz verification (random sampling plus edge-case cartesian products)


def input_tuples(
    n_params: int, random_count: int, seed: int
) -> list[tuple[int, ...]]:
    rng = random.Random(seed)
    out = [
        tuple(rng.getrandbits(64) for _ in range(n_params))
        for _ in range(random_count)
    ]
    out.extend(itertools.product(EDGE_CASES, repeat=n_params))
    return out


def verify_obfuscation(
    p: TacProgram,
    bp: BytecodeProgram,
    hs: HandlerSet,
    random_count: int = 10_000,
    seed: int = 0,
) -> tuple[int, tuple[int, ...] | None]:
    """Compare VM output with the reference interpreter.

    Returns (inputs tested, first mismatching input or None).
    """
    inputs = input_tuples(len(p.params), random_count, seed)
    cols = [
        np.array([t[i] for t in inputs], dtype=np.uint64)
        for i in range(len(p.params))
    ]
    got = run_batch(bp, hs, cols)
    for i, t in enumerate(inputs):
        want = eval_tac(p, list(t))
        if int(got[i]) != want:
            return i + 1, t
    return len(inputs), None


# ---------------------------------------------------------------------------
# Corpus builders


def db_reps_of_size(db: EquivClassDb, size: int) -> list[Expr]:
    reps = [
        c.representative
        for c in db.classes.values()
        if c.representative.size == size
    ]
    reps.sort(key=to_text)
    return reps


def semantics_pool(db: EquivClassDb, depth: int, limit: int = 12) -> list[CoreSemantics]:
    reps = db_reps_of_size(db, depth)[:limit]
    if not reps:
        raise ValueError(f"no depth-{depth} representatives in the database")
    return [CoreSemantics(e, e.size) for e in reps]


def handler_corpus(
    db: EquivClassDb | None,
    count: int,
    bounds: tuple[int, int],
    use_mba: bool,
    sems: list[CoreSemantics],
    prime_bits: int = 16,
    seed: int = 0,
) -> list[tuple[Handler, CoreSemantics]]:
    """count handlers in chunks of len(sems), each paired with its slot-0
    ground truth (a supplied semantics for the first chunk positions)."""
    out: list[tuple[Handler, CoreSemantics]] = []
    chunk = len(sems)
    i = 0
    while len(out) < count:
        cfg = ObfuscationConfig(
            handler_count=chunk,
            use_mba=use_mba,
            use_superops=False,
            rewrite=RewriteConfig(
                bound_min=bounds[0], bound_max=bounds[1], seed=seed + i
            ),
            prime_bits=prime_bits,
            seed=seed + i,
        )
        hs = build_handlers(sems, cfg, db)
        for h in hs.handlers:
            if len(out) >= count:
                break
            out.append((h, h.slots[0][1]))
        i += 1
    return out


def _dynamic_target(h: Handler, sem: CoreSemantics) -> AttackTarget:
    enc = next(e for e, s in h.slots if s.key() == sem.key())
    return AttackTarget(h, Dynamic(k=h.key_set.keys[enc.associated_index]), sem)


def random_deep_expr(
    rng: random.Random, size: int, db: EquivClassDb
) -> Expr:
    """Random {x, y} expression whose smallest known equivalent has `size`
    nodes: normalization does not shrink it and, for sizes beyond the
    database depth, no database class contains it."""
    env = eval_vector_env(db.vectors, db.seed)

    def gen(budget: int) -> Expr:
        if budget <= 1:
            return Var(rng.choice(("x", "y")))
        if budget == 2 or rng.random() < 0.12:
            return Unary(rng.choice(GRAMMAR_UNARY), gen(budget - 1))
        left = rng.randint(1, budget - 2)
        return Binary(
            rng.choice(GRAMMAR_BINARY), gen(left), gen(budget - 1 - left)
        )

    while True:
        e = gen(size)
        nf = normalize(e)
        if nf.size < size:
            continue
        rec = db.classes.get(signature_of(nf, env))
        if size <= db.depth:
            if rec is not None and rec.representative.size == size:
                return e
        elif rec is None:
            return e


# ---------------------------------------------------------------------------
# Worker-pool plumbing (jobs carry text, workers hold the loaded db)

_WORKER_DB: EquivClassDb | None = None


def _init_worker(db_path: str | None):
    global _WORKER_DB
    _WORKER_DB = load_db(db_path) if db_path else None


def _correctness_job(args) -> tuple[str, int, int, tuple | None]:
    name, seed, random_count = args
    p = parse_tac(benchmark_source(name))
    bp, hs, _ = obfuscate(p, _WORKER_DB, ObfuscationConfig(seed=seed))
    tested, mismatch = verify_obfuscation(p, bp, hs, random_count, seed)
    return name, seed, tested, mismatch


def _synth_job(args) -> bool:
    text, budget, seed = args
    from .expr import parse_expr

    target = parse_expr(text)

    def oracle(env):
        return eval_expr(target, env)

    result, _ = synthesize_from_oracle(oracle, SynthBudget(iterations=budget), seed)
    if result is None:
        return False
    return check_equiv(result, target, RandomSampling(1000, seed)).equivalent


def _pool(jobs: int, db_path: str | None):
    return ProcessPoolExecutor(
        max_workers=jobs, initializer=_init_worker, initargs=(db_path,)
    )


# ---------------------------------------------------------------------------
# Experiments


def exp_correctness(
    db_path: str | None,
    seeds: int = 100,
    random_inputs: int = 10_000,
    jobs: int = 1,
    seed: int = 0,
) -> list[dict]:
    tasks = [
        (name, seed + s, random_inputs)
        for name in BENCHMARK_NAMES
        for s in range(seeds)
    ]
    mismatches = 0
    tested_total = 0
    if jobs > 1:
        with _pool(jobs, db_path) as pool:
            results = list(pool.map(_correctness_job, tasks, chunksize=4))
    else:
        _init_worker(db_path)
        results = [_correctness_job(t) for t in tasks]
    for _, _, tested, mismatch in results:
        tested_total += tested
        if mismatch is not None:
            mismatches += 1
    return [
        _row(
            "correctness",
            f"mismatching runs over {len(tasks)} program-seed pairs "
            f"({tested_total} inputs)",
            mismatches,
            "== 0",
            mismatches == 0,
        )
    ]


def exp_db_soundness(db: EquivClassDb, samples: int = 10_000, seed: int = 99) -> list[dict]:
    rng = random.Random(seed)
    env = {
        v: np.array(
            [rng.getrandbits(64) for _ in range(samples)], dtype=np.uint64
        )
        for v in ("x", "y")
    }
    side = np.arange(256, dtype=np.uint64)
    nx, ny = np.meshgrid(side, side, indexing="ij")
    narrow = {"x": nx.ravel(), "y": ny.ravel()}
    mask8 = np.uint64(0xFF)
    violations = 0
    checked = 0
    for rec in db.classes.values():
        want = eval_expr_vec(rec.representative, env)
        want_n = eval_expr_vec(rec.representative, narrow) & mask8
        for m in rec.members:
            if m == rec.representative:
                continue
            checked += 1
            if not np.array_equal(eval_expr_vec(m, env), want):
                violations += 1
            elif not np.array_equal(eval_expr_vec(m, narrow) & mask8, want_n):
                violations += 1
    return [
        _row(
            "db_soundness",
            f"member/representative disagreements over {checked} members",
            violations,
            "== 0",
            violations == 0,
        )
    ]


def exp_db_determinism(depth: int = 5, seed: int = 7) -> list[dict]:
    import io

    def build_bytes(workers: int) -> bytes:
        db = synthesize_classes(depth, seed=seed, workers=workers)
        buf = io.StringIO()
        _dump_db(db, buf)
        return buf.getvalue().encode()

    same = build_bytes(1) == build_bytes(2)
    return [
        _row(
            "db_determinism",
            f"depth-{depth} builds identical across worker counts",
            int(same),
            "== 1",
            same,
        )
    ]


def _dump_db(db: EquivClassDb, buf) -> None:
    import tempfile, os

    with tempfile.NamedTemporaryFile("r", suffix=".mbadb", delete=False) as fh:
        path = fh.name
    try:
        store_db(db, path)
        with open(path, encoding="utf-8") as fh:
            buf.write(fh.read())
    finally:
        os.unlink(path)


def exp_rewrite_growth(
    db: EquivClassDb, count: int = 1000, seed: int = 0
) -> list[dict]:
    from .obfuscate import random_semantics

    rng = random.Random(seed)
    exprs = [random_semantics(rng, rng.randint(3, 9)) for _ in range(count)]
    bad = 0
    for i, e in enumerate(exprs):
        r = rewrite(e, db, RewriteConfig(seed=seed + i))
        if not check_equiv(e, r, RandomSampling(1000, seed + i)).equivalent:
            bad += 1
    rows = [
        _row(
            "rewrite_growth",
            f"non-equivalent rewrites over {count} expressions at [20,30]",
            bad,
            "== 0",
            bad == 0,
        )
    ]
    probe = exprs[: max(count // 5, 20)]
    means = []
    for b in (0, 10, 20, 30):
        depths = [
            syntactic_depth(
                normalize(
                    rewrite(e, db, RewriteConfig(b, b, seed=seed + 31 * i))
                )
            )
            for i, e in enumerate(probe)
        ]
        means.append(sum(depths) / len(depths))
    increasing = all(a < b for a, b in zip(means, means[1:]))
    rows.append(
        _row(
            "rewrite_growth",
            "mean normalized depth at bounds 0/10/20/30: "
            + "/".join(f"{m:.1f}" for m in means),
            means[-1],
            "strictly increasing",
            increasing,
        )
    )
    return rows


def exp_point_property(
    db: EquivClassDb | None, count: int = 1000, seed: int = 0
) -> list[dict]:
    from .keyenc import check_point_property

    corpus = handler_corpus(
        db, count, (0, 0), False, semantics_pool(db, 3) if db else _fallback_pool(), seed=seed
    )
    violations = 0
    pairs = 0
    for h, _ in corpus:
        for enc, _sem in h.slots:
            pairs += len(h.key_set.keys)
            if not check_point_property(enc, h.key_set):
                violations += 1
    return [
        _row(
            "point_property",
            f"encoding/key violations over {count} handlers ({pairs} pairs)",
            violations,
            "== 0",
            violations == 0,
        )
    ]


def _fallback_pool() -> list[CoreSemantics]:
    from .expr import parse_expr

    texts = ["(add x y)", "(sub x y)", "(xor x y)", "(and x y)", "(or x y)", "(mul x y)"]
    return [CoreSemantics(parse_expr(t), 3) for t in texts]


def exp_static_symex(
    db: EquivClassDb, count: int = 1000, seed: int = 0
) -> list[dict]:
    corpus = handler_corpus(db, count, (20, 30), True, semantics_pool(db, 3), seed=seed)
    succ = sum(
        symex_simplify(AttackTarget(h, Static(), sem), db).success
        for h, sem in corpus
    )
    return [
        _row(
            "static_symex",
            f"static simplifications over {count} default handlers",
            succ,
            "== 0",
            succ == 0,
        )
    ]


SWEEP_BOUNDS = tuple(range(0, 56, 5))


def _symex_rate_job(args) -> tuple[int, int]:
    bounds, pool_depth, count, seed = args
    db = _WORKER_DB
    pool = semantics_pool(db, pool_depth)
    corpus = handler_corpus(db, count, bounds, bounds[1] > 0, pool, seed=seed)
    succ = sum(
        symex_simplify(_dynamic_target(h, sem), db).success
        for h, sem in corpus
    )
    return succ, len(corpus)


def _symex_sweep_job(args) -> tuple[list[int], int]:
    """Each handler is rewritten incrementally: bound b + 5 extends the
    bound-b expression by five more steps, so difficulty accumulates."""
    from dataclasses import replace as dc_replace

    count, seed = args
    db = _WORKER_DB
    pool = semantics_pool(db, 3)
    corpus = handler_corpus(db, count, (0, 0), False, pool, seed=seed)
    succ = [0] * len(SWEEP_BOUNDS)
    for idx, (h, sem) in enumerate(corpus):
        e = h.merged
        for si, b in enumerate(SWEEP_BOUNDS):
            if b:
                e = rewrite(
                    e, db, RewriteConfig(5, 5, seed=seed + 64 * idx + si)
                )
            staged = dc_replace(h, merged=e)
            succ[si] += symex_simplify(_dynamic_target(staged, sem), db).success
    return succ, len(corpus)


def exp_symex_trend(
    db: EquivClassDb,
    per_bound: int = 100,
    seed: int = 0,
    jobs: int = 1,
    db_path: str | None = None,
) -> list[dict]:
    rate_spec: list[tuple] = [
        ((0, 0), 3, per_bound, seed + 1),
        ((20, 30), 3, per_bound, seed + 2),
        ((20, 30), 5, per_bound, seed + 3),
    ]
    chunk = max(per_bound // max(jobs, 1), 1)
    sweep_spec = [
        (min(chunk, per_bound - s), seed + 7 + s)
        for s in range(0, per_bound, chunk)
    ]
    if jobs > 1 and db_path:
        with _pool(jobs, db_path) as pool:
            rate_res = list(pool.map(_symex_rate_job, rate_spec))
            sweep_res = list(pool.map(_symex_sweep_job, sweep_spec))
    else:
        global _WORKER_DB
        _WORKER_DB = db
        rate_res = [_symex_rate_job(t) for t in rate_spec]
        sweep_res = [_symex_sweep_job(t) for t in sweep_spec]
    (r0, r_def3, r_def5) = (s / n for s, n in rate_res)
    total = sum(n for _, n in sweep_res)
    sweep = [
        sum(s[i] for s, _ in sweep_res) / total for i in range(len(SWEEP_BOUNDS))
    ]
    monotone = all(b <= a + 0.03 for a, b in zip(sweep, sweep[1:]))
    return [
        _row("symex_trend", "success rate at bound 0", r0, ">= 0.95", r0 >= 0.95),
        _row("symex_trend", "depth-3 success rate at [20,30]", r_def3, "<= 0.25", r_def3 <= 0.25),
        _row("symex_trend", "depth-5 <= depth-3 rate", r_def5, f"<= {r_def3}", r_def5 <= r_def3),
        _row(
            "symex_trend",
            "sweep 0..55 step 5: " + "/".join(f"{r:.2f}" for r in sweep),
            int(monotone),
            "monotone non-increasing (3pt noise)",
            monotone,
        ),
    ]


def _core_marked_violations(h: Handler, masks: list[int]) -> int:
    """Instructions that bit-precise taint on the data inputs marks must be
    marked by the byte-granularity attack too (no lost core computation)."""
    from .attacks.taint import propagate

    lowered = lower(h.merged)
    ref = propagate(lowered, {"x", "y"}, "bit")
    return sum(
        1
        for ins in lowered.instrs
        if ins.op not in ("input", "const") and ref[ins.idx] and not masks[ins.idx]
    )


def exp_taint_slice(
    db: EquivClassDb, count: int = 1000, seed: int = 0
) -> list[dict]:
    from .attacks.taint import propagate

    corpus = handler_corpus(db, count, (20, 30), True, semantics_pool(db, 3), seed=seed)
    unmarked = marked = 0
    order_ok = True
    core_violations = 0
    for h, sem in corpus:
        t = AttackTarget(h, Static(), sem)
        tr = taint_forward(t)
        sr = backward_slice(t)
        unmarked += tr.unmarked
        marked += tr.marked
        if sr.unmarked_fraction > tr.unmarked_fraction:
            order_ok = False
        masks = propagate(lower(h.merged), {"x", "y", "c", "k"})
        core_violations += _core_marked_violations(h, masks)
    frac = unmarked / max(unmarked + marked, 1)
    return [
        _row(
            "taint_slice",
            f"aggregate taint unmarked fraction over {count} handlers",
            frac,
            "in [0.05, 0.30]",
            0.05 <= frac <= 0.30,
        ),
        _row(
            "taint_slice",
            "unmarked core-semantics instructions",
            core_violations,
            "== 0",
            core_violations == 0,
        ),
        _row(
            "taint_slice",
            "slice unmarked <= taint unmarked on every handler",
            int(order_ok),
            "== 1",
            order_ok,
        ),
    ]


def exp_synthesis_curve(
    db: EquivClassDb,
    per_depth: int = 200,
    budget: int = 5000,
    jobs: int = 1,
    seed: int = 0,
) -> list[dict]:
    rng = random.Random(seed)
    depths = (3, 5, 7, 9, 11, 13)
    tasks: list[tuple[str, int, int]] = []
    spans: list[tuple[int, int]] = []
    for d in depths:
        start = len(tasks)
        # targets come from the synthesizer's own constant-free grammar so
        # the curve measures depth, not constant-encoding overhead
        for i in range(per_depth):
            e = random_deep_expr(rng, d, db)
            tasks.append((to_text(e), budget, seed + 1000 * d + i))
        spans.append((start, len(tasks)))
    if jobs > 1:
        with _pool(jobs, None) as pool:
            results = list(pool.map(_synth_job, tasks, chunksize=8))
    else:
        results = [_synth_job(t) for t in tasks]
    rates = [
        sum(results[a:b]) / (b - a) for a, b in spans
    ]
    non_increasing = all(b <= a for a, b in zip(rates, rates[1:]))
    label = "/".join(f"{r:.2f}" for r in rates)
    return [
        _row("synthesis_curve", f"rates at depths 3..13: {label}", int(non_increasing), "non-increasing", non_increasing),
        _row("synthesis_curve", "depth-3 success rate", rates[0], ">= 0.80", rates[0] >= 0.80),
        _row("synthesis_curve", "depth-13 success rate", rates[-1], "<= 0.10", rates[-1] <= 0.10),
    ]


def exp_superop_gap(
    db: EquivClassDb | None,
    samples: int = 60,
    budget: int = 5000,
    jobs: int = 1,
    seed: int = 0,
) -> list[dict]:
    rng = random.Random(seed)

    def corpus(bounds: tuple[int, int]) -> list[str]:
        sems: list[Expr] = []
        for name in BENCHMARK_NAMES:
            ssa = to_ssa(parse_tac(benchmark_source(name)))
            built, _ = build_superoperators(ssa, bounds, seed)
            sems.extend(s.expr for s in built if s.expr.size >= 3)
        rng.shuffle(sems)
        return [to_text(e) for e in sems[:samples]]

    sup = [(t, budget, seed + i) for i, t in enumerate(corpus((3, 12)))]
    flat = [(t, budget, seed + 7000 + i) for i, t in enumerate(corpus((0, 0)))]
    if jobs > 1:
        with _pool(jobs, None) as pool:
            sup_res = list(pool.map(_synth_job, sup, chunksize=4))
            flat_res = list(pool.map(_synth_job, flat, chunksize=4))
    else:
        sup_res = [_synth_job(t) for t in sup]
        flat_res = [_synth_job(t) for t in flat]
    r_sup = sum(sup_res) / len(sup_res)
    r_flat = sum(flat_res) / len(flat_res)
    return [
        _row("superop_gap", "superoperator corpus synthesis rate", r_sup, "<= 0.30", r_sup <= 0.30),
        _row(
            "superop_gap",
            f"gap below plain corpus (plain {r_flat:.2f})",
            r_flat - r_sup,
            ">= 0.30",
            r_flat - r_sup >= 0.30,
        ),
    ]


def exp_superop_depth(seeds: int = 10, seed: int = 0) -> list[dict]:
    hints: list[int] = []
    for name in BENCHMARK_NAMES:
        ssa = to_ssa(parse_tac(benchmark_source(name)))
        for s in range(seeds):
            sems, _ = build_superoperators(ssa, (3, 12), seed + s)
            hints.extend(x.semantic_depth_hint for x in sems)
    counts = Counter(hints)
    top = max(counts.values())
    mode = min(d for d, c in counts.items() if c == top)
    ge5 = sum(1 for h in hints if h >= 5) / len(hints)
    return [
        _row("superop_depth", f"semantic depth >= 5 fraction (n={len(hints)})", ge5, ">= 0.80", ge5 >= 0.80),
        _row("superop_depth", "semantic depth mode", mode, "in [7, 11]", 7 <= mode <= 11),
    ]


def exp_diversity(
    db: EquivClassDb, count: int = 1000, seed: int = 0
) -> list[dict]:
    from .expr import parse_expr

    sem = parse_expr("(add x y)")
    first = [rewrite(sem, db, RewriteConfig(seed=seed + i)) for i in range(count)]
    second = [
        rewrite(sem, db, RewriteConfig(seed=seed + 5_000_000 + i))
        for i in range(count)
    ]
    rep = mba_diversity(first, second)
    return [
        _row(
            "diversity",
            f"unique normalized MBAs over {count} obfuscations",
            rep.unique_fraction,
            ">= 0.70",
            rep.unique_fraction >= 0.70,
        ),
        _row(
            "diversity",
            "fresh-seed corpus overlap",
            rep.overlap_fraction,
            "< 0.15",
            rep.overlap_fraction < 0.15,
        ),
    ]


def exp_cegar(
    db: EquivClassDb | None, count: int = 40, seed: int = 0
) -> list[dict]:
    pool = semantics_pool(db, 3) if db else _fallback_pool()

    def targets(prime_bits: int, kind: str, salt: int):
        out = []
        i = 0
        while len(out) < count:
            corpus = handler_corpus(
                db, count * 3, (0, 0), False, pool,
                prime_bits=prime_bits, seed=seed + salt + 10_000 * i,
            )
            for h, _ in corpus:
                for si, (enc, sem) in enumerate(h.slots):
                    if enc.kind == kind:
                        out.append(AttackTarget(h, Static(), sem, si))
                        break
                if len(out) >= count:
                    break
            i += 1
        return out

    fac = [
        cegar_key_recovery(t, [t.ground_truth.expr], seed=seed + i).success
        for i, t in enumerate(targets(16, "factorization", 1))
    ]
    pf = [
        cegar_key_recovery(t, [t.ground_truth.expr], seed=seed + i).success
        for i, t in enumerate(targets(16, "point_function", 2))
    ]
    bb = [
        cegar_key_recovery(
            t, [t.ground_truth.expr], budget=1_000_000, blackbox=True, seed=seed + i
        ).success
        for i, t in enumerate(targets(32, "factorization", 3))
    ]
    r_fac = sum(fac) / len(fac)
    r_pf = sum(pf) / len(pf)
    r_bb = sum(bb) / len(bb)
    return [
        _row("cegar", "16-bit factorization recovery rate", r_fac, ">= 0.95", r_fac >= 0.95),
        _row("cegar", "32-bit black-box recovery rate", r_bb, "<= 0.05", r_bb <= 0.05),
        _row("cegar", "point-function recovery rate", r_pf, ">= 0.50", r_pf >= 0.50),
    ]


# ---------------------------------------------------------------------------
# Suite orchestration


def load_suite(path: str) -> dict:
    if sys.version_info >= (3, 11):
        import tomllib
    else:  # pragma: no cover - 3.10 fallback
        import tomli as tomllib
    with open(path, "rb") as fh:
        cfg = tomllib.load(fh)
    for k, v in cfg.items():
        if isinstance(v, dict):
            raise ValueError(f"suite files are flat key-value tables: [{k}]")
    return cfg


_DEFAULT_EXPERIMENTS = (
    "correctness,db_soundness,db_determinism,rewrite_growth,point_property,"
    "static_symex,symex_trend,taint_slice,synthesis_curve,superop_gap,"
    "superop_depth,diversity,cegar"
)


def run_suite(path: str, out_csv: str | None = None) -> BenchRun:
    cfg = load_suite(path)
    seed = int(cfg.get("seed", 0))
    jobs = int(cfg.get("jobs", 1))
    db_path = cfg.get("db_path")
    db: EquivClassDb | None = None
    if db_path:
        import os

        if not os.path.exists(db_path):
            db = synthesize_classes(
                int(cfg.get("db_depth", 7)), seed=seed, workers=max(jobs, 1)
            )
            store_db(db, db_path)
        else:
            db = load_db(db_path)
    wanted = [
        s.strip()
        for s in str(cfg.get("experiments", _DEFAULT_EXPERIMENTS)).split(",")
        if s.strip()
    ]
    rows: list[dict] = []
    for name in wanted:
        if name == "correctness":
            rows += exp_correctness(
                db_path,
                seeds=int(cfg.get("correctness_seeds", 10)),
                random_inputs=int(cfg.get("correctness_inputs", 2000)),
                jobs=jobs,
                seed=seed,
            )
        elif name == "db_soundness":
            rows += exp_db_soundness(db, samples=int(cfg.get("soundness_samples", 10_000)))
        elif name == "db_determinism":
            rows += exp_db_determinism(
                depth=int(cfg.get("determinism_depth", 5)), seed=7
            )
        elif name == "rewrite_growth":
            rows += exp_rewrite_growth(
                db, count=int(cfg.get("rewrite_count", 200)), seed=seed
            )
        elif name == "point_property":
            rows += exp_point_property(
                db, count=int(cfg.get("point_handlers", 200)), seed=seed
            )
        elif name == "static_symex":
            rows += exp_static_symex(
                db, count=int(cfg.get("static_handlers", 200)), seed=seed
            )
        elif name == "symex_trend":
            rows += exp_symex_trend(
                db, per_bound=int(cfg.get("symex_per_bound", 40)), seed=seed
            )
        elif name == "taint_slice":
            rows += exp_taint_slice(
                db, count=int(cfg.get("taint_handlers", 200)), seed=seed
            )
        elif name == "synthesis_curve":
            rows += exp_synthesis_curve(
                db,
                per_depth=int(cfg.get("synthesis_per_depth", 40)),
                budget=int(cfg.get("synthesis_budget", 5000)),
                jobs=jobs,
                seed=seed,
            )
        elif name == "superop_gap":
            rows += exp_superop_gap(
                db,
                samples=int(cfg.get("superop_samples", 40)),
                budget=int(cfg.get("synthesis_budget", 5000)),
                jobs=jobs,
                seed=seed,
            )
        elif name == "superop_depth":
            rows += exp_superop_depth(
                seeds=int(cfg.get("superop_seeds", 10)), seed=seed
            )
        elif name == "diversity":
            rows += exp_diversity(
                db, count=int(cfg.get("diversity_count", 300)), seed=seed
            )
        elif name == "cegar":
            rows += exp_cegar(db, count=int(cfg.get("cegar_count", 20)), seed=seed)
        else:
            raise ValueError(f"unknown experiment: {name}")
    run = BenchRun(
        config=dict(cfg), seed=seed, corpus=",".join(wanted), rows=tuple(rows)
    )
    if out_csv:
        write_csv(run, out_csv)
    return run


def write_csv(run: BenchRun, path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(
            fh, fieldnames=["experiment", "metric", "value", "target", "passed"]
        )
        w.writeheader()
        for r in run.rows:
            w.writerow(r)
