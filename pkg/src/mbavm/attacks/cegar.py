"""Counterexample-guided key recovery against a semantic codebook.

The attacker sees the handler statically and guesses, for each simple
codebook semantics g, a key k such that f(x, y, c, k) behaves like
g(x, y, c).  Candidate and counterexample search alternate: candidates
must agree with g on the accumulated sample set, and every survivor is
challenged with fresh probes until one passes a 10,000-sample
verification or the candidate budget runs out.

Candidate sources, in order:
  1. trial division on constants of syntactically present divisibility
     checks (recovers 16-bit-prime factorization keys),
  2. enumeration of the key bytes the handler actually inspects, with
     random values for the untouched bytes (recovers point-function keys),
  3. uniform random keys (the pure black-box baseline).
"""

from __future__ import annotations

import itertools
import random
from typing import Iterator

import numpy as np

from ..expr import Binary, Const, Expr, KeyByte, MASK, Var, eval_expr_vec, subexpressions
from .base import AttackReport, AttackTarget, Static, Timer

DEFAULT_BUDGET = 1_000_000
VERIFY_SAMPLES = 10_000
_TRIAL_DIVISION_LIMIT = 1 << 17  # covers semiprimes of two 16-bit primes
_CANDIDATE_BATCH = 4096


def divisibility_constants(e: Expr) -> list[int]:
    """Moduli of divisible(const, k) checks syntactically present in e."""
    out = []
    for sub in subexpressions(e):
        if (
            type(sub) is Binary
            and sub.op == "divisible"
            and type(sub.a) is Const
            and type(sub.b) is Var
            and sub.b.name == "k"
        ):
            out.append(sub.a.value)
    return sorted(set(out))


def trial_division_factors(n: int, limit: int = _TRIAL_DIVISION_LIMIT) -> list[int]:
    out = []
    d = 2
    while d < limit and d * d <= n:
        if n % d == 0:
            out.extend((d, n // d))
        d += 1
    return out


def inspected_key_bytes(e: Expr) -> list[int]:
    return sorted({s.index for s in subexpressions(e) if type(s) is KeyByte})


def _candidate_stream(
    e: Expr, rng: random.Random, blackbox: bool
) -> Iterator[list[int]]:
    """Yields candidate-key batches, cheapest guided sources first."""
    if not blackbox:
        guided = []
        for n in divisibility_constants(e):
            guided.extend(trial_division_factors(n))
        if guided:
            yield guided
        positions = inspected_key_bytes(e)
        if 0 < len(positions) <= 2:
            batch = []
            for combo in itertools.product(range(256), repeat=len(positions)):
                k = rng.getrandbits(64)
                for pos, byte in zip(positions, combo):
                    k = (k & ~(0xFF << (8 * pos))) | (byte << (8 * pos))
                batch.append(k)
                if len(batch) >= _CANDIDATE_BATCH:
                    yield batch
                    batch = []
            if batch:
                yield batch
    while True:
        yield [rng.getrandbits(64) for _ in range(_CANDIDATE_BATCH)]


def _agreement_mask(
    f: Expr, g: Expr, keys: np.ndarray, samples: list[tuple[int, int, int]]
) -> np.ndarray:
    """Boolean mask of keys that make f match g on every sample."""
    ok = np.ones(len(keys), dtype=bool)
    for x, y, c in samples:
        if not ok.any():
            break
        env = {"x": np.uint64(x), "y": np.uint64(y), "c": np.uint64(c), "k": keys}
        want = eval_expr_vec(g, {"x": np.uint64(x), "y": np.uint64(y), "c": np.uint64(c)})[0]
        ok &= eval_expr_vec(f, env) == want
    return ok


def _probe_batch(rng: random.Random, count: int) -> list[tuple[int, int, int]]:
    edge = (0, MASK, 1 << 63, 1, 0xAAAAAAAAAAAAAAAA, 0x5555555555555555)
    probes = [(a, b, cc) for a in edge[:3] for b in edge[:3] for cc in edge[:2]]
    while len(probes) < count:
        probes.append(tuple(rng.getrandbits(64) for _ in range(3)))
    return probes[:count]


def _counterexample(
    f: Expr, g: Expr, k: int, rng: random.Random, count: int
) -> tuple[int, int, int] | None:
    probes = _probe_batch(rng, count)
    env = {
        n: np.array(vals, dtype=np.uint64)
        for n, vals in zip("xyc", zip(*probes))
    }
    got = eval_expr_vec(f, env | {"k": np.uint64(k)})
    want = eval_expr_vec(g, env)
    diff = np.nonzero(got != want)[0]
    if diff.size:
        return probes[int(diff[0])]
    return None


def cegar_key_recovery(
    t: AttackTarget,
    codebook: list[Expr],
    budget: int = DEFAULT_BUDGET,
    blackbox: bool = False,
    seed: int = 0,
) -> AttackReport:
    if not isinstance(t.mode, Static):
        raise ValueError("key recovery targets the static attacker model")
    rng = random.Random(seed)
    f = t.handler.merged
    spent = 0
    recovered = None
    matched_entry = None
    with Timer() as tm:
        for entry_idx, g in enumerate(codebook):
            samples = _probe_batch(rng, 12)
            for batch in _candidate_stream(f, rng, blackbox):
                if spent >= budget:
                    break
                batch = batch[: budget - spent]
                spent += len(batch)
                keys = np.array(batch, dtype=np.uint64)
                ok = _agreement_mask(f, g, keys, samples)
                found = False
                for k in keys[ok]:
                    k = int(k)
                    cex = _counterexample(f, g, k, rng, 64)
                    if cex is not None:
                        samples.append(cex)
                        continue
                    if _counterexample(f, g, k, rng, VERIFY_SAMPLES) is None:
                        recovered, matched_entry = k, entry_idx
                        found = True
                        break
                if found or (blackbox and spent >= budget):
                    break
            if recovered is not None:
                break
    return AttackReport(
        attack="cegar",
        mode="static",
        success=recovered is not None,
        time_ms=tm.ms,
        budget_spent=spent,
        seed=seed,
        recovered_key=recovered,
        expr_size=f.size,
        detail={
            "codebook_size": len(codebook),
            "matched_entry": matched_entry,
            "blackbox": blackbox,
        },
    )
