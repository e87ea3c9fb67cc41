"""Key-encoding generators: factorization checks and partial point functions.

An encoding e_i(k) evaluates to 1 for its associated key and to 0 for every
other key in the handler's key set; values outside the key set are
unconstrained (partial point functions).
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .expr import Binary, Const, Expr, K, KeyByte, MASK, Unary, eval_expr

CHAIN_OPS = ("add", "sub", "mul", "and", "or", "xor", "shl", "shr", "not", "neg")
MAX_CHAIN_OPS = 15
DEFAULT_CANDIDATE_BUDGET = 1_000_000


class PrimeGenFailure(RuntimeError):
    pass


class SynthesisBudgetExhausted(RuntimeError):
    pass


@dataclass
class KeySet:
    keys: list[int]

    def __post_init__(self):
        if len(set(self.keys)) != len(self.keys):
            raise ValueError("keys must be pairwise distinct")

    def __len__(self):
        return len(self.keys)


@dataclass(frozen=True)
class KeyEncoding:
    kind: str  # "factorization" | "point_function"
    expr: Expr  # over k only (Var k / KeyByte / constants)
    associated_index: int
    n: int | None = None
    p: int | None = None
    q: int | None = None

    def select(self, k: int) -> int:
        return eval_expr(self.expr, {"k": k})


def check_point_property(enc: KeyEncoding, keys: KeySet) -> bool:
    """Exhaustive check over the key set: e_i(k_j) == [i == j]."""
    for j, k in enumerate(keys.keys):
        want = 1 if j == enc.associated_index else 0
        if enc.select(k) != want:
            return False
    return True


# ---------------------------------------------------------------------------
# Primality (deterministic Miller-Rabin, sufficient far beyond 64 bits)

_MR_BASES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)


def is_prime(n: int) -> bool:
    if n < 2:
        return False
    for p in _MR_BASES:
        if n % p == 0:
            return n == p
    d = n - 1
    r = 0
    while d % 2 == 0:
        d //= 2
        r += 1
    for a in _MR_BASES:
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(r - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def random_prime(bits: int, rng: random.Random, retries: int = 10_000) -> int:
    for _ in range(retries):
        cand = rng.getrandbits(bits) | (1 << (bits - 1)) | 1
        if is_prime(cand):
            return cand
    raise PrimeGenFailure(f"no {bits}-bit prime found in {retries} draws")


def gen_factorization_encoding(
    keys: KeySet,
    index: int,
    prime_bits: int = 16,
    seed: int = 0,
    frozen: frozenset[int] = frozenset(),
    avoid_ns: tuple[int, ...] = (),
) -> KeyEncoding:
    """Semiprime divisibility encoding: e(k) = [(n mod k) == 0], n = p*q.

    keys[index] is overwritten with p.  Other keys that happen to divide n
    are re-drawn, except indices in `frozen` (whose encodings already
    exist); a frozen conflict re-draws p and q instead.  avoid_ns lists
    semiprimes of sibling encodings the new key must not divide.
    """
    if not 8 <= prime_bits <= 32:
        raise ValueError("prime_bits must be in [8, 32]")
    rng = random.Random(seed)
    for _ in range(10_000):
        p = random_prime(prime_bits, rng)
        q = random_prime(prime_bits, rng)
        if p == q or any(m % p == 0 for m in avoid_ns):
            continue
        n = p * q
        ok = True
        for j, kj in enumerate(keys.keys):
            if j == index:
                continue
            if kj in (0, 1, n) or (kj != 0 and n % kj == 0):
                if j in frozen:
                    ok = False
                    break
                # re-draw a free key until it stops dividing n
                while True:
                    fresh = rng.getrandbits(64)
                    if (
                        fresh not in (0, 1, n)
                        and n % fresh != 0
                        and all(m % fresh != 0 for m in avoid_ns)
                        and fresh not in keys.keys
                    ):
                        keys.keys[j] = fresh
                        break
        if not ok:
            continue
        if p in (1, n) or any(
            j != index and kj == p for j, kj in enumerate(keys.keys)
        ):
            continue
        keys.keys[index] = p
        expr = Binary("divisible", Const(n), K)
        enc = KeyEncoding("factorization", expr, index, n=n, p=p, q=q)
        assert check_point_property(enc, keys)
        return enc
    raise PrimeGenFailure("could not construct a conflict-free semiprime")


# ---------------------------------------------------------------------------
# Point-function synthesis


def _mod_inverse(a: int) -> int:
    return pow(a, -1, 1 << 64)


def synthesize_point_function(
    keys: KeySet,
    index: int,
    max_ops: int = MAX_CHAIN_OPS,
    seed: int = 0,
    byte_pool: tuple[int, ...] = (0, 1),
    budget: int = DEFAULT_CANDIDATE_BUDGET,
) -> KeyEncoding:
    """Chain of at most max_ops operations over key bytes and constants.

    Candidates multiply per-key byte-difference factors (each zero exactly
    at one non-associated key), then a correcting multiply maps the
    associated key's residual value to 1.  Each candidate is accepted only
    on the exact 1/0...0 evaluation over the key set.
    """
    if max_ops > MAX_CHAIN_OPS:
        raise ValueError(f"max_ops must be <= {MAX_CHAIN_OPS}")
    if len(keys) == 1:
        return KeyEncoding("point_function", Const(1), index)
    rng = random.Random(seed)
    target = keys.keys[index]
    others = [k for j, k in enumerate(keys.keys) if j != index]
    # factors + products + final correction must fit the op budget
    if 2 * len(others) > max_ops:
        raise ValueError("too many keys for the operation budget")

    for attempt in range(budget):
        factors: list[Expr] = []
        t_val = 1
        ok = True
        for other in others:
            pos = byte_pool[rng.randrange(len(byte_pool))]
            ob = (other >> (8 * pos)) & 0xFF
            tb = (target >> (8 * pos)) & 0xFF
            diff = tb ^ ob
            if diff == 0:
                ok = False  # this byte cannot separate target from other
                break
            factor: Expr = Binary("xor", KeyByte(pos), Const(ob))
            # the final correcting multiply needs an odd residual, so
            # strip trailing zero bits of the difference
            shift = (diff & -diff).bit_length() - 1
            if shift:
                factor = Binary("shr", factor, Const(shift))
                diff >>= shift
            factors.append(factor)
            t_val = (t_val * diff) & MASK
        if not ok or t_val % 2 == 0:
            continue
        expr = factors[0]
        for f in factors[1:]:
            expr = Binary("mul", expr, f)
        expr = Binary("mul", expr, Const(_mod_inverse(t_val)))
        enc = KeyEncoding("point_function", expr, index)
        if check_point_property(enc, keys):
            return enc
    raise SynthesisBudgetExhausted(
        f"no valid point function after {budget} candidates"
    )


def make_key_set(
    count: int, seed: int, byte_pool: tuple[int, ...] = (0, 1)
) -> KeySet:
    """Random pairwise-distinct 64-bit keys.

    Keys are drawn so every pair differs in at least one byte of the pool
    (otherwise point-function synthesis could never separate them).
    """
    rng = random.Random(seed)
    keys: list[int] = []
    while len(keys) < count:
        cand = rng.getrandbits(64)
        if cand in (0, 1):
            continue
        sep = all(
            any(
                ((cand ^ k) >> (8 * pos)) & 0xFF
                for pos in byte_pool
            )
            for k in keys
        )
        if sep and cand not in keys:
            keys.append(cand)
    return KeySet(keys)
