from __future__ import annotations

import random

import pytest

from mbavm.expr import KeyByte, eval_expr, subexpressions
from mbavm.keyenc import (
    MAX_CHAIN_OPS,
    check_point_property,
    gen_factorization_encoding,
    is_prime,
    make_key_set,
    random_prime,
    synthesize_point_function,
)


def _select(enc, k: int) -> int:
    return eval_expr(enc.expr, {"k": k})


class TestPrimes:
    def test_is_prime_small(self):
        primes = [n for n in range(2, 60) if is_prime(n)]
        assert primes == [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59]

    def test_random_prime_bits(self):
        rng = random.Random(1)
        for bits in (16, 32):
            p = random_prime(bits, rng)
            assert is_prime(p)
            assert p.bit_length() == bits


class TestKeySet:
    def test_keys_distinct(self):
        for seed in range(20):
            ks = make_key_set(5, seed)
            assert len(set(ks.keys)) == 5

    def test_pairs_separable_in_pool_bytes(self):
        ks = make_key_set(4, 3, byte_pool=(0, 1))
        # every pair differs somewhere in bytes 0..1, so a point function
        # reading only those bytes can tell all keys apart
        for a in ks.keys:
            for b in ks.keys:
                if a != b:
                    assert (a ^ b) & 0xFFFF != 0


class TestFactorization:
    @pytest.mark.parametrize("bits", [16, 32])
    def test_point_property_on_keyset(self, bits):
        for seed in range(10):
            ks = make_key_set(4, seed + 100)
            enc = gen_factorization_encoding(ks, 2, bits, seed=seed)
            assert enc.kind == "factorization"
            for j, k in enumerate(ks.keys):
                assert _select(enc, k) == (1 if j == 2 else 0)

    def test_modulus_is_product_of_two_primes(self):
        ks = make_key_set(3, 9)
        enc = gen_factorization_encoding(ks, 0, 16, seed=2)
        assert enc.n == enc.p * enc.q
        assert is_prime(enc.p) and is_prime(enc.q)
        assert enc.p.bit_length() == 16 and enc.q.bit_length() == 16
        # the associated key is one of the factors
        assert ks.keys[0] in (enc.p, enc.q)

    def test_check_point_property_helper(self):
        ks = make_key_set(3, 21)
        enc = gen_factorization_encoding(ks, 1, 16, seed=5)
        assert check_point_property(enc, ks)


class TestPointFunction:
    def test_point_property_on_keyset(self):
        for seed in range(15):
            ks = make_key_set(4, seed + 40)
            enc = synthesize_point_function(ks, 1, seed=seed)
            assert enc.kind == "point_function"
            for j, k in enumerate(ks.keys):
                assert _select(enc, k) == (1 if j == 1 else 0)

    def test_inspects_only_low_key_bytes(self):
        ks = make_key_set(3, 8)
        enc = synthesize_point_function(ks, 0, seed=4)
        positions = {
            s.index for s in subexpressions(enc.expr) if isinstance(s, KeyByte)
        }
        assert positions
        assert positions <= {0, 1}

    def test_partiality_off_keyset(self):
        # off the valid key set the function is unconstrained: find some
        # key where it differs from a total point function's 0
        ks = make_key_set(3, 8)
        enc = synthesize_point_function(ks, 0, seed=4)
        rng = random.Random(0)
        seen = {_select(enc, rng.getrandbits(64)) for _ in range(2000)}
        assert seen != {0}

    def test_chain_cap(self):
        ks = make_key_set(3, 8)
        with pytest.raises(ValueError):
            synthesize_point_function(ks, 0, max_ops=MAX_CHAIN_OPS + 1)
