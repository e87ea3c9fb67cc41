from __future__ import annotations

import random

import numpy as np
import pytest

from mbavm.bytecode import (
    FormatError,
    decode,
    encode,
    handler_set_from_json,
    handler_set_to_json,
    load_lvm,
    load_sidecar,
    save_lvm,
    save_sidecar,
)
from mbavm.obfuscate import ObfuscationConfig, obfuscate
from mbavm.tac import eval_tac, parse_tac
from mbavm.vm import HandlerMissing, VmArityMismatch, run, run_batch, run_traced

SRC = "func f(a, b) {\n t = a * b\n u = t ^ a\n r = u + b\n return r\n}"


@pytest.fixture(scope="module")
def obf(db7):
    p = parse_tac(SRC)
    bp, hs, _ = obfuscate(p, db7, ObfuscationConfig(handler_count=6, seed=13))
    return p, bp, hs


class TestBytecodeFormat:
    def test_encode_decode_round_trip(self, obf):
        _, bp, _ = obf
        assert decode(encode(bp)) == bp

    def test_encode_deterministic(self, obf):
        _, bp, _ = obf
        assert encode(bp) == encode(bp)

    def test_decode_rejects_garbage(self):
        with pytest.raises(FormatError):
            decode(b"not a program")

    def test_decode_rejects_truncation(self, obf):
        _, bp, _ = obf
        data = encode(bp)
        with pytest.raises(FormatError):
            decode(data[: len(data) // 2])

    def test_file_round_trip(self, obf, tmp_path):
        _, bp, _ = obf
        path = str(tmp_path / "p.lvm")
        save_lvm(bp, path)
        assert load_lvm(path) == bp


class TestSidecar:
    def test_json_round_trip(self, obf):
        _, _, hs = obf
        assert handler_set_from_json(handler_set_to_json(hs)) == hs

    def test_file_round_trip(self, obf, tmp_path):
        _, _, hs = obf
        path = str(tmp_path / "p.lvm.json")
        save_sidecar(hs, path)
        assert load_sidecar(path) == hs


class TestVm:
    def test_matches_source(self, obf):
        p, bp, hs = obf
        rng = random.Random(3)
        for _ in range(50):
            args = [rng.getrandbits(64) for _ in p.params]
            assert run(bp, hs, args) == eval_tac(p, args)

    def test_batch_matches_scalar(self, obf):
        p, bp, hs = obf
        rng = random.Random(4)
        cols = [
            np.array([rng.getrandbits(64) for _ in range(32)], dtype=np.uint64)
            for _ in p.params
        ]
        got = run_batch(bp, hs, cols)
        for i in range(32):
            assert int(got[i]) == run(bp, hs, [int(c[i]) for c in cols])

    def test_trace_ends_on_exit(self, obf):
        _, bp, hs = obf
        _, trace = run_traced(bp, hs, [1, 2])
        assert trace[-1].handler_id == hs.exit_handler_id
        assert all(t.handler_id != hs.exit_handler_id for t in trace[:-1])

    def test_arity_mismatch(self, obf):
        _, bp, hs = obf
        with pytest.raises(VmArityMismatch):
            run(bp, hs, [1])

    def test_missing_handler(self, obf):
        from dataclasses import replace

        _, bp, hs = obf
        broken = replace(hs, handlers=())
        with pytest.raises(HandlerMissing):
            run(bp, broken, [1, 2])

    def test_corrupt_key_pool_diverges(self, obf):
        from dataclasses import replace

        p, bp, hs = obf
        bad = replace(bp, key_pool=tuple(k ^ 0xFF for k in bp.key_pool))
        rng = random.Random(5)
        diverged = False
        for _ in range(20):
            args = [rng.getrandbits(64) for _ in p.params]
            if run(bad, hs, args) != eval_tac(p, args):
                diverged = True
                break
        assert diverged
