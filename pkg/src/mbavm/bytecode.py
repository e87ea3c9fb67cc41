"""Binary bytecode container (.lvm) and the JSON handler sidecar.

Layout (little-endian):
  magic "LOKI", version u8, register_count u8, ret_reg u8, param count u8,
  param_regs u8 each, constant-pool length u16 + u64 entries,
  key-pool length u16 + u64 entries, step count u32,
  steps of 10 bytes each: handler_id u16, x_reg u8, y_reg u8, out_reg u8,
  one pad byte, const_idx u16, key_idx u16.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

from .expr import Expr, parse_expr, to_text

MAGIC = b"LOKI"
VERSION = 1
_STEP = struct.Struct("<HBBBxHH")


class FormatError(ValueError):
    pass


@dataclass(frozen=True)
class Step:
    handler_id: int
    x_reg: int
    y_reg: int
    out_reg: int
    const_idx: int
    key_idx: int


@dataclass(frozen=True)
class BytecodeProgram:
    register_count: int
    constant_pool: tuple[int, ...]
    key_pool: tuple[int, ...]
    steps: tuple[Step, ...]
    param_regs: tuple[int, ...]
    ret_reg: int

    def __post_init__(self):
        for s in self.steps:
            if s.x_reg >= self.register_count or s.y_reg >= self.register_count:
                raise FormatError("register index out of range")
            if s.out_reg >= self.register_count:
                raise FormatError("register index out of range")
            if s.const_idx >= max(len(self.constant_pool), 1):
                raise FormatError("constant index out of range")
            if s.key_idx >= max(len(self.key_pool), 1):
                raise FormatError("key index out of range")


def encode(bp: BytecodeProgram) -> bytes:
    out = bytearray()
    out += MAGIC
    out.append(VERSION)
    out.append(bp.register_count)
    out.append(bp.ret_reg)
    out.append(len(bp.param_regs))
    out += bytes(bp.param_regs)
    out += struct.pack("<H", len(bp.constant_pool))
    for v in bp.constant_pool:
        out += struct.pack("<Q", v)
    out += struct.pack("<H", len(bp.key_pool))
    for v in bp.key_pool:
        out += struct.pack("<Q", v)
    out += struct.pack("<I", len(bp.steps))
    for s in bp.steps:
        out += _STEP.pack(
            s.handler_id, s.x_reg, s.y_reg, s.out_reg, s.const_idx, s.key_idx
        )
    return bytes(out)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError("truncated bytecode")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def decode(data: bytes) -> BytecodeProgram:
    r = _Reader(data)
    if r.take(4) != MAGIC:
        raise FormatError("bad magic")
    (version,) = r.unpack("<B")
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")
    register_count, ret_reg, n_params = r.unpack("<BBB")
    param_regs = tuple(r.take(n_params))
    (n_const,) = r.unpack("<H")
    constant_pool = tuple(r.unpack(f"<{n_const}Q") if n_const else ())
    (n_keys,) = r.unpack("<H")
    key_pool = tuple(r.unpack(f"<{n_keys}Q") if n_keys else ())
    (n_steps,) = r.unpack("<I")
    steps = []
    for _ in range(n_steps):
        hid, x, y, o, ci, ki = _STEP.unpack(r.take(_STEP.size))
        steps.append(Step(hid, x, y, o, ci, ki))
    if r.pos != len(data):
        raise FormatError("trailing bytes after steps")
    return BytecodeProgram(
        register_count, constant_pool, key_pool, tuple(steps), param_regs, ret_reg
    )


def save_lvm(bp: BytecodeProgram, path: str) -> None:
    with open(path, "wb") as fh:
        fh.write(encode(bp))


def load_lvm(path: str) -> BytecodeProgram:
    with open(path, "rb") as fh:
        return decode(fh.read())


# ---------------------------------------------------------------------------
# Handler sidecar (white-box view for the attack suite)


def handler_set_to_json(hs) -> dict:
    return {
        "exit_handler_id": hs.exit_handler_id,
        "handlers": [
            {
                "id": h.id,
                "keys": list(h.key_set.keys),
                "slots": [
                    {
                        "kind": enc.kind,
                        "encoding": to_text(enc.expr),
                        "semantics": to_text(sem.expr),
                        "semantic_depth_hint": sem.semantic_depth_hint,
                        "key_index": enc.associated_index,
                        **(
                            {"n": enc.n, "p": enc.p, "q": enc.q}
                            if enc.kind == "factorization"
                            else {}
                        ),
                    }
                    for enc, sem in h.slots
                ],
                "merged": to_text(h.merged),
            }
            for h in hs.handlers
        ],
    }


def save_sidecar(hs, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(handler_set_to_json(hs), fh, indent=1)
        fh.write("\n")


def load_sidecar(path: str):
    with open(path, encoding="utf-8") as fh:
        return handler_set_from_json(json.load(fh))


def handler_set_from_json(doc: dict):
    from .keyenc import KeyEncoding, KeySet
    from .obfuscate import CoreSemantics, Handler, HandlerSet

    handlers = []
    for hd in doc["handlers"]:
        slots = []
        for sd in hd["slots"]:
            enc = KeyEncoding(
                sd["kind"],
                parse_expr(sd["encoding"]),
                sd["key_index"],
                n=sd.get("n"),
                p=sd.get("p"),
                q=sd.get("q"),
            )
            sem = CoreSemantics(
                parse_expr(sd["semantics"]), sd["semantic_depth_hint"]
            )
            slots.append((enc, sem))
        handlers.append(
            Handler(
                hd["id"],
                KeySet(list(hd["keys"])),
                tuple(slots),
                parse_expr(hd["merged"]),
            )
        )
    return HandlerSet(tuple(handlers), doc["exit_handler_id"])
