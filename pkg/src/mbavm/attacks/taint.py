"""Forward taint propagation over lowered handler code."""

from __future__ import annotations

from ..expr import MASK
from .base import AttackReport, AttackTarget, Dynamic, Timer
from .lower import LoweredHandler, lower


def _byte_smear(mask: int) -> int:
    """Expand a bit mask to whole-byte granularity."""
    out = 0
    for b in range(8):
        if mask & (0xFF << (8 * b)):
            out |= 0xFF << (8 * b)
    return out


def _carry_smear(mask: int) -> int:
    """Arithmetic ops propagate taint upward from the lowest tainted bit."""
    if mask == 0:
        return 0
    low = (mask & -mask).bit_length() - 1
    return (MASK >> low) << low


def propagate(
    lowered: LoweredHandler, sources: set[str], granularity: str = "byte"
) -> list[int]:
    """Per-instruction taint masks (0 = untainted)."""
    if granularity not in ("bit", "byte"):
        raise ValueError("granularity must be 'bit' or 'byte'")
    taint: list[int] = [0] * len(lowered.instrs)
    for ins in lowered.instrs:
        if ins.op == "input":
            taint[ins.idx] = MASK if ins.source in sources else 0
            continue
        if ins.op == "const":
            taint[ins.idx] = 0
            continue
        ops = [taint[s] for s in ins.srcs]
        if ins.op == "keybyte":
            t = 0xFF if ops[0] else 0
        elif ins.op in ("and", "or", "xor"):
            t = ops[0] | ops[1]
        elif ins.op == "not":
            t = ops[0]
        elif ins.op in ("add", "sub", "mul"):
            t = _carry_smear(ops[0] | ops[1])
        elif ins.op == "neg":
            t = _carry_smear(ops[0])
        elif ins.op in ("shl", "shr"):
            amt_ins = lowered.instrs[ins.srcs[1]]
            if ops[1]:
                t = MASK  # a tainted shift amount smears the whole result
            elif amt_ins.op == "const":
                amt = amt_ins.value & 63
                t = ((ops[0] << amt) if ins.op == "shl" else (ops[0] >> amt)) & MASK
            else:
                t = ops[0]
        elif ins.op == "divisible":
            t = 1 if (ops[0] | ops[1]) else 0
        else:  # pragma: no cover - unknown op
            raise ValueError(f"unknown lowered op {ins.op}")
        # masking with an untainted constant narrows the propagated taint
        if ins.op == "and":
            for s in ins.srcs:
                c = lowered.instrs[s]
                if c.op == "const":
                    cm = c.value if granularity == "bit" else _byte_smear(c.value)
                    t &= cm
        if granularity == "byte":
            t = _byte_smear(t)
        taint[ins.idx] = t
    return taint


def taint_forward(
    t: AttackTarget, granularity: str = "byte", seed: int = 0
) -> AttackReport:
    """Mark instructions depending on attacker-relevant inputs.

    Static attackers taint x, y, c, k; dynamic attackers know k concretely,
    so only x, y, c are sources.
    """
    with Timer() as tm:
        lowered = lower(t.handler.merged)
        sources = {"x", "y", "c"}
        if not isinstance(t.mode, Dynamic):
            sources.add("k")
        masks = propagate(lowered, sources, granularity)
        compute = [i for i in lowered.instrs if i.op != "input"]
        marked = sum(1 for i in compute if masks[i.idx])
        unmarked = len(compute) - marked
    frac = unmarked / len(compute) if compute else 0.0
    return AttackReport(
        attack="taint",
        mode="dynamic" if isinstance(t.mode, Dynamic) else "static",
        success=False,
        unmarked_fraction=frac,
        time_ms=tm.ms,
        budget_spent=len(compute),
        seed=seed,
        marked=marked,
        unmarked=unmarked,
        expr_size=t.handler.merged.size,
        detail={"granularity": granularity},
    )
