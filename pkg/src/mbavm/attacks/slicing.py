"""Backward slicing over lowered handler code."""

from __future__ import annotations

from .base import AttackReport, AttackTarget, Dynamic, Timer
from .lower import lower


def backward_slice(t: AttackTarget, seed: int = 0) -> AttackReport:
    """Mark every instruction reachable backward from the handler output.

    Unlike taint, slicing marks constant loads feeding the slice, so its
    unmarked fraction never exceeds taint's on the same handler.
    """
    with Timer() as tm:
        lowered = lower(t.handler.merged)
        in_slice = [False] * len(lowered.instrs)
        stack = [lowered.output]
        while stack:
            i = stack.pop()
            if in_slice[i]:
                continue
            in_slice[i] = True
            stack.extend(lowered.instrs[i].srcs)
        compute = [i for i in lowered.instrs if i.op != "input"]
        marked = sum(1 for i in compute if in_slice[i.idx])
        unmarked = len(compute) - marked
    frac = unmarked / len(compute) if compute else 0.0
    return AttackReport(
        attack="slice",
        mode="dynamic" if isinstance(t.mode, Dynamic) else "static",
        success=False,
        unmarked_fraction=frac,
        time_ms=tm.ms,
        budget_spent=len(compute),
        seed=seed,
        marked=marked,
        unmarked=unmarked,
        expr_size=t.handler.merged.size,
    )
