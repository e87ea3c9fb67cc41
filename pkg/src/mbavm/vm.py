"""Fetch-decode-execute interpreter over merged handler expressions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bytecode import BytecodeProgram
from .expr import eval_expr, eval_expr_vec
from .obfuscate import HandlerSet

_U64 = np.uint64


class HandlerMissing(KeyError):
    pass


class IndexOutOfRange(IndexError):
    pass


class VmArityMismatch(ValueError):
    pass


@dataclass(frozen=True)
class TraceStep:
    handler_id: int
    x: int
    y: int
    c: int
    k: int
    out: int


ExecTrace = list


def _handler_map(hs: HandlerSet) -> dict[int, object]:
    return {h.id: h for h in hs.handlers}


def run_traced(
    bp: BytecodeProgram, hs: HandlerSet, args: list[int]
) -> tuple[int, ExecTrace]:
    if len(args) != len(bp.param_regs):
        raise VmArityMismatch(
            f"expected {len(bp.param_regs)} args, got {len(args)}"
        )
    handlers = _handler_map(hs)
    regs = [0] * bp.register_count
    for reg, val in zip(bp.param_regs, args):
        regs[reg] = val & 0xFFFFFFFFFFFFFFFF
    trace: ExecTrace = []
    for step in bp.steps:
        if step.handler_id == hs.exit_handler_id:
            trace.append(
                TraceStep(step.handler_id, regs[step.x_reg], 0, 0, 0, regs[bp.ret_reg])
            )
            return regs[bp.ret_reg], trace
        h = handlers.get(step.handler_id)
        if h is None:
            raise HandlerMissing(step.handler_id)
        try:
            env = {
                "x": regs[step.x_reg],
                "y": regs[step.y_reg],
                "c": bp.constant_pool[step.const_idx],
                "k": bp.key_pool[step.key_idx],
            }
        except IndexError:
            raise IndexOutOfRange(f"bad pool index in step {step}") from None
        out = eval_expr(h.merged, env)
        regs[step.out_reg] = out
        trace.append(
            TraceStep(step.handler_id, env["x"], env["y"], env["c"], env["k"], out)
        )
    # a well-formed program ends on the exit handler; tolerate fallthrough
    return regs[bp.ret_reg], trace


def run(bp: BytecodeProgram, hs: HandlerSet, args: list[int]) -> int:
    return run_traced(bp, hs, args)[0]


def run_batch(
    bp: BytecodeProgram, hs: HandlerSet, arg_columns: list[np.ndarray]
) -> np.ndarray:
    """Vectorized execution: one numpy lane per input vector."""
    if len(arg_columns) != len(bp.param_regs):
        raise VmArityMismatch(
            f"expected {len(bp.param_regs)} arg columns, got {len(arg_columns)}"
        )
    handlers = _handler_map(hs)
    n = len(arg_columns[0]) if arg_columns else 1
    regs: list[np.ndarray] = [
        np.zeros(n, dtype=_U64) for _ in range(bp.register_count)
    ]
    for reg, col in zip(bp.param_regs, arg_columns):
        regs[reg] = np.asarray(col, dtype=_U64)
    for step in bp.steps:
        if step.handler_id == hs.exit_handler_id:
            return regs[bp.ret_reg]
        h = handlers.get(step.handler_id)
        if h is None:
            raise HandlerMissing(step.handler_id)
        env = {
            "x": regs[step.x_reg],
            "y": regs[step.y_reg],
            "c": _U64(bp.constant_pool[step.const_idx]),
            "k": _U64(bp.key_pool[step.key_idx]),
        }
        out = eval_expr_vec(h.merged, env)
        if out.shape == ():
            out = np.full(n, out, dtype=_U64)
        regs[step.out_reg] = out
    return regs[bp.ret_reg]
