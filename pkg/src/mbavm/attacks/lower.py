"""Flatten a handler expression into a linear instruction list.

One instruction per AST node; constants become explicit load instructions,
mirroring how compiled handler code materializes immediates.  Taint and
slicing operate on this form.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..expr import Binary, Const, Expr, KeyByte, Unary, Var


@dataclass(frozen=True)
class LowInstr:
    idx: int
    op: str  # expr ops, plus "const" (load) and "input" pseudo-defs
    srcs: tuple[int, ...]  # operand instruction indices
    value: int | None = None  # for const loads
    source: str | None = None  # for input pseudo-defs: x/y/c/k


@dataclass(frozen=True)
class LoweredHandler:
    instrs: tuple[LowInstr, ...]
    output: int  # index of the instruction producing the handler result

    @property
    def compute_instrs(self) -> list[LowInstr]:
        return [i for i in self.instrs if i.op != "input"]


def lower(e: Expr) -> LoweredHandler:
    instrs: list[LowInstr] = []
    inputs: dict[str, int] = {}

    def input_of(name: str) -> int:
        if name not in inputs:
            instrs.append(LowInstr(len(instrs), "input", (), source=name))
            inputs[name] = len(instrs) - 1
        return inputs[name]

    def walk(node: Expr) -> int:
        t = type(node)
        if t is Var:
            return input_of(node.name)
        if t is Const:
            instrs.append(LowInstr(len(instrs), "const", (), value=node.value))
            return len(instrs) - 1
        if t is KeyByte:
            instrs.append(
                LowInstr(len(instrs), "keybyte", (input_of("k"),), value=node.index)
            )
            return len(instrs) - 1
        if t is Unary:
            a = walk(node.a)
            instrs.append(LowInstr(len(instrs), node.op, (a,)))
            return len(instrs) - 1
        a = walk(node.a)
        b = walk(node.b)
        instrs.append(LowInstr(len(instrs), node.op, (a, b)))
        return len(instrs) - 1

    out = walk(e)
    return LoweredHandler(tuple(instrs), out)
