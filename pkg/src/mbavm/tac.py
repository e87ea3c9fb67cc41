"""Straight-line three-address-code mini-IR.

Programs are a single function over 64-bit unsigned parameters with no
control flow: `func f(a,b){ t = a + b; return t }`.  One statement per
line or semicolon-separated, `#` starts a comment, `.tac` files.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .expr import MASK, SHIFT_MASK

BINARY_SYMBOLS = {
    "+": "add",
    "-": "sub",
    "*": "mul",
    "&": "and",
    "|": "or",
    "^": "xor",
    "<<": "shl",
    ">>": "shr",
}
UNARY_SYMBOLS = {"~": "not", "-": "neg"}
_SYMBOL_OF = {v: k for k, v in BINARY_SYMBOLS.items()}
_UNSYMBOL_OF = {v: k for k, v in UNARY_SYMBOLS.items()}

TAC_OPS = tuple(BINARY_SYMBOLS.values()) + ("not", "neg", "mov")


class TacError(ValueError):
    pass


class TacSyntaxError(TacError):
    def __init__(self, msg: str, line: int, col: int):
        super().__init__(f"line {line}, col {col}: {msg}")
        self.line = line
        self.col = col


class UseBeforeDef(TacError):
    def __init__(self, name: str, line: int | None = None):
        loc = f" (line {line})" if line is not None else ""
        super().__init__(f"variable used before assignment: {name}{loc}")
        self.name = name


class UnknownOp(TacError):
    pass


class ArityMismatch(TacError):
    pass


Operand = "str | int"


@dataclass(frozen=True)
class TacInstr:
    dest: str
    op: str  # add sub mul and or xor shl shr not neg mov
    lhs: str | int
    rhs: str | int | None = None

    def __post_init__(self):
        if self.op not in TAC_OPS:
            raise UnknownOp(self.op)
        binary = self.op in BINARY_SYMBOLS.values()
        if binary != (self.rhs is not None):
            raise ArityMismatch(f"{self.op} with rhs={self.rhs!r}")

    def operands(self) -> tuple:
        return (self.lhs,) if self.rhs is None else (self.lhs, self.rhs)

    def uses(self) -> tuple[str, ...]:
        return tuple(o for o in self.operands() if isinstance(o, str))


@dataclass(frozen=True)
class TacProgram:
    name: str
    params: tuple[str, ...]
    body: tuple[TacInstr, ...]
    ret: str

    def __post_init__(self):
        defined = set(self.params)
        for ins in self.body:
            for use in ins.uses():
                if use not in defined:
                    raise UseBeforeDef(use)
            defined.add(ins.dest)
        if self.ret not in defined:
            raise UseBeforeDef(self.ret)


@dataclass(frozen=True)
class SsaProgram(TacProgram):
    """TacProgram in SSA form: every name is assigned at most once.

    use_def maps each used variable name to the index of its defining
    instruction in body, or -1 for parameters.
    """

    use_def: dict[str, int] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        super().__post_init__()
        seen = set(self.params)
        for ins in self.body:
            if ins.dest in seen:
                raise TacError(f"SSA violation: {ins.dest} assigned twice")
            seen.add(ins.dest)


_IDENT = r"[A-Za-z_][A-Za-z_0-9.]*"
_LIT = r"0[xX][0-9a-fA-F]+|[0-9]+"
_HEADER_RE = re.compile(
    rf"^\s*func\s+({_IDENT})\s*\(\s*({_IDENT}(?:\s*,\s*{_IDENT})*)?\s*\)\s*\{{(.*)$",
    re.S,
)
_BINOP_RE = re.compile(
    rf"^({_IDENT})\s*=\s*({_IDENT}|{_LIT})\s*(<<|>>|[+\-*&|^])\s*({_IDENT}|{_LIT})$"
)
_UNOP_RE = re.compile(rf"^({_IDENT})\s*=\s*([~\-])\s*({_IDENT}|{_LIT})$")
_MOV_RE = re.compile(rf"^({_IDENT})\s*=\s*({_IDENT}|{_LIT})$")
_RET_RE = re.compile(rf"^return\s+({_IDENT})$")


def _operand(tok: str) -> str | int:
    if re.fullmatch(_LIT, tok):
        return int(tok, 0) & MASK
    return tok


def parse_tac(text: str) -> TacProgram:
    """Parse mini-IR source into a validated TacProgram."""
    stripped_lines = []
    for lineno, raw in enumerate(text.split("\n"), start=1):
        code = raw.split("#", 1)[0]
        stripped_lines.append((lineno, code))
    joined = "\n".join(code for _, code in stripped_lines)
    m = _HEADER_RE.match(joined)
    if not m:
        raise TacSyntaxError("expected 'func name(params){'", 1, 1)
    name = m.group(1)
    params = tuple(p.strip() for p in (m.group(2) or "").split(",") if p.strip())
    rest = m.group(3)
    header_newlines = joined[: m.start(3)].count("\n")
    close = rest.rfind("}")
    if close < 0:
        raise TacSyntaxError("missing closing '}'", len(stripped_lines), 1)
    if rest[close + 1 :].strip():
        raise TacSyntaxError("trailing text after '}'", len(stripped_lines), 1)
    body_src = rest[:close]

    instrs: list[TacInstr] = []
    ret: str | None = None
    for off, line in enumerate(body_src.split("\n")):
        lineno = 1 + header_newlines + off
        for stmt in line.split(";"):
            stmt = stmt.strip()
            if not stmt:
                continue
            if ret is not None:
                raise TacSyntaxError("statement after return", lineno, 1)
            col = line.find(stmt) + 1
            mr = _RET_RE.match(stmt)
            if mr:
                ret = mr.group(1)
                continue
            mb = _BINOP_RE.match(stmt)
            if mb:
                dest, a, sym, b = mb.groups()
                instrs.append(
                    TacInstr(dest, BINARY_SYMBOLS[sym], _operand(a), _operand(b))
                )
                continue
            mu = _UNOP_RE.match(stmt)
            if mu:
                dest, sym, a = mu.groups()
                instrs.append(TacInstr(dest, UNARY_SYMBOLS[sym], _operand(a)))
                continue
            mm = _MOV_RE.match(stmt)
            if mm:
                dest, a = mm.groups()
                instrs.append(TacInstr(dest, "mov", _operand(a)))
                continue
            raise TacSyntaxError(f"cannot parse statement: {stmt!r}", lineno, col)
    if ret is None:
        raise TacSyntaxError("missing return", len(stripped_lines), 1)
    try:
        return TacProgram(name, params, tuple(instrs), ret)
    except UseBeforeDef:
        raise


def render(p: TacProgram) -> str:
    """Canonical textual form; parse_tac(render(p)) == p."""
    lines = [f"func {p.name}({', '.join(p.params)}) {{"]
    for ins in p.body:
        if ins.op == "mov":
            rhs = str(ins.lhs)
        elif ins.rhs is None:
            rhs = f"{_UNSYMBOL_OF[ins.op]}{ins.lhs}"
        else:
            rhs = f"{ins.lhs} {_SYMBOL_OF[ins.op]} {ins.rhs}"
        lines.append(f"  {ins.dest} = {rhs}")
    lines.append(f"  return {p.ret}")
    lines.append("}")
    return "\n".join(lines) + "\n"


def _apply(op: str, a: int, b: int | None) -> int:
    if op == "add":
        return (a + b) & MASK
    if op == "sub":
        return (a - b) & MASK
    if op == "mul":
        return (a * b) & MASK
    if op == "and":
        return a & b
    if op == "or":
        return a | b
    if op == "xor":
        return a ^ b
    if op == "shl":
        return (a << (b & SHIFT_MASK)) & MASK
    if op == "shr":
        return a >> (b & SHIFT_MASK)
    if op == "not":
        return MASK ^ a
    if op == "neg":
        return (-a) & MASK
    return a  # mov


def eval_tac(p: TacProgram, args: list[int]) -> int:
    """Reference interpreter: wrap-around 64-bit, shifts masked to 6 bits."""
    if len(args) != len(p.params):
        raise ArityMismatch(
            f"{p.name} expects {len(p.params)} args, got {len(args)}"
        )
    env: dict[str, int] = {n: v & MASK for n, v in zip(p.params, args)}
    for ins in p.body:
        ops = [env[o] if isinstance(o, str) else o for o in ins.operands()]
        env[ins.dest] = _apply(ins.op, ops[0], ops[1] if len(ops) > 1 else None)
    return env[p.ret]


def to_ssa(p: TacProgram) -> SsaProgram:
    """SSA conversion with mov elimination by copy propagation.

    Reassigned names get `.N` version suffixes; each use is rewired to the
    latest definition.  mov instructions disappear; their dests alias.
    """
    current: dict[str, str] = {n: n for n in p.params}
    counts: dict[str, int] = {}
    def_index: dict[str, int] = {n: -1 for n in p.params}
    body: list[TacInstr] = []
    taken = set(p.params) | {i.dest for i in p.body}

    def resolve(o: str | int) -> str | int:
        return current[o] if isinstance(o, str) else o

    for ins in p.body:
        if ins.op == "mov":
            src = resolve(ins.lhs)
            if isinstance(src, str):
                current[ins.dest] = src
            else:
                # constant mov still needs a definition point; keep it
                new = _version(ins.dest, counts, taken)
                body.append(TacInstr(new, "mov", src))
                def_index[new] = len(body) - 1
                current[ins.dest] = new
            continue
        ops = tuple(resolve(o) for o in ins.operands())
        new = _version(ins.dest, counts, taken)
        body.append(
            TacInstr(new, ins.op, ops[0], ops[1] if len(ops) > 1 else None)
        )
        def_index[new] = len(body) - 1
        current[ins.dest] = new

    ret = current[p.ret]
    if isinstance(ret, int):  # pragma: no cover - ret is always a name
        raise TacError("return of constant mov unsupported")
    used = {ret}
    for ins in body:
        used.update(ins.uses())
    use_def = {n: def_index[n] for n in sorted(used)}
    return SsaProgram(p.name, p.params, tuple(body), ret, use_def=use_def)


def _version(name: str, counts: dict[str, int], taken: set[str]) -> str:
    base = name.split(".", 1)[0]
    n = counts.get(base, 0) + 1
    counts[base] = n
    new = f"{base}.{n}"
    while new in taken:
        n += 1
        counts[base] = n
        new = f"{base}.{n}"
    taken.add(new)
    return new
