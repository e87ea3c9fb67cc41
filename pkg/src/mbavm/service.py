"""HTTP API over the obfuscation workbench.

Bytecode travels as hex strings and handler sets as sidecar JSON objects,
so a round trip through /obfuscate, /verify, and /attack needs no shared
filesystem with the server.  Rule databases are heavyweight, so they are
loaded from server-local paths and cached per path.
"""

from __future__ import annotations

import random
from typing import Literal

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from . import __version__
from .attacks import (
    AttackTarget,
    Dynamic,
    Static,
    SynthBudget,
    backward_slice,
    cegar_key_recovery,
    symex_simplify,
    synthesize_semantics,
    taint_forward,
)
from .bytecode import decode, encode, handler_set_from_json, handler_set_to_json
from .eqdb import EquivClassDb, load_db
from .expr import (
    ExprParseError,
    RandomSampling,
    check_equiv,
    normalize,
    parse_expr,
    to_text,
)
from .obfuscate import ObfuscationConfig, obfuscate
from .rewrite import RewriteConfig
from .tac import TacError, eval_tac, parse_tac, to_ssa
from .vm import run

app = FastAPI(title="mbavm", version=__version__)

_DB_CACHE: dict[str, EquivClassDb] = {}


def _db(path: str | None) -> EquivClassDb | None:
    if path is None:
        return None
    if path not in _DB_CACHE:
        try:
            _DB_CACHE[path] = load_db(path)
        except OSError as exc:
            raise HTTPException(status_code=400, detail=f"cannot load db: {exc}")
    return _DB_CACHE[path]


class ParseRequest(BaseModel):
    source: str


class ParseResponse(BaseModel):
    name: str
    params: list[str]
    instr_count: int
    ssa: str


class EvalRequest(BaseModel):
    source: str
    args: list[int]


class EvalResponse(BaseModel):
    result: int


class NormalizeRequest(BaseModel):
    expr: str


class NormalizeResponse(BaseModel):
    normalized: str
    size: int


class CheckEquivRequest(BaseModel):
    a: str
    b: str
    samples: int = Field(default=1000, ge=1, le=1_000_000)
    seed: int = 0


class CheckEquivResponse(BaseModel):
    equivalent: bool
    counterexample: dict[str, int] | None = None


class ObfuscateRequest(BaseModel):
    source: str
    seed: int = 0
    db_path: str | None = None
    use_mba: bool = True
    use_superops: bool = True
    handler_count: int = Field(default=64, ge=1, le=4096)
    prime_bits: Literal[16, 32] = 16
    bound_min: int | None = None
    bound_max: int | None = None


class ObfuscateResponse(BaseModel):
    bytecode: str
    sidecar: dict
    steps: int
    handlers: int


class VerifyRequest(BaseModel):
    source: str
    bytecode: str
    sidecar: dict
    inputs: int = Field(default=1000, ge=1, le=100_000)
    seed: int = 0


class VerifyResponse(BaseModel):
    equal: bool
    tested: int
    mismatch: list[int] | None = None


class AttackRequest(BaseModel):
    sidecar: dict
    handler_id: int
    attack: Literal["taint", "slice", "symex", "synth", "cegar"]
    mode: Literal["static", "dynamic"] = "static"
    key: int | None = None  # required for dynamic mode
    slot_index: int = 0
    db_path: str | None = None
    budget: int | None = None
    seed: int = 0


class AttackResponse(BaseModel):
    report: dict


@app.get("/health")
def health() -> dict:
    return {"status": "ok", "version": __version__}


@app.post("/parse", response_model=ParseResponse)
def parse(req: ParseRequest) -> ParseResponse:
    try:
        p = parse_tac(req.source)
    except TacError as exc:
        raise HTTPException(status_code=422, detail=str(exc))
    return ParseResponse(
        name=p.name,
        params=list(p.params),
        instr_count=len(p.body),
        ssa=" ".join(i.dest for i in to_ssa(p).body),
    )


@app.post("/eval", response_model=EvalResponse)
def eval_program(req: EvalRequest) -> EvalResponse:
    try:
        p = parse_tac(req.source)
        result = eval_tac(p, req.args)
    except TacError as exc:
        raise HTTPException(status_code=422, detail=str(exc))
    return EvalResponse(result=result)


@app.post("/expr/normalize", response_model=NormalizeResponse)
def expr_normalize(req: NormalizeRequest) -> NormalizeResponse:
    try:
        n = normalize(parse_expr(req.expr))
    except ExprParseError as exc:
        raise HTTPException(status_code=422, detail=str(exc))
    return NormalizeResponse(normalized=to_text(n), size=n.size)


@app.post("/expr/check-equiv", response_model=CheckEquivResponse)
def expr_check_equiv(req: CheckEquivRequest) -> CheckEquivResponse:
    try:
        a, b = parse_expr(req.a), parse_expr(req.b)
    except ExprParseError as exc:
        raise HTTPException(status_code=422, detail=str(exc))
    verdict = check_equiv(a, b, RandomSampling(req.samples, req.seed))
    return CheckEquivResponse(
        equivalent=verdict.equivalent, counterexample=verdict.counterexample
    )


@app.post("/obfuscate", response_model=ObfuscateResponse)
def obfuscate_program(req: ObfuscateRequest) -> ObfuscateResponse:
    try:
        p = parse_tac(req.source)
    except TacError as exc:
        raise HTTPException(status_code=422, detail=str(exc))
    db = _db(req.db_path)
    if db is None and req.use_mba:
        raise HTTPException(
            status_code=400, detail="db_path is required when use_mba is true"
        )
    rw = RewriteConfig(seed=req.seed)
    if req.bound_min is not None and req.bound_max is not None:
        rw = RewriteConfig(
            bound_min=req.bound_min, bound_max=req.bound_max, seed=req.seed
        )
    cfg = ObfuscationConfig(
        handler_count=req.handler_count,
        rewrite=rw,
        prime_bits=req.prime_bits,
        use_mba=req.use_mba,
        use_superops=req.use_superops,
        seed=req.seed,
    )
    bp, hs, _ = obfuscate(p, db, cfg)
    return ObfuscateResponse(
        bytecode=encode(bp).hex(),
        sidecar=handler_set_to_json(hs),
        steps=len(bp.steps),
        handlers=len(hs.handlers),
    )


@app.post("/verify", response_model=VerifyResponse)
def verify_program(req: VerifyRequest) -> VerifyResponse:
    try:
        p = parse_tac(req.source)
        bp = decode(bytes.fromhex(req.bytecode))
        hs = handler_set_from_json(req.sidecar)
    except (TacError, ValueError) as exc:
        raise HTTPException(status_code=422, detail=str(exc))
    rng = random.Random(req.seed)
    tested = 0
    for _ in range(req.inputs):
        args = [rng.getrandbits(64) for _ in p.params]
        tested += 1
        if run(bp, hs, args) != eval_tac(p, args):
            return VerifyResponse(equal=False, tested=tested, mismatch=args)
    return VerifyResponse(equal=True, tested=tested)


@app.post("/attack", response_model=AttackResponse)
def attack_handler(req: AttackRequest) -> AttackResponse:
    try:
        hs = handler_set_from_json(req.sidecar)
        h = hs.by_id(req.handler_id)
    except (KeyError, ValueError) as exc:
        raise HTTPException(status_code=422, detail=str(exc))
    if not 0 <= req.slot_index < len(h.slots):
        raise HTTPException(status_code=422, detail="slot_index out of range")
    sem = h.slots[req.slot_index][1]
    if req.mode == "dynamic":
        key = req.key
        if key is None:
            key = h.key_set.keys[h.slots[req.slot_index][0].associated_index]
        try:
            mode = Dynamic(k=key)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
    else:
        mode = Static()
    try:
        t = AttackTarget(h, mode, sem, req.slot_index)
    except ValueError as exc:
        raise HTTPException(status_code=422, detail=str(exc))
    if req.attack == "taint":
        rep = taint_forward(t, seed=req.seed)
    elif req.attack == "slice":
        rep = backward_slice(t, seed=req.seed)
    elif req.attack == "symex":
        rep = symex_simplify(t, _db(req.db_path), seed=req.seed)
    elif req.attack == "synth":
        if req.mode != "dynamic":
            raise HTTPException(
                status_code=422, detail="synth needs dynamic mode (an observed key)"
            )
        budget = SynthBudget(iterations=req.budget or 50_000)
        rep = synthesize_semantics(t, budget, seed=req.seed)
    else:  # cegar
        st = t if req.mode == "static" else AttackTarget(h, Static(), sem, req.slot_index)
        codebook = [s.expr for _, s in h.slots]
        rep = cegar_key_recovery(
            st, codebook, budget=req.budget or 1_000_000, seed=req.seed
        )
    return AttackResponse(report=rep.to_json())
