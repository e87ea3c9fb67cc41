"""Obfuscation workbench: a bytecode-VM obfuscator for a straight-line
mini-IR (keyed handler merging, synthesized MBA rewriting, superoperators)
plus the automated attack suite used to measure its resilience."""

from .bytecode import BytecodeProgram, Step, decode, encode, load_lvm, load_sidecar, save_lvm, save_sidecar
from .eqdb import EquivClassDb, load_db, store_db, synthesize_classes
from .expr import (
    Binary,
    Const,
    Expr,
    KeyByte,
    MASK,
    Unary,
    Var,
    check_equiv,
    eval_expr,
    eval_expr_vec,
    normalize,
    parse_expr,
    syntactic_depth,
    to_smt2,
    to_text,
)
from .keyenc import KeyEncoding, KeySet, gen_factorization_encoding, synthesize_point_function
from .obfuscate import (
    CoreSemantics,
    Handler,
    HandlerSet,
    ObfuscationConfig,
    build_handlers,
    build_superoperators,
    obfuscate,
)
from .rewrite import RewriteConfig, rewrite
from .tac import TacProgram, eval_tac, parse_tac, render, to_ssa
from .vm import run, run_batch, run_traced

__version__ = "0.1.0"

__all__ = [
    "BytecodeProgram",
    "Step",
    "decode",
    "encode",
    "load_lvm",
    "load_sidecar",
    "save_lvm",
    "save_sidecar",
    "EquivClassDb",
    "load_db",
    "store_db",
    "synthesize_classes",
    "Binary",
    "Const",
    "Expr",
    "KeyByte",
    "MASK",
    "Unary",
    "Var",
    "check_equiv",
    "eval_expr",
    "eval_expr_vec",
    "normalize",
    "parse_expr",
    "syntactic_depth",
    "to_smt2",
    "to_text",
    "KeyEncoding",
    "KeySet",
    "gen_factorization_encoding",
    "synthesize_point_function",
    "CoreSemantics",
    "Handler",
    "HandlerSet",
    "ObfuscationConfig",
    "build_handlers",
    "build_superoperators",
    "obfuscate",
    "RewriteConfig",
    "rewrite",
    "TacProgram",
    "eval_tac",
    "parse_tac",
    "render",
    "to_ssa",
    "run",
    "run_batch",
    "run_traced",
    "__version__",
]
