"""Automated deobfuscation attack suite: measurement plugins over handlers."""

from .base import (
    AttackReport,
    AttackTarget,
    Dynamic,
    Static,
    Timer,
    read_reports,
    write_reports,
)
from .cegar import cegar_key_recovery
from .diversity import DiversityReport, mba_diversity
from .lower import LoweredHandler, lower
from .slicing import backward_slice
from .symex import simplify_expr, symex_simplify
from .synthesis import MctsSynthesizer, SynthBudget, synthesize_from_oracle, synthesize_semantics
from .taint import taint_forward

__all__ = [
    "AttackReport",
    "AttackTarget",
    "Dynamic",
    "Static",
    "Timer",
    "read_reports",
    "write_reports",
    "cegar_key_recovery",
    "DiversityReport",
    "mba_diversity",
    "LoweredHandler",
    "lower",
    "backward_slice",
    "simplify_expr",
    "symex_simplify",
    "MctsSynthesizer",
    "SynthBudget",
    "synthesize_from_oracle",
    "synthesize_semantics",
    "taint_forward",
]
