"""Shared attack-suite types: targets, modes, and the report record."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

from ..expr import Expr
from ..obfuscate import CoreSemantics, Handler


@dataclass(frozen=True)
class Static:
    mode = "static"


@dataclass(frozen=True)
class Dynamic:
    """Observed runtime values: the selecting key and sample operands."""

    k: int
    x: int = 0
    y: int = 0
    c: int = 0
    mode = "dynamic"


@dataclass(frozen=True)
class AttackTarget:
    handler: Handler
    mode: Static | Dynamic
    ground_truth: CoreSemantics  # scoring only; attacks must not read it
    slot_index: int = 0

    def __post_init__(self):
        if isinstance(self.mode, Dynamic):
            if self.mode.k not in self.handler.key_set.keys:
                raise ValueError("dynamic key is not in the handler key set")


@dataclass
class AttackReport:
    attack: str
    mode: str
    success: bool
    unmarked_fraction: float | None = None
    time_ms: float = 0.0
    budget_spent: int = 0
    seed: int = 0
    output: str | None = None  # simplified/synthesized expression text
    recovered_key: int | None = None
    marked: int | None = None
    unmarked: int | None = None
    expr_size: int | None = None
    detail: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        rec = {
            "attack": self.attack,
            "mode": self.mode,
            "success": self.success,
            "unmarked_fraction": self.unmarked_fraction,
            "time_ms": round(self.time_ms, 3),
            "budget_spent": self.budget_spent,
            "seed": self.seed,
        }
        if self.output is not None:
            rec["output"] = self.output
        if self.recovered_key is not None:
            rec["recovered_key"] = self.recovered_key
        if self.marked is not None:
            rec["marked"] = self.marked
            rec["unmarked"] = self.unmarked
        if self.expr_size is not None:
            rec["expr_size"] = self.expr_size
        if self.detail:
            rec["detail"] = self.detail
        return rec


def write_reports(path: str, reports: list[AttackReport]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in reports:
            fh.write(json.dumps(r.to_json(), sort_keys=True) + "\n")


def read_reports(path: str) -> list[dict]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out


class Timer:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.ms = (time.perf_counter() - self.t0) * 1000.0
