"""Monte-Carlo tree search program synthesis from an input-output oracle.

Top-down leftmost-hole enumeration over the three-variable grammar
{x, y, c} with eight binary and two unary operators, guided by UCT.  The
reward of a candidate is its average bitwise similarity to the oracle's
outputs on a probe set.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass

from ..expr import (
    Binary,
    Expr,
    MASK,
    RandomSampling,
    Unary,
    Var,
    check_equiv,
    eval_expr,
    to_text,
)
from .base import AttackReport, AttackTarget, Dynamic, Timer
from .symex import subst_key

LEAVES = ("x", "y", "c")
BIN_OPS = ("add", "sub", "mul", "and", "or", "xor", "shl", "shr")
UN_OPS = ("not", "neg")
# action encoding: 0..2 leaves, 3..10 binary, 11..12 unary
ACTIONS = tuple(LEAVES) + BIN_OPS + UN_OPS
_ARITY = [0] * 3 + [2] * 8 + [1] * 2


@dataclass(frozen=True)
class SynthBudget:
    """Mirrors the 4-tuple (UCT exploration, iterations, depth cap, unused)."""

    uct_constant: float = 1.5
    iterations: int = 50_000
    max_depth: int = 20
    unused: int = 0

    def as_vector(self) -> tuple:
        return (self.uct_constant, self.iterations, self.max_depth, self.unused)


def tokens_to_expr(tokens: tuple[int, ...]) -> Expr:
    pos = 0

    def build() -> Expr:
        nonlocal pos
        a = tokens[pos]
        pos += 1
        if a < 3:
            return Var(ACTIONS[a])
        if a < 11:
            left = build()
            right = build()
            return Binary(ACTIONS[a], left, right)
        return Unary(ACTIONS[a], build())

    return build()


class _Node:
    __slots__ = ("visits", "total", "children", "untried")

    def __init__(self, legal: list[int]):
        self.visits = 0
        self.total = 0.0
        self.children: dict[int, _Node] = {}
        self.untried = list(legal)


def _legal_actions(length: int, holes: int, cap: int) -> list[int]:
    out = []
    for a, arity in enumerate(_ARITY):
        if length + 1 + (holes - 1 + arity) <= cap:
            out.append(a)
    return out


def _bit_similarity(a: int, b: int) -> float:
    return 1.0 - bin(a ^ b).count("1") / 64.0


class MctsSynthesizer:
    def __init__(
        self,
        oracle,
        budget: SynthBudget,
        seed: int = 0,
        probe_count: int = 16,
    ):
        self.oracle = oracle
        self.budget = budget
        self.rng = random.Random(seed)
        self.probes = self._make_probes(probe_count)
        self.targets = [oracle(p) & MASK for p in self.probes]
        self.iterations_used = 0

    def _make_probes(self, count: int) -> list[dict[str, int]]:
        rng = random.Random(0xBEEF)
        probes = [
            {"x": 0, "y": 0, "c": 0},
            {"x": 1, "y": 1, "c": 1},
            {"x": MASK, "y": MASK, "c": MASK},
        ]
        while len(probes) < count:
            probes.append(
                {v: rng.getrandbits(64) for v in ("x", "y", "c")}
            )
        return probes

    def _reward(self, tokens: tuple[int, ...]) -> tuple[float, Expr | None]:
        e = tokens_to_expr(tokens)
        total = 0.0
        exact = True
        for probe, want in zip(self.probes, self.targets):
            got = eval_expr(e, probe)
            if got != want:
                exact = False
            total += _bit_similarity(got, want)
        return total / len(self.probes), (e if exact else None)

    def _rollout(self, tokens: list[int], holes: int) -> tuple[int, ...] | None:
        cap = self.budget.max_depth
        while holes:
            legal = _legal_actions(len(tokens), holes, cap)
            if not legal:
                return None
            # bias leaves as the expression approaches the size cap
            room = cap - len(tokens) - holes
            if room <= 2 or self.rng.random() < 0.4:
                leaf_legal = [a for a in legal if _ARITY[a] == 0]
                if leaf_legal:
                    legal = leaf_legal
            a = legal[self.rng.randrange(len(legal))]
            tokens.append(a)
            holes += _ARITY[a] - 1
        return tuple(tokens)

    def _verify(self, e: Expr) -> bool:
        rng = random.Random(0xF00D)
        for _ in range(32):
            probe = {v: rng.getrandbits(64) for v in ("x", "y", "c")}
            if eval_expr(e, probe) != self.oracle(probe) & MASK:
                return False
        return True

    def run(self) -> Expr | None:
        cap = self.budget.max_depth
        c = self.budget.uct_constant
        root = _Node(_legal_actions(0, 1, cap))
        for it in range(self.budget.iterations):
            self.iterations_used = it + 1
            node = root
            tokens: list[int] = []
            holes = 1
            # selection
            while holes and not node.untried and node.children:
                logn = math.log(max(node.visits, 1))
                best_a, best_u = None, -1.0
                for a, ch in node.children.items():
                    u = ch.total / ch.visits + c * math.sqrt(logn / ch.visits)
                    if u > best_u:
                        best_a, best_u = a, u
                node = node.children[best_a]
                tokens.append(best_a)
                holes += _ARITY[best_a] - 1
            # expansion
            if holes and node.untried:
                a = node.untried.pop(self.rng.randrange(len(node.untried)))
                tokens.append(a)
                holes += _ARITY[a] - 1
                child = _Node(_legal_actions(len(tokens), holes, cap) if holes else [])
                node.children[a] = child
                node = child
                path_nodes = None
            # rollout
            complete = self._rollout(list(tokens), holes)
            if complete is None:
                reward, candidate = 0.0, None
            else:
                reward, candidate = self._reward(complete)
            # backpropagation along the selected path
            n = root
            n.visits += 1
            n.total += reward
            for a in tokens:
                n = n.children.get(a)
                if n is None:
                    break
                n.visits += 1
                n.total += reward
            if candidate is not None and self._verify(candidate):
                return candidate
        return None


def synthesize_from_oracle(
    oracle, budget: SynthBudget | None = None, seed: int = 0
) -> tuple[Expr | None, int]:
    budget = budget or SynthBudget()
    synth = MctsSynthesizer(oracle, budget, seed)
    result = synth.run()
    return result, synth.iterations_used


def synthesize_semantics(
    t: AttackTarget, budget: SynthBudget | None = None, seed: int = 0
) -> AttackReport:
    if not isinstance(t.mode, Dynamic):
        raise ValueError("synthesis requires a dynamic target (observed key)")
    budget = budget or SynthBudget()
    with Timer() as tm:
        concrete = subst_key(t.handler.merged, t.mode.k)

        def oracle(env: dict[str, int]) -> int:
            return eval_expr(concrete, env)

        result, used = synthesize_from_oracle(oracle, budget, seed)
        success = False
        if result is not None:
            verdict = check_equiv(
                result, t.ground_truth.expr, RandomSampling(1000, seed)
            )
            success = verdict.equivalent
    return AttackReport(
        attack="synth",
        mode="dynamic",
        success=success,
        time_ms=tm.ms,
        budget_spent=used,
        seed=seed,
        output=to_text(result) if result is not None else None,
        expr_size=t.handler.merged.size,
        detail={"budget_vector": list(budget.as_vector())},
    )
