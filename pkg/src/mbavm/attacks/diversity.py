"""MBA diversity measurement: unique normalized forms and corpus overlap."""

from __future__ import annotations

from dataclasses import dataclass

from ..expr import Expr, normalize, to_text


@dataclass(frozen=True)
class DiversityReport:
    total: int
    unique: int
    unique_fraction: float
    overlap: int | None = None
    overlap_fraction: float | None = None


def mba_diversity(
    corpus: list[Expr], second_corpus: list[Expr] | None = None
) -> DiversityReport:
    forms = [to_text(normalize(e)) for e in corpus]
    uniq = set(forms)
    overlap = overlap_frac = None
    if second_corpus is not None:
        other = {to_text(normalize(e)) for e in second_corpus}
        inter = uniq & other
        overlap = len(inter)
        denom = min(len(uniq), len(other))
        overlap_frac = overlap / denom if denom else 0.0
    return DiversityReport(
        total=len(corpus),
        unique=len(uniq),
        unique_fraction=len(uniq) / len(corpus) if corpus else 0.0,
        overlap=overlap,
        overlap_fraction=overlap_frac,
    )
