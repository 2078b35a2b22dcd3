"""Scoring and generation contracts, plus the deterministic lexical baseline.

All neural models live behind two small interfaces: a pair scorer mapping
(premise, hypothesis) batches to probabilities, and a generator mapping
(history, snippets) to response text. The lexical scorer keeps the whole
pipeline runnable and reproducible without any model downloads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Protocol, Sequence, runtime_checkable

from .kb import DialogTurn, KnowledgeSnippet
from .matching import MatchConfig, normalize


@dataclass(frozen=True)
class ScoredPair:
    premise: str
    hypothesis: str
    entailment_prob: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.entailment_prob <= 1.0:
            raise ValueError(f"entailment probability {self.entailment_prob} outside [0, 1]")


@runtime_checkable
class ScorerContract(Protocol):
    def score_pairs(self, pairs: Sequence[tuple[str, str]]) -> list[float]:
        """One probability in [0, 1] per pair, in input order, deterministic."""
        ...


@runtime_checkable
class GeneratorContract(Protocol):
    def generate(
        self, history: Sequence[DialogTurn], snippets: Sequence[KnowledgeSnippet]
    ) -> str:
        """Non-empty response text for the history plus ranked snippets."""
        ...


def softmax_over(scores: Sequence[float]) -> list[float]:
    """Standard softmax. Stable under shifting all inputs by a constant."""
    if not scores:
        raise ValueError("softmax over an empty score list")
    m = max(scores)
    exps = [math.exp(s - m) for s in scores]
    z = sum(exps)
    return [e / z for e in exps]


@dataclass(frozen=True)
class IdfTable:
    """Token weights ln(1 + N/df) over a document corpus.

    Unseen tokens weigh as if they occurred once (the rarest possible). With
    an empty corpus every token weighs 1.0 so overlap scoring still works.
    """

    weights: Mapping[str, float]
    n_docs: int

    @classmethod
    def from_texts(cls, texts: Iterable[str], cfg: MatchConfig | None = None) -> "IdfTable":
        df: dict[str, int] = {}
        n = 0
        for text in texts:
            n += 1
            for token in set(normalize(text, cfg).split()):
                df[token] = df.get(token, 0) + 1
        weights = {t: math.log(1 + n / c) for t, c in df.items()}
        return cls(weights=weights, n_docs=n)

    def weight(self, token: str) -> float:
        if self.n_docs == 0:
            return 1.0
        return self.weights.get(token, math.log(1 + self.n_docs))


def lexical_score(
    premise: str, hypothesis: str, idf: IdfTable, cfg: MatchConfig | None = None
) -> float:
    """Weighted token overlap: how much of the hypothesis the premise covers.

    Sum of idf weights over shared tokens divided by the weight of all
    hypothesis tokens; 0 when the hypothesis has no weighted tokens.
    """
    p = set(normalize(premise, cfg).split())
    h = set(normalize(hypothesis, cfg).split())
    denom = sum(idf.weight(t) for t in h)
    if denom <= 0.0:
        return 0.0
    num = sum(idf.weight(t) for t in p & h)
    return num / denom


@dataclass(frozen=True)
class LexicalScorer:
    """Deterministic baseline scorer backed by an idf table."""

    idf: IdfTable
    cfg: MatchConfig | None = None

    def score_pairs(self, pairs: Sequence[tuple[str, str]]) -> list[float]:
        return [lexical_score(p, h, self.idf, self.cfg) for p, h in pairs]
