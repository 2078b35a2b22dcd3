"""Evaluation metrics: detection, selection ranking, and text generation.

Text metrics share one frozen tokenizer (lowercase, split on anything that is
not a letter or digit). Sentence-level scores are averaged over the corpus by
the report layer.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from typing import Collection, Sequence

from .kb import SnippetRef

_TOKEN_RE = re.compile(r"[a-z0-9]+")

BLEU_EPSILON = 1e-9


def metric_tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class DetectionMetrics:
    accuracy: float
    precision: float
    recall: float
    f1: float
    flags: tuple[str, ...] = ()

    def as_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "flags": list(self.flags),
        }


@dataclass(frozen=True)
class SelectionMetrics:
    mrr_at_5: float
    recall_at_1: float
    recall_at_5: float

    def as_dict(self) -> dict:
        return {
            "mrr_at_5": self.mrr_at_5,
            "recall_at_1": self.recall_at_1,
            "recall_at_5": self.recall_at_5,
        }


@dataclass(frozen=True)
class GenerationMetrics:
    bleu_1: float
    bleu_2: float
    bleu_3: float
    bleu_4: float
    meteor: float
    rouge_1: float
    rouge_2: float
    rouge_l: float

    def as_dict(self) -> dict:
        return {
            "bleu_1": self.bleu_1,
            "bleu_2": self.bleu_2,
            "bleu_3": self.bleu_3,
            "bleu_4": self.bleu_4,
            "meteor": self.meteor,
            "rouge_1": self.rouge_1,
            "rouge_2": self.rouge_2,
            "rouge_l": self.rouge_l,
        }


class CaseLabel(str, Enum):
    CASE1 = "Case1"
    CASE2 = "Case2"
    CASE3 = "Case3"


def detection_metrics(predictions: Sequence[bool], golds: Sequence[bool]) -> DetectionMetrics:
    """Binary classification metrics with knowledge-seeking as the positive class.

    Degenerate denominators score 0 and raise a flag instead of an error.
    """
    if len(predictions) != len(golds):
        raise ValueError(f"{len(predictions)} predictions for {len(golds)} golds")
    if not predictions:
        raise ValueError("cannot compute metrics over zero turns")
    tp = sum(1 for p, g in zip(predictions, golds) if p and g)
    fp = sum(1 for p, g in zip(predictions, golds) if p and not g)
    fn = sum(1 for p, g in zip(predictions, golds) if not p and g)
    tn = len(golds) - tp - fp - fn
    flags: list[str] = []
    if tp + fp == 0:
        precision = 0.0
        flags.append("no_positive_predictions")
    else:
        precision = tp / (tp + fp)
    if tp + fn == 0:
        recall = 0.0
        flags.append("no_gold_positives")
    else:
        recall = tp / (tp + fn)
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    accuracy = (tp + tn) / len(golds)
    return DetectionMetrics(accuracy, precision, recall, f1, tuple(flags))


def selection_metrics(
    ranked_lists: Sequence[Sequence[SnippetRef]],
    golds: Sequence[Collection[SnippetRef]],
    k: int = 5,
) -> SelectionMetrics:
    """Mean reciprocal rank and recall over per-turn rankings.

    Each turn scores 1/rank when a gold reference appears within the top k,
    else 0. Turns with an empty ranking (for example, missed by detection)
    contribute 0 everywhere.
    """
    if len(ranked_lists) != len(golds):
        raise ValueError("rankings and golds are misaligned")
    if not ranked_lists:
        raise ValueError("cannot compute metrics over zero turns")
    rr_total = 0.0
    hits_1 = 0
    hits_k = 0
    for refs, gold in zip(ranked_lists, golds):
        gold_set = set(gold)
        rank = next(
            (i + 1 for i, ref in enumerate(refs[:k]) if ref in gold_set),
            None,
        )
        if rank is not None:
            rr_total += 1.0 / rank
            hits_k += 1
            if rank == 1:
                hits_1 += 1
    n = len(ranked_lists)
    return SelectionMetrics(rr_total / n, hits_1 / n, hits_k / n)


def _ngrams(tokens: Sequence[str], n: int) -> list[tuple[str, ...]]:
    return [tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1)]


def bleu(candidate: str, references: Sequence[str], max_n: int = 4) -> float:
    """Sentence-level BLEU: clipped n-gram precision geometric mean times a
    brevity penalty.

    Orders where the candidate has no n-grams at all are skipped (effective
    order); orders with n-grams but zero matches contribute an epsilon so the
    geometric mean stays defined.
    """
    if not 1 <= max_n <= 4:
        raise ValueError("max_n must be between 1 and 4")
    if not references:
        raise ValueError("at least one reference is required")
    cand = metric_tokenize(candidate)
    if not cand:
        raise ValueError("empty candidate")
    refs = [metric_tokenize(r) for r in references]
    log_sum = 0.0
    orders = 0
    for n in range(1, max_n + 1):
        cand_counts = Counter(_ngrams(cand, n))
        total = sum(cand_counts.values())
        if total == 0:
            continue
        max_ref: dict[tuple[str, ...], int] = {}
        for ref in refs:
            for gram, count in Counter(_ngrams(ref, n)).items():
                if count > max_ref.get(gram, 0):
                    max_ref[gram] = count
        clipped = sum(min(c, max_ref.get(g, 0)) for g, c in cand_counts.items())
        precision = clipped / total
        log_sum += math.log(precision if precision > 0 else BLEU_EPSILON)
        orders += 1
    geo_mean = math.exp(log_sum / orders)
    c = len(cand)
    r = min(refs, key=lambda ref: (abs(len(ref) - c), len(ref)))
    r_len = len(r)
    bp = 1.0 if c > r_len else math.exp(1 - r_len / c)
    return bp * geo_mean


def _lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    prev = [0] * (len(b) + 1)
    for x in a:
        row = [0]
        for j, y in enumerate(b, start=1):
            row.append(prev[j - 1] + 1 if x == y else max(prev[j], row[j - 1]))
        prev = row
    return prev[-1]


def rouge(candidate: str, reference: str, variant: int | str) -> float:
    """ROUGE-n (F1 of clipped n-gram overlap) or ROUGE-L (F1 from the LCS)."""
    cand = metric_tokenize(candidate)
    ref = metric_tokenize(reference)
    if not cand or not ref:
        raise ValueError("empty inputs")
    key = str(variant).upper()
    if key == "L":
        overlap = _lcs_length(cand, ref)
        p_total, r_total = len(cand), len(ref)
    elif key in ("1", "2"):
        n = int(key)
        cand_grams = Counter(_ngrams(cand, n))
        ref_grams = Counter(_ngrams(ref, n))
        overlap = sum(min(c, ref_grams.get(g, 0)) for g, c in cand_grams.items())
        p_total = sum(cand_grams.values())
        r_total = sum(ref_grams.values())
        if p_total == 0 or r_total == 0:
            return 0.0
    else:
        raise ValueError(f"unknown rouge variant {variant!r}")
    if overlap == 0:
        return 0.0
    precision = overlap / p_total
    recall = overlap / r_total
    return 2 * precision * recall / (precision + recall)


def meteor_simplified(candidate: str, reference: str) -> float:
    """Exact-match unigram variant of the alignment-and-chunks metric.

    Leftmost-greedy alignment; recall-weighted harmonic mean 10PR/(R + 9P);
    fragmentation penalty 0.5 * (chunks / matches)^3. No stemming or synonym
    matching is applied, hence the name.
    """
    cand = metric_tokenize(candidate)
    ref = metric_tokenize(reference)
    if not cand or not ref:
        raise ValueError("empty inputs")
    used = [False] * len(ref)
    pairs: list[tuple[int, int]] = []
    for i, token in enumerate(cand):
        for j, ref_token in enumerate(ref):
            if not used[j] and ref_token == token:
                used[j] = True
                pairs.append((i, j))
                break
    matches = len(pairs)
    if matches == 0:
        return 0.0
    precision = matches / len(cand)
    recall = matches / len(ref)
    f_mean = 10 * precision * recall / (recall + 9 * precision)
    chunks = 1 + sum(
        1
        for (i1, j1), (i2, j2) in zip(pairs, pairs[1:])
        if not (i2 == i1 + 1 and j2 == j1 + 1)
    )
    penalty = 0.5 * (chunks / matches) ** 3
    return f_mean * (1 - penalty)


def categorize_case(
    ranked: Sequence[SnippetRef],
    gold: SnippetRef | Collection[SnippetRef],
    n: int = 4,
) -> CaseLabel:
    """Where the gold snippet landed: rank 1, within the top n, or missed."""
    if not ranked:
        raise ValueError("cannot categorize an empty ranking")
    gold_set = {gold} if isinstance(gold, SnippetRef) else set(gold)
    if ranked[0] in gold_set:
        return CaseLabel.CASE1
    if any(ref in gold_set for ref in ranked[1:n]):
        return CaseLabel.CASE2
    return CaseLabel.CASE3


def generation_metrics(
    candidates: Sequence[str], references: Sequence[str]
) -> GenerationMetrics:
    """Corpus metrics: the mean of sentence-level scores over aligned pairs."""
    if len(candidates) != len(references):
        raise ValueError("candidates and references are misaligned")
    if not candidates:
        raise ValueError("cannot compute metrics over zero pairs")
    n = len(candidates)

    def mean(values: list[float]) -> float:
        return sum(values) / n

    return GenerationMetrics(
        bleu_1=mean([bleu(c, [r], 1) for c, r in zip(candidates, references)]),
        bleu_2=mean([bleu(c, [r], 2) for c, r in zip(candidates, references)]),
        bleu_3=mean([bleu(c, [r], 3) for c, r in zip(candidates, references)]),
        bleu_4=mean([bleu(c, [r], 4) for c, r in zip(candidates, references)]),
        meteor=mean([meteor_simplified(c, r) for c, r in zip(candidates, references)]),
        rouge_1=mean([rouge(c, r, 1) for c, r in zip(candidates, references)]),
        rouge_2=mean([rouge(c, r, 2) for c, r in zip(candidates, references)]),
        rouge_l=mean([rouge(c, r, "L") for c, r in zip(candidates, references)]),
    )
