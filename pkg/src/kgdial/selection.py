"""Factorized knowledge snippet selection.

Surface matching plus a neural refiner propose a small set of (domain,
entity) candidates; each candidate's snippets are scored as the product of a
domain probability and a within-candidate knowledge probability. Entity names
are masked by their domain before knowledge scoring so the scorer sees the
semantics of the query rather than the entity itself.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

from .dialog import ContextWindow
from .kb import Entity, KnowledgeBase, KnowledgeSnippet, doc_sort_key
from .matching import (
    DEFAULT_MATCH_CONFIG,
    MatchConfig,
    _similarity_normalized,
    _tokens_with_spans,
    expand_aliases,
    match_domains,
    match_entities,
)
from .scoring import ScorerContract, softmax_over


class Provenance(str, Enum):
    SURFACE_MATCH = "SurfaceMatch"
    REFINER = "Refiner"


@dataclass(frozen=True)
class DECandidate:
    """A candidate selection focus: a domain-wide domain or one of its entities."""

    domain: str
    entity_id: str | None
    provenance: Provenance


@dataclass(frozen=True)
class RankedSnippet:
    snippet: KnowledgeSnippet
    domain_prob: float
    knowledge_prob: float
    confidence: float

    def __post_init__(self) -> None:
        if abs(self.confidence - self.domain_prob * self.knowledge_prob) > 1e-12:
            raise ValueError("confidence must be the product of its two factors")


def _window_text(window: ContextWindow) -> str:
    return " ".join(t.text for t in window.turns)


def select_de_candidates(
    window: ContextWindow,
    kb: KnowledgeBase,
    scorer_refine: ScorerContract,
    cfg: MatchConfig = DEFAULT_MATCH_CONFIG,
) -> list[DECandidate]:
    """Surface-matched domain/entity candidates, refined by a scorer.

    The refiner ranks every domain-wide domain and every (domain, entity)
    pair against the window; its top pick joins the candidates only when it
    names a different domain than the top surface match. The result keeps at
    most one entity per domain, surface matches first.
    """
    mentions = sorted(
        match_entities(window, kb, None, cfg) + match_domains(window, kb, cfg),
        key=lambda m: (-m.score, m.domain, m.entity_id or ""),
    )
    candidates: list[DECandidate] = []
    seen_domains: set[str] = set()
    for m in mentions:
        if m.domain in seen_domains:
            continue
        seen_domains.add(m.domain)
        candidates.append(DECandidate(m.domain, m.entity_id, Provenance.SURFACE_MATCH))

    refiner_targets: list[tuple[str, str, str | None]] = []
    for domain in sorted(kb.domain_wide):
        refiner_targets.append((domain, domain, None))
    for domain in sorted(kb.entity_specific):
        for entity in kb.entities_in(domain):
            refiner_targets.append((f"{domain} {entity.canonical_name}", domain, entity.entity_id))
    if refiner_targets:
        premise = _window_text(window)
        scores = scorer_refine.score_pairs([(premise, label) for label, _, _ in refiner_targets])
        order = sorted(
            zip(scores, refiner_targets),
            key=lambda st: (-st[0], st[1][1], st[1][2] or ""),
        )
        _, (_, top_domain, top_entity) = order[0]
        if not candidates or top_domain != candidates[0].domain:
            if top_domain not in seen_domains:
                candidates.append(DECandidate(top_domain, top_entity, Provenance.REFINER))
    return candidates


def domain_probability(
    window: ContextWindow, domains: Sequence[str], scorer_domain: ScorerContract
) -> dict[str, float]:
    """Softmax-normalized relevance of each domain label to the window."""
    if not domains:
        raise ValueError("at least one domain is required")
    premise = _window_text(window)
    scores = scorer_domain.score_pairs([(premise, d) for d in domains])
    return dict(zip(domains, softmax_over(scores)))


def mask_entity(
    text: str,
    entity: Entity,
    domain: str,
    cfg: MatchConfig = DEFAULT_MATCH_CONFIG,
) -> str:
    """Replace every fuzzy occurrence of the entity's aliases with the domain.

    Matching reuses the surface matcher's token n-gram scan and threshold, so
    misspellings get masked too. The operation is idempotent.
    """
    tokens = _tokens_with_spans(text, cfg)
    if not tokens:
        return text
    words = [w for w, _, _ in tokens]
    hits: list[tuple[float, int, int, int]] = []  # (sim, n_tokens, start_tok, end_tok)
    for alias in expand_aliases(entity, cfg):
        alias_len = len(alias.split())
        lo = max(1, alias_len - 1)
        hi = min(len(words), alias_len + 1)
        for n in range(lo, hi + 1):
            for i in range(len(words) - n + 1):
                sim = _similarity_normalized(" ".join(words[i : i + n]), alias)
                if sim >= cfg.similarity_threshold:
                    hits.append((sim, n, i, i + n - 1))
    if not hits:
        return text
    hits.sort(key=lambda h: (-h[0], -h[1], h[2]))
    taken: list[tuple[int, int]] = []
    spans: list[tuple[int, int]] = []
    for _sim, _n, start_tok, end_tok in hits:
        if any(not (end_tok < s or start_tok > e) for s, e in taken):
            continue
        taken.append((start_tok, end_tok))
        spans.append((tokens[start_tok][1], tokens[end_tok][2]))
    out = text
    for start, end in sorted(spans, reverse=True):
        out = out[:start] + domain + out[end:]
    return out


def knowledge_probability(
    current_utterance: str,
    candidate: DECandidate,
    snippets: Sequence[KnowledgeSnippet],
    scorer_know: ScorerContract,
    kb: KnowledgeBase,
    cfg: MatchConfig = DEFAULT_MATCH_CONFIG,
) -> dict[KnowledgeSnippet, float]:
    """Within-candidate snippet probabilities, normalized to sum to 1.

    The premise is the current user utterance and each hypothesis is
    "<domain> <title> <body>", with entity names masked by the domain on both
    sides for entity-specific candidates.
    """
    if not snippets:
        raise ValueError("candidate has no snippets to score")
    for s in snippets:
        if s.domain != candidate.domain or s.entity_id != candidate.entity_id:
            raise ValueError(f"snippet {s.ref} does not belong to candidate {candidate}")
    entity = kb.entity(candidate.domain, candidate.entity_id) if candidate.entity_id else None

    def masked(text: str) -> str:
        return mask_entity(text, entity, candidate.domain, cfg) if entity else text

    premise = masked(current_utterance)
    hypotheses = [f"{candidate.domain} {masked(s.title)} {masked(s.body)}" for s in snippets]
    probs = softmax_over(scorer_know.score_pairs([(premise, h) for h in hypotheses]))
    return dict(zip(snippets, probs))


def _rank_for_pairs(
    window: ContextWindow,
    kb: KnowledgeBase,
    pairs: Sequence[tuple[str, str | None]],
    scorer_domain: ScorerContract,
    scorer_know: ScorerContract,
    k: int,
    cfg: MatchConfig,
) -> list[RankedSnippet]:
    if k < 1:
        raise ValueError("k must be at least 1")
    domains = sorted({d for d, _ in pairs})
    dprobs = domain_probability(window, domains, scorer_domain)
    utterance = window.turns[-1].text
    ranked: list[RankedSnippet] = []
    for domain, entity_id in pairs:
        snippets = kb.snippets_for(domain, entity_id)
        if not snippets:
            continue
        candidate = DECandidate(domain, entity_id, Provenance.SURFACE_MATCH)
        kprobs = knowledge_probability(utterance, candidate, snippets, scorer_know, kb, cfg)
        dp = dprobs[domain]
        for snippet, kp in kprobs.items():
            ranked.append(RankedSnippet(snippet, dp, kp, dp * kp))
    if not ranked:
        raise ValueError("no snippets found under any candidate")
    ranked.sort(
        key=lambda r: (
            -r.confidence,
            r.snippet.domain,
            r.snippet.entity_id or "",
            doc_sort_key(r.snippet.doc_id),
        )
    )
    return ranked[:k]


def rank_snippets(
    window: ContextWindow,
    kb: KnowledgeBase,
    candidates: Sequence[DECandidate],
    scorer_domain: ScorerContract,
    scorer_know: ScorerContract,
    k: int = 5,
    cfg: MatchConfig = DEFAULT_MATCH_CONFIG,
) -> list[RankedSnippet]:
    """Top-k snippets across the candidates, scored domain_prob x knowledge_prob.

    Confidences are raw products (not renormalized across candidates); ties
    break by (domain, entity_id, doc_id) ascending.
    """
    if not candidates:
        raise ValueError("at least one candidate is required")
    pairs = [(c.domain, c.entity_id) for c in candidates]
    return _rank_for_pairs(window, kb, pairs, scorer_domain, scorer_know, k, cfg)


def brute_force_joint(
    window: ContextWindow,
    kb: KnowledgeBase,
    scorer_domain: ScorerContract,
    scorer_know: ScorerContract,
    k: int = 5,
    cfg: MatchConfig = DEFAULT_MATCH_CONFIG,
) -> list[RankedSnippet]:
    """Reference ranking that scores every snippet in the whole knowledge base.

    Applies the exact same scoring formula as rank_snippets but without the
    candidate pruning. Intended for small, test-scale knowledge bases.
    """
    pairs: list[tuple[str, str | None]] = [(d, None) for d in sorted(kb.domain_wide)]
    for domain in sorted(kb.entity_specific):
        for entity in kb.entities_in(domain):
            pairs.append((domain, entity.entity_id))
    return _rank_for_pairs(window, kb, pairs, scorer_domain, scorer_know, k, cfg)
