"""Knowledge-seeking turn detection.

A turn's domain is classified first, then the best-matching entity narrows a
pool of candidate information texts: templated database sentences, knowledge
snippet texts, and configured pseudo-candidates for turns that need neither.
The pool is ranked by entailment probability against the dialog premise and
the turn counts as knowledge-seeking exactly when the top candidate came from
the knowledge side.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Sequence

from .dialog import ContextWindow, PremiseSpec, render_domain_hypothesis, render_premise
from .kb import DatabaseRecord, Entity, KnowledgeBase, SnippetRef
from .matching import DEFAULT_MATCH_CONFIG, MatchConfig, match_entities, normalize
from .scoring import ScorerContract, softmax_over

DEFAULT_PSEUDO_CANDIDATES: tuple[str, ...] = (
    "Goodbye",
    "Thanks",
    "Thank you",
    "Hello",
    "I want to book a hotel",
    "I want to book a restaurant",
    "I want to book a train",
    "I want to book a taxi",
    "That is all I need",
    "Have a nice day",
)


class CandidateSource(str, Enum):
    KNOWLEDGE = "Knowledge"
    DATABASE = "Database"
    PSEUDO = "Pseudo"


@dataclass(frozen=True)
class Candidate:
    source: CandidateSource
    text: str
    ref: SnippetRef | None = None
    record: DatabaseRecord | None = None

    def __post_init__(self) -> None:
        if self.source is CandidateSource.KNOWLEDGE and self.ref is None:
            raise ValueError("knowledge candidates must carry a snippet reference")
        if self.source is CandidateSource.PSEUDO and (self.ref or self.record):
            raise ValueError("pseudo candidates carry no reference")


@dataclass(frozen=True)
class ScoredCandidate:
    candidate: Candidate
    probability: float


@dataclass(frozen=True)
class DetectionResult:
    target: bool
    domain: str
    entity: Entity | None
    ranked_candidates: tuple[ScoredCandidate, ...]
    diagnostic: str | None = None


@dataclass(frozen=True)
class DetectorConfig:
    rank_premise: PremiseSpec = PremiseSpec(n_dialog=2, use_template=True)
    match: MatchConfig = DEFAULT_MATCH_CONFIG
    pseudo_candidates: tuple[str, ...] = DEFAULT_PSEUDO_CANDIDATES
    candidate_text: str = "body"  # "body" or "title"
    attribute_labels: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.candidate_text not in ("body", "title"):
            raise ValueError("candidate_text must be 'body' or 'title'")


def classify_domain(
    window: ContextWindow, domains: Sequence[str], scorer: ScorerContract
) -> tuple[str, dict[str, float]]:
    """Pick the domain whose hypothesis the dialog premise entails most.

    Returns the winning domain and the softmax-normalized distribution over
    all offered domains. Ties break to the alphabetically first name.
    """
    if not domains:
        raise ValueError("at least one domain is required")
    premise = render_premise(window, PremiseSpec(n_dialog=2, use_template=True))
    scores = scorer.score_pairs([(premise, render_domain_hypothesis(d)) for d in domains])
    probs = softmax_over(scores)
    dist = dict(zip(domains, probs))
    best = sorted(domains, key=lambda d: (-dist[d], d))[0]
    return best, dist


def format_db_record(
    record: DatabaseRecord, labels: Mapping[str, str] | None = None
) -> list[str]:
    """One sentence per non-name attribute: "<Label> for <name> is <value>."."""
    out = []
    for attr, value in record.attributes.items():
        if attr == "name":
            continue
        label = (labels or {}).get(attr) or attr.replace("_", " ").capitalize()
        out.append(f"{label} for {record.entity_name} is {value}.")
    return out


def _record_matches_entity(record: DatabaseRecord, entity: Entity, cfg: MatchConfig) -> bool:
    if record.domain and record.domain != entity.domain:
        return False
    name = normalize(record.entity_name, cfg)
    return any(name == normalize(alias, cfg) for alias in entity.all_names)


def build_candidate_pool(
    kb: KnowledgeBase,
    db: Sequence[DatabaseRecord],
    domain: str,
    entity: Entity | None = None,
    pseudo: Sequence[str] = DEFAULT_PSEUDO_CANDIDATES,
    *,
    candidate_text: str = "body",
    attribute_labels: Mapping[str, str] | None = None,
    match_cfg: MatchConfig = DEFAULT_MATCH_CONFIG,
) -> list[Candidate]:
    """Assemble the candidate pool for one (domain, entity) focus.

    For an entity-specific domain with a matched entity the pool holds that
    entity's snippets and database sentences; with no matched entity it falls
    back to everything under the domain. Domain-wide domains always pool at
    the domain level. Pseudo-candidates are appended in all cases.
    """
    if domain not in kb.domains:
        raise ValueError(f"unknown domain {domain!r}")
    if entity is not None:
        snippets = kb.snippets_for(domain, entity.entity_id)
        records = [r for r in db if _record_matches_entity(r, entity, match_cfg)]
    elif domain in kb.entity_specific:
        snippets = kb.domain_snippets(domain)
        records = [r for r in db if r.domain == domain]
    else:
        snippets = kb.snippets_for(domain)
        records = [r for r in db if r.domain == domain]

    pool: list[Candidate] = []
    for snippet in snippets:
        text = snippet.body if candidate_text == "body" else snippet.title
        pool.append(Candidate(CandidateSource.KNOWLEDGE, text, ref=snippet.ref))
    for record in records:
        for sentence in format_db_record(record, attribute_labels):
            pool.append(Candidate(CandidateSource.DATABASE, sentence, record=record))
    for text in pseudo:
        pool.append(Candidate(CandidateSource.PSEUDO, text))
    return pool


_SOURCE_RANK = {
    CandidateSource.KNOWLEDGE: 0,
    CandidateSource.DATABASE: 1,
    CandidateSource.PSEUDO: 2,
}


def rank_candidates(
    window: ContextWindow,
    pool: Sequence[Candidate],
    spec: PremiseSpec,
    scorer: ScorerContract,
) -> list[ScoredCandidate]:
    """Sort the pool by entailment probability against the rendered premise.

    Ties go knowledge before database before pseudo, then text ascending.
    """
    if not pool:
        raise ValueError("cannot rank an empty candidate pool")
    premise = render_premise(window, spec)
    scores = scorer.score_pairs([(premise, c.text) for c in pool])
    ranked = sorted(
        zip(pool, scores),
        key=lambda cs: (-cs[1], _SOURCE_RANK[cs[0].source], cs[0].text),
    )
    return [ScoredCandidate(c, s) for c, s in ranked]


def detect(
    window: ContextWindow,
    kb: KnowledgeBase,
    db: Sequence[DatabaseRecord],
    scorer_domain: ScorerContract,
    scorer_rank: ScorerContract,
    cfg: DetectorConfig = DetectorConfig(),
) -> DetectionResult:
    """Full knowledge-seeking decision for the turn at the end of the window."""
    domains = sorted(kb.domains)
    domain, _dist = classify_domain(window, domains, scorer_domain)
    entity: Entity | None = None
    if domain in kb.entity_specific:
        mentions = match_entities(window, kb, domain, cfg.match)
        if mentions:
            entity = kb.entity(domain, mentions[0].entity_id)
    pool = build_candidate_pool(
        kb,
        db,
        domain,
        entity,
        cfg.pseudo_candidates,
        candidate_text=cfg.candidate_text,
        attribute_labels=cfg.attribute_labels,
        match_cfg=cfg.match,
    )
    if not pool:
        return DetectionResult(False, domain, entity, (), diagnostic="empty-candidate-pool")
    ranked = rank_candidates(window, pool, cfg.rank_premise, scorer_rank)
    target = ranked[0].candidate.source is CandidateSource.KNOWLEDGE
    return DetectionResult(target, domain, entity, tuple(ranked))
