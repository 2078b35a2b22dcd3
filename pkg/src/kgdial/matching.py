"""Fuzzy surface matching of entity and domain mentions in dialog history.

Mentions are found by sliding token n-gram windows over each turn, scoring
candidate spans with normalized edit distance against entity aliases (or
domain names), and weighting hits by recency: the later a mention appears in
the history, the more likely it is the current target.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .kb import Entity, KnowledgeBase

DEFAULT_SIMILARITY_THRESHOLD = 0.8
DEFAULT_RECENCY_DECAY = 0.9

DEFAULT_ALIAS_NORMALIZATIONS: tuple[tuple[str, str], ...] = (("&", " and "),)

# Entity names often end in a venue-type word; stripping it yields the short
# form people actually say ("A & B Guest House" is asked for as "A and B").
DEFAULT_TYPE_SUFFIXES: tuple[str, ...] = (
    "guest house",
    "guesthouse",
    "bed and breakfast",
    "hotel",
    "restaurant",
    "museum",
    "gallery",
    "theatre",
    "cinema",
    "college",
    "church",
    "house",
    "inn",
    "lodge",
)

DEFAULT_DOMAIN_SYNONYMS: tuple[tuple[str, str], ...] = (
    ("cab", "taxi"),
    ("cabs", "taxi"),
    ("guesthouse", "hotel"),
    ("guest house", "hotel"),
)

_PUNCT_RE = re.compile(r"[^a-z0-9\s]")
_SPACE_RE = re.compile(r"\s+")
_CHUNK_RE = re.compile(r"\S+")


@dataclass(frozen=True)
class MatchConfig:
    similarity_threshold: float = DEFAULT_SIMILARITY_THRESHOLD
    recency_decay: float = DEFAULT_RECENCY_DECAY
    alias_normalizations: tuple[tuple[str, str], ...] = DEFAULT_ALIAS_NORMALIZATIONS
    type_suffixes: tuple[str, ...] = DEFAULT_TYPE_SUFFIXES
    domain_synonyms: tuple[tuple[str, str], ...] = DEFAULT_DOMAIN_SYNONYMS

    def __post_init__(self) -> None:
        if not 0.0 <= self.similarity_threshold <= 1.0:
            raise ValueError("similarity_threshold must be in [0, 1]")
        if not 0.0 < self.recency_decay < 1.0:
            raise ValueError("recency_decay must be in (0, 1)")


DEFAULT_MATCH_CONFIG = MatchConfig()


@dataclass(frozen=True)
class Mention:
    """A fuzzy hit of an entity (or domain) in one turn of the window."""

    domain: str
    entity_id: str | None
    label: str
    turn_index: int
    match_span: tuple[int, int]
    similarity: float
    recency_weight: float

    @property
    def score(self) -> float:
        return self.similarity * self.recency_weight


def normalize(text: str, cfg: MatchConfig | None = None) -> str:
    """Lowercase, apply rewrite rules, strip punctuation to spaces, collapse."""
    rules = (cfg or DEFAULT_MATCH_CONFIG).alias_normalizations
    s = text.lower()
    for old, new in rules:
        s = s.replace(old, new)
    s = _PUNCT_RE.sub(" ", s)
    return _SPACE_RE.sub(" ", s).strip()


def levenshtein(a: str, b: str) -> int:
    if a == b:
        return 0
    if not a:
        return len(b)
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        row = [i]
        for j, cb in enumerate(b, start=1):
            row.append(min(prev[j] + 1, row[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = row
    return prev[-1]


def _similarity_normalized(a: str, b: str) -> float:
    if not a and not b:
        return 1.0
    longest = max(len(a), len(b))
    return 1.0 - levenshtein(a, b) / longest


def similarity(a: str, b: str, cfg: MatchConfig | None = None) -> float:
    """Normalized edit-distance similarity of the two texts, in [0, 1]."""
    return _similarity_normalized(normalize(a, cfg), normalize(b, cfg))


def _tokens_with_spans(text: str, cfg: MatchConfig) -> list[tuple[str, int, int]]:
    """Normalized words with the character span they came from.

    Spans are trimmed to the alphanumeric core of the chunk, so matches can be
    replaced in the original text without eating adjacent punctuation. A chunk
    whose normalized form expands to several words ("a&b") yields one entry
    per word, all sharing the chunk's span.
    """
    out: list[tuple[str, int, int]] = []
    for m in _CHUNK_RE.finditer(text):
        words = normalize(m.group(), cfg).split()
        if not words:
            continue
        raw = m.group()
        i, j = 0, len(raw)
        while i < j and not raw[i].isalnum():
            i += 1
        while j > i and not raw[j - 1].isalnum():
            j -= 1
        start, end = (m.start() + i, m.start() + j) if i < j else (m.start(), m.end())
        for w in words:
            out.append((w, start, end))
    return out


def expand_aliases(entity: Entity, cfg: MatchConfig) -> list[str]:
    """Normalized alias variants of an entity, including type-suffix-stripped
    short forms ("a and b guest house" also yields "a and b")."""
    variants: list[str] = []
    for name in entity.all_names:
        norm = normalize(name, cfg)
        if norm and norm not in variants:
            variants.append(norm)
    for norm in list(variants):
        for suffix in cfg.type_suffixes:
            suffix_norm = normalize(suffix, cfg)
            if suffix_norm and norm.endswith(" " + suffix_norm):
                short = norm[: -len(suffix_norm)].strip()
                if len(short) >= 2 and short not in variants:
                    variants.append(short)
    return variants


def _scan_turn(
    text: str,
    targets: list[tuple[str, tuple[str, str | None]]],
    cfg: MatchConfig,
) -> dict[tuple[str, str | None], tuple[float, tuple[int, int], str]]:
    """Best span per target in one turn: key -> (similarity, span, alias)."""
    tokens = _tokens_with_spans(text, cfg)
    best: dict[tuple[str, str | None], tuple[float, tuple[int, int], str]] = {}
    if not tokens:
        return best
    words = [w for w, _, _ in tokens]
    for alias, key in targets:
        alias_len = len(alias.split())
        lo = max(1, alias_len - 1)
        hi = min(len(words), alias_len + 1)
        for n in range(lo, hi + 1):
            for i in range(len(words) - n + 1):
                sim = _similarity_normalized(" ".join(words[i : i + n]), alias)
                if sim < cfg.similarity_threshold:
                    continue
                span = (tokens[i][1], tokens[i + n - 1][2])
                prev = best.get(key)
                # Prefer higher similarity, then wider, then leftmost spans.
                cand = (sim, span[1] - span[0], -span[0])
                if prev is None or cand > (prev[0], prev[1][1] - prev[1][0], -prev[1][0]):
                    best[key] = (sim, span, alias)
    return best


def _rank_mentions(
    window_turns: list[str],
    targets: list[tuple[str, tuple[str, str | None]]],
    labels: dict[tuple[str, str | None], str],
    cfg: MatchConfig,
) -> list[Mention]:
    n_turns = len(window_turns)
    best: dict[tuple[str, str | None], Mention] = {}
    for turn_index, text in enumerate(window_turns):
        recency = cfg.recency_decay ** (n_turns - 1 - turn_index)
        for key, (sim, span, _alias) in _scan_turn(text, targets, cfg).items():
            mention = Mention(
                domain=key[0],
                entity_id=key[1],
                label=labels[key],
                turn_index=turn_index,
                match_span=span,
                similarity=sim,
                recency_weight=recency,
            )
            prev = best.get(key)
            if prev is None or (mention.score, mention.turn_index) > (prev.score, prev.turn_index):
                best[key] = mention
    return sorted(best.values(), key=lambda m: (-m.score, m.entity_id or "", m.domain))


def match_entities(
    window,
    kb: KnowledgeBase,
    domain_filter: str | None = None,
    cfg: MatchConfig = DEFAULT_MATCH_CONFIG,
) -> list[Mention]:
    """Ranked entity mentions across the window, at most one per entity.

    With a domain filter only that domain's entities are searched; otherwise
    all entities of every entity-specific domain are.
    """
    if domain_filter is not None and domain_filter not in kb.domains:
        raise ValueError(f"unknown domain {domain_filter!r}")
    domains = [domain_filter] if domain_filter else sorted(kb.entity_specific)
    targets: list[tuple[str, tuple[str, str | None]]] = []
    labels: dict[tuple[str, str | None], str] = {}
    for domain in domains:
        if domain not in kb.entity_specific:
            continue
        for entity in kb.entities_in(domain):
            key = (domain, entity.entity_id)
            labels[key] = entity.canonical_name
            for alias in expand_aliases(entity, cfg):
                targets.append((alias, key))
    return _rank_mentions([t.text for t in window.turns], targets, labels, cfg)


def match_domains(window, kb: KnowledgeBase, cfg: MatchConfig = DEFAULT_MATCH_CONFIG) -> list[Mention]:
    """Ranked mentions of domain-wide domains (by name or configured synonym)."""
    targets: list[tuple[str, tuple[str, str | None]]] = []
    labels: dict[tuple[str, str | None], str] = {}
    for domain in sorted(kb.domain_wide):
        key = (domain, None)
        labels[key] = domain
        names = [domain] + [syn for syn, target in cfg.domain_synonyms if target == domain]
        for name in names:
            norm = normalize(name, cfg)
            if norm:
                targets.append((norm, key))
    return _rank_mentions([t.text for t in window.turns], targets, labels, cfg)
