"""Response composition over ranked knowledge snippets.

Two routes exist: plain generation from the history plus the top snippets,
and reconstruction, which swaps the informative body of a generated response
for the top snippet while keeping the generated prompt that moves the dialog
forward. A decision tree picks the route from the top snippet's domain and
the confidence ratio between the two best snippets.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Sequence

from .dialog import ContextWindow
from .errors import BackendError
from .kb import DialogTurn, KnowledgeSnippet
from .scoring import GeneratorContract
from .selection import RankedSnippet

DEFAULT_PROMPT_CUES: tuple[str, ...] = (
    "do you want",
    "should i",
    "would you like",
    "is there anything else",
    "can i",
)

DEFAULT_DOMAIN_PROMPTS: dict[str, str] = {
    "hotel": "Would you like me to book it for you?",
    "restaurant": "Would you like me to book a table?",
    "train": "Would you like me to book a ticket?",
    "taxi": "Would you like me to book a taxi for you?",
}

GENERIC_PROMPT = "Is there anything else I can help with?"

_SENTENCE_SPLIT = re.compile(r"(?<=[.!?])\s+")
_TERMINATORS = (".", "!", "?")


class Branch(str, Enum):
    GENERATE = "Generate"
    RECONSTRUCT = "Reconstruct"


class Reason(str, Enum):
    IN_DOMAIN = "InDomain"
    OOD_HIGH_CONFIDENCE = "OODHighConfidence"
    OOD_FALLBACK = "OODFallback"


@dataclass(frozen=True)
class ComposeDecision:
    branch: Branch
    reason: Reason

    def __post_init__(self) -> None:
        if self.branch is Branch.RECONSTRUCT and self.reason is not Reason.OOD_HIGH_CONFIDENCE:
            raise ValueError("reconstruction is only chosen on high-confidence OOD turns")


@dataclass(frozen=True)
class SegmentedResponse:
    body: str
    prompt: str | None = None


@dataclass(frozen=True)
class TokenBudget:
    history_tokens: int = 128
    snippet_tokens: int = 256


@dataclass(frozen=True)
class GeneratorRequest:
    history: tuple[DialogTurn, ...]
    snippets: tuple[KnowledgeSnippet, ...]


@dataclass(frozen=True)
class ComposerConfig:
    n_snippets: int = 4
    budget: TokenBudget = TokenBudget()
    ensemble_ratio: float = 5.0
    prompt_cues: tuple[str, ...] = DEFAULT_PROMPT_CUES


def _split_sentences(text: str) -> list[str]:
    return [s for s in _SENTENCE_SPLIT.split(text.strip()) if s]


def _is_prompt_sentence(sentence: str, cues: Iterable[str]) -> bool:
    s = sentence.strip().lower()
    return s.endswith("?") or any(s.startswith(cue) for cue in cues)


def segment_response(text: str, cues: Sequence[str] = DEFAULT_PROMPT_CUES) -> SegmentedResponse:
    """Split a response into its informative body and trailing prompt.

    The prompt is the maximal trailing run of sentences that end in "?" or
    start with a configured cue. When every sentence looks like a prompt, the
    first one still counts as the body.
    """
    if not text or not text.strip():
        raise ValueError("cannot segment empty text")
    sentences = _split_sentences(text)
    i = len(sentences)
    while i > 0 and _is_prompt_sentence(sentences[i - 1], cues):
        i -= 1
    if i == 0:
        i = 1
    body = " ".join(sentences[:i])
    prompt = " ".join(sentences[i:]) or None
    return SegmentedResponse(body, prompt)


def reconstruct(
    generated: str,
    top_snippet: KnowledgeSnippet,
    cues: Sequence[str] = DEFAULT_PROMPT_CUES,
) -> str:
    """Replace the generated body with the top snippet, keeping the prompt."""
    if not generated or not generated.strip():
        raise ValueError("cannot reconstruct from empty generated text")
    if not top_snippet.body:
        raise ValueError("top snippet has no body")
    segmented = segment_response(generated, cues)
    if segmented.prompt is None:
        return top_snippet.body
    body = top_snippet.body
    if not body.endswith(_TERMINATORS):
        body += "."
    return f"{body} {segmented.prompt}"


def decide(
    ranked: Sequence[RankedSnippet],
    training_domains: frozenset[str] | set[str],
    ratio: float = 5.0,
) -> ComposeDecision:
    """Route the turn: generate for in-domain queries, reconstruct for
    out-of-domain ones whose top confidence dominates the runner-up by the
    configured ratio (a lone snippet counts as dominant), otherwise fall back
    to generation over all top snippets."""
    if not ranked:
        raise ValueError("cannot decide over an empty ranking")
    if ratio <= 1.0:
        raise ValueError("ratio must be greater than 1")
    top = ranked[0]
    if top.snippet.domain in training_domains:
        return ComposeDecision(Branch.GENERATE, Reason.IN_DOMAIN)
    if len(ranked) == 1 or top.confidence >= ratio * ranked[1].confidence:
        return ComposeDecision(Branch.RECONSTRUCT, Reason.OOD_HIGH_CONFIDENCE)
    return ComposeDecision(Branch.GENERATE, Reason.OOD_FALLBACK)


def assemble_generator_input(
    window: ContextWindow,
    ranked: Sequence[RankedSnippet],
    n: int = 4,
    limits: TokenBudget = TokenBudget(),
) -> GeneratorRequest:
    """Top-n snippets in rank order plus the history, trimmed to the budgets.

    Token counts are whitespace words. Over budget, the oldest history turns
    and the lowest-ranked snippets are dropped first; the current turn and the
    top snippet are always kept (a lone over-budget turn is trimmed from the
    front instead).
    """
    if not ranked:
        raise ValueError("cannot assemble input from an empty ranking")
    if n < 1:
        raise ValueError("snippet count must be at least 1")
    snippets = [r.snippet for r in ranked[: min(n, len(ranked))]]

    def snippet_tokens(s: KnowledgeSnippet) -> int:
        return len(s.title.split()) + len(s.body.split())

    while len(snippets) > 1 and sum(map(snippet_tokens, snippets)) > limits.snippet_tokens:
        snippets.pop()

    history = list(window.turns)
    while len(history) > 1 and sum(len(t.text.split()) for t in history) > limits.history_tokens:
        history.pop(0)
    if len(history) == 1 and len(history[0].text.split()) > limits.history_tokens:
        words = history[0].text.split()[-limits.history_tokens :]
        history[0] = DialogTurn(history[0].speaker, " ".join(words))
    return GeneratorRequest(tuple(history), tuple(snippets))


def respond(
    window: ContextWindow,
    ranked: Sequence[RankedSnippet],
    generator: GeneratorContract,
    training_domains: frozenset[str] | set[str],
    cfg: ComposerConfig = ComposerConfig(),
) -> tuple[str, ComposeDecision]:
    """Generate the response for a turn given its ranked snippets."""
    decision = decide(ranked, training_domains, cfg.ensemble_ratio)
    request = assemble_generator_input(window, ranked, cfg.n_snippets, cfg.budget)
    text = generator.generate(request.history, request.snippets)
    if not text or not text.strip():
        raise BackendError("generator returned empty text")
    if decision.branch is Branch.RECONSTRUCT:
        text = reconstruct(text, ranked[0].snippet, cfg.prompt_cues)
    return text, decision


@dataclass(frozen=True)
class TemplateGenerator:
    """Deterministic built-in generator: top snippet body plus a domain prompt."""

    prompts: Mapping[str, str] = field(default_factory=lambda: dict(DEFAULT_DOMAIN_PROMPTS))

    def generate(
        self, history: Sequence[DialogTurn], snippets: Sequence[KnowledgeSnippet]
    ) -> str:
        if not snippets:
            raise ValueError("template generation needs at least one snippet")
        top = snippets[0]
        prompt = self.prompts.get(top.domain, GENERIC_PROMPT)
        body = top.body if top.body.endswith(_TERMINATORS) else top.body + "."
        return f"{body} {prompt}"
