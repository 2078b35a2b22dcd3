"""Dialog history windowing and premise/hypothesis rendering.

The classifiers downstream score (premise, hypothesis) pairs; the premise is
rendered from trailing dialog turns, optionally with speaker templates.
"""

from __future__ import annotations

from dataclasses import dataclass

from .kb import DialogTurn, Speaker

DOMAIN_HYPOTHESIS_TEMPLATE = "The user is asking about {domain}."


@dataclass(frozen=True)
class ContextWindow:
    """The most recent turns of a dialog, ending at the current user turn."""

    turns: tuple[DialogTurn, ...]
    t: int
    w: int


@dataclass(frozen=True)
class PremiseSpec:
    n_dialog: int = 2
    use_template: bool = True

    def __post_init__(self) -> None:
        if self.n_dialog < 1:
            raise ValueError("n_dialog must be at least 1")


def context_window(dialog: tuple[DialogTurn, ...] | list[DialogTurn], t: int, w: int) -> ContextWindow:
    """Take the w most recent turns ending at turn t, which must be a user turn."""
    if w < 1:
        raise ValueError("window size must be at least 1")
    if t < 0 or t >= len(dialog):
        raise ValueError(f"turn index {t} out of range for dialog of {len(dialog)} turns")
    if dialog[t].speaker is not Speaker.USER:
        raise ValueError(f"turn {t} is not a user turn")
    start = max(0, t + 1 - w)
    return ContextWindow(tuple(dialog[start : t + 1]), t, w)


def render_premise(window: ContextWindow, spec: PremiseSpec) -> str:
    """Render the last n_dialog turns of the window as the premise text.

    With the template on, each turn becomes "Assistant says ..." or
    "User says ..." and turns are joined by ". " in chronological order.
    Without it, the raw turn texts are joined by a single space. Windows
    shorter than n_dialog render whatever is available.
    """
    if not window.turns:
        raise ValueError("cannot render a premise from an empty window")
    turns = window.turns[-spec.n_dialog :]
    if spec.use_template:
        return ". ".join(f"{t.speaker.value} says {t.text}" for t in turns)
    return " ".join(t.text for t in turns)


def render_domain_hypothesis(domain: str) -> str:
    if not domain:
        raise ValueError("domain must be non-empty")
    return DOMAIN_HYPOTHESIS_TEMPLATE.format(domain=domain)
