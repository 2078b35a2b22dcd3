from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import pytest

from kgdial.dialog import context_window
from kgdial.kb import DatabaseRecord, DialogTurn, Speaker, kb_from_mapping

DATA_DIR = Path(__file__).resolve().parent.parent / "data" / "mini"
CONFIG_PATH = Path(__file__).resolve().parent.parent / "configs" / "mini.json"


@dataclass
class FnScorer:
    """Scorer driven by an arbitrary deterministic pair function."""

    fn: Callable[[str, str], float]

    def score_pairs(self, pairs: Sequence[tuple[str, str]]) -> list[float]:
        return [self.fn(p, h) for p, h in pairs]


def hash_score(premise: str, hypothesis: str, salt: str = "", scale: float = 1.0) -> float:
    """Deterministic pseudo-random score in [0, scale], stable across runs."""
    digest = hashlib.md5(f"{salt}|{premise}|{hypothesis}".encode()).digest()
    return scale * int.from_bytes(digest[:8], "big") / 2**64


def hash_scorer(salt: str = "", scale: float = 1.0) -> FnScorer:
    return FnScorer(lambda p, h: round(hash_score(p, h, salt, scale), 3))


def favoring_scorer(marker: str, high: float = 1.0, salt: str = "", low: float = 0.05) -> FnScorer:
    """Scores `high` when the marker appears in the hypothesis, else a small
    deterministic value below `low`."""
    return FnScorer(
        lambda p, h: high if marker in h else round(hash_score(p, h, salt, low), 6)
    )


def user(text: str) -> DialogTurn:
    return DialogTurn(Speaker.USER, text)


def assistant(text: str) -> DialogTurn:
    return DialogTurn(Speaker.ASSISTANT, text)


def window_of(*turns: DialogTurn, w: int = 9):
    return context_window(list(turns), len(turns) - 1, w)


TABLE_KB_MAPPING = {
    "train": {
        "*": {
            "name": None,
            "docs": {
                "1": {
                    "title": "Is there a charge for using WiFi?",
                    "body": "Wifi is available free of charge.",
                }
            },
        }
    },
    "hotel": {
        "1": {
            "name": "SW Hotel",
            "docs": {
                "1": {
                    "title": "Does SW Hotel offer breakfast?",
                    "body": "No, we don't offer breakfast.",
                },
                "2": {
                    "title": "Is parking available at SW Hotel?",
                    "body": "Private parking is available on site.",
                },
            },
        },
        "2": {
            "name": "Avalon",
            "docs": {
                "1": {
                    "title": "Are pets allowed on site?",
                    "body": "Pets are not allowed at avalon.",
                }
            },
        },
        "3": {
            "name": "A & B Guest House",
            "docs": {
                "1": {
                    "title": "Can I store my luggage?",
                    "body": "Luggage storage is available at no charge.",
                }
            },
        },
    },
}

SW_HOTEL_RECORD_ATTRS = {
    "name": "SW Hotel",
    "address": "615 Broadway",
    "postcode": "94133",
    "type": "Hotel",
}

TABLE_DIALOG = (
    assistant("Would you like to book the SW hotel?"),
    user("Yes, I can reach SW hotel by taxi. What breakfast options are available there?"),
)


@pytest.fixture
def table_kb():
    return kb_from_mapping(TABLE_KB_MAPPING)


@pytest.fixture
def sw_record():
    return DatabaseRecord(domain="hotel", entity_name="SW Hotel", attributes=dict(SW_HOTEL_RECORD_ATTRS))


@pytest.fixture
def table_window():
    return window_of(*TABLE_DIALOG)


@pytest.fixture
def mini_paths():
    return {
        "knowledge": DATA_DIR / "knowledge.json",
        "database": DATA_DIR / "database.json",
        "logs": DATA_DIR / "logs.json",
        "labels": DATA_DIR / "labels.json",
    }


def write_json(path: Path, payload) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=1), encoding="utf-8")
    return path
