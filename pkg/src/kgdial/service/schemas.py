"""Request and response models for the HTTP service."""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel


class PairIn(BaseModel):
    premise: str
    hypothesis: str


class ScoreRequest(BaseModel):
    pairs: list[PairIn]


class ScoreResponse(BaseModel):
    scores: list[float]


class TurnIn(BaseModel):
    speaker: Literal["User", "Assistant"]
    text: str


class SnippetIn(BaseModel):
    title: str
    body: str


class GenerateRequest(BaseModel):
    history: list[TurnIn]
    snippets: list[SnippetIn]


class GenerateResponse(BaseModel):
    text: str


class CandidateOut(BaseModel):
    source: str
    text: str
    score: float


class DetectRequest(BaseModel):
    turns: list[TurnIn]


class DetectResponse(BaseModel):
    target: bool
    domain: str
    entity_id: str | None
    entity_name: str | None
    diagnostic: str | None
    candidates: list[CandidateOut]


class SnippetRefOut(BaseModel):
    domain: str
    entity_id: str | None
    doc_id: str


class RankedSnippetOut(SnippetRefOut):
    domain_prob: float
    knowledge_prob: float
    confidence: float


class SelectRequest(BaseModel):
    turns: list[TurnIn]
    top_k: int = 5


class SelectResponse(BaseModel):
    snippets: list[RankedSnippetOut]


class RespondRequest(BaseModel):
    turns: list[TurnIn]


class RespondResponse(BaseModel):
    text: str
    branch: str
    reason: str
    used_snippets: list[SnippetRefOut]
