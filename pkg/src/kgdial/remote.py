"""HTTP clients for remote scoring and generation backends.

Wire protocol (v1):
  POST {base}/v1/score     {"pairs": [{"premise", "hypothesis"}]} -> {"scores": [float]}
  POST {base}/v1/generate  {"history": [{"speaker", "text"}],
                            "snippets": [{"title", "body"}]}      -> {"text": str}

Requests are batched; transport failures are retried, protocol violations are
not. The pipeline never falls back to another backend on failure, so runs
stay reproducible.
"""

from __future__ import annotations

import time
from typing import Sequence

import httpx

from .errors import ProtocolError, TransportError
from .kb import DialogTurn, KnowledgeSnippet

SCORE_PATH = "/v1/score"
GENERATE_PATH = "/v1/generate"


class _RemoteClient:
    def __init__(
        self,
        base_url: str = "",
        *,
        client: httpx.Client | None = None,
        timeout: float = 30.0,
        retries: int = 2,
        backoff: float = 0.1,
    ) -> None:
        if client is None:
            if not base_url:
                raise ValueError("either a base_url or a preconfigured client is required")
            client = httpx.Client(base_url=base_url, timeout=timeout)
        self._client = client
        self._retries = retries
        self._backoff = backoff

    def _post(self, path: str, payload: dict) -> dict:
        last_exc: Exception | None = None
        for attempt in range(self._retries + 1):
            try:
                response = self._client.post(path, json=payload)
            except httpx.HTTPError as exc:
                last_exc = exc
                if attempt < self._retries:
                    time.sleep(self._backoff * (attempt + 1))
                continue
            if response.status_code >= 500:
                last_exc = TransportError(f"{path}: server error {response.status_code}")
                if attempt < self._retries:
                    time.sleep(self._backoff * (attempt + 1))
                continue
            if response.status_code != 200:
                raise ProtocolError(f"{path}: unexpected status {response.status_code}")
            try:
                body = response.json()
            except ValueError as exc:
                raise ProtocolError(f"{path}: response is not JSON") from exc
            if not isinstance(body, dict):
                raise ProtocolError(f"{path}: response must be a JSON object")
            return body
        raise TransportError(f"{path}: backend unreachable after {self._retries + 1} attempts") from last_exc

    def close(self) -> None:
        self._client.close()


class RemoteScorer(_RemoteClient):
    """Pair-scoring client. Implements the scorer contract over HTTP."""

    def __init__(self, base_url: str = "", *, batch_size: int = 64, **kwargs) -> None:
        super().__init__(base_url, **kwargs)
        if batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        self._batch_size = batch_size

    def score_pairs(self, pairs: Sequence[tuple[str, str]]) -> list[float]:
        out: list[float] = []
        for start in range(0, len(pairs), self._batch_size):
            batch = pairs[start : start + self._batch_size]
            body = self._post(
                SCORE_PATH,
                {"pairs": [{"premise": p, "hypothesis": h} for p, h in batch]},
            )
            scores = body.get("scores")
            if not isinstance(scores, list):
                raise ProtocolError(f"{SCORE_PATH}: missing scores list")
            if len(scores) != len(batch):
                raise ProtocolError(
                    f"{SCORE_PATH}: {len(scores)} scores for {len(batch)} pairs"
                )
            for s in scores:
                if not isinstance(s, (int, float)) or not 0.0 <= float(s) <= 1.0:
                    raise ProtocolError(f"{SCORE_PATH}: score {s!r} outside [0, 1]")
                out.append(float(s))
        return out


class RemoteGenerator(_RemoteClient):
    """Response-generation client. Implements the generator contract over HTTP."""

    def generate(
        self, history: Sequence[DialogTurn], snippets: Sequence[KnowledgeSnippet]
    ) -> str:
        body = self._post(
            GENERATE_PATH,
            {
                "history": [{"speaker": t.speaker.value, "text": t.text} for t in history],
                "snippets": [{"title": s.title, "body": s.body} for s in snippets],
            },
        )
        text = body.get("text")
        if not isinstance(text, str) or not text.strip():
            raise ProtocolError(f"{GENERATE_PATH}: backend returned empty text")
        return text
