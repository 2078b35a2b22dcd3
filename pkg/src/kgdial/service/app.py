"""HTTP service wrapping the pipeline.

Serves two kinds of endpoints: the backend wire protocol (/v1/score and
/v1/generate, here answered by the built-in lexical scorer and template
generator, so this service doubles as a reference backend for remote
bindings) and per-turn pipeline endpoints (/v1/detect, /v1/select,
/v1/respond) over the data configured at startup. The service always uses
local backends internally; point the batch CLI at it for remote runs.
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException

from ..config import PipelineConfig
from ..detection import DetectorConfig, detect
from ..dialog import context_window
from ..generation import ComposerConfig, TokenBudget, assemble_generator_input, respond
from ..kb import DialogTurn, KnowledgeSnippet, Speaker
from ..runner import RunContext, prepare
from ..selection import rank_snippets, select_de_candidates
from . import schemas


def _turns(raw: list[schemas.TurnIn]) -> list[DialogTurn]:
    return [DialogTurn(Speaker(t.speaker), t.text) for t in raw]


def _window(ctx: RunContext, raw: list[schemas.TurnIn]):
    turns = _turns(raw)
    if not turns:
        raise HTTPException(status_code=422, detail="at least one turn is required")
    try:
        return context_window(turns, len(turns) - 1, ctx.config.window_size)
    except ValueError as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc


def create_app(config: PipelineConfig) -> FastAPI:
    ctx = prepare(config, force_local_backends=True)
    scorer = ctx.scorers["domain_nli"]
    detector_cfg = DetectorConfig(
        rank_premise=config.rank_premise,
        match=config.match,
        pseudo_candidates=config.pseudo_candidates,
        candidate_text=config.candidate_text,
        attribute_labels=config.attribute_labels,
    )
    composer_cfg = ComposerConfig(
        n_snippets=config.n_snippets,
        budget=TokenBudget(config.history_tokens, config.snippet_tokens),
        ensemble_ratio=config.ensemble_ratio,
        prompt_cues=config.prompt_cues,
    )

    app = FastAPI(title="kgdial", version="0.1.0")

    @app.get("/healthz")
    def healthz() -> dict:
        return {"status": "ok", "domains": sorted(ctx.kb.domains)}

    @app.post("/v1/score", response_model=schemas.ScoreResponse)
    def score(request: schemas.ScoreRequest) -> schemas.ScoreResponse:
        scores = scorer.score_pairs([(p.premise, p.hypothesis) for p in request.pairs])
        return schemas.ScoreResponse(scores=scores)

    @app.post("/v1/generate", response_model=schemas.GenerateResponse)
    def generate(request: schemas.GenerateRequest) -> schemas.GenerateResponse:
        if not request.snippets:
            raise HTTPException(status_code=422, detail="at least one snippet is required")
        history = _turns(request.history)
        # Wire snippets carry no domain, so the template generator falls back
        # to its generic prompt.
        snippets = [
            KnowledgeSnippet("", None, str(i), s.title or " ", s.body or " ")
            for i, s in enumerate(request.snippets)
        ]
        text = ctx.generator.generate(history, snippets)
        return schemas.GenerateResponse(text=text)

    @app.post("/v1/detect", response_model=schemas.DetectResponse)
    def detect_turn(request: schemas.DetectRequest) -> schemas.DetectResponse:
        window = _window(ctx, request.turns)
        result = detect(
            window,
            ctx.kb,
            ctx.db,
            ctx.scorers["domain_nli"],
            ctx.scorers["candidate_rank"],
            detector_cfg,
        )
        return schemas.DetectResponse(
            target=result.target,
            domain=result.domain,
            entity_id=result.entity.entity_id if result.entity else None,
            entity_name=result.entity.canonical_name if result.entity else None,
            diagnostic=result.diagnostic,
            candidates=[
                schemas.CandidateOut(
                    source=sc.candidate.source.value, text=sc.candidate.text, score=sc.probability
                )
                for sc in result.ranked_candidates[:3]
            ],
        )

    def _select(window, top_k: int):
        candidates = select_de_candidates(window, ctx.kb, ctx.scorers["refine"], config.match)
        if not candidates:
            return []
        try:
            return rank_snippets(
                window,
                ctx.kb,
                candidates,
                ctx.scorers["domain_prob"],
                ctx.scorers["knowledge_prob"],
                top_k,
                config.match,
            )
        except ValueError:
            return []

    @app.post("/v1/select", response_model=schemas.SelectResponse)
    def select_turn(request: schemas.SelectRequest) -> schemas.SelectResponse:
        if request.top_k < 1:
            raise HTTPException(status_code=422, detail="top_k must be at least 1")
        window = _window(ctx, request.turns)
        ranking = _select(window, request.top_k)
        return schemas.SelectResponse(
            snippets=[
                schemas.RankedSnippetOut(
                    **r.snippet.ref.as_dict(),
                    domain_prob=r.domain_prob,
                    knowledge_prob=r.knowledge_prob,
                    confidence=r.confidence,
                )
                for r in ranking
            ]
        )

    @app.post("/v1/respond", response_model=schemas.RespondResponse)
    def respond_turn(request: schemas.RespondRequest) -> schemas.RespondResponse:
        window = _window(ctx, request.turns)
        ranking = _select(window, config.top_k)
        if not ranking:
            raise HTTPException(status_code=422, detail="no knowledge snippets found for this turn")
        text, decision = respond(
            window, ranking, ctx.generator, ctx.kb.training_domains, composer_cfg
        )
        request_snippets = assemble_generator_input(
            window, ranking, composer_cfg.n_snippets, composer_cfg.budget
        ).snippets
        return schemas.RespondResponse(
            text=text,
            branch=decision.branch.value,
            reason=decision.reason.value,
            used_snippets=[
                schemas.SnippetRefOut(**s.ref.as_dict()) for s in request_snippets
            ],
        )

    return app
