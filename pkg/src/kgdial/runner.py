"""Batch orchestration: run detection, selection, and generation over a
dialog dataset and assemble deterministic JSON reports.

Every run function returns both the rich per-dialog objects (for chaining)
and a JSON-ready report fragment. With the built-in backends the reports are
byte-identical across runs for the same config and data.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

from .config import REMOTE_URL_ENV, SCORER_ROLES, PipelineConfig
from .detection import DetectionResult, DetectorConfig, detect, format_db_record
from .dialog import ContextWindow, context_window
from .errors import BackendError, ConfigError, DataError
from .generation import ComposerConfig, TemplateGenerator, TokenBudget, assemble_generator_input, respond
from .kb import (
    DatabaseRecord,
    DialogDataset,
    KnowledgeBase,
    load_database,
    load_dialogs,
    load_knowledge_base,
)
from .matching import MatchConfig
from .metrics import (
    CaseLabel,
    categorize_case,
    detection_metrics,
    generation_metrics,
    selection_metrics,
)
from .remote import RemoteGenerator, RemoteScorer
from .scoring import GeneratorContract, IdfTable, LexicalScorer, ScorerContract
from .selection import RankedSnippet, rank_snippets, select_de_candidates


@dataclass
class RunContext:
    config: PipelineConfig
    kb: KnowledgeBase
    db: list[DatabaseRecord]
    dataset: DialogDataset
    scorers: dict[str, ScorerContract]
    generator: GeneratorContract


@dataclass
class DetectionOutput:
    results: list[DetectionResult]
    fragment: dict


@dataclass
class SelectionOutput:
    rankings: list[list[RankedSnippet]]
    gated: list[bool]
    mode: str
    fragment: dict


@dataclass
class GenerationOutput:
    responses: list[str | None]
    fragment: dict


def build_scorer(binding: str, idf: IdfTable, match_cfg: MatchConfig) -> ScorerContract:
    if binding == "lexical":
        return LexicalScorer(idf, match_cfg)
    if binding == "remote":
        binding = os.environ.get(REMOTE_URL_ENV, "")
        if not binding:
            raise ConfigError(f"scorer binding 'remote' requires {REMOTE_URL_ENV} to be set")
    if binding.startswith("http://") or binding.startswith("https://"):
        return RemoteScorer(binding)
    raise ConfigError(f"unknown scorer binding {binding!r}")


def build_generator(binding: str, prompts) -> GeneratorContract:
    if binding == "template":
        return TemplateGenerator(dict(prompts))
    if binding == "remote":
        binding = os.environ.get(REMOTE_URL_ENV, "")
        if not binding:
            raise ConfigError(f"generator binding 'remote' requires {REMOTE_URL_ENV} to be set")
    if binding.startswith("http://") or binding.startswith("https://"):
        return RemoteGenerator(binding)
    raise ConfigError(f"unknown generator binding {binding!r}")


def idf_corpus(config: PipelineConfig, kb: KnowledgeBase, db: Sequence[DatabaseRecord]) -> list[str]:
    """The documents the lexical scorer weighs tokens over: all snippets,
    all templated database sentences, and the pseudo-candidates."""
    texts = [f"{s.title} {s.body}" for s in kb.all_snippets()]
    for record in db:
        texts.extend(format_db_record(record, config.attribute_labels))
    texts.extend(config.pseudo_candidates)
    return texts


def prepare(config: PipelineConfig, force_local_backends: bool = False) -> RunContext:
    """Load all data and construct the configured backends."""
    config.validate()
    kb = load_knowledge_base(config.knowledge, config.training_domains)
    db = load_database(config.database) if config.database else []
    dataset = load_dialogs(config.logs, config.labels, kb)
    idf = IdfTable.from_texts(idf_corpus(config, kb, db), config.match)
    if force_local_backends:
        scorers: dict[str, ScorerContract] = {
            role: LexicalScorer(idf, config.match) for role in SCORER_ROLES
        }
        generator: GeneratorContract = TemplateGenerator(dict(config.domain_prompts))
    else:
        scorers = {
            role: build_scorer(config.scorer_binding(role), idf, config.match)
            for role in SCORER_ROLES
        }
        generator = build_generator(config.generator, config.domain_prompts)
    return RunContext(config, kb, db, dataset, scorers, generator)


def _window_for(ctx: RunContext, index: int) -> ContextWindow:
    dialog = ctx.dataset.dialogs[index]
    if not dialog:
        raise DataError(f"dialog {index} is empty")
    try:
        return context_window(dialog, len(dialog) - 1, ctx.config.window_size)
    except ValueError as exc:
        raise DataError(f"dialog {index}: {exc}") from exc


def _map_dialogs(ctx: RunContext, fn: Callable[[int], object]) -> list:
    indexes = range(len(ctx.dataset.dialogs))
    if ctx.config.workers > 1:
        with ThreadPoolExecutor(max_workers=ctx.config.workers) as pool:
            return list(pool.map(fn, indexes))
    return [fn(i) for i in indexes]


def run_detect(ctx: RunContext) -> DetectionOutput:
    """Detect knowledge-seeking turns over the whole dataset."""
    cfg = ctx.config
    det_cfg = DetectorConfig(
        rank_premise=cfg.rank_premise,
        match=cfg.match,
        pseudo_candidates=cfg.pseudo_candidates,
        candidate_text=cfg.candidate_text,
        attribute_labels=cfg.attribute_labels,
    )

    def one(index: int) -> DetectionResult:
        window = _window_for(ctx, index)
        return detect(
            window,
            ctx.kb,
            ctx.db,
            ctx.scorers["domain_nli"],
            ctx.scorers["candidate_rank"],
            det_cfg,
        )

    results: list[DetectionResult] = _map_dialogs(ctx, one)
    turns = []
    for index, result in enumerate(results):
        turns.append(
            {
                "dialog": index,
                "target": result.target,
                "domain": result.domain,
                "entity_id": result.entity.entity_id if result.entity else None,
                "entity_name": result.entity.canonical_name if result.entity else None,
                "diagnostic": result.diagnostic,
                "top_candidates": [
                    {
                        "source": sc.candidate.source.value,
                        "text": sc.candidate.text,
                        "score": sc.probability,
                    }
                    for sc in result.ranked_candidates[:3]
                ],
            }
        )
    flags: list[str] = []
    metrics = None
    if ctx.dataset.labels is not None:
        computed = detection_metrics(
            [r.target for r in results], [label.target for label in ctx.dataset.labels]
        )
        metrics = computed.as_dict()
    else:
        flags.append("labels-unavailable")
    fragment = {"metrics": metrics, "flags": flags, "turns": turns}
    return DetectionOutput(results, fragment)


def run_select(
    ctx: RunContext,
    detection: DetectionOutput | None = None,
    gating: str | None = None,
) -> SelectionOutput:
    """Select top-k snippets for the knowledge-seeking turns.

    Gating decides which turns count as knowledge-seeking: "detection" uses
    the detector's predictions (running it if not supplied), "gold" uses the
    labels. Turns outside the gate keep empty rankings and score zero.
    """
    cfg = ctx.config
    mode = gating or cfg.selection_gating
    labels = ctx.dataset.labels
    if mode == "gold":
        if labels is None:
            raise DataError("gold gating requires a labels file")
        gate = [label.target for label in labels]
    elif mode == "detection":
        if detection is None:
            detection = run_detect(ctx)
        gate = [r.target for r in detection.results]
    else:
        raise ConfigError(f"unknown gating mode {mode!r}")

    def one(index: int) -> tuple[list[RankedSnippet], str | None]:
        if not gate[index]:
            return [], None
        window = _window_for(ctx, index)
        candidates = select_de_candidates(window, ctx.kb, ctx.scorers["refine"], cfg.match)
        if not candidates:
            return [], "no-candidates"
        try:
            ranking = rank_snippets(
                window,
                ctx.kb,
                candidates,
                ctx.scorers["domain_prob"],
                ctx.scorers["knowledge_prob"],
                cfg.top_k,
                cfg.match,
            )
        except ValueError:
            return [], "no-snippets-under-candidates"
        return ranking, None

    outcomes: list[tuple[list[RankedSnippet], str | None]] = _map_dialogs(ctx, one)
    rankings = [ranking for ranking, _ in outcomes]
    turns = []
    for index, (ranking, diagnostic) in enumerate(outcomes):
        turns.append(
            {
                "dialog": index,
                "gated_in": gate[index],
                "diagnostic": diagnostic,
                "snippets": [
                    {
                        **r.snippet.ref.as_dict(),
                        "domain_prob": r.domain_prob,
                        "knowledge_prob": r.knowledge_prob,
                        "confidence": r.confidence,
                    }
                    for r in ranking
                ],
            }
        )
    flags: list[str] = []
    metrics = None
    if labels is not None:
        true_indexes = [i for i, label in enumerate(labels) if label.target]
        if true_indexes:
            computed = selection_metrics(
                [[r.snippet.ref for r in rankings[i]] for i in true_indexes],
                [set(labels[i].gold_snippets) for i in true_indexes],
                k=cfg.top_k,
            )
            metrics = computed.as_dict()
        else:
            flags.append("no-knowledge-seeking-turns")
    else:
        flags.append("labels-unavailable")
    fragment = {"mode": mode, "metrics": metrics, "flags": flags, "turns": turns}
    return SelectionOutput(rankings, gate, mode, fragment)


def run_generate(
    ctx: RunContext,
    selection: SelectionOutput | None = None,
    n_snippets: int | None = None,
) -> GenerationOutput:
    """Compose responses for every turn with a non-empty snippet ranking.

    With labels present, every true knowledge-seeking turn gets a case label:
    gold at rank 1, gold within the report's top n, or gold missed entirely
    (turns the gate skipped count as missed). Text metrics cover the turns
    that have both a composed response and a gold response.
    """
    cfg = ctx.config
    if selection is None:
        selection = run_select(ctx)
    n = n_snippets if n_snippets is not None else cfg.n_snippets
    composer = ComposerConfig(
        n_snippets=n,
        budget=TokenBudget(cfg.history_tokens, cfg.snippet_tokens),
        ensemble_ratio=cfg.ensemble_ratio,
        prompt_cues=cfg.prompt_cues,
    )
    labels = ctx.dataset.labels
    count = len(ctx.dataset.dialogs)

    def one(index: int):
        ranking = selection.rankings[index]
        if not ranking:
            return None
        window = _window_for(ctx, index)
        text, decision = respond(window, ranking, ctx.generator, ctx.kb.training_domains, composer)
        request = assemble_generator_input(window, ranking, n, composer.budget)
        return text, decision, [s.ref for s in request.snippets]

    produced = _map_dialogs(ctx, one)
    responses: list[str | None] = [p[0] if p else None for p in produced]

    cases: list[CaseLabel | None] = [None] * count
    if labels is not None:
        for index, label in enumerate(labels):
            if not label.target:
                continue
            refs = [r.snippet.ref for r in selection.rankings[index]]
            if refs:
                cases[index] = categorize_case(refs, set(label.gold_snippets), cfg.case_top_n)
            else:
                cases[index] = CaseLabel.CASE3

    turns = []
    for index in range(count):
        entry: dict = {"dialog": index, "case": cases[index].value if cases[index] else None}
        if produced[index] is not None:
            text, decision, used = produced[index]
            entry.update(
                {
                    "response": text,
                    "branch": decision.branch.value,
                    "reason": decision.reason.value,
                    "used_snippets": [ref.as_dict() for ref in used],
                }
            )
        else:
            entry["response"] = None
        if entry["case"] is None and entry["response"] is None:
            continue
        turns.append(entry)

    flags: list[str] = []
    metrics = None
    case_table = {
        label.value: {"count": 0, "metrics": None} for label in CaseLabel
    }
    if labels is not None:
        pairs = [
            (responses[i], labels[i].gold_response)
            for i in range(count)
            if responses[i] is not None and labels[i].gold_response
        ]
        if pairs:
            metrics = generation_metrics(
                [c for c, _ in pairs], [r for _, r in pairs]
            ).as_dict()
        else:
            flags.append("no-evaluable-responses")
        for label in CaseLabel:
            indexes = [i for i in range(count) if cases[i] is label]
            case_table[label.value]["count"] = len(indexes)
            case_pairs = [
                (responses[i], labels[i].gold_response)
                for i in indexes
                if responses[i] is not None and labels[i].gold_response
            ]
            if case_pairs:
                case_table[label.value]["metrics"] = generation_metrics(
                    [c for c, _ in case_pairs], [r for _, r in case_pairs]
                ).as_dict()
    else:
        flags.append("labels-unavailable")

    fragment = {
        "metrics": metrics,
        "flags": flags,
        "n_snippets": n,
        "cases": case_table,
        "turns": turns,
    }
    return GenerationOutput(responses, fragment)


def _stage(name: str, fn):
    try:
        return fn()
    except (ConfigError, DataError, BackendError) as exc:
        exc.args = (f"[{name}] {exc}",) + exc.args[1:]
        raise


def run_pipeline(ctx: RunContext) -> dict:
    """Chain detection, selection, and generation into one report.

    The first failing stage aborts the run with a stage-tagged error.
    """
    detection = _stage("detect", lambda: run_detect(ctx))
    selection = _stage("select", lambda: run_select(ctx, detection))
    generation = _stage("generate", lambda: run_generate(ctx, selection))
    return {
        "config": ctx.config.snapshot(),
        "detection": detection.fragment,
        "selection": selection.fragment,
        "generation": generation.fragment,
    }


def sweep_n(ctx: RunContext, ns: Sequence[int] = (1, 2, 3, 4, 5)) -> dict:
    """One generation metrics row per snippet count."""
    selection = run_select(ctx)
    rows = []
    for n in ns:
        generation = run_generate(ctx, selection, n_snippets=n)
        rows.append({"n": n, "metrics": generation.fragment["metrics"]})
    return {"config": ctx.config.snapshot(), "rows": rows}


def report_bytes(report: dict) -> bytes:
    return (json.dumps(report, sort_keys=True, indent=2, ensure_ascii=False) + "\n").encode(
        "utf-8"
    )


def write_report(path: Path | str, report: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(report_bytes(report))
    return path
