"""Pipeline configuration: one JSON file collecting every knob.

Relative data paths are resolved against the config file's directory. CLI
flags override individual fields; the resolved config is embedded verbatim in
every report for auditability.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping

from .detection import DEFAULT_PSEUDO_CANDIDATES
from .dialog import PremiseSpec
from .errors import ConfigError
from .generation import DEFAULT_DOMAIN_PROMPTS, DEFAULT_PROMPT_CUES
from .kb import DEFAULT_TRAINING_DOMAINS
from .matching import (
    DEFAULT_ALIAS_NORMALIZATIONS,
    DEFAULT_DOMAIN_SYNONYMS,
    DEFAULT_TYPE_SUFFIXES,
    MatchConfig,
)

SCORER_ROLES = ("domain_nli", "candidate_rank", "refine", "domain_prob", "knowledge_prob")

GATING_MODES = ("detection", "gold")

REMOTE_URL_ENV = "KGDIAL_REMOTE_URL"


@dataclass(frozen=True)
class PipelineConfig:
    knowledge: Path
    logs: Path
    database: Path | None = None
    labels: Path | None = None
    training_domains: frozenset[str] = DEFAULT_TRAINING_DOMAINS
    scorers: Mapping[str, str] = field(
        default_factory=lambda: {role: "lexical" for role in SCORER_ROLES}
    )
    generator: str = "template"
    window_size: int = 9
    rank_premise: PremiseSpec = PremiseSpec(n_dialog=2, use_template=True)
    match: MatchConfig = MatchConfig()
    pseudo_candidates: tuple[str, ...] = DEFAULT_PSEUDO_CANDIDATES
    candidate_text: str = "body"
    attribute_labels: Mapping[str, str] = field(default_factory=dict)
    top_k: int = 5
    n_snippets: int = 4
    ensemble_ratio: float = 5.0
    history_tokens: int = 128
    snippet_tokens: int = 256
    prompt_cues: tuple[str, ...] = DEFAULT_PROMPT_CUES
    domain_prompts: Mapping[str, str] = field(
        default_factory=lambda: dict(DEFAULT_DOMAIN_PROMPTS)
    )
    selection_gating: str = "detection"
    case_top_n: int = 4
    out_dir: Path = Path("out")
    seed: int = 0  # reserved; the built-in backends are fully deterministic
    workers: int = 1

    def validate(self) -> None:
        if self.n_snippets < 1:
            raise ConfigError("n_snippets must be at least 1")
        if self.top_k < 1:
            raise ConfigError("top_k must be at least 1")
        if self.ensemble_ratio <= 1.0:
            raise ConfigError("ensemble_ratio must be greater than 1")
        if self.window_size < 1:
            raise ConfigError("window_size must be at least 1")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        if self.selection_gating not in GATING_MODES:
            raise ConfigError(f"selection_gating must be one of {GATING_MODES}")
        for role in self.scorers:
            if role not in SCORER_ROLES:
                raise ConfigError(f"unknown scorer role {role!r}; valid roles: {SCORER_ROLES}")
        for path, required in (
            (self.knowledge, True),
            (self.logs, True),
            (self.database, False),
            (self.labels, False),
        ):
            if path is None and not required:
                continue
            if path is None or not Path(path).exists():
                raise ConfigError(f"data path does not exist: {path}")

    def scorer_binding(self, role: str) -> str:
        return self.scorers.get(role, "lexical")

    def snapshot(self) -> dict:
        """JSON-serializable view of the resolved configuration."""
        return {
            "knowledge": str(self.knowledge),
            "logs": str(self.logs),
            "database": str(self.database) if self.database else None,
            "labels": str(self.labels) if self.labels else None,
            "training_domains": sorted(self.training_domains),
            "scorers": {role: self.scorer_binding(role) for role in SCORER_ROLES},
            "generator": self.generator,
            "window_size": self.window_size,
            "rank_premise": {
                "n_dialog": self.rank_premise.n_dialog,
                "use_template": self.rank_premise.use_template,
            },
            "match": {
                "similarity_threshold": self.match.similarity_threshold,
                "recency_decay": self.match.recency_decay,
                "alias_normalizations": [list(r) for r in self.match.alias_normalizations],
                "type_suffixes": list(self.match.type_suffixes),
                "domain_synonyms": [list(r) for r in self.match.domain_synonyms],
            },
            "pseudo_candidates": list(self.pseudo_candidates),
            "candidate_text": self.candidate_text,
            "attribute_labels": dict(self.attribute_labels),
            "top_k": self.top_k,
            "n_snippets": self.n_snippets,
            "ensemble_ratio": self.ensemble_ratio,
            "history_tokens": self.history_tokens,
            "snippet_tokens": self.snippet_tokens,
            "prompt_cues": list(self.prompt_cues),
            "domain_prompts": dict(self.domain_prompts),
            "selection_gating": self.selection_gating,
            "case_top_n": self.case_top_n,
            "out_dir": str(self.out_dir),
            "seed": self.seed,
            "workers": self.workers,
        }


def _match_config_from(raw: Mapping) -> MatchConfig:
    try:
        return MatchConfig(
            similarity_threshold=raw.get("similarity_threshold", 0.8),
            recency_decay=raw.get("recency_decay", 0.9),
            alias_normalizations=tuple(
                (str(a), str(b))
                for a, b in raw.get("alias_normalizations", DEFAULT_ALIAS_NORMALIZATIONS)
            ),
            type_suffixes=tuple(raw.get("type_suffixes", DEFAULT_TYPE_SUFFIXES)),
            domain_synonyms=tuple(
                (str(a), str(b)) for a, b in raw.get("domain_synonyms", DEFAULT_DOMAIN_SYNONYMS)
            ),
        )
    except ValueError as exc:
        raise ConfigError(f"invalid match config: {exc}") from exc


def config_from_mapping(raw: Mapping, base_dir: Path | None = None) -> PipelineConfig:
    """Build a validated config from a parsed JSON object."""
    base = base_dir or Path.cwd()

    def resolve(key: str, required: bool) -> Path | None:
        value = raw.get(key)
        if value is None:
            if required:
                raise ConfigError(f"config is missing required path {key!r}")
            return None
        path = Path(value)
        return path if path.is_absolute() else (base / path).resolve()

    premise_raw = raw.get("rank_premise", {})
    try:
        rank_premise = PremiseSpec(
            n_dialog=int(premise_raw.get("n_dialog", 2)),
            use_template=bool(premise_raw.get("use_template", True)),
        )
    except ValueError as exc:
        raise ConfigError(f"invalid rank_premise: {exc}") from exc

    out_dir = Path(raw.get("out_dir", "out"))
    if not out_dir.is_absolute():
        out_dir = (base / out_dir).resolve()

    config = PipelineConfig(
        knowledge=resolve("knowledge", required=True),
        logs=resolve("logs", required=True),
        database=resolve("database", required=False),
        labels=resolve("labels", required=False),
        training_domains=frozenset(raw.get("training_domains", DEFAULT_TRAINING_DOMAINS)),
        scorers={
            role: str(binding) for role, binding in raw.get("scorers", {}).items()
        }
        or {role: "lexical" for role in SCORER_ROLES},
        generator=str(raw.get("generator", "template")),
        window_size=int(raw.get("window_size", 9)),
        rank_premise=rank_premise,
        match=_match_config_from(raw.get("match", {})),
        pseudo_candidates=tuple(raw.get("pseudo_candidates", DEFAULT_PSEUDO_CANDIDATES)),
        candidate_text=str(raw.get("candidate_text", "body")),
        attribute_labels=dict(raw.get("attribute_labels", {})),
        top_k=int(raw.get("top_k", 5)),
        n_snippets=int(raw.get("n_snippets", 4)),
        ensemble_ratio=float(raw.get("ensemble_ratio", 5.0)),
        history_tokens=int(raw.get("history_tokens", 128)),
        snippet_tokens=int(raw.get("snippet_tokens", 256)),
        prompt_cues=tuple(raw.get("prompt_cues", DEFAULT_PROMPT_CUES)),
        domain_prompts=dict(raw.get("domain_prompts", DEFAULT_DOMAIN_PROMPTS)),
        selection_gating=str(raw.get("selection_gating", "detection")),
        case_top_n=int(raw.get("case_top_n", 4)),
        out_dir=out_dir,
        seed=int(raw.get("seed", 0)),
        workers=int(raw.get("workers", 1)),
    )
    config.validate()
    return config


def load_pipeline_config(path: Path | str) -> PipelineConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: config parse error at byte {exc.pos}: {exc.msg}") from exc
    if not isinstance(raw, Mapping):
        raise ConfigError(f"{path}: config root must be an object")
    return config_from_mapping(raw, base_dir=path.parent)


def override(config: PipelineConfig, **updates) -> PipelineConfig:
    """Functional update with re-validation."""
    updated = replace(config, **updates)
    updated.validate()
    return updated
