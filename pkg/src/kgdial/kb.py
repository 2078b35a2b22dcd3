"""Loading and indexing of the knowledge base, entity database, and dialog logs.

All inputs are JSON files. The exact layouts are documented in the README and
treated as a compatibility contract: field names are load-bearing. Every
container here is immutable after load and safe for concurrent reads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Mapping

from .errors import DataError

DOMAIN_WIDE_KEY = "*"

DEFAULT_TRAINING_DOMAINS = frozenset({"hotel", "restaurant", "train", "taxi"})


def doc_sort_key(doc_id: str) -> tuple:
    """Numeric-aware ordering for ids, so "2" sorts before "10"."""
    if doc_id.isdigit():
        return (0, int(doc_id), doc_id)
    return (1, 0, doc_id)


@dataclass(frozen=True)
class SnippetRef:
    """Stable reference to one knowledge snippet."""

    domain: str
    entity_id: str | None
    doc_id: str

    def sort_key(self) -> tuple:
        return (self.domain, self.entity_id or "", doc_sort_key(self.doc_id))

    def as_dict(self) -> dict:
        return {"domain": self.domain, "entity_id": self.entity_id, "doc_id": self.doc_id}


@dataclass(frozen=True)
class KnowledgeSnippet:
    """One FAQ item. The title is the question, the body is the answer."""

    domain: str
    entity_id: str | None
    doc_id: str
    title: str
    body: str

    @property
    def ref(self) -> SnippetRef:
        return SnippetRef(self.domain, self.entity_id, self.doc_id)


@dataclass(frozen=True)
class Entity:
    domain: str
    entity_id: str
    canonical_name: str
    aliases: tuple[str, ...] = ()

    @property
    def all_names(self) -> tuple[str, ...]:
        """Canonical name first, then aliases, without duplicates."""
        seen = [self.canonical_name]
        for a in self.aliases:
            if a not in seen:
                seen.append(a)
        return tuple(seen)


class Speaker(str, Enum):
    USER = "User"
    ASSISTANT = "Assistant"


@dataclass(frozen=True)
class DialogTurn:
    speaker: Speaker
    text: str


@dataclass(frozen=True)
class DialogLabel:
    target: bool
    gold_snippets: tuple[SnippetRef, ...] = ()
    gold_response: str | None = None


@dataclass(frozen=True)
class DialogDataset:
    dialogs: tuple[tuple[DialogTurn, ...], ...]
    labels: tuple[DialogLabel, ...] | None = None

    def __len__(self) -> int:
        return len(self.dialogs)


@dataclass(frozen=True)
class KnowledgeBase:
    """Indexed snippet store.

    Domains are partitioned into domain-wide (snippets attach directly to the
    domain) and entity-specific (snippets attach to named entities). A domain
    carrying both kinds is rejected at load time.
    """

    domains: frozenset[str]
    domain_wide: frozenset[str]
    entity_specific: frozenset[str]
    entities: Mapping[tuple[str, str], Entity] = field(default_factory=dict)
    snippets: Mapping[tuple[str, str | None, str], KnowledgeSnippet] = field(default_factory=dict)
    training_domains: frozenset[str] = DEFAULT_TRAINING_DOMAINS

    def entity(self, domain: str, entity_id: str) -> Entity:
        try:
            return self.entities[(domain, entity_id)]
        except KeyError:
            raise ValueError(f"unknown entity {entity_id!r} in domain {domain!r}") from None

    def entities_in(self, domain: str) -> list[Entity]:
        if domain not in self.domains:
            raise ValueError(f"unknown domain {domain!r}")
        found = [e for (d, _), e in self.entities.items() if d == domain]
        return sorted(found, key=lambda e: doc_sort_key(e.entity_id))

    def snippets_for(self, domain: str, entity_id: str | None = None) -> list[KnowledgeSnippet]:
        """All snippets under a domain (and entity), ordered by doc id.

        For entity-specific domains an entity_id is required; for domain-wide
        domains it must be omitted.
        """
        if domain not in self.domains:
            raise ValueError(f"unknown domain {domain!r}")
        if domain in self.entity_specific:
            if entity_id is None:
                raise ValueError(f"domain {domain!r} is entity-specific, entity_id required")
            if (domain, entity_id) not in self.entities:
                raise ValueError(f"unknown entity {entity_id!r} in domain {domain!r}")
        elif entity_id is not None:
            raise ValueError(f"domain {domain!r} is domain-wide, entity_id must be omitted")
        found = [s for (d, e, _), s in self.snippets.items() if d == domain and e == entity_id]
        return sorted(found, key=lambda s: doc_sort_key(s.doc_id))

    def domain_snippets(self, domain: str) -> list[KnowledgeSnippet]:
        """All snippets under a domain regardless of entity, deterministic order."""
        if domain not in self.domains:
            raise ValueError(f"unknown domain {domain!r}")
        found = [s for (d, _, _), s in self.snippets.items() if d == domain]
        return sorted(found, key=lambda s: s.ref.sort_key())

    def all_snippets(self) -> list[KnowledgeSnippet]:
        return sorted(self.snippets.values(), key=lambda s: s.ref.sort_key())

    def resolve(self, ref: SnippetRef) -> KnowledgeSnippet:
        try:
            return self.snippets[(ref.domain, ref.entity_id, ref.doc_id)]
        except KeyError:
            raise ValueError(f"unresolvable snippet reference {ref}") from None

    def has_ref(self, ref: SnippetRef) -> bool:
        return (ref.domain, ref.entity_id, ref.doc_id) in self.snippets

    def to_mapping(self) -> dict:
        """Serialize back into the nested knowledge file layout."""
        out: dict = {}
        for domain in sorted(self.domains):
            out[domain] = {}
        for snippet in self.all_snippets():
            key = snippet.entity_id if snippet.entity_id is not None else DOMAIN_WIDE_KEY
            entry = out[snippet.domain].setdefault(key, {"name": None, "docs": {}})
            entry["docs"][snippet.doc_id] = {"title": snippet.title, "body": snippet.body}
        for (domain, entity_id), entity in sorted(self.entities.items()):
            entry = out[domain].setdefault(entity_id, {"name": None, "docs": {}})
            entry["name"] = entity.canonical_name
            if entity.aliases:
                entry["aliases"] = list(entity.aliases)
        return out


@dataclass(frozen=True)
class DatabaseRecord:
    """One structured database entry: a named entity with attribute strings."""

    domain: str
    entity_name: str
    attributes: Mapping[str, str]


def _read_json(path: Path | str) -> object:
    path = Path(path)
    if not path.exists():
        raise DataError(f"file not found: {path}")
    text = path.read_text(encoding="utf-8")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: parse error at byte {exc.pos}: {exc.msg}") from exc


def kb_from_mapping(
    mapping: Mapping,
    training_domains: frozenset[str] | set[str] = DEFAULT_TRAINING_DOMAINS,
    source: str = "<mapping>",
) -> KnowledgeBase:
    """Build an indexed knowledge base from the nested file layout."""
    if not isinstance(mapping, Mapping):
        raise DataError(f"{source}: knowledge root must be an object")
    entities: dict[tuple[str, str], Entity] = {}
    snippets: dict[tuple[str, str | None, str], KnowledgeSnippet] = {}
    domain_wide: set[str] = set()
    entity_specific: set[str] = set()

    for domain, entity_map in mapping.items():
        if not isinstance(entity_map, Mapping):
            raise DataError(f"{source}: domain {domain!r} must map entity ids to entries")
        keys = set(entity_map)
        if DOMAIN_WIDE_KEY in keys and len(keys) > 1:
            raise DataError(
                f"{source}: domain {domain!r} mixes domain-wide and entity-specific snippets"
            )
        if keys and DOMAIN_WIDE_KEY not in keys:
            entity_specific.add(domain)
        else:
            domain_wide.add(domain)

        for raw_id, entry in entity_map.items():
            entity_id = None if raw_id == DOMAIN_WIDE_KEY else str(raw_id)
            if not isinstance(entry, Mapping):
                raise DataError(f"{source}: entry {domain}/{raw_id} must be an object")
            if entity_id is not None:
                name = entry.get("name")
                if not isinstance(name, str) or not name:
                    raise DataError(f"{source}: entity {domain}/{raw_id} needs a non-empty name")
                aliases = entry.get("aliases", [])
                if not isinstance(aliases, list) or any(not isinstance(a, str) for a in aliases):
                    raise DataError(f"{source}: aliases of {domain}/{raw_id} must be strings")
                entities[(domain, entity_id)] = Entity(domain, entity_id, name, tuple(aliases))
            docs = entry.get("docs", {})
            if not isinstance(docs, Mapping):
                raise DataError(f"{source}: docs of {domain}/{raw_id} must be an object")
            for raw_doc_id, doc in docs.items():
                doc_id = str(raw_doc_id)
                if not isinstance(doc, Mapping):
                    raise DataError(f"{source}: snippet {domain}/{raw_id}/{doc_id} must be an object")
                title = doc.get("title")
                body = doc.get("body")
                if not isinstance(title, str) or not title:
                    raise DataError(
                        f"{source}: snippet {domain}/{raw_id}/{doc_id} has an empty title"
                    )
                if not isinstance(body, str) or not body:
                    raise DataError(
                        f"{source}: snippet {domain}/{raw_id}/{doc_id} has an empty body"
                    )
                snippets[(domain, entity_id, doc_id)] = KnowledgeSnippet(
                    domain, entity_id, doc_id, title, body
                )

    return KnowledgeBase(
        domains=frozenset(mapping),
        domain_wide=frozenset(domain_wide),
        entity_specific=frozenset(entity_specific),
        entities=entities,
        snippets=snippets,
        training_domains=frozenset(training_domains),
    )


def load_knowledge_base(
    kb_path: Path | str,
    training_domains: frozenset[str] | set[str] = DEFAULT_TRAINING_DOMAINS,
) -> KnowledgeBase:
    """Load the knowledge file.

    Layout: ``{domain: {entity_id: {"name": ..., "aliases": [...], "docs":
    {doc_id: {"title": ..., "body": ...}}}}}`` with the reserved entity id
    ``"*"`` for snippets attached directly to the domain.
    """
    return kb_from_mapping(_read_json(kb_path), training_domains, source=str(kb_path))


def load_database(db_path: Path | str) -> list[DatabaseRecord]:
    """Load the database file: a JSON list of attribute maps.

    Each entry needs a non-empty "name". The reserved key "domain" (optional)
    tags the record's domain and is excluded from the attributes; without it
    the lowercased "type" attribute is used, or "" when absent.
    """
    raw = _read_json(db_path)
    if not isinstance(raw, list):
        raise DataError(f"{db_path}: database root must be a list")
    records: list[DatabaseRecord] = []
    for i, entry in enumerate(raw):
        if not isinstance(entry, Mapping):
            raise DataError(f"{db_path}: entry {i} must be an object")
        attributes: dict[str, str] = {}
        domain = ""
        for key, value in entry.items():
            if not isinstance(value, (str, int, float, bool)):
                raise DataError(f"{db_path}: entry {i} attribute {key!r} must be scalar")
            text = str(value)
            if key == "domain":
                domain = text
                continue
            attributes[key] = text
        name = attributes.get("name")
        if not name:
            raise DataError(f"{db_path}: entry {i} is missing a name attribute")
        if not domain:
            domain = attributes.get("type", "").lower()
        records.append(DatabaseRecord(domain=domain, entity_name=name, attributes=attributes))
    return records


def _parse_ref(raw: Mapping, source: str, where: str) -> SnippetRef:
    if not isinstance(raw, Mapping) or "domain" not in raw or "doc_id" not in raw:
        raise DataError(f"{source}: {where}: snippet reference needs domain and doc_id")
    entity_id = raw.get("entity_id")
    if entity_id is not None:
        entity_id = str(entity_id)
    return SnippetRef(str(raw["domain"]), entity_id, str(raw["doc_id"]))


def load_dialogs(
    logs_path: Path | str,
    labels_path: Path | str | None = None,
    kb: KnowledgeBase | None = None,
) -> DialogDataset:
    """Load dialog logs and, optionally, their aligned labels.

    Logs: a list of dialogs, each a list of ``{"speaker", "text"}`` turns with
    speaker "User" or "Assistant". Labels: a parallel list of ``{"target",
    "knowledge": [refs], "response"}``. When a knowledge base is supplied,
    every gold reference must resolve in it.
    """
    raw_logs = _read_json(logs_path)
    if not isinstance(raw_logs, list):
        raise DataError(f"{logs_path}: logs root must be a list")
    dialogs: list[tuple[DialogTurn, ...]] = []
    for i, raw_dialog in enumerate(raw_logs):
        if not isinstance(raw_dialog, list):
            raise DataError(f"{logs_path}: dialog {i} must be a list of turns")
        turns: list[DialogTurn] = []
        for j, raw_turn in enumerate(raw_dialog):
            if not isinstance(raw_turn, Mapping):
                raise DataError(f"{logs_path}: dialog {i} turn {j} must be an object")
            tag = raw_turn.get("speaker")
            try:
                speaker = Speaker(tag)
            except ValueError:
                raise DataError(
                    f"{logs_path}: dialog {i} turn {j}: unknown speaker tag {tag!r}"
                ) from None
            text = raw_turn.get("text")
            if not isinstance(text, str) or not text:
                raise DataError(f"{logs_path}: dialog {i} turn {j} has empty text")
            turns.append(DialogTurn(speaker, text))
        dialogs.append(tuple(turns))

    labels: tuple[DialogLabel, ...] | None = None
    if labels_path is not None:
        raw_labels = _read_json(labels_path)
        if not isinstance(raw_labels, list):
            raise DataError(f"{labels_path}: labels root must be a list")
        if len(raw_labels) != len(dialogs):
            raise DataError(
                f"{labels_path}: {len(raw_labels)} labels for {len(dialogs)} dialogs"
            )
        parsed: list[DialogLabel] = []
        for i, raw in enumerate(raw_labels):
            if not isinstance(raw, Mapping) or "target" not in raw:
                raise DataError(f"{labels_path}: label {i} needs a target flag")
            target = bool(raw["target"])
            refs = tuple(
                _parse_ref(item, str(labels_path), f"label {i}")
                for item in raw.get("knowledge", [])
            )
            if target and not refs:
                raise DataError(f"{labels_path}: label {i} is a target without gold snippets")
            if not target and refs:
                raise DataError(f"{labels_path}: label {i} is a non-target with gold snippets")
            if kb is not None:
                for ref in refs:
                    if not kb.has_ref(ref):
                        raise DataError(
                            f"{labels_path}: label {i}: unresolvable gold snippet {ref}"
                        )
            response = raw.get("response")
            if response is not None and not isinstance(response, str):
                raise DataError(f"{labels_path}: label {i} response must be a string")
            parsed.append(DialogLabel(target, refs, response))
        labels = tuple(parsed)

    return DialogDataset(tuple(dialogs), labels)
