from __future__ import annotations

import json

import pytest

from kgdial.errors import DataError
from kgdial.kb import (
    DatabaseRecord,
    Speaker,
    kb_from_mapping,
    load_database,
    load_dialogs,
    load_knowledge_base,
)

from conftest import TABLE_KB_MAPPING, write_json


def table1_mapping():
    return {
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
            "2": {
                "name": "Avalon",
                "docs": {
                    "1": {
                        "title": "Are pets allowed on site?",
                        "body": "Pets are not allowed at avalon.",
                    }
                },
            }
        },
    }


class TestLoadKnowledgeBase:
    def test_two_snippet_file(self, tmp_path):
        path = write_json(tmp_path / "knowledge.json", table1_mapping())
        kb = load_knowledge_base(path)
        assert kb.domains == {"train", "hotel"}
        assert kb.domain_wide == {"train"}
        assert kb.entity_specific == {"hotel"}
        assert len(kb.snippets) == 2
        assert kb.entity("hotel", "2").canonical_name == "Avalon"

    def test_empty_knowledge_object(self, tmp_path):
        path = write_json(tmp_path / "knowledge.json", {})
        kb = load_knowledge_base(path)
        assert kb.domains == frozenset()
        assert len(kb.snippets) == 0

    def test_empty_body_names_the_snippet(self, tmp_path):
        mapping = table1_mapping()
        mapping["train"]["*"]["docs"]["1"]["body"] = ""
        path = write_json(tmp_path / "knowledge.json", mapping)
        with pytest.raises(DataError, match="train/\\*/1"):
            load_knowledge_base(path)

    def test_mixed_domain_rejected(self, tmp_path):
        mapping = table1_mapping()
        mapping["hotel"]["*"] = {
            "name": None,
            "docs": {"9": {"title": "t", "body": "b"}},
        }
        path = write_json(tmp_path / "knowledge.json", mapping)
        with pytest.raises(DataError, match="mixes"):
            load_knowledge_base(path)

    def test_parse_error_reports_byte_offset(self, tmp_path):
        path = tmp_path / "knowledge.json"
        path.write_text('{"train": }', encoding="utf-8")
        with pytest.raises(DataError, match="byte 10"):
            load_knowledge_base(path)

    def test_entity_without_name_rejected(self, tmp_path):
        mapping = table1_mapping()
        mapping["hotel"]["2"]["name"] = ""
        path = write_json(tmp_path / "knowledge.json", mapping)
        with pytest.raises(DataError, match="name"):
            load_knowledge_base(path)

    def test_training_domains_are_explicit(self, tmp_path):
        path = write_json(tmp_path / "knowledge.json", table1_mapping())
        kb = load_knowledge_base(path, training_domains={"hotel"})
        assert kb.training_domains == {"hotel"}


class TestKnowledgeBaseIndex:
    def test_snippets_for_domain_wide(self, table_kb):
        snippets = table_kb.snippets_for("train")
        assert [s.title for s in snippets] == ["Is there a charge for using WiFi?"]

    def test_snippets_for_entity(self, table_kb):
        snippets = table_kb.snippets_for("hotel", "2")
        assert [s.body for s in snippets] == ["Pets are not allowed at avalon."]

    def test_unknown_entity(self, table_kb):
        with pytest.raises(ValueError, match="unknown entity"):
            table_kb.snippets_for("hotel", "999")

    def test_unknown_domain(self, table_kb):
        with pytest.raises(ValueError, match="unknown domain"):
            table_kb.snippets_for("attraction")

    def test_entity_required_for_entity_domains(self, table_kb):
        with pytest.raises(ValueError, match="entity_id required"):
            table_kb.snippets_for("hotel")

    def test_doc_id_order_is_numeric_aware(self):
        docs = {str(i): {"title": f"t{i}", "body": f"b{i}"} for i in (10, 2, 1)}
        kb = kb_from_mapping({"train": {"*": {"name": None, "docs": docs}}})
        assert [s.doc_id for s in kb.snippets_for("train")] == ["1", "2", "10"]

    def test_partition_covers_every_domain(self, table_kb):
        assert table_kb.domain_wide | table_kb.entity_specific == table_kb.domains
        assert not (table_kb.domain_wide & table_kb.entity_specific)

    def test_enumeration_covers_every_snippet_once(self, table_kb):
        seen = []
        for domain in table_kb.domain_wide:
            seen.extend(s.ref for s in table_kb.snippets_for(domain))
        for domain in table_kb.entity_specific:
            for entity in table_kb.entities_in(domain):
                seen.extend(s.ref for s in table_kb.snippets_for(domain, entity.entity_id))
        assert sorted(seen, key=lambda r: r.sort_key()) == [
            s.ref for s in table_kb.all_snippets()
        ]
        assert len(seen) == len(set(seen))

    def test_round_trip_through_a_file(self, table_kb, tmp_path):
        path = write_json(tmp_path / "rt.json", table_kb.to_mapping())
        reloaded = load_knowledge_base(path)
        assert reloaded.snippets == dict(table_kb.snippets)
        assert reloaded.entities == dict(table_kb.entities)
        assert reloaded.domain_wide == table_kb.domain_wide
        assert reloaded.entity_specific == table_kb.entity_specific

    def test_round_trip(self, table_kb):
        reloaded = kb_from_mapping(table_kb.to_mapping())
        assert set(reloaded.snippets) == set(table_kb.snippets)
        assert set(reloaded.entities) == set(table_kb.entities)
        for key, snippet in table_kb.snippets.items():
            assert reloaded.snippets[key] == snippet
        assert reloaded.domain_wide == table_kb.domain_wide

    def test_round_trip_preserves_aliases(self):
        mapping = {
            "hotel": {
                "1": {
                    "name": "A & B Guest House",
                    "aliases": ["A and B"],
                    "docs": {"1": {"title": "t", "body": "b"}},
                }
            }
        }
        kb = kb_from_mapping(mapping)
        reloaded = kb_from_mapping(kb.to_mapping())
        assert reloaded.entity("hotel", "1").aliases == ("A and B",)


class TestLoadDatabase:
    def test_table_entry(self, tmp_path):
        path = write_json(
            tmp_path / "db.json",
            [{"name": "SW Hotel", "address": "615 Broadway", "postcode": "94133", "type": "Hotel"}],
        )
        records = load_database(path)
        assert len(records) == 1
        record = records[0]
        assert record.entity_name == "SW Hotel"
        assert len(record.attributes) == 4
        assert record.attributes["address"] == "615 Broadway"
        # Domain falls back to the lowercased type.
        assert record.domain == "hotel"

    def test_explicit_domain_key_wins_and_is_not_an_attribute(self, tmp_path):
        path = write_json(tmp_path / "db.json", [{"name": "X", "domain": "taxi", "type": "Car"}])
        (record,) = load_database(path)
        assert record.domain == "taxi"
        assert "domain" not in record.attributes

    def test_empty_list(self, tmp_path):
        path = write_json(tmp_path / "db.json", [])
        assert load_database(path) == []

    def test_missing_name_is_an_error(self, tmp_path):
        path = write_json(tmp_path / "db.json", [{"address": "nowhere"}])
        with pytest.raises(DataError, match="name"):
            load_database(path)

    def test_attribute_order_preserved(self, tmp_path):
        entry = {"name": "X", "zeta": "1", "alpha": "2", "mid": "3"}
        path = write_json(tmp_path / "db.json", [entry])
        (record,) = load_database(path)
        assert list(record.attributes) == ["name", "zeta", "alpha", "mid"]


class TestLoadDialogs:
    def write_logs(self, tmp_path, logs, labels=None):
        logs_path = write_json(tmp_path / "logs.json", logs)
        labels_path = write_json(tmp_path / "labels.json", labels) if labels is not None else None
        return logs_path, labels_path

    def table_logs(self):
        return [
            [
                {"speaker": "Assistant", "text": "Would you like to book the SW hotel?"},
                {
                    "speaker": "User",
                    "text": "Yes, I can reach SW hotel by taxi. What breakfast options are available there?",
                },
            ]
        ]

    def test_table_dialog_with_label(self, tmp_path, table_kb):
        labels = [
            {
                "target": True,
                "knowledge": [{"domain": "hotel", "entity_id": "1", "doc_id": "1"}],
                "response": "No, we don't offer breakfast. Anything else?",
            }
        ]
        logs_path, labels_path = self.write_logs(tmp_path, self.table_logs(), labels)
        dataset = load_dialogs(logs_path, labels_path, table_kb)
        assert len(dataset) == 1
        assert len(dataset.dialogs[0]) == 2
        assert dataset.dialogs[0][0].speaker is Speaker.ASSISTANT
        assert dataset.labels[0].target is True
        assert table_kb.has_ref(dataset.labels[0].gold_snippets[0])

    def test_logs_without_labels(self, tmp_path):
        logs_path, _ = self.write_logs(tmp_path, self.table_logs())
        dataset = load_dialogs(logs_path)
        assert dataset.labels is None

    def test_length_mismatch(self, tmp_path):
        logs_path, labels_path = self.write_logs(
            tmp_path, self.table_logs(), [{"target": False}, {"target": False}]
        )
        with pytest.raises(DataError, match="2 labels for 1 dialogs"):
            load_dialogs(logs_path, labels_path)

    def test_unknown_speaker_tag(self, tmp_path):
        logs = [[{"speaker": "Robot", "text": "hi"}]]
        logs_path, _ = self.write_logs(tmp_path, logs)
        with pytest.raises(DataError, match="unknown speaker tag"):
            load_dialogs(logs_path)

    def test_unresolvable_gold_ref(self, tmp_path, table_kb):
        labels = [
            {"target": True, "knowledge": [{"domain": "hotel", "entity_id": "1", "doc_id": "404"}]}
        ]
        logs_path, labels_path = self.write_logs(tmp_path, self.table_logs(), labels)
        with pytest.raises(DataError, match="unresolvable"):
            load_dialogs(logs_path, labels_path, table_kb)

    def test_target_without_gold_snippets(self, tmp_path):
        logs_path, labels_path = self.write_logs(
            tmp_path, self.table_logs(), [{"target": True, "knowledge": []}]
        )
        with pytest.raises(DataError, match="without gold"):
            load_dialogs(logs_path, labels_path)
