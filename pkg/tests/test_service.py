from __future__ import annotations

import pytest
from fastapi.testclient import TestClient

from kgdial.config import load_pipeline_config
from kgdial.kb import DialogTurn, KnowledgeSnippet, Speaker
from kgdial.remote import RemoteGenerator, RemoteScorer
from kgdial.runner import prepare
from kgdial.service import create_app

from conftest import CONFIG_PATH

TABLE_TURNS = [
    {"speaker": "Assistant", "text": "Would you like to book the SW hotel?"},
    {
        "speaker": "User",
        "text": "Yes, I can reach SW hotel by taxi. What breakfast options are available there?",
    },
]


@pytest.fixture(scope="module")
def config():
    return load_pipeline_config(CONFIG_PATH)


@pytest.fixture(scope="module")
def client(config):
    return TestClient(create_app(config))


class TestHealth:
    def test_healthz(self, client):
        response = client.get("/healthz")
        assert response.status_code == 200
        assert response.json()["status"] == "ok"


class TestScoreEndpoint:
    def test_scores_match_local_backend(self, client, config):
        ctx = prepare(config, force_local_backends=True)
        pairs = [
            ("does the hotel offer breakfast", "No, we don't offer breakfast."),
            ("is there wifi", "Wifi is available free of charge."),
        ]
        response = client.post(
            "/v1/score",
            json={"pairs": [{"premise": p, "hypothesis": h} for p, h in pairs]},
        )
        assert response.status_code == 200
        assert response.json()["scores"] == ctx.scorers["domain_nli"].score_pairs(pairs)

    def test_empty_batch(self, client):
        response = client.post("/v1/score", json={"pairs": []})
        assert response.json() == {"scores": []}

    def test_malformed_body_rejected(self, client):
        assert client.post("/v1/score", json={"nope": 1}).status_code == 422


class TestGenerateEndpoint:
    def test_wire_format(self, client):
        response = client.post(
            "/v1/generate",
            json={
                "history": TABLE_TURNS,
                "snippets": [
                    {"title": "Does SW Hotel offer breakfast?", "body": "No, we don't offer breakfast."}
                ],
            },
        )
        assert response.status_code == 200
        text = response.json()["text"]
        assert text.startswith("No, we don't offer breakfast.")

    def test_empty_snippets_rejected(self, client):
        response = client.post("/v1/generate", json={"history": [], "snippets": []})
        assert response.status_code == 422


class TestDetectEndpoint:
    def test_breakfast_turn(self, client):
        turns = [
            {"speaker": "Assistant", "text": "Would you like to book the SW hotel?"},
            {"speaker": "User", "text": "Yes. Does the SW hotel offer breakfast?"},
        ]
        response = client.post("/v1/detect", json={"turns": turns})
        assert response.status_code == 200
        body = response.json()
        assert body["domain"] == "hotel"
        assert body["entity_name"] == "SW Hotel"
        assert isinstance(body["target"], bool)
        assert body["candidates"]

    def test_last_turn_must_be_user(self, client):
        turns = [{"speaker": "Assistant", "text": "Hello!"}]
        assert client.post("/v1/detect", json={"turns": turns}).status_code == 422

    def test_empty_turns_rejected(self, client):
        assert client.post("/v1/detect", json={"turns": []}).status_code == 422


class TestSelectEndpoint:
    def test_ranked_snippets(self, client):
        turns = [{"speaker": "User", "text": "Are pets allowed at the Avalon hotel?"}]
        response = client.post("/v1/select", json={"turns": turns, "top_k": 3})
        assert response.status_code == 200
        snippets = response.json()["snippets"]
        assert snippets
        assert snippets[0]["domain"] == "hotel"
        assert snippets[0]["entity_id"] == "2"
        for s in snippets:
            assert s["confidence"] == pytest.approx(
                s["domain_prob"] * s["knowledge_prob"], abs=1e-12
            )

    def test_top_k_validated(self, client):
        turns = [{"speaker": "User", "text": "hello"}]
        assert client.post("/v1/select", json={"turns": turns, "top_k": 0}).status_code == 422


class TestRespondEndpoint:
    def test_in_domain_turn(self, client):
        turns = [{"speaker": "User", "text": "Are pets allowed at the Avalon hotel?"}]
        response = client.post("/v1/respond", json={"turns": turns})
        assert response.status_code == 200
        body = response.json()
        assert body["branch"] == "Generate"
        assert body["reason"] == "InDomain"
        assert body["text"]
        assert body["used_snippets"]

    def test_ood_singleton_reconstructs(self, client):
        turns = [{"speaker": "User", "text": "Is the Harbor Lighthouse open to visitors?"}]
        body = client.post("/v1/respond", json={"turns": turns}).json()
        assert body["branch"] == "Reconstruct"
        assert body["reason"] == "OODHighConfidence"
        assert body["text"].startswith("The lighthouse is open to visitors on weekends only.")


class TestRemoteClientsAgainstService:
    """The HTTP clients speak the same protocol the service serves."""

    def test_remote_scorer_parity(self, client, config):
        scorer = RemoteScorer("http://testserver", client=client)
        ctx = prepare(config, force_local_backends=True)
        pairs = [("premise one", "No, we don't offer breakfast."), ("p", "h")]
        assert scorer.score_pairs(pairs) == ctx.scorers["domain_nli"].score_pairs(pairs)

    def test_remote_generator_parity(self, client):
        generator = RemoteGenerator("http://testserver", client=client)
        history = [DialogTurn(Speaker.USER, "Is there parking?")]
        snippets = [
            KnowledgeSnippet("hotel", "1", "2", "Is parking available at SW Hotel?",
                             "Private parking is available on site.")
        ]
        text = generator.generate(history, snippets)
        # Domain is not part of the wire format, so the service-side template
        # generator answers with its generic prompt.
        assert text == "Private parking is available on site. Is there anything else I can help with?"

    def test_remote_scorer_contract_properties(self, client):
        scorer = RemoteScorer("http://testserver", client=client)
        pairs = [("a", "b"), ("c", "d"), ("e", "f")]
        batch = scorer.score_pairs(pairs)
        assert batch == [scorer.score_pairs([p])[0] for p in pairs]
        assert batch == scorer.score_pairs(pairs)
        assert all(0.0 <= s <= 1.0 for s in batch)
