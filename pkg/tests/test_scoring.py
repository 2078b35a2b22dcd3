from __future__ import annotations

import math

import httpx
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kgdial.errors import ProtocolError, TransportError
from kgdial.matching import normalize
from kgdial.remote import RemoteScorer
from kgdial.scoring import IdfTable, LexicalScorer, ScoredPair, lexical_score, softmax_over

from conftest import hash_scorer

MINI_CORPUS = [
    "Does SW Hotel offer breakfast? No, we don't offer breakfast.",
    "Is there a charge for using WiFi? Wifi is available free of charge.",
    "Are pets allowed on site? Pets are not allowed at avalon.",
    "Postcode for SW Hotel is 94133.",
]


class TestSoftmax:
    def test_uniform(self):
        assert softmax_over([0.0, 0.0, 0.0]) == pytest.approx([1 / 3] * 3)

    def test_two_value_closed_form(self):
        e = math.e
        probs = softmax_over([1.0, 0.0])
        assert probs == pytest.approx([e / (e + 1), 1 / (e + 1)], abs=1e-9)
        assert probs[0] == pytest.approx(0.7311, abs=1e-4)

    def test_singleton(self):
        assert softmax_over([42.0]) == [1.0]

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            softmax_over([])

    @given(
        st.lists(st.floats(min_value=-40, max_value=40), min_size=1, max_size=8),
        st.floats(min_value=-40, max_value=40),
    )
    def test_shift_invariance(self, scores, shift):
        base = softmax_over(scores)
        shifted = softmax_over([s + shift for s in scores])
        assert sum(base) == pytest.approx(1.0, abs=1e-9)
        for a, b in zip(base, shifted):
            assert a == pytest.approx(b, abs=1e-9)
        assert base.index(max(base)) == shifted.index(max(shifted))


class TestIdfTable:
    def test_formula(self):
        table = IdfTable.from_texts(["a b", "a c"])
        assert table.weight("a") == pytest.approx(math.log(1 + 2 / 2))
        assert table.weight("b") == pytest.approx(math.log(1 + 2 / 1))

    def test_unseen_token_gets_max_weight(self):
        table = IdfTable.from_texts(["a b", "a c"])
        assert table.weight("zz") == pytest.approx(math.log(3))

    def test_empty_corpus_is_uniform(self):
        table = IdfTable.from_texts([])
        assert table.weight("anything") == 1.0


class TestLexicalScore:
    def test_identical_texts(self):
        idf = IdfTable.from_texts(MINI_CORPUS)
        assert lexical_score("free wifi on board", "free wifi on board", idf) == 1.0

    def test_disjoint_vocabulary(self):
        idf = IdfTable.from_texts(MINI_CORPUS)
        assert lexical_score("alpha beta", "gamma delta", idf) == 0.0

    def test_hand_computed_overlap(self):
        idf = IdfTable.from_texts(MINI_CORPUS)
        premise = "does sw hotel offer breakfast"
        hypothesis = "no we don't offer breakfast"
        # Independent hand computation over the mini corpus df counts.
        df = {}
        for doc in MINI_CORPUS:
            for token in set(normalize(doc).split()):
                df[token] = df.get(token, 0) + 1
        n = len(MINI_CORPUS)

        def w(token):
            return math.log(1 + n / df.get(token, 1))

        hyp_tokens = set(normalize(hypothesis).split())
        shared = set(normalize(premise).split()) & hyp_tokens
        expected = sum(w(t) for t in shared) / sum(w(t) for t in hyp_tokens)
        got = lexical_score(premise, hypothesis, idf)
        assert got == pytest.approx(expected, abs=1e-12)
        assert 0.0 < got < 1.0

    @given(st.text(alphabet="abc xyz", min_size=1, max_size=30))
    def test_self_score_is_one_or_empty(self, text):
        idf = IdfTable.from_texts(MINI_CORPUS)
        score = lexical_score(text, text, idf)
        if normalize(text):
            assert score == 1.0
        else:
            assert score == 0.0


class TestScoredPair:
    def test_valid(self):
        assert ScoredPair("p", "h", 0.5).entailment_prob == 0.5

    @pytest.mark.parametrize("prob", [-0.1, 1.1])
    def test_out_of_range_rejected(self, prob):
        with pytest.raises(ValueError):
            ScoredPair("p", "h", prob)


def lexical_app_transport() -> httpx.MockTransport:
    """A fake scoring service speaking the documented wire protocol."""
    idf = IdfTable.from_texts(MINI_CORPUS)

    def handler(request: httpx.Request) -> httpx.Response:
        import json

        payload = json.loads(request.content)
        scores = [
            lexical_score(p["premise"], p["hypothesis"], idf) for p in payload["pairs"]
        ]
        return httpx.Response(200, json={"scores": scores})

    return httpx.MockTransport(handler)


def scorer_backends():
    idf = IdfTable.from_texts(MINI_CORPUS)
    lexical = LexicalScorer(idf)
    remote = RemoteScorer(
        "http://backend", client=httpx.Client(base_url="http://backend", transport=lexical_app_transport())
    )
    return [("lexical", lexical), ("remote-fake", remote)]


@pytest.mark.parametrize("name,scorer", scorer_backends())
class TestScorerContract:
    PAIRS = [
        ("does the hotel offer breakfast", "no we don't offer breakfast"),
        ("is there wifi", "wifi is available free of charge"),
        ("hello there", "goodbye"),
    ]

    def test_order_and_length(self, name, scorer):
        scores = scorer.score_pairs(self.PAIRS)
        assert len(scores) == len(self.PAIRS)
        one_by_one = [scorer.score_pairs([pair])[0] for pair in self.PAIRS]
        assert scores == one_by_one

    def test_deterministic(self, name, scorer):
        assert scorer.score_pairs(self.PAIRS) == scorer.score_pairs(self.PAIRS)

    def test_range(self, name, scorer):
        assert all(0.0 <= s <= 1.0 for s in scorer.score_pairs(self.PAIRS))

    def test_empty_batch(self, name, scorer):
        assert scorer.score_pairs([]) == []


class TestRemoteScorer:
    def make(self, handler, **kwargs) -> RemoteScorer:
        client = httpx.Client(base_url="http://backend", transport=httpx.MockTransport(handler))
        return RemoteScorer("http://backend", client=client, **kwargs)

    def test_score_count_mismatch_is_protocol_error(self):
        scorer = self.make(lambda req: httpx.Response(200, json={"scores": [0.5, 0.5]}))
        with pytest.raises(ProtocolError, match="2 scores for 3 pairs"):
            scorer.score_pairs([("a", "b")] * 3)

    def test_out_of_range_score_rejected(self):
        scorer = self.make(lambda req: httpx.Response(200, json={"scores": [1.5]}))
        with pytest.raises(ProtocolError, match="outside"):
            scorer.score_pairs([("a", "b")])

    def test_non_json_response_rejected(self):
        scorer = self.make(lambda req: httpx.Response(200, content=b"nope"))
        with pytest.raises(ProtocolError):
            scorer.score_pairs([("a", "b")])

    def test_transport_error_retries_then_raises(self):
        calls = []

        def handler(request):
            calls.append(1)
            raise httpx.ConnectError("down")

        scorer = self.make(handler, retries=2, backoff=0.0)
        with pytest.raises(TransportError, match="after 3 attempts"):
            scorer.score_pairs([("a", "b")])
        assert len(calls) == 3

    def test_transient_failure_recovers(self):
        state = {"calls": 0}

        def handler(request):
            state["calls"] += 1
            if state["calls"] == 1:
                raise httpx.ConnectError("hiccup")
            return httpx.Response(200, json={"scores": [0.25]})

        scorer = self.make(handler, retries=2, backoff=0.0)
        assert scorer.score_pairs([("a", "b")]) == [0.25]

    def test_batching_preserves_order(self):
        def handler(request):
            import json

            pairs = json.loads(request.content)["pairs"]
            return httpx.Response(
                200, json={"scores": [len(p["premise"]) / 100 for p in pairs]}
            )

        scorer = self.make(handler, batch_size=2)
        pairs = [("a" * i, "h") for i in range(1, 6)]
        assert scorer.score_pairs(pairs) == [0.01, 0.02, 0.03, 0.04, 0.05]

    def test_server_errors_are_retried(self):
        state = {"calls": 0}

        def handler(request):
            state["calls"] += 1
            if state["calls"] < 3:
                return httpx.Response(503)
            return httpx.Response(200, json={"scores": [0.5]})

        scorer = self.make(handler, retries=2, backoff=0.0)
        assert scorer.score_pairs([("a", "b")]) == [0.5]


def test_hash_scorer_fixture_is_deterministic():
    scorer = hash_scorer("salt")
    pairs = [("p1", "h1"), ("p2", "h2")]
    assert scorer.score_pairs(pairs) == scorer.score_pairs(pairs)
    assert all(0 <= s <= 1 for s in scorer.score_pairs(pairs))
