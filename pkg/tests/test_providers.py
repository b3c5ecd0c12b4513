"""Provider clients: retry policy, scripted transcript, embedders, HTTP layer."""

import random

import httpx
import pytest

from midas.providers import (
    AgentRequest,
    BACKOFF_CAP_S,
    DecodeError,
    HashingEmbedder,
    ImageArtifact,
    ProviderBinding,
    ProviderError,
    RetryBudgetExhausted,
    ScriptedEmbedder,
    ScriptedTranscript,
    TranscriptExhausted,
    TransientProviderError,
    backoff_schedule,
    http_provider_set,
    scripted_provider_set,
    with_retries,
)


class TestRetryPolicy:
    def test_two_transient_faults_then_success(self):
        attempts = {"n": 0}

        def flaky():
            attempts["n"] += 1
            if attempts["n"] <= 2:
                raise TransientProviderError("flaky")
            return "ok"

        slept = []
        out = with_retries("test", flaky, max_retries=3, rng=random.Random(0), sleep=slept.append)
        assert out == "ok"
        assert attempts["n"] == 3
        assert len(slept) == 2

    def test_zero_budget_fails_immediately(self):
        def always_fails():
            raise TransientProviderError("down")

        with pytest.raises(RetryBudgetExhausted) as err:
            with_retries("test", always_fails, max_retries=0, rng=random.Random(0), sleep=lambda s: None)
        assert err.value.attempts == 1

    def test_budget_exhaustion_counts_attempts(self):
        calls = {"n": 0}

        def always_fails():
            calls["n"] += 1
            raise TransientProviderError("down")

        with pytest.raises(RetryBudgetExhausted) as err:
            with_retries("test", always_fails, max_retries=3, rng=random.Random(0), sleep=lambda s: None)
        assert err.value.attempts == 4
        assert calls["n"] == 4

    def test_non_transient_error_not_retried(self):
        calls = {"n": 0}

        def fatal():
            calls["n"] += 1
            raise ProviderError("bad request")

        with pytest.raises(ProviderError):
            with_retries("test", fatal, max_retries=3, rng=random.Random(0), sleep=lambda s: None)
        assert calls["n"] == 1

    def test_backoff_schedule_bounds(self):
        rng = random.Random(1)
        previous_base = 0.0
        for attempt in range(1, 10):
            base = min(0.25 * (2 ** (attempt - 1)), BACKOFF_CAP_S)
            for _ in range(20):
                delay = backoff_schedule(attempt, rng)
                assert base * 0.8 - 1e-9 <= delay <= base * 1.2 + 1e-9
            assert base >= previous_base
            previous_base = base


class TestScriptedTranscript:
    def test_in_order_consumption(self):
        t = ScriptedTranscript()
        t.chat_response("first")
        t.chat_response("second")
        assert t.consume("chat", "x") == "first"
        assert t.consume("chat", "x") == "second"

    def test_matcher_mismatch_fails(self):
        t = ScriptedTranscript()
        t.chat_response("only for scribe", match="[scribe]")
        with pytest.raises(ProviderError):
            t.consume("chat", "[muse] something else")

    def test_exhaustion_fails(self):
        t = ScriptedTranscript()
        with pytest.raises(TranscriptExhausted):
            t.consume("chat", "anything")

    def test_assert_consumed(self):
        t = ScriptedTranscript()
        t.chat_response("unused")
        with pytest.raises(ProviderError):
            t.assert_consumed()

    def test_fault_entries_raise(self):
        t = ScriptedTranscript()
        t.chat_fault("transient")
        t.chat_fault("fatal")
        with pytest.raises(TransientProviderError):
            t.consume("chat", "x")
        with pytest.raises(ProviderError):
            t.consume("chat", "x")

    def test_provider_set_retries_through_faults(self):
        t = ScriptedTranscript()
        t.chat_fault("transient")
        t.chat_fault("transient")
        t.chat_response("recovered")
        providers = scripted_provider_set(t)
        request = AgentRequest(role="scribe", prompt="p", temperature=0.5)
        assert providers.chat(request) == "recovered"
        assert providers.usage.calls["scribe"] == 1
        assert providers.usage.retries["scribe"] == 2


class TestEmbedders:
    def test_hashing_embedder_unit_norm_and_stable(self):
        embedder = HashingEmbedder()
        v1 = embedder.embed(["a concept"])[0]
        v2 = HashingEmbedder().embed(["a concept"])[0]
        assert v1 == v2
        assert abs(sum(x * x for x in v1) - 1.0) < 1e-9
        assert len(v1) == 64

    def test_scripted_embedder_map_and_fallback(self):
        target = [0.0] * 64
        target[3] = 2.0  # normalized on ingestion
        embedder = ScriptedEmbedder(mapping={"known": target})
        known, unknown = embedder.embed(["known", "unknown"])
        assert known[3] == 1.0
        assert sum(abs(x) for x in unknown) > 0

    def test_scripted_embedder_transient_faults(self):
        embedder = ScriptedEmbedder(transient_faults=1)
        with pytest.raises(TransientProviderError):
            embedder.embed(["x"])
        assert embedder.embed(["x"])  # second call succeeds

    def test_dimension_mismatch_rejected(self):
        embedder = ScriptedEmbedder(dimension=4)
        with pytest.raises(ProviderError):
            embedder.script("x", [1.0, 0.0])


class TestSearchAndImage:
    def make_providers(self, transcript):
        return scripted_provider_set(transcript)

    def test_ten_results_capped_at_limit(self):
        t = ScriptedTranscript()
        t.search_response(
            [{"title": f"t{i}", "url": f"https://u/{i}", "snippet": "s"} for i in range(10)]
        )
        providers = self.make_providers(t)
        results = providers.search("query", 10)
        assert len(results) == 10
        assert results[0].title == "t0"

    def test_zero_results_is_not_an_error(self):
        t = ScriptedTranscript()
        t.search_response([])
        providers = self.make_providers(t)
        assert providers.search("query", 10) == []

    def test_malformed_payload_raises_decode_error(self):
        t = ScriptedTranscript()
        t.search_response([{"headline": "missing required keys"}])
        providers = self.make_providers(t)
        with pytest.raises(DecodeError):
            providers.search("query", 10)

    def test_mock_image_returns_placeholder(self):
        t = ScriptedTranscript()
        t.image_response()
        providers = self.make_providers(t)
        artifact = providers.render_image("a product")
        assert isinstance(artifact, ImageArtifact)
        assert artifact.content.startswith(b"\x89PNG")
        assert artifact.prompt == "a product"

    def test_empty_prompt_rejected(self):
        providers = self.make_providers(ScriptedTranscript())
        with pytest.raises(ProviderError):
            providers.render_image("  ")


class TestBinding:
    def test_validation(self):
        with pytest.raises(ProviderError):
            ProviderBinding(timeout_ms=0).validate()
        with pytest.raises(ProviderError):
            ProviderBinding(max_retries=-1).validate()
        ProviderBinding().validate()


class TestHttpTransports:
    def make_http(self, handler, monkeypatch):
        monkeypatch.setenv("MIDAS_CHAT_KEY", "k")
        monkeypatch.setenv("MIDAS_EMBED_KEY", "k")
        monkeypatch.setenv("MIDAS_SEARCH_KEY", "k")
        monkeypatch.setenv("MIDAS_IMAGE_KEY", "k")
        client = httpx.Client(transport=httpx.MockTransport(handler))
        bindings = {
            role: ProviderBinding(endpoint_url=f"https://api.example.org/{role}", model="m", max_retries=1)
            for role in ("chat", "scribe", "embedding", "search", "image")
        }
        return http_provider_set(bindings, client=client)

    def test_chat_round_trip(self, monkeypatch):
        def handler(request):
            assert request.headers["authorization"] == "Bearer k"
            return httpx.Response(
                200, json={"choices": [{"message": {"content": "hello"}}]}
            )

        providers = self.make_http(handler, monkeypatch)
        out = providers.chat(AgentRequest(role="scribe", prompt="p", temperature=0.5))
        assert out == "hello"

    def test_server_errors_are_retried_then_fail(self, monkeypatch):
        calls = {"n": 0}

        def handler(request):
            calls["n"] += 1
            return httpx.Response(503)

        providers = self.make_http(handler, monkeypatch)
        with pytest.raises(RetryBudgetExhausted):
            providers.chat(AgentRequest(role="scribe", prompt="p", temperature=0.5))
        assert calls["n"] == 2  # initial + one retry

    def test_embedding_payload_shape(self, monkeypatch):
        def handler(request):
            return httpx.Response(
                200, json={"data": [{"embedding": [1.0, 0.0]}, {"embedding": [0.0, 1.0]}]}
            )

        providers = self.make_http(handler, monkeypatch)
        out = providers.embed_batch(["a", "b"])
        assert out == [[1.0, 0.0], [0.0, 1.0]]

    def test_missing_credential_is_fatal(self, monkeypatch):
        providers = self.make_http(lambda r: httpx.Response(200, json={}), monkeypatch)
        monkeypatch.delenv("MIDAS_CHAT_KEY")
        with pytest.raises(ProviderError):
            providers.chat(AgentRequest(role="scribe", prompt="p", temperature=0.5))

    def test_malformed_chat_payload(self, monkeypatch):
        providers = self.make_http(
            lambda r: httpx.Response(200, json={"unexpected": True}), monkeypatch
        )
        with pytest.raises(DecodeError):
            providers.chat(AgentRequest(role="scribe", prompt="p", temperature=0.5))
