import numpy as np
import pytest
import requests

from punchline.backends import (
    BackendConfig,
    Backends,
    CachingGenerator,
    GenerationRequest,
    HttpEmbedder,
    HttpGenerator,
    HttpScorer,
    MockEmbedder,
    MockGenerator,
    MockScorer,
    build_backends,
)
from punchline.cache import ResponseCache
from punchline.errors import BackendError, TransportError


class TestGenerationRequest:
    def test_rejects_bad_values(self):
        with pytest.raises(ValueError):
            GenerationRequest(prompt="   ")
        with pytest.raises(ValueError):
            GenerationRequest(prompt="p", temperature=-0.1)
        with pytest.raises(ValueError):
            GenerationRequest(prompt="p", max_output_tokens=0)

    def test_defaults(self):
        req = GenerationRequest(prompt="p")
        assert req.temperature == 0.0
        assert req.seed is None
        assert req.image is None


class TestBackendConfig:
    def test_http_requires_endpoint_and_model(self):
        with pytest.raises(ValueError):
            BackendConfig(kind="http")
        BackendConfig(kind="http", endpoint_url="http://x", model_id="m")

    def test_rejects_unknown_values(self):
        with pytest.raises(ValueError):
            BackendConfig(kind="grpc")
        with pytest.raises(ValueError):
            BackendConfig(ce_reduction="median")
        with pytest.raises(ValueError):
            BackendConfig(max_attempts=0)

    def test_backend_id(self):
        assert BackendConfig(kind="mock").backend_id == "mock:default"
        cfg = BackendConfig(kind="http", endpoint_url="http://x", model_id="m-7b")
        assert cfg.backend_id == "http:m-7b"

    def test_dict_round_trip(self):
        cfg = BackendConfig(
            kind="http", endpoint_url="http://x", model_id="m",
            auth_env_var="TOKEN_VAR", timeout=5.0, max_attempts=2,
        )
        assert BackendConfig.from_dict(cfg.to_dict()) == cfg

    def test_from_dict_ignores_unknown_keys(self):
        assert BackendConfig.from_dict({"kind": "mock", "stray": 1}).kind == "mock"


class TestMockGenerator:
    def request(self, prompt, seed=0):
        return GenerationRequest(prompt=prompt, seed=seed)

    def test_deterministic(self):
        a = MockGenerator().generate(self.request("tell me a joke"))
        b = MockGenerator().generate(self.request("tell me a joke"))
        assert a == b

    def test_seed_changes_output(self):
        gen = MockGenerator()
        assert gen.generate(self.request("p", seed=0)) != gen.generate(self.request("p", seed=1))

    def test_prompt_changes_output(self):
        gen = MockGenerator()
        assert gen.generate(self.request("pa")) != gen.generate(self.request("pb"))

    def test_numbered_list_shape(self):
        text = MockGenerator(lines=4, words_per_line=3).generate(self.request("p"))
        lines = text.splitlines()
        assert len(lines) == 4
        for i, line in enumerate(lines, start=1):
            assert line.startswith(f"{i}. ")
            assert len(line.split(". ", 1)[1].split()) == 3

    def test_verification_prompts_get_verdicts(self):
        gen = MockGenerator()
        seen = set()
        for i in range(16):
            out = gen.generate(self.request(f"claim {i}\n\nProceed to evaluate.\n\n[Output]:"))
            assert out in ("Yes", "No")
            seen.add(out)
        assert seen == {"Yes", "No"}

    def test_call_counter(self):
        gen = MockGenerator()
        gen.generate(self.request("p"))
        gen.generate(self.request("q"))
        assert gen.calls == 2


class TestMockEmbedder:
    def test_unit_norm(self):
        for vec in MockEmbedder(dim=48).embed(["a", "bb", "ccc"]):
            assert vec.shape == (48,)
            assert abs(np.linalg.norm(vec) - 1.0) < 1e-9

    def test_identical_texts_identical_vectors(self):
        a, b = MockEmbedder().embed(["same text", "same text"])
        assert np.array_equal(a, b)

    def test_distinct_texts_not_collinear(self):
        a, b = MockEmbedder().embed(["first text", "second text"])
        assert float(a @ b) < 0.999

    def test_deterministic_across_instances(self):
        a = MockEmbedder().embed(["stable"])[0]
        b = MockEmbedder().embed(["stable"])[0]
        assert np.array_equal(a, b)

    def test_counters(self):
        emb = MockEmbedder()
        emb.embed(["a", "b"])
        emb.embed(["c"])
        assert emb.calls == 2
        assert emb.texts_embedded == 3

    def test_tiny_dim_rejected(self):
        with pytest.raises(ValueError):
            MockEmbedder(dim=1)


class TestMockScorer:
    def test_range_and_determinism(self):
        scorer = MockScorer()
        values = [scorer.score_cross_entropy(f"ctx {i}", "target") for i in range(50)]
        assert all(0.5 <= v < 5.0 for v in values)
        again = MockScorer()
        assert values == [again.score_cross_entropy(f"ctx {i}", "target") for i in range(50)]

    def test_fixture_table_takes_precedence(self):
        scorer = MockScorer({("ctx", "tgt"): 7.25})
        assert scorer.score_cross_entropy("ctx", "tgt") == 7.25
        assert scorer.score_cross_entropy("ctx", "other") != 7.25

    def test_sensitive_to_both_arguments(self):
        scorer = MockScorer()
        base = scorer.score_cross_entropy("c", "t")
        assert scorer.score_cross_entropy("c2", "t") != base
        assert scorer.score_cross_entropy("c", "t2") != base


class FakeResponse:
    def __init__(self, status_code=200, payload=None, text=""):
        self.status_code = status_code
        self._payload = payload
        self.text = text

    def json(self):
        if self._payload is None:
            raise ValueError("no JSON body")
        return self._payload


class FakeSession:
    """Stands in for requests.Session; responses are consumed in order and
    exceptions in the queue are raised instead of returned."""

    def __init__(self, responses):
        self.responses = list(responses)
        self.posts = []

    def post(self, url, json=None, headers=None, timeout=None):
        self.posts.append({"url": url, "json": json, "headers": headers, "timeout": timeout})
        item = self.responses.pop(0)
        if isinstance(item, Exception):
            raise item
        return item


def http_config(**kw):
    kw.setdefault("kind", "http")
    kw.setdefault("endpoint_url", "http://generate.local/v1")
    kw.setdefault("model_id", "test-model")
    kw.setdefault("retry_backoff", 0.0)
    return BackendConfig(**kw)


def chat_payload(text):
    return {"choices": [{"message": {"content": text}}]}


class TestHttpGenerator:
    def test_success_payload_shape(self):
        session = FakeSession([FakeResponse(payload=chat_payload("hello there"))])
        gen = HttpGenerator(http_config(), session=session)
        out = gen.generate(GenerationRequest(prompt="explain", temperature=0.8, seed=4))
        assert out == "hello there"
        sent = session.posts[0]["json"]
        assert sent["model"] == "test-model"
        assert sent["messages"] == [{"role": "user", "content": "explain"}]
        assert sent["temperature"] == 0.8
        assert sent["seed"] == 4

    def test_image_bytes_ride_as_data_url(self):
        session = FakeSession([FakeResponse(payload=chat_payload("ok"))])
        gen = HttpGenerator(http_config(), session=session)
        gen.generate(GenerationRequest(prompt="look", image=b"\x89PNGxxxx"))
        content = session.posts[0]["json"]["messages"][0]["content"]
        assert content[0] == {"type": "text", "text": "look"}
        assert content[1]["image_url"]["url"].startswith("data:image/png;base64,")

    def test_image_path_mime_from_extension(self, tmp_path):
        image = tmp_path / "photo.jpg"
        image.write_bytes(b"jpegdata")
        session = FakeSession([FakeResponse(payload=chat_payload("ok"))])
        HttpGenerator(http_config(), session=session).generate(
            GenerationRequest(prompt="look", image=str(image))
        )
        url = session.posts[0]["json"]["messages"][0]["content"][1]["image_url"]["url"]
        assert url.startswith("data:image/jpeg;base64,")

    def test_retries_on_server_errors(self):
        session = FakeSession([
            FakeResponse(status_code=500),
            FakeResponse(status_code=429),
            FakeResponse(payload=chat_payload("finally")),
        ])
        gen = HttpGenerator(http_config(max_attempts=3), session=session)
        assert gen.generate(GenerationRequest(prompt="p")) == "finally"
        assert len(session.posts) == 3

    def test_retries_on_transport_exceptions(self):
        session = FakeSession([
            requests.ConnectionError("refused"),
            FakeResponse(payload=chat_payload("ok")),
        ])
        gen = HttpGenerator(http_config(max_attempts=2), session=session)
        assert gen.generate(GenerationRequest(prompt="p")) == "ok"

    def test_exhausted_retries_raise(self):
        session = FakeSession([FakeResponse(status_code=503)] * 3)
        gen = HttpGenerator(http_config(max_attempts=3), session=session)
        with pytest.raises(TransportError) as err:
            gen.generate(GenerationRequest(prompt="p"))
        assert err.value.attempts == 3
        assert "503" in str(err.value)

    def test_client_errors_do_not_retry(self):
        session = FakeSession([FakeResponse(status_code=400, text="bad request")])
        gen = HttpGenerator(http_config(max_attempts=3), session=session)
        with pytest.raises(TransportError):
            gen.generate(GenerationRequest(prompt="p"))
        assert len(session.posts) == 1

    def test_non_json_success_raises(self):
        session = FakeSession([FakeResponse(payload=None, text="<html>")])
        gen = HttpGenerator(http_config(), session=session)
        with pytest.raises(TransportError):
            gen.generate(GenerationRequest(prompt="p"))

    def test_missing_response_field(self):
        session = FakeSession([FakeResponse(payload={"choices": []})])
        gen = HttpGenerator(http_config(), session=session)
        with pytest.raises(BackendError):
            gen.generate(GenerationRequest(prompt="p"))

    def test_backoff_schedule(self, monkeypatch):
        sleeps = []
        monkeypatch.setattr("punchline.backends.time.sleep", sleeps.append)
        session = FakeSession([FakeResponse(status_code=500)] * 3)
        gen = HttpGenerator(
            http_config(max_attempts=3, retry_backoff=0.5), session=session
        )
        with pytest.raises(TransportError):
            gen.generate(GenerationRequest(prompt="p"))
        assert sleeps == [0.5, 1.0]


class TestAuth:
    def test_token_read_from_environment(self, monkeypatch):
        monkeypatch.setenv("PUNCHLINE_TEST_TOKEN", "sekrit")
        session = FakeSession([FakeResponse(payload=chat_payload("ok"))])
        gen = HttpGenerator(
            http_config(auth_env_var="PUNCHLINE_TEST_TOKEN"), session=session
        )
        gen.generate(GenerationRequest(prompt="p"))
        assert session.posts[0]["headers"]["Authorization"] == "Bearer sekrit"

    def test_unset_variable_fails_before_any_request(self, monkeypatch):
        monkeypatch.delenv("PUNCHLINE_TEST_TOKEN", raising=False)
        session = FakeSession([])
        gen = HttpGenerator(
            http_config(auth_env_var="PUNCHLINE_TEST_TOKEN"), session=session
        )
        with pytest.raises(BackendError) as err:
            gen.generate(GenerationRequest(prompt="p"))
        assert "PUNCHLINE_TEST_TOKEN" in str(err.value)
        assert session.posts == []

    def test_no_auth_header_without_env_var(self):
        session = FakeSession([FakeResponse(payload=chat_payload("ok"))])
        HttpGenerator(http_config(), session=session).generate(
            GenerationRequest(prompt="p")
        )
        assert "Authorization" not in session.posts[0]["headers"]


class TestHttpEmbedder:
    def embed_payload(self, vectors):
        return {"data": [{"embedding": list(v)} for v in vectors]}

    def test_normalizes_vectors(self):
        session = FakeSession([FakeResponse(payload=self.embed_payload([[3.0, 4.0]]))])
        emb = HttpEmbedder(http_config(), session=session)
        (vec,) = emb.embed(["text"])
        assert np.allclose(vec, [0.6, 0.8])

    def test_dedicated_embed_endpoint(self):
        session = FakeSession([FakeResponse(payload=self.embed_payload([[1.0, 0.0]]))])
        emb = HttpEmbedder(
            http_config(embed_endpoint_url="http://embed.local/v1"), session=session
        )
        emb.embed(["text"])
        assert session.posts[0]["url"] == "http://embed.local/v1"

    def test_count_mismatch_rejected(self):
        session = FakeSession([FakeResponse(payload=self.embed_payload([[1.0, 0.0]]))])
        emb = HttpEmbedder(http_config(), session=session)
        with pytest.raises(BackendError):
            emb.embed(["a", "b"])

    def test_zero_vector_rejected(self):
        session = FakeSession([FakeResponse(payload=self.embed_payload([[0.0, 0.0]]))])
        emb = HttpEmbedder(http_config(), session=session)
        with pytest.raises(BackendError):
            emb.embed(["a"])


class TestHttpScorer:
    def test_reads_cross_entropy(self):
        session = FakeSession([FakeResponse(payload={"cross_entropy": 2.75})])
        scorer = HttpScorer(http_config(scorer_endpoint_url="http://score.local"), session=session)
        assert scorer.score_cross_entropy("ctx", "tgt") == 2.75
        sent = session.posts[0]["json"]
        assert sent["context"] == "ctx"
        assert sent["target"] == "tgt"
        assert sent["reduction"] == "mean"
        assert session.posts[0]["url"] == "http://score.local"

    def test_sum_reduction_forwarded(self):
        session = FakeSession([FakeResponse(payload={"cross_entropy": 9.0})])
        scorer = HttpScorer(
            http_config(ce_reduction="sum", scorer_endpoint_url="http://score.local"),
            session=session,
        )
        scorer.score_cross_entropy("c", "t")
        assert session.posts[0]["json"]["reduction"] == "sum"


class TestBuildBackends:
    def test_mock_kind(self):
        backends = build_backends(BackendConfig(kind="mock", mock_embed_dim=16))
        assert isinstance(backends, Backends)
        assert isinstance(backends.generator, MockGenerator)
        assert isinstance(backends.embedder, MockEmbedder)
        assert backends.embedder.dim == 16
        assert isinstance(backends.scorer, MockScorer)
        assert backends.backend_id == "mock:default"

    def test_http_kind(self):
        cfg = http_config()
        backends = build_backends(cfg)
        assert isinstance(backends.generator, HttpGenerator)
        assert isinstance(backends.embedder, HttpEmbedder)
        assert isinstance(backends.scorer, HttpScorer)

    def test_cache_wraps_generator(self, tmp_path):
        cache = ResponseCache(tmp_path)
        backends = build_backends(BackendConfig(kind="mock"), cache=cache)
        assert isinstance(backends.generator, CachingGenerator)
        req = GenerationRequest(prompt="p", seed=0)
        first = backends.generator.generate(req)
        inner_calls = backends.generator.inner.calls
        assert backends.generator.generate(req) == first
        assert backends.generator.inner.calls == inner_calls
