"""Model-backend contracts and implementations.

Three roles: a generator (vision-language chat model), an embedder
(sentence vectors, always unit norm), and a scorer (cross-entropy of a
target continuation given a textual context). Mock implementations are
pure functions of their inputs so full runs are reproducible offline;
HTTP implementations speak a JSON chat-completion-style protocol.
"""

from __future__ import annotations

import base64
import hashlib
import os
import time
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Mapping, Protocol, Sequence, runtime_checkable

if TYPE_CHECKING:
    from .cache import ResponseCache

import numpy as np
import requests

from .errors import BackendError, InputError, TransportError

DEFAULT_EMBED_MODEL = "BAAI/bge-large-en-v1.5"
DEFAULT_SCORER_MODEL = "Qwen/Qwen2-1.5B"

# Anchor phrase the verification templates share; the mock generator answers
# such prompts with Yes/No instead of free text.
_YES_NO_ANCHOR = "Proceed to evaluate."


@dataclass(frozen=True)
class GenerationRequest:
    """One generation call: prompt text, optional image, sampling knobs."""

    prompt: str
    image: str | bytes | None = None
    temperature: float = 0.0
    max_output_tokens: int = 512
    seed: int | None = None

    def __post_init__(self) -> None:
        if not self.prompt.strip():
            raise ValueError("prompt must be non-empty")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_output_tokens < 1:
            raise ValueError("max_output_tokens must be >= 1")


@dataclass(frozen=True)
class BackendConfig:
    """Where the three model roles live and how to talk to them.

    `auth_env_var` names an environment variable holding the bearer token;
    credentials never appear in config files. `ce_reduction` picks per-token
    mean or summed cross-entropy from the scorer.
    """

    kind: str = "mock"
    endpoint_url: str = ""
    model_id: str = ""
    auth_env_var: str = ""
    embed_model_id: str = DEFAULT_EMBED_MODEL
    scorer_model_id: str = DEFAULT_SCORER_MODEL
    embed_endpoint_url: str = ""
    scorer_endpoint_url: str = ""
    response_path: str = "choices.0.message.content"
    embed_items_path: str = "data"
    embed_vector_field: str = "embedding"
    scorer_response_path: str = "cross_entropy"
    timeout: float = 120.0
    max_attempts: int = 3
    retry_backoff: float = 0.5
    ce_reduction: str = "mean"
    mock_embed_dim: int = 32

    def __post_init__(self) -> None:
        if self.kind not in ("mock", "http"):
            raise ValueError(f"kind must be 'mock' or 'http', got {self.kind!r}")
        if self.kind == "http" and (not self.endpoint_url or not self.model_id):
            raise ValueError("http backends need endpoint_url and model_id")
        if self.ce_reduction not in ("mean", "sum"):
            raise ValueError(f"ce_reduction must be 'mean' or 'sum', got {self.ce_reduction!r}")
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")

    @property
    def backend_id(self) -> str:
        return f"{self.kind}:{self.model_id or 'default'}"

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "endpoint_url": self.endpoint_url,
            "model_id": self.model_id,
            "auth_env_var": self.auth_env_var,
            "embed_model_id": self.embed_model_id,
            "scorer_model_id": self.scorer_model_id,
            "embed_endpoint_url": self.embed_endpoint_url,
            "scorer_endpoint_url": self.scorer_endpoint_url,
            "response_path": self.response_path,
            "embed_items_path": self.embed_items_path,
            "embed_vector_field": self.embed_vector_field,
            "scorer_response_path": self.scorer_response_path,
            "timeout": self.timeout,
            "max_attempts": self.max_attempts,
            "retry_backoff": self.retry_backoff,
            "ce_reduction": self.ce_reduction,
            "mock_embed_dim": self.mock_embed_dim,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "BackendConfig":
        known = {f: d[f] for f in cls.__dataclass_fields__ if f in d}
        return cls(**known)


@runtime_checkable
class Generator(Protocol):
    def generate(self, request: GenerationRequest) -> str: ...


@runtime_checkable
class Embedder(Protocol):
    def embed(self, texts: Sequence[str]) -> list[np.ndarray]: ...


@runtime_checkable
class Scorer(Protocol):
    def score_cross_entropy(self, context: str, target: str) -> float: ...


def _digest(*parts: str) -> bytes:
    h = hashlib.sha256()
    for part in parts:
        h.update(part.encode("utf-8"))
        h.update(b"\x00")
    return h.digest()


_MOCK_WORDS = (
    "amber", "basket", "copper", "drift", "ember", "fable", "garnet", "harbor",
    "iris", "juniper", "kettle", "lantern", "meadow", "nectar", "orchid", "pebble",
    "quarry", "russet", "saffron", "thistle", "umber", "velvet", "willow", "zephyr",
)


class MockGenerator:
    """Deterministic stand-in generator: output is a pure function of
    (prompt, seed). Yes/No verification prompts get a parity-based verdict;
    everything else gets three numbered pseudo-sentences, which downstream
    parsers treat as a list or as one block of text as appropriate."""

    def __init__(self, lines: int = 3, words_per_line: int = 6):
        self.lines = lines
        self.words_per_line = words_per_line
        self.calls = 0

    def generate(self, request: GenerationRequest) -> str:
        self.calls += 1
        seed = request.seed if request.seed is not None else 0
        digest = _digest("gen", str(seed), request.prompt)
        if _YES_NO_ANCHOR in request.prompt:
            return "Yes" if digest[0] % 2 == 0 else "No"
        out_lines = []
        for line_idx in range(self.lines):
            chunk = _digest("line", str(line_idx), digest.hex())
            words = [
                _MOCK_WORDS[chunk[w] % len(_MOCK_WORDS)]
                for w in range(self.words_per_line)
            ]
            sentence = " ".join(words)
            out_lines.append(f"{line_idx + 1}. {sentence.capitalize()}.")
        return "\n".join(out_lines)


class MockEmbedder:
    """Hash-seeded unit vectors: identical texts map to identical vectors."""

    def __init__(self, dim: int = 32):
        if dim < 2:
            raise ValueError("dim must be >= 2")
        self.dim = dim
        self.calls = 0
        self.texts_embedded = 0

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        self.calls += 1
        self.texts_embedded += len(texts)
        out = []
        for text in texts:
            seed = int.from_bytes(_digest("emb", text)[:4], "big")
            vec = np.random.RandomState(seed).standard_normal(self.dim)
            out.append(vec / np.linalg.norm(vec))
        return out


class MockScorer:
    """Deterministic pseudo cross-entropy in [0.5, 5.0).

    A fixture table of (context, target) -> value takes precedence, which is
    how tests force exact score arithmetic.
    """

    def __init__(self, fixture_table: Mapping[tuple[str, str], float] | None = None):
        self.fixture_table = dict(fixture_table or {})
        self.calls = 0

    def score_cross_entropy(self, context: str, target: str) -> float:
        self.calls += 1
        key = (context, target)
        if key in self.fixture_table:
            return float(self.fixture_table[key])
        span = int.from_bytes(_digest("ce", context, target)[:4], "big")
        return 0.5 + 4.5 * (span / 2**32)


def _extract_path(payload: Any, path: str) -> Any:
    node = payload
    for segment in path.split("."):
        if isinstance(node, list):
            try:
                node = node[int(segment)]
            except (IndexError, ValueError) as exc:
                raise BackendError(f"response has no element at {path!r}") from exc
        elif isinstance(node, Mapping) and segment in node:
            node = node[segment]
        else:
            raise BackendError(f"response has no element at {path!r}")
    return node


def _image_payload(image: str | bytes) -> dict[str, Any]:
    if isinstance(image, str):
        ext = os.path.splitext(image)[1].lstrip(".").lower() or "png"
        with open(image, "rb") as fh:
            raw = fh.read()
    else:
        ext = "png"
        raw = image
    mime = {"jpg": "jpeg"}.get(ext, ext)
    encoded = base64.b64encode(raw).decode("ascii")
    return {
        "type": "image_url",
        "image_url": {"url": f"data:image/{mime};base64,{encoded}"},
    }


class _HttpBase:
    def __init__(self, config: BackendConfig, session: requests.Session | None = None):
        self.config = config
        self.session = session or requests.Session()

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.config.auth_env_var:
            token = os.environ.get(self.config.auth_env_var, "")
            if not token:
                raise BackendError(
                    f"environment variable {self.config.auth_env_var} is unset or empty"
                )
            headers["Authorization"] = f"Bearer {token}"
        return headers

    def _post(self, url: str, payload: Mapping[str, Any]) -> Any:
        cfg = self.config
        last_error = "no attempt made"
        for attempt in range(cfg.max_attempts):
            if attempt > 0 and cfg.retry_backoff > 0:
                time.sleep(cfg.retry_backoff * 2 ** (attempt - 1))
            try:
                resp = self.session.post(
                    url, json=payload, headers=self._headers(), timeout=cfg.timeout
                )
            except requests.RequestException as exc:
                last_error = f"transport failure: {exc}"
                continue
            if resp.status_code == 429 or resp.status_code >= 500:
                last_error = f"HTTP {resp.status_code}"
                continue
            if resp.status_code >= 400:
                raise TransportError(f"HTTP {resp.status_code}: {resp.text[:200]}", attempt + 1)
            try:
                return resp.json()
            except ValueError as exc:
                raise TransportError(f"non-JSON response: {exc}", attempt + 1) from exc
        raise TransportError(last_error, cfg.max_attempts)


class HttpGenerator(_HttpBase):
    """Chat-completion-style generator. The prompt goes in a single user
    message; an image rides along as a base64 data URL content part."""

    def generate(self, request: GenerationRequest) -> str:
        content: Any = request.prompt
        if request.image is not None:
            content = [
                {"type": "text", "text": request.prompt},
                _image_payload(request.image),
            ]
        payload: dict[str, Any] = {
            "model": self.config.model_id,
            "messages": [{"role": "user", "content": content}],
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        }
        if request.seed is not None:
            payload["seed"] = request.seed
        data = self._post(self.config.endpoint_url, payload)
        text = _extract_path(data, self.config.response_path)
        if not isinstance(text, str):
            raise BackendError(f"expected string at {self.config.response_path!r}")
        return text


class HttpEmbedder(_HttpBase):
    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        url = self.config.embed_endpoint_url or self.config.endpoint_url
        payload = {"model": self.config.embed_model_id, "input": list(texts)}
        data = self._post(url, payload)
        items = _extract_path(data, self.config.embed_items_path)
        if not isinstance(items, list) or len(items) != len(texts):
            raise BackendError("embedding response does not match input count")
        out = []
        for item in items:
            vec = np.asarray(item[self.config.embed_vector_field], dtype=float)
            norm = np.linalg.norm(vec)
            if norm == 0:
                raise BackendError("embedding service returned a zero vector")
            out.append(vec / norm)
        return out


class HttpScorer(_HttpBase):
    """Posts (context, target) to a scoring service and reads back a float
    cross-entropy. The service owns the tokenization; `reduction` says whether
    the value is a per-token mean or a sum."""

    def score_cross_entropy(self, context: str, target: str) -> float:
        url = self.config.scorer_endpoint_url or self.config.endpoint_url
        payload = {
            "model": self.config.scorer_model_id,
            "context": context,
            "target": target,
            "reduction": self.config.ce_reduction,
        }
        data = self._post(url, payload)
        value = _extract_path(data, self.config.scorer_response_path)
        return float(value)


class CachingGenerator:
    """Wraps a generator with a content-addressed response cache."""

    def __init__(self, inner: Generator, cache: "ResponseCache", backend_id: str):
        self.inner = inner
        self.cache = cache
        self.backend_id = backend_id

    def generate(self, request: GenerationRequest) -> str:
        key = self.cache.key(
            self.backend_id, request.prompt, request.temperature, request.seed
        )
        hit = self.cache.get(key)
        if hit is not None:
            return hit
        text = self.inner.generate(request)
        self.cache.put(key, text)
        return text


@dataclass
class Backends:
    """The three model roles plus an identity string used in cache keys."""

    generator: Generator
    embedder: Embedder
    scorer: Scorer
    backend_id: str
    config: BackendConfig = field(default_factory=BackendConfig)


def build_backends(
    config: BackendConfig, cache: "ResponseCache | None" = None
) -> Backends:
    if config.kind == "mock":
        generator: Generator = MockGenerator()
        embedder: Embedder = MockEmbedder(dim=config.mock_embed_dim)
        scorer: Scorer = MockScorer()
    else:
        generator = HttpGenerator(config)
        embedder = HttpEmbedder(config)
        scorer = HttpScorer(config)
    if cache is not None:
        generator = CachingGenerator(generator, cache, config.backend_id)
    return Backends(
        generator=generator,
        embedder=embedder,
        scorer=scorer,
        backend_id=config.backend_id,
        config=config,
    )
