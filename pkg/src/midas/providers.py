"""Provider clients: chat, embedding, web search, and image rendering.

Every network call the engine makes flows through this module. Each client
wraps a transport with retry/backoff (base 250 ms, factor 2, jitter +/-20%,
cap 8 s). Tests run against the deterministic scripted transcript and the
hashing embedder, so the whole pipeline is network-free under test.

Credentials come from environment variables: MIDAS_CHAT_KEY, MIDAS_EMBED_KEY,
MIDAS_SEARCH_KEY, MIDAS_IMAGE_KEY. Endpoints and models come from the config
file's provider bindings.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import random
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

from .model import MidasError

BACKOFF_BASE_S = 0.25
BACKOFF_FACTOR = 2.0
BACKOFF_JITTER = 0.2
BACKOFF_CAP_S = 8.0


class ProviderError(MidasError):
    """Non-retryable provider failure."""


class TransientProviderError(ProviderError):
    """Retryable transport failure (timeouts, 5xx, connection resets)."""


class RetryBudgetExhausted(ProviderError):
    def __init__(self, role: str, attempts: int, last: Exception):
        super().__init__(f"{role}: retry budget exhausted after {attempts} attempts: {last}")
        self.attempts = attempts
        self.last = last


class DecodeError(ProviderError):
    """Provider payload did not match the expected wire shape."""


class TranscriptExhausted(ProviderError):
    """A scripted test requested more responses than the transcript holds."""


@dataclass
class ProviderBinding:
    """Transport settings for one agent role."""

    endpoint_url: str = ""
    model: str = ""
    temperature: Optional[float] = None
    max_in_flight: int = 4
    timeout_ms: int = 30_000
    max_retries: int = 3

    def validate(self) -> None:
        if self.timeout_ms <= 0:
            raise ProviderError("binding timeout_ms must be > 0")
        if self.max_retries < 0:
            raise ProviderError("binding max_retries must be >= 0")

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "ProviderBinding":
        binding = cls(
            endpoint_url=doc.get("endpoint_url", ""),
            model=doc.get("model", ""),
            temperature=doc.get("temperature"),
            max_in_flight=doc.get("max_in_flight", 4),
            timeout_ms=doc.get("timeout_ms", 30_000),
            max_retries=doc.get("max_retries", 3),
        )
        binding.validate()
        return binding


@dataclass
class AgentRequest:
    """A rendered prompt bound for one agent role's model."""

    role: str
    prompt: str
    temperature: float
    response_schema: str = ""
    attempt: int = 0


@dataclass
class SearchResult:
    title: str
    url: str
    snippet: str


@dataclass
class ImageArtifact:
    artifact_id: str
    content: bytes
    prompt: str


@dataclass
class Usage:
    """Per-role accounting of successful calls and retried attempts."""

    calls: dict[str, int] = field(default_factory=dict)
    retries: dict[str, int] = field(default_factory=dict)

    def record(self, role: str, attempts: int) -> None:
        self.calls[role] = self.calls.get(role, 0) + 1
        if attempts > 1:
            self.retries[role] = self.retries.get(role, 0) + (attempts - 1)


def backoff_schedule(attempt: int, rng: random.Random) -> float:
    """Delay before retry *attempt* (1-based): exponential with jitter, capped."""
    base = min(BACKOFF_BASE_S * (BACKOFF_FACTOR ** (attempt - 1)), BACKOFF_CAP_S)
    return base * (1.0 + BACKOFF_JITTER * (2.0 * rng.random() - 1.0))


def with_retries(
    role: str,
    fn: Callable[[], Any],
    max_retries: int,
    rng: random.Random,
    sleep: Callable[[float], None] = time.sleep,
    usage: Optional[Usage] = None,
) -> Any:
    """Run *fn*, retrying transient failures up to *max_retries* times."""
    attempts = 0
    while True:
        attempts += 1
        try:
            result = fn()
        except TransientProviderError as exc:
            if attempts > max_retries:
                raise RetryBudgetExhausted(role, attempts, exc) from exc
            sleep(backoff_schedule(attempts, rng))
            continue
        if usage is not None:
            usage.record(role, attempts)
        return result


# -- deterministic test-mode embedder ------------------------------------------


class HashingEmbedder:
    """Seeded feature hashing of character trigrams into a fixed dimension.

    A pure function of (model_tag, text, dimension): identical text always
    yields an identical unit vector, with no network and no global state.
    """

    def __init__(self, dimension: int = 64, model_tag: str = "hash-64"):
        self.dimension = dimension
        self.model_tag = model_tag

    def embed(self, texts: list[str]) -> list[list[float]]:
        if not texts:
            raise ProviderError("embedding batch must be non-empty")
        return [self._embed_one(t) for t in texts]

    def _embed_one(self, text: str) -> list[float]:
        vec = [0.0] * self.dimension
        padded = f"##{text}##"
        for i in range(len(padded) - 2):
            gram = padded[i : i + 3]
            digest = hashlib.sha256(f"{self.model_tag}|{gram}".encode("utf-8")).digest()
            bucket = int.from_bytes(digest[:4], "big") % self.dimension
            sign = 1.0 if digest[4] % 2 == 0 else -1.0
            vec[bucket] += sign
        norm = math.sqrt(sum(v * v for v in vec))
        if norm == 0.0:
            vec[0] = 1.0
            return vec
        return [v / norm for v in vec]


class ScriptedEmbedder:
    """Embeddings looked up from a text->vector map, with a hashing fallback.

    Vectors are normalized on ingestion. An optional fault schedule raises a
    transient error on the first *n* batches, for fault-injection tests.
    """

    def __init__(
        self,
        mapping: Optional[dict[str, list[float]]] = None,
        dimension: int = 64,
        model_tag: str = "scripted-64",
        transient_faults: int = 0,
    ):
        self.dimension = dimension
        self.model_tag = model_tag
        self._fallback = HashingEmbedder(dimension=dimension, model_tag=model_tag)
        self._map: dict[str, list[float]] = {}
        self._faults_left = transient_faults
        self._lock = threading.Lock()
        for text, vec in (mapping or {}).items():
            self.script(text, vec)

    def script(self, text: str, vector: list[float]) -> None:
        if len(vector) != self.dimension:
            raise ProviderError(
                f"scripted vector has dimension {len(vector)}, expected {self.dimension}"
            )
        norm = math.sqrt(sum(v * v for v in vector))
        if norm == 0.0:
            raise ProviderError("scripted vector must be non-zero")
        self._map[text] = [v / norm for v in vector]

    def embed(self, texts: list[str]) -> list[list[float]]:
        if not texts:
            raise ProviderError("embedding batch must be non-empty")
        with self._lock:
            if self._faults_left > 0:
                self._faults_left -= 1
                raise TransientProviderError("scripted embedding fault")
        out = []
        for text in texts:
            if text in self._map:
                out.append(list(self._map[text]))
            else:
                out.append(self._fallback._embed_one(text))
        return out


# -- scripted chat/search/image transcript --------------------------------------


@dataclass
class TranscriptEntry:
    role: str
    match: str = ""  # substring that must appear in the request text; "" matches all
    response: Any = None
    fault: Optional[str] = None  # "transient" | "fatal"


class ScriptedTranscript:
    """Ordered canned responses per channel, consumed strictly in order.

    A request pops the head entry of its channel's queue; a matcher miss or an
    exhausted queue fails the test immediately. Fault entries raise instead of
    responding and are consumed per attempt, so retry behavior is scriptable.
    """

    def __init__(self, entries: Optional[list[TranscriptEntry]] = None):
        self._queues: dict[str, list[TranscriptEntry]] = {"chat": [], "search": [], "image": []}
        self._lock = threading.Lock()
        for entry in entries or []:
            self.add(entry)

    def add(self, entry: TranscriptEntry) -> None:
        if entry.role not in self._queues:
            raise ProviderError(f"unknown transcript channel {entry.role!r}")
        self._queues[entry.role].append(entry)

    def chat_response(self, payload: Any, match: str = "") -> None:
        text = payload if isinstance(payload, str) else json.dumps(payload)
        self.add(TranscriptEntry(role="chat", match=match, response=text))

    def chat_fault(self, kind: str = "transient") -> None:
        self.add(TranscriptEntry(role="chat", fault=kind))

    def search_response(self, results: list[dict[str, str]], match: str = "") -> None:
        self.add(TranscriptEntry(role="search", match=match, response=results))

    def image_response(self, match: str = "") -> None:
        self.add(TranscriptEntry(role="image", match=match, response=b"\x89PNG\r\n\x1a\n"))

    def image_fault(self, kind: str = "fatal") -> None:
        self.add(TranscriptEntry(role="image", fault=kind))

    def consume(self, channel: str, request_text: str) -> Any:
        with self._lock:
            queue = self._queues[channel]
            if not queue:
                raise TranscriptExhausted(
                    f"no scripted {channel} response left for request: {request_text[:120]!r}"
                )
            entry = queue.pop(0)
        if entry.match and entry.match not in request_text:
            raise ProviderError(
                f"scripted {channel} matcher {entry.match!r} does not match "
                f"request: {request_text[:120]!r}"
            )
        if entry.fault == "transient":
            raise TransientProviderError(f"scripted transient {channel} fault")
        if entry.fault == "fatal":
            raise ProviderError(f"scripted fatal {channel} fault")
        return entry.response

    def remaining(self) -> dict[str, int]:
        with self._lock:
            return {k: len(v) for k, v in self._queues.items()}

    def assert_consumed(self) -> None:
        left = {k: v for k, v in self.remaining().items() if v}
        if left:
            raise ProviderError(f"unconsumed transcript entries: {left}")

    @classmethod
    def from_file(cls, path: str) -> "ScriptedTranscript":
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        transcript = cls()
        for raw in doc.get("entries", []):
            response = raw.get("response")
            if raw.get("role") == "image" and response is not None:
                response = bytes(response, "utf-8") if isinstance(response, str) else response
            transcript.add(
                TranscriptEntry(
                    role=raw["role"],
                    match=raw.get("match", ""),
                    response=response,
                    fault=raw.get("fault"),
                )
            )
        return transcript


# -- provider set ----------------------------------------------------------------


class ProviderSet:
    """The four channels an engine run needs, plus retry policy and accounting."""

    def __init__(
        self,
        chat: Callable[[AgentRequest], str],
        embedder: Any,
        search: Callable[[str, int], list[SearchResult]],
        image: Callable[[str], ImageArtifact],
        bindings: Optional[dict[str, ProviderBinding]] = None,
        rng_seed: int = 0,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self._chat = chat
        self._embedder = embedder
        self._search = search
        self._image = image
        self.bindings = bindings or {}
        self.usage = Usage()
        self.capture: Optional[Callable[[AgentRequest], None]] = None
        self._rng = random.Random(rng_seed)
        self._sleep = sleep

    def binding_for(self, role: str) -> ProviderBinding:
        return self.bindings.get(role, ProviderBinding())

    @property
    def embedding_model_tag(self) -> str:
        return getattr(self._embedder, "model_tag", "unknown")

    @property
    def embedding_dimension(self) -> int:
        return getattr(self._embedder, "dimension", 0)

    def chat(self, request: AgentRequest) -> str:
        binding = self.binding_for(request.role)
        if self.capture is not None:
            self.capture(request)
        text = with_retries(
            request.role,
            lambda: self._chat(request),
            binding.max_retries,
            self._rng,
            self._sleep,
            self.usage,
        )
        if not isinstance(text, str):
            raise DecodeError(f"chat provider returned non-text payload: {type(text)}")
        return text

    def embed_batch(self, texts: list[str], max_in_flight: int = 1) -> list[list[float]]:
        """Order-preserving batch embedding; a partial response retries the batch."""
        if not texts:
            raise ProviderError("embedding batch must be non-empty")
        binding = self.binding_for("embedding")

        def run() -> list[list[float]]:
            if max_in_flight > 1 and len(texts) > 1:
                with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
                    futures = [pool.submit(self._embedder.embed, [t]) for t in texts]
                    vectors = [f.result()[0] for f in futures]
            else:
                vectors = self._embedder.embed(list(texts))
            if len(vectors) != len(texts):
                raise TransientProviderError(
                    f"partial embedding response: {len(vectors)}/{len(texts)}"
                )
            return vectors

        vectors = with_retries(
            "embedding", run, binding.max_retries, self._rng, self._sleep, self.usage
        )
        dim = self.embedding_dimension
        for vec in vectors:
            if dim and len(vec) != dim:
                raise ProviderError(
                    f"embedding dimension mismatch: got {len(vec)}, expected {dim}"
                )
        return vectors

    def search(self, query: str, limit: int) -> list[SearchResult]:
        binding = self.binding_for("librarian")
        results = with_retries(
            "search",
            lambda: self._search(query, limit),
            binding.max_retries,
            self._rng,
            self._sleep,
            self.usage,
        )
        return results[:limit]

    def render_image(self, prompt: str) -> ImageArtifact:
        if not prompt.strip():
            raise ProviderError("image prompt must be non-empty")
        binding = self.binding_for("leo")
        return with_retries(
            "image",
            lambda: self._image(prompt),
            binding.max_retries,
            self._rng,
            self._sleep,
            self.usage,
        )


def scripted_provider_set(
    transcript: ScriptedTranscript,
    embedder: Optional[Any] = None,
    bindings: Optional[dict[str, ProviderBinding]] = None,
    rng_seed: int = 0,
) -> ProviderSet:
    """Wire a fully scripted, network-free provider set (no real sleeping)."""
    embedder = embedder or HashingEmbedder()
    image_counter = {"n": 0}

    def chat(request: AgentRequest) -> str:
        return transcript.consume("chat", f"[{request.role}] {request.prompt}")

    def search(query: str, limit: int) -> list[SearchResult]:
        raw = transcript.consume("search", query)
        if not isinstance(raw, list):
            raise DecodeError("scripted search payload must be a list")
        out = []
        for item in raw:
            try:
                out.append(SearchResult(title=item["title"], url=item["url"], snippet=item["snippet"]))
            except (TypeError, KeyError) as exc:
                raise DecodeError(f"malformed search result: {item!r}") from exc
        return out

    def image(prompt: str) -> ImageArtifact:
        content = transcript.consume("image", prompt)
        image_counter["n"] += 1
        return ImageArtifact(
            artifact_id=f"artifact-{image_counter['n']:04d}", content=content, prompt=prompt
        )

    return ProviderSet(
        chat=chat,
        embedder=embedder,
        search=search,
        image=image,
        bindings=bindings,
        rng_seed=rng_seed,
        sleep=lambda _s: None,
    )


def mock_provider_set(rng_seed: int = 0) -> tuple[ProviderSet, ScriptedTranscript]:
    """Empty transcript + hashing embedder; callers script what they need."""
    transcript = ScriptedTranscript()
    return scripted_provider_set(transcript, rng_seed=rng_seed), transcript


# -- HTTP transports ---------------------------------------------------------------


def _api_key(env_var: str) -> str:
    key = os.environ.get(env_var, "")
    if not key:
        raise ProviderError(f"missing credential: set {env_var}")
    return key


def http_provider_set(
    bindings: dict[str, ProviderBinding],
    rng_seed: int = 0,
    client: Any = None,
) -> ProviderSet:
    """Real transports over OpenAI-compatible chat/embeddings wire formats."""
    import httpx

    http = client or httpx.Client()

    def post(url: str, headers: dict[str, str], payload: dict[str, Any], timeout_ms: int) -> Any:
        try:
            resp = http.post(url, headers=headers, json=payload, timeout=timeout_ms / 1000.0)
        except httpx.TimeoutException as exc:
            raise TransientProviderError(f"timeout calling {url}") from exc
        except httpx.TransportError as exc:
            raise TransientProviderError(f"transport error calling {url}: {exc}") from exc
        if resp.status_code in (429, 500, 502, 503, 504):
            raise TransientProviderError(f"{url} returned {resp.status_code}")
        if resp.status_code != 200:
            raise ProviderError(f"{url} returned {resp.status_code}: {resp.text[:200]}")
        try:
            return resp.json()
        except ValueError as exc:
            raise DecodeError(f"non-JSON payload from {url}") from exc

    def chat(request: AgentRequest) -> str:
        binding = bindings.get(request.role) or bindings.get("chat") or ProviderBinding()
        doc = post(
            binding.endpoint_url,
            {"Authorization": f"Bearer {_api_key('MIDAS_CHAT_KEY')}"},
            {
                "model": binding.model,
                "temperature": request.temperature,
                "messages": [{"role": "user", "content": request.prompt}],
            },
            binding.timeout_ms,
        )
        try:
            return doc["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise DecodeError(f"unexpected chat payload shape: {doc!r}") from exc

    class HttpEmbedder:
        def __init__(self) -> None:
            binding = bindings.get("embedding") or ProviderBinding()
            self.model_tag = binding.model or "remote-embedding"
            self.dimension = 0  # learned from the first response

        def embed(self, texts: list[str]) -> list[list[float]]:
            binding = bindings.get("embedding") or ProviderBinding()
            doc = post(
                binding.endpoint_url,
                {"Authorization": f"Bearer {_api_key('MIDAS_EMBED_KEY')}"},
                {"model": binding.model, "input": texts},
                binding.timeout_ms,
            )
            try:
                vectors = [item["embedding"] for item in doc["data"]]
            except (KeyError, TypeError) as exc:
                raise DecodeError(f"unexpected embedding payload shape: {doc!r}") from exc
            if vectors and not self.dimension:
                self.dimension = len(vectors[0])
            return vectors

    def search(query: str, limit: int) -> list[SearchResult]:
        binding = bindings.get("search") or ProviderBinding()
        doc = post(
            binding.endpoint_url,
            {"Authorization": f"Bearer {_api_key('MIDAS_SEARCH_KEY')}"},
            {"query": query, "limit": limit},
            binding.timeout_ms,
        )
        try:
            return [
                SearchResult(title=r["title"], url=r["url"], snippet=r.get("snippet", ""))
                for r in doc["results"]
            ]
        except (KeyError, TypeError) as exc:
            raise DecodeError(f"unexpected search payload shape: {doc!r}") from exc

    image_counter = {"n": 0}

    def image(prompt: str) -> ImageArtifact:
        binding = bindings.get("image") or ProviderBinding()
        doc = post(
            binding.endpoint_url,
            {"Authorization": f"Bearer {_api_key('MIDAS_IMAGE_KEY')}"},
            {"model": binding.model, "prompt": prompt},
            binding.timeout_ms,
        )
        try:
            import base64

            content = base64.b64decode(doc["data"][0]["b64_json"])
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise DecodeError(f"unexpected image payload shape: {doc!r}") from exc
        image_counter["n"] += 1
        return ImageArtifact(
            artifact_id=f"artifact-{image_counter['n']:04d}", content=content, prompt=prompt
        )

    return ProviderSet(
        chat=chat,
        embedder=HttpEmbedder(),
        search=search,
        image=image,
        bindings=bindings,
        rng_seed=rng_seed,
    )
