"""Model-backend and embedding-backend abstractions.

Three chat backends share one ``generate`` entry point:

- ``http_chat``: POST a chat-completions JSON body to a remote endpoint
  and read the reply from the first choice. Transient failures retry with
  exponential backoff (base 250 ms, factor 2).
- ``replay``: deterministic fixture lookup keyed on the cleaned final
  user message; one JSON record per line ``{"query": ..., "response": ...}``.
  Never touches the network.
- ``template``: returns a configured constant (``{query}`` and ``{model}``
  placeholders are substituted); for smoke tests.

The embedder builds sparse term-frequency vectors of hashed character
n-grams; it backs the reference similarity and relevance scorers.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import httpx

from .config import BackendConfig, GenerationParams
from .corpus import clean_text
from .errors import BackendError, ReplayMissError
from .kernels import ngram_bucket_counts

DEFAULT_NGRAM_N = 2
DEFAULT_EMBED_DIMS = 65536
BACKOFF_BASE_MS = 250
BACKOFF_FACTOR = 2

Message = dict[str, str]


@dataclass(frozen=True)
class GenerationResult:
    text: str
    latency_ms: int
    input_chars: int
    output_chars: int
    backend_id: str


@dataclass(frozen=True)
class EmbeddingVector:
    dims: int
    values: dict[int, int]

    def __post_init__(self) -> None:
        if any(w < 0 for w in self.values.values()):
            raise ValueError("embedding weights must be nonnegative")

    @property
    def nnz(self) -> int:
        return len(self.values)


def embed(text: str, n: int = DEFAULT_NGRAM_N, dims: int = DEFAULT_EMBED_DIMS) -> EmbeddingVector:
    """Sparse term-frequency vector of the hashed character n-grams of
    clean_text(text). Deterministic across runs and platforms."""
    if n < 1:
        raise ValueError(f"n-gram size must be >= 1, got {n}")
    if dims < 1:
        raise ValueError(f"bucket count must be >= 1, got {dims}")
    return EmbeddingVector(dims=dims, values=ngram_bucket_counts(clean_text(text), n, dims))


def last_user_text(messages: list[Message]) -> str:
    if not messages:
        raise BackendError("message list is empty")
    last = messages[-1]
    if last.get("role") != "user":
        raise BackendError(f"last message role must be 'user', got {last.get('role')!r}")
    return last.get("content", "")


_replay_cache: dict[str, dict[str, str]] = {}


def load_replay_fixture(path: str | Path) -> dict[str, str]:
    """Load (and cache) a replay fixture: cleaned query -> response."""
    key = str(Path(path).resolve())
    cached = _replay_cache.get(key)
    if cached is not None:
        return cached
    p = Path(path)
    if not p.is_file():
        raise BackendError(f"replay fixture not found: {p}")
    table: dict[str, str] = {}
    with p.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
                query, response = record["query"], record["response"]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise BackendError(f"{p}:{lineno}: bad replay record ({exc})") from exc
            table[clean_text(str(query))] = str(response)
    _replay_cache[key] = table
    return table


def clear_backend_caches() -> None:
    _replay_cache.clear()


def _generate_replay(backend: BackendConfig, messages: list[Message]) -> str:
    if not backend.fixture_path:
        raise BackendError("replay backend has no fixture_path")
    table = load_replay_fixture(backend.fixture_path)
    key = clean_text(last_user_text(messages))
    if key not in table:
        raise ReplayMissError(f"replay fixture has no entry for query {key!r}")
    return table[key]


def _generate_template(backend: BackendConfig, messages: list[Message]) -> str:
    text = backend.template_text
    query = clean_text(last_user_text(messages))
    return text.replace("{query}", query).replace("{model}", backend.model_name)


def _auth_headers(backend: BackendConfig) -> dict[str, str]:
    if not backend.api_key_env:
        return {}
    key = os.environ.get(backend.api_key_env, "")
    return {"Authorization": f"Bearer {key}"} if key else {}


def _generate_http(
    backend: BackendConfig,
    messages: list[Message],
    params: GenerationParams,
    sleep: Callable[[float], None],
) -> str:
    if not backend.endpoint:
        raise BackendError("http_chat backend has no endpoint")
    body = {
        "model": backend.model_name,
        "messages": messages,
        "temperature": params.temperature,
        "top_p": params.top_p,
        "max_tokens": params.max_output_length,
    }
    timeout = backend.timeout_ms / 1000.0
    attempts = backend.max_retries + 1
    last_error: Optional[str] = None
    for attempt in range(attempts):
        if attempt:
            sleep(BACKOFF_BASE_MS * BACKOFF_FACTOR ** (attempt - 1) / 1000.0)
        try:
            response = httpx.post(
                backend.endpoint, json=body, headers=_auth_headers(backend), timeout=timeout
            )
        except httpx.TimeoutException as exc:
            last_error = f"timeout after {backend.timeout_ms} ms ({exc})"
            continue
        except httpx.TransportError as exc:
            last_error = f"transport failure ({exc})"
            continue
        if response.status_code >= 500 or response.status_code == 429:
            last_error = f"HTTP {response.status_code}"
            continue
        if response.status_code != 200:
            raise BackendError(f"{backend.backend_id}: HTTP {response.status_code}")
        try:
            payload = response.json()
            text = payload["choices"][0]["message"]["content"]
        except (json.JSONDecodeError, ValueError, KeyError, IndexError, TypeError) as exc:
            raise BackendError(f"{backend.backend_id}: malformed response body ({exc})") from exc
        if not isinstance(text, str):
            raise BackendError(f"{backend.backend_id}: non-string reply content")
        return text
    raise BackendError(
        f"{backend.backend_id}: failed after {attempts} attempt(s); last error: {last_error}"
    )


def generate(
    backend: BackendConfig,
    messages: list[Message],
    params: Optional[GenerationParams] = None,
    *,
    sleep: Callable[[float], None] = time.sleep,
) -> GenerationResult:
    """Run one chat completion against the configured backend."""
    p = params or GenerationParams()
    last_user_text(messages)  # validates shape before any work
    started = time.perf_counter()
    if backend.kind == "replay":
        text = _generate_replay(backend, messages)
    elif backend.kind == "template":
        text = _generate_template(backend, messages)
    elif backend.kind == "http_chat":
        text = _generate_http(backend, messages, p, sleep)
    else:
        raise BackendError(f"unknown backend kind {backend.kind!r}")
    latency_ms = max(0, int((time.perf_counter() - started) * 1000))
    return GenerationResult(
        text=text,
        latency_ms=latency_ms,
        input_chars=sum(len(m.get("content", "")) for m in messages),
        output_chars=len(text),
        backend_id=backend.backend_id,
    )
