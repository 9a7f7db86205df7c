"""Annotator backends: HTTP chat-completion client, deterministic mock,
response-label normalization, content-addressed caching, and retry policy.

Requests are fingerprinted by a SHA-256 over (model, prompt, temperature,
max_tokens); the cache is a directory of JSON files named by fingerprint plus
an append-only index, so interrupted batch runs resume without repeating
calls.

Wire format (HTTP backend): a chat-completions POST body
``{"model": ..., "messages": [{"role": "user", "content": prompt}],
"temperature": ..., "max_tokens": ...}`` whose response carries the text at
``choices[0].message.content``. The API key is read from TEXTEMO_API_KEY,
falling back to OPENAI_API_KEY.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import re
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping

import requests

logger = logging.getLogger(__name__)

PREDICTION_LABELS = ("happy", "sad", "neutral", "angry")

DEFAULT_ENDPOINT = "https://api.openai.com/v1/chat/completions"
API_KEY_ENV_VARS = ("TEXTEMO_API_KEY", "OPENAI_API_KEY")

_LABEL_RE = re.compile(r"\b(happy|sad|neutral|angry)\b")
_PUNCT_RE = re.compile(r"[^a-z0-9']+")


class BackendError(Exception):
    """Base class for annotator-backend failures; carries the request fingerprint."""

    def __init__(self, message: str, fingerprint: str | None = None):
        super().__init__(message if fingerprint is None else f"{message} [fingerprint {fingerprint}]")
        self.fingerprint = fingerprint


class AuthError(BackendError):
    """Authentication/authorization failure; never retried."""


class RateLimited(BackendError):
    """Rate-limit response for a single attempt; retried with backoff."""


class TransportError(BackendError):
    """Network or server failure for a single attempt; retried with backoff."""


class BackendExhausted(BackendError):
    """All retry attempts failed."""


@dataclass(frozen=True)
class CompletionRequest:
    """One annotator call, identified by a content hash of its fields."""

    model: str
    prompt: str
    temperature: float = 0.0
    max_tokens: int = 16

    @property
    def fingerprint(self) -> str:
        payload = json.dumps(
            {
                "model": self.model,
                "prompt": self.prompt,
                "temperature": self.temperature,
                "max_tokens": self.max_tokens,
            },
            sort_keys=True,
            ensure_ascii=True,
            separators=(",", ":"),
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class Completion:
    """Raw and normalized response to a CompletionRequest."""

    raw_text: str
    normalized_label: str | None
    from_cache: bool
    latency_ms: int
    attempt_count: int


def normalize_label(raw: str) -> str | None:
    """Extract a prediction label from a model response.

    Case-folds, strips punctuation, and scans for the four labels as whole
    words; the first occurrence by text position wins. Returns None when no
    label is present.
    """
    cleaned = _PUNCT_RE.sub(" ", raw.casefold())
    match = _LABEL_RE.search(cleaned)
    return match.group(1) if match else None


@dataclass
class RetryPolicy:
    """Exponential backoff with full jitter: uniform(0, base * factor**n)."""

    attempts: int = 5
    base: float = 1.0
    factor: float = 2.0
    sleep: Callable[[float], None] = time.sleep
    rng: random.Random = field(default_factory=random.Random)

    def delay(self, attempt: int) -> float:
        return self.rng.uniform(0.0, self.base * self.factor ** (attempt - 1))


class MockBackend:
    """Deterministic stand-in for the HTTP backend.

    Without a fixture map, every request gets a label chosen uniformly from
    the prediction set by hashing (seed, fingerprint), so runs are identical
    across processes. A fixture map of fingerprint -> raw response overrides
    specific requests.
    """

    def __init__(self, seed: int = 0, responses: Mapping[str, str] | None = None):
        self.seed = seed
        self.responses = dict(responses or {})

    def send(self, request: CompletionRequest) -> str:
        fp = request.fingerprint
        if fp in self.responses:
            return self.responses[fp]
        digest = hashlib.sha256(f"{self.seed}:{fp}".encode("utf-8")).digest()
        return PREDICTION_LABELS[digest[0] % len(PREDICTION_LABELS)]


class HttpBackend:
    """Chat-completions client over HTTP."""

    def __init__(
        self,
        endpoint: str = DEFAULT_ENDPOINT,
        api_key: str | None = None,
        timeout: float = 60.0,
        session: requests.Session | None = None,
    ):
        if api_key is None:
            for var in API_KEY_ENV_VARS:
                api_key = os.environ.get(var)
                if api_key:
                    break
        if not api_key:
            raise AuthError(f"no API key found in {' or '.join(API_KEY_ENV_VARS)}")
        self.endpoint = endpoint
        self.api_key = api_key
        self.timeout = timeout
        self.session = session or requests.Session()

    def send(self, request: CompletionRequest) -> str:
        body = {
            "model": request.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        fp = request.fingerprint
        try:
            resp = self.session.post(
                self.endpoint,
                json=body,
                headers={"Authorization": f"Bearer {self.api_key}"},
                timeout=self.timeout,
            )
        except requests.RequestException as exc:
            raise TransportError(f"request failed: {exc}", fp) from exc
        if resp.status_code in (401, 403):
            raise AuthError(f"authentication rejected (HTTP {resp.status_code})", fp)
        if resp.status_code == 429:
            raise RateLimited("rate limited (HTTP 429)", fp)
        if resp.status_code != 200:
            raise TransportError(f"unexpected HTTP {resp.status_code}: {resp.text[:200]}", fp)
        try:
            return resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"malformed response body: {exc}", fp) from exc


class CompletionCache:
    """Directory of JSON files named by request fingerprint.

    Writes are atomic (temp file + rename), so concurrent writers of the same
    fingerprint are idempotent. An append-only index.jsonl mirrors the
    directory and can be rebuilt from it.
    """

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    def _path(self, fingerprint: str) -> Path:
        return self.directory / f"{fingerprint}.json"

    def load(self, fingerprint: str) -> Completion | None:
        path = self._path(fingerprint)
        if not path.exists():
            return None
        data = json.loads(path.read_text(encoding="utf-8"))
        return Completion(
            raw_text=data["raw_text"],
            normalized_label=data.get("normalized_label"),
            from_cache=True,
            latency_ms=data.get("latency_ms", 0),
            attempt_count=data.get("attempt_count", 1),
        )

    def store(self, fingerprint: str, completion: Completion) -> None:
        payload = {
            "fingerprint": fingerprint,
            "raw_text": completion.raw_text,
            "normalized_label": completion.normalized_label,
            "latency_ms": completion.latency_ms,
            "attempt_count": completion.attempt_count,
        }
        blob = json.dumps(payload, ensure_ascii=False, sort_keys=True)
        fd, tmp = tempfile.mkstemp(dir=self.directory, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                fh.write(blob)
            os.replace(tmp, self._path(fingerprint))
        finally:
            if os.path.exists(tmp):
                os.unlink(tmp)
        with open(self.directory / "index.jsonl", "a", encoding="utf-8") as fh:
            fh.write(json.dumps({"fingerprint": fingerprint}) + "\n")

    def rebuild_index(self) -> int:
        fingerprints = sorted(p.stem for p in self.directory.glob("*.json") if p.name != "index.jsonl")
        with open(self.directory / "index.jsonl", "w", encoding="utf-8") as fh:
            for fp in fingerprints:
                fh.write(json.dumps({"fingerprint": fp}) + "\n")
        return len(fingerprints)


def complete(
    request: CompletionRequest,
    backend: MockBackend | HttpBackend,
    cache: CompletionCache | None = None,
    retry: RetryPolicy | None = None,
) -> Completion:
    """Resolve a request through the cache, then the backend with retries.

    AuthError propagates immediately; RateLimited and TransportError are
    retried with exponential backoff and raise BackendExhausted once the
    attempt budget is spent. Successful completions are cached before return.
    """
    fp = request.fingerprint
    if cache is not None:
        cached = cache.load(fp)
        if cached is not None:
            return cached

    retry = retry or RetryPolicy()
    start = time.monotonic()
    last_error: BackendError | None = None
    for attempt in range(1, retry.attempts + 1):
        try:
            raw = backend.send(request)
        except (RateLimited, TransportError) as exc:
            last_error = exc
            logger.warning("attempt %d/%d failed: %s", attempt, retry.attempts, exc)
            if attempt < retry.attempts:
                retry.sleep(retry.delay(attempt))
            continue
        completion = Completion(
            raw_text=raw,
            normalized_label=normalize_label(raw),
            from_cache=False,
            latency_ms=int((time.monotonic() - start) * 1000),
            attempt_count=attempt,
        )
        if cache is not None:
            cache.store(fp, completion)
        return completion
    raise BackendExhausted(f"gave up after {retry.attempts} attempts: {last_error}", fp)
