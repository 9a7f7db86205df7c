from __future__ import annotations

import json
from collections import Counter

import pytest
from hypothesis import given, strategies as st

from textemo.llm import (
    AuthError,
    BackendExhausted,
    Completion,
    CompletionCache,
    CompletionRequest,
    MockBackend,
    RateLimited,
    RetryPolicy,
    TransportError,
    complete,
    normalize_label,
)

# Computed once from the canonical JSON of this exact request; must never
# drift across runs or platforms.
PINNED_FINGERPRINT = "99c47ba85b8818943f4d72244a9522ce21301bcb0fdd00dd39b2427c8904be7d"


def fixture_request(prompt: str = "hello") -> CompletionRequest:
    return CompletionRequest(model="gpt-3.5-turbo", prompt=prompt, temperature=0.0, max_tokens=16)


class FlakyBackend:
    """Fails a fixed number of times, then answers."""

    def __init__(self, failures: int, exc_type=TransportError, answer: str = "sad"):
        self.remaining = failures
        self.exc_type = exc_type
        self.answer = answer
        self.calls = 0

    def send(self, request: CompletionRequest) -> str:
        self.calls += 1
        if self.remaining > 0:
            self.remaining -= 1
            raise self.exc_type("boom", request.fingerprint)
        return self.answer


def no_sleep_policy(attempts: int = 5) -> RetryPolicy:
    return RetryPolicy(attempts=attempts, sleep=lambda _s: None)


class TestFingerprint:
    def test_pinned_value(self):
        assert fixture_request().fingerprint == PINNED_FINGERPRINT

    def test_identical_requests_collide(self):
        assert fixture_request().fingerprint == fixture_request().fingerprint

    def test_any_field_changes_it(self):
        base = fixture_request().fingerprint
        assert CompletionRequest(model="other", prompt="hello").fingerprint != base
        assert fixture_request("hello!").fingerprint != base
        assert CompletionRequest(model="gpt-3.5-turbo", prompt="hello", temperature=0.5).fingerprint != base
        assert CompletionRequest(model="gpt-3.5-turbo", prompt="hello", max_tokens=32).fingerprint != base

    def test_shape(self):
        fp = fixture_request().fingerprint
        assert len(fp) == 64
        assert all(c in "0123456789abcdef" for c in fp)


class TestNormalizeLabel:
    @pytest.mark.parametrize(
        "raw,expected",
        [
            ("Sad", "sad"),
            ("The emotion is angry.", "angry"),
            ("I cannot determine this.", None),
            ("happy or sad", "happy"),
            ("NEUTRAL!", "neutral"),
            ("unhappy", None),  # whole word only
            ("sadness", None),
            ("  angry  ", "angry"),
            ("", None),
        ],
    )
    def test_examples(self, raw, expected):
        assert normalize_label(raw) == expected

    @given(st.text(max_size=60))
    def test_idempotent(self, raw):
        once = normalize_label(raw)
        assert normalize_label(once or "") == once


class TestMockBackend:
    def test_scripted_map(self):
        request = fixture_request()
        backend = MockBackend(responses={request.fingerprint: "sad"})
        completion = complete(request, backend)
        assert completion.raw_text == "sad"
        assert completion.normalized_label == "sad"

    def test_deterministic_per_seed_and_fingerprint(self):
        request = fixture_request()
        assert MockBackend(seed=3).send(request) == MockBackend(seed=3).send(request)

    def test_seed_changes_stream(self):
        requests = [fixture_request(f"p{i}") for i in range(64)]
        a = [MockBackend(seed=0).send(r) for r in requests]
        b = [MockBackend(seed=1).send(r) for r in requests]
        assert a != b

    def test_uniform_label_balance(self):
        # 4000 distinct fingerprints: each label lands in [0.20, 0.30]
        backend = MockBackend(seed=0)
        counts = Counter(backend.send(CompletionRequest(model="m", prompt=f"p{i}")) for i in range(4000))
        assert set(counts) == {"happy", "sad", "neutral", "angry"}
        for label, count in counts.items():
            assert 0.20 <= count / 4000 <= 0.30, label


class TestCache:
    def test_round_trip(self, tmp_path):
        cache = CompletionCache(tmp_path / "cache")
        completion = Completion(
            raw_text="Sad.", normalized_label="sad", from_cache=False, latency_ms=12, attempt_count=2
        )
        cache.store("ab" * 32, completion)
        loaded = cache.load("ab" * 32)
        assert loaded.raw_text == completion.raw_text
        assert loaded.normalized_label == completion.normalized_label
        assert loaded.latency_ms == completion.latency_ms
        assert loaded.attempt_count == completion.attempt_count
        assert loaded.from_cache is True

    def test_miss_returns_none(self, tmp_path):
        assert CompletionCache(tmp_path).load("00" * 32) is None

    def test_complete_uses_cache(self, tmp_path):
        cache = CompletionCache(tmp_path)
        request = fixture_request()
        backend = MockBackend(responses={request.fingerprint: "neutral"})
        first = complete(request, backend, cache=cache)
        second = complete(request, backend, cache=cache)
        assert first.from_cache is False
        assert second.from_cache is True
        assert second.raw_text == first.raw_text

    def test_cached_result_wins_over_backend_change(self, tmp_path):
        cache = CompletionCache(tmp_path)
        request = fixture_request()
        complete(request, MockBackend(responses={request.fingerprint: "happy"}), cache=cache)
        answer = complete(request, MockBackend(responses={request.fingerprint: "angry"}), cache=cache)
        assert answer.raw_text == "happy"

    def test_index_appended_and_rebuildable(self, tmp_path):
        cache = CompletionCache(tmp_path)
        completion = Completion(raw_text="x", normalized_label=None, from_cache=False, latency_ms=0, attempt_count=1)
        cache.store("aa" * 32, completion)
        cache.store("bb" * 32, completion)
        lines = (tmp_path / "index.jsonl").read_text().strip().splitlines()
        assert [json.loads(l)["fingerprint"] for l in lines] == ["aa" * 32, "bb" * 32]
        assert cache.rebuild_index() == 2


class TestRetry:
    def test_auth_error_not_retried(self):
        class DenyBackend:
            calls = 0

            def send(self, request):
                DenyBackend.calls += 1
                raise AuthError("denied", request.fingerprint)

        with pytest.raises(AuthError):
            complete(fixture_request(), DenyBackend(), retry=no_sleep_policy())
        assert DenyBackend.calls == 1

    def test_transport_errors_recovered(self):
        backend = FlakyBackend(failures=2)
        completion = complete(fixture_request(), backend, retry=no_sleep_policy())
        assert completion.raw_text == "sad"
        assert completion.attempt_count == 3
        assert backend.calls == 3

    def test_exhaustion_after_max_attempts(self):
        backend = FlakyBackend(failures=99)
        with pytest.raises(BackendExhausted) as excinfo:
            complete(fixture_request(), backend, retry=no_sleep_policy(attempts=5))
        assert backend.calls == 5
        assert excinfo.value.fingerprint == fixture_request().fingerprint

    def test_rate_limit_also_retries(self):
        backend = FlakyBackend(failures=1, exc_type=RateLimited, answer="angry")
        completion = complete(fixture_request(), backend, retry=no_sleep_policy())
        assert completion.raw_text == "angry"

    def test_backoff_delays_grow_exponentially(self):
        sleeps: list[float] = []
        policy = RetryPolicy(attempts=5, base=1.0, factor=2.0, sleep=sleeps.append)
        backend = FlakyBackend(failures=99)
        with pytest.raises(BackendExhausted):
            complete(fixture_request(), backend, retry=policy)
        assert len(sleeps) == 4  # no sleep after the final attempt
        for n, delay in enumerate(sleeps, start=1):
            assert 0.0 <= delay <= 1.0 * 2.0 ** (n - 1)

    def test_exhaustion_names_fingerprint_in_message(self):
        backend = FlakyBackend(failures=99)
        with pytest.raises(BackendExhausted, match=fixture_request().fingerprint):
            complete(fixture_request(), backend, retry=no_sleep_policy())


class TestHttpBackend:
    def test_missing_api_key(self, monkeypatch):
        from textemo.llm import HttpBackend

        for var in ("TEXTEMO_API_KEY", "OPENAI_API_KEY"):
            monkeypatch.delenv(var, raising=False)
        with pytest.raises(AuthError):
            HttpBackend()

    def test_wire_format_and_parsing(self, monkeypatch):
        from textemo.llm import HttpBackend

        captured = {}

        class FakeResponse:
            status_code = 200

            def json(self):
                return {"choices": [{"message": {"content": "sad"}}]}

        class FakeSession:
            def post(self, url, json=None, headers=None, timeout=None):
                captured["url"] = url
                captured["body"] = json
                captured["headers"] = headers
                return FakeResponse()

        backend = HttpBackend(endpoint="https://example.test/v1/chat", api_key="k", session=FakeSession())
        request = fixture_request("what emotion?")
        assert backend.send(request) == "sad"
        assert captured["url"] == "https://example.test/v1/chat"
        assert captured["body"] == {
            "model": "gpt-3.5-turbo",
            "messages": [{"role": "user", "content": "what emotion?"}],
            "temperature": 0.0,
            "max_tokens": 16,
        }
        assert captured["headers"]["Authorization"] == "Bearer k"

    @pytest.mark.parametrize(
        "status,exc",
        [(401, AuthError), (403, AuthError), (429, RateLimited), (500, TransportError), (400, TransportError)],
    )
    def test_status_mapping(self, status, exc):
        from textemo.llm import HttpBackend

        class FakeResponse:
            status_code = status
            text = "nope"

            def json(self):
                return {}

        class FakeSession:
            def post(self, *a, **k):
                return FakeResponse()

        backend = HttpBackend(api_key="k", session=FakeSession())
        with pytest.raises(exc):
            backend.send(fixture_request())
