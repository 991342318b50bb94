"""Gateway behavior: transcript rules, hashing, record/replay, retries."""

from __future__ import annotations

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from devloop.errors import EmptyResponse, InvalidInput, ReplayMismatch, TransportError
from devloop.gateway import (
    BackendProfile,
    ChatGateway,
    ChatMessage,
    Mode,
    RetryPolicy,
    Role,
    TokenUsage,
    request_hash,
    usage_total,
    validate_transcript,
)


def msgs(*pairs: tuple[str, str]) -> list[ChatMessage]:
    return [ChatMessage(Role(role), content) for role, content in pairs]


def make_body(content: str, prompt_tokens: int = 10, completion_tokens: int = 5) -> dict:
    return {
        "choices": [{"message": {"role": "assistant", "content": content}}],
        "usage": {"prompt_tokens": prompt_tokens, "completion_tokens": completion_tokens},
    }


class CountingTransport:
    def __init__(self, bodies=None, error: Exception | None = None):
        self.calls = 0
        self.bodies = list(bodies or [])
        self.error = error

    def __call__(self, endpoint, payload, headers, timeout):
        self.calls += 1
        if self.error is not None:
            raise self.error
        return self.bodies.pop(0)


# ---------------------------------------------------------------------------
# Transcript and usage invariants
# ---------------------------------------------------------------------------


def test_transcript_must_start_with_single_system_message():
    validate_transcript(msgs(("system", "s"), ("user", "u")))
    with pytest.raises(InvalidInput):
        validate_transcript([])
    with pytest.raises(InvalidInput):
        validate_transcript(msgs(("user", "u")))
    with pytest.raises(InvalidInput):
        validate_transcript(msgs(("system", "a"), ("system", "b"), ("user", "u")))
    with pytest.raises(InvalidInput):
        validate_transcript(msgs(("user", "u"), ("system", "s")))
    with pytest.raises(InvalidInput):
        validate_transcript(msgs(("system", "s"), ("user", "")))


@given(p=st.integers(0, 10**9), c=st.integers(0, 10**9))
def test_token_usage_total_is_exact_sum(p, c):
    assert TokenUsage(p, c).total == p + c


def test_token_usage_rejects_negative():
    with pytest.raises(InvalidInput):
        TokenUsage(-1, 0)


def test_usage_total_empty_and_arithmetic():
    assert usage_total([]) == TokenUsage(0, 0)

    profile = BackendProfile(mode=Mode.LIVE)
    transport = CountingTransport([make_body("a", 100, 50), make_body("b", 200, 25)])
    gateway = ChatGateway(profile, transport)
    exchanges = [
        gateway.complete(msgs(("system", "s"), ("user", "one"))),
        gateway.complete(msgs(("system", "s"), ("user", "two"))),
    ]
    total = usage_total(exchanges)
    assert (total.prompt_tokens, total.completion_tokens) == (300, 75)
    assert total.total == 375


# ---------------------------------------------------------------------------
# Request hashing
# ---------------------------------------------------------------------------


def test_identical_transcripts_hash_equal():
    a = msgs(("system", "s"), ("user", "u"))
    b = msgs(("system", "s"), ("user", "u"))
    assert request_hash(a) == request_hash(b)


def test_role_swap_changes_hash():
    a = msgs(("system", "s"), ("user", "u"))
    b = msgs(("system", "u"), ("user", "s"))
    assert request_hash(a) != request_hash(b)


@settings(max_examples=200)
@given(
    content=st.text(min_size=1, max_size=40),
    position=st.integers(0, 39),
    replacement=st.characters(blacklist_categories=("Cs",)),
)
def test_single_character_difference_changes_hash(content, position, replacement):
    position = position % len(content)
    mutated = content[:position] + replacement + content[position + 1 :]
    base = msgs(("system", "s"), ("user", content))
    changed = msgs(("system", "s"), ("user", mutated))
    # oracle: direct comparison decides whether the transcripts differ
    if mutated == content:
        assert request_hash(base) == request_hash(changed)
    else:
        assert request_hash(base) != request_hash(changed)


# ---------------------------------------------------------------------------
# Profile validation
# ---------------------------------------------------------------------------


def test_profile_requires_cassette_outside_live():
    with pytest.raises(InvalidInput):
        BackendProfile(mode=Mode.REPLAY, cassette_path=None)
    with pytest.raises(InvalidInput):
        BackendProfile(mode=Mode.RECORD, cassette_path="")
    BackendProfile(mode=Mode.LIVE)  # no cassette needed


def test_profile_temperature_bounds():
    with pytest.raises(InvalidInput):
        BackendProfile(mode=Mode.LIVE, temperature=2.5)


def test_profile_round_trips_through_dict(tmp_path):
    profile = BackendProfile(
        endpoint="http://localhost:9/v1",
        model_name="m",
        temperature=0.7,
        max_response_tokens=256,
        retry_policy=RetryPolicy(max_attempts=2, backoff=0.1),
        mode=Mode.REPLAY,
        cassette_path=str(tmp_path / "c.jsonl"),
    )
    (tmp_path / "c.jsonl").write_text("")
    assert BackendProfile.from_dict(profile.to_dict()) == profile


# ---------------------------------------------------------------------------
# Record then replay
# ---------------------------------------------------------------------------


def record_exchanges(tmp_path, conversations):
    """Record scripted (request, response) pairs and return the cassette path."""
    cassette = tmp_path / "cassette.jsonl"
    transport = CountingTransport([make_body(response) for _, response in conversations])
    gateway = ChatGateway(
        BackendProfile(mode=Mode.RECORD, cassette_path=str(cassette)), transport
    )
    for request, _ in conversations:
        gateway.complete(request)
    return cassette


def test_record_persists_before_return(tmp_path):
    cassette = tmp_path / "cassette.jsonl"
    transport = CountingTransport([make_body("hello", 7, 3)])
    gateway = ChatGateway(
        BackendProfile(mode=Mode.RECORD, cassette_path=str(cassette)), transport
    )
    exchange = gateway.complete(msgs(("system", "s"), ("user", "hi")))
    assert exchange.response.content == "hello"
    assert exchange.usage == TokenUsage(7, 3)
    [line] = cassette.read_text().splitlines()
    entry = json.loads(line)
    assert entry["response"]["content"] == "hello"
    assert entry["request_hash"] == request_hash(exchange.request)


def test_replay_returns_recorded_exchange(tmp_path):
    request = msgs(("system", "s"), ("user", "draft use cases"))
    cassette = record_exchanges(tmp_path, [(request, "the recorded answer")])
    gateway = ChatGateway(
        BackendProfile(mode=Mode.REPLAY, cassette_path=str(cassette))
    )
    exchange = gateway.complete(request)
    assert exchange.response.content == "the recorded answer"
    assert exchange.usage == TokenUsage(10, 5)


def test_replay_identical_requests_in_recorded_order(tmp_path):
    request = msgs(("system", "s"), ("user", "same prompt"))
    cassette = record_exchanges(tmp_path, [(request, "first"), (request, "second")])
    gateway = ChatGateway(BackendProfile(mode=Mode.REPLAY, cassette_path=str(cassette)))
    assert gateway.complete(request).response.content == "first"
    assert gateway.complete(request).response.content == "second"


def test_replay_mismatch_on_unknown_request(tmp_path):
    cassette = record_exchanges(
        tmp_path, [(msgs(("system", "s"), ("user", "known")), "answer")]
    )
    gateway = ChatGateway(BackendProfile(mode=Mode.REPLAY, cassette_path=str(cassette)))
    with pytest.raises(ReplayMismatch):
        gateway.complete(msgs(("system", "s"), ("user", "drifted prompt")))


def test_replay_mismatch_when_cassette_exhausted(tmp_path):
    request = msgs(("system", "s"), ("user", "once"))
    cassette = record_exchanges(tmp_path, [(request, "only answer")])
    gateway = ChatGateway(BackendProfile(mode=Mode.REPLAY, cassette_path=str(cassette)))
    gateway.complete(request)
    with pytest.raises(ReplayMismatch):
        gateway.complete(request)


def test_replay_missing_cassette_file(tmp_path):
    with pytest.raises(ReplayMismatch):
        ChatGateway(
            BackendProfile(mode=Mode.REPLAY, cassette_path=str(tmp_path / "absent.jsonl"))
        )


def test_replay_malformed_cassette_line(tmp_path):
    cassette = tmp_path / "bad.jsonl"
    cassette.write_text('{"request_hash": "x"}\n')
    with pytest.raises(ReplayMismatch):
        ChatGateway(BackendProfile(mode=Mode.REPLAY, cassette_path=str(cassette)))


def test_replay_performs_no_transport_calls(tmp_path):
    request = msgs(("system", "s"), ("user", "net probe"))
    cassette = record_exchanges(tmp_path, [(request, "offline answer")])
    probe = CountingTransport(error=AssertionError("network touched in replay"))
    gateway = ChatGateway(
        BackendProfile(mode=Mode.REPLAY, cassette_path=str(cassette)), probe
    )
    assert gateway.complete(request).response.content == "offline answer"
    assert probe.calls == 0


def test_sequence_numbers_strictly_increase(tmp_path):
    request = msgs(("system", "s"), ("user", "again"))
    cassette = record_exchanges(tmp_path, [(request, "a"), (request, "b"), (request, "c")])
    gateway = ChatGateway(BackendProfile(mode=Mode.REPLAY, cassette_path=str(cassette)))
    numbers = [gateway.complete(request).sequence_no for _ in range(3)]
    assert numbers == sorted(set(numbers))


# ---------------------------------------------------------------------------
# Live mode failures
# ---------------------------------------------------------------------------


def test_transport_error_after_exact_attempt_count():
    transport = CountingTransport(error=ConnectionError("down"))
    gateway = ChatGateway(
        BackendProfile(mode=Mode.LIVE, retry_policy=RetryPolicy(max_attempts=3, backoff=0.0)),
        transport,
    )
    with pytest.raises(TransportError):
        gateway.complete(msgs(("system", "s"), ("user", "u")))
    assert transport.calls == 3


def test_unreachable_endpoint_over_real_transport():
    gateway = ChatGateway(
        BackendProfile(
            endpoint="http://127.0.0.1:1/v1/chat/completions",
            mode=Mode.LIVE,
            retry_policy=RetryPolicy(max_attempts=3, backoff=0.0),
        )
    )
    with pytest.raises(TransportError):
        gateway.complete(msgs(("system", "s"), ("user", "u")))


def test_empty_completion_raises_empty_response():
    transport = CountingTransport([{"choices": [{"message": {"content": "   "}}]}])
    gateway = ChatGateway(BackendProfile(mode=Mode.LIVE), transport)
    with pytest.raises(EmptyResponse):
        gateway.complete(msgs(("system", "s"), ("user", "u")))


def test_refusal_shaped_body_raises_empty_response():
    transport = CountingTransport([{"error": {"message": "refused"}}])
    gateway = ChatGateway(BackendProfile(mode=Mode.LIVE), transport)
    with pytest.raises(EmptyResponse):
        gateway.complete(msgs(("system", "s"), ("user", "u")))
