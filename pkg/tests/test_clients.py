"""Model client tests: stubs, HTTP wire protocol, retries, transcripts."""
from __future__ import annotations

import json

import httpx
import pytest

from migres.clients import (
    CHAT_API_KEY_ENV,
    ENTAIL_THRESHOLD,
    ChatMessage,
    ChatRequest,
    HttpChatClient,
    HttpNliClient,
    HttpRerankClient,
    StubChatClient,
    StubNliClient,
    StubRerankClient,
    approx_tokens,
    load_stub_script,
    user_request,
    verdict_from_score,
)
from migres.errors import ChatHttpError, ChatTransportError, ProtocolError, StubUnderflowError
from migres.transcript import Transcript


# -- request validation -----------------------------------------------------


def test_chat_request_must_end_with_user():
    with pytest.raises(ProtocolError):
        ChatRequest([ChatMessage("assistant", "hi")]).validate()
    with pytest.raises(ProtocolError):
        ChatRequest([]).validate()
    user_request("ok").validate()


def test_chat_request_rejects_unknown_role_and_bad_params():
    with pytest.raises(ProtocolError):
        ChatRequest([ChatMessage("tool", "x"), ChatMessage("user", "y")]).validate()
    with pytest.raises(ProtocolError):
        user_request("x", temperature=-0.1).validate()
    with pytest.raises(ProtocolError):
        user_request("x", max_output_tokens=0).validate()


def test_chat_request_digest_is_content_stable():
    a = user_request("same prompt")
    b = user_request("same prompt")
    c = user_request("other prompt")
    assert a.digest() == b.digest()
    assert a.digest() != c.digest()
    assert a.digest() != user_request("same prompt", temperature=0.7).digest()


def test_approx_tokens_counts_whitespace_words():
    assert approx_tokens("one two  three\nfour") == 4
    assert approx_tokens("") == 0


# -- verdict thresholding -----------------------------------------------------


def test_verdict_threshold_is_inclusive():
    assert verdict_from_score(ENTAIL_THRESHOLD).label == "entailment"
    assert verdict_from_score(0.49).label == "neutral"
    assert verdict_from_score(1.0).label == "entailment"


def test_verdict_below_label_passthrough():
    assert verdict_from_score(0.2, below_label="contradiction").label == "contradiction"
    # A backend claiming entailment below the threshold is overridden.
    assert verdict_from_score(0.2, below_label="entailment").label == "neutral"


# -- chat stub -----------------------------------------------------------------


def test_stub_chat_fifo_order():
    stub = StubChatClient([{"text": "first"}, {"text": "second"}])
    assert stub.chat(user_request("a")).text == "first"
    assert stub.chat(user_request("b")).text == "second"
    assert stub.remaining() == 0


def test_stub_chat_keyed_entries_win_over_fifo():
    key = user_request("special").digest()
    stub = StubChatClient([{"text": "fifo"}, {"text": "keyed", "digest": key}])
    assert stub.chat(user_request("special")).text == "keyed"
    assert stub.chat(user_request("anything")).text == "fifo"


def test_stub_chat_underflow_raises_and_records():
    stub = StubChatClient([])
    transcript = Transcript(deterministic=True)
    with pytest.raises(StubUnderflowError, match="stub script underflow"):
        stub.chat(user_request("q"), transcript)
    assert len(transcript.events) == 1
    assert transcript.events[0].error == "stub script underflow"
    assert transcript.api_calls == 1  # failed calls still count


def test_stub_chat_usage_explicit_vs_approximate():
    stub = StubChatClient([
        {"text": "a b c", "usage": {"prompt_tokens": 100, "completion_tokens": 7}},
        {"text": "a b c"},
    ])
    exact = stub.chat(user_request("one two"))
    assert exact.usage == {"prompt_tokens": 100, "completion_tokens": 7}
    assert exact.usage_approximate is False
    approx = stub.chat(user_request("one two"))
    assert approx.usage == {"prompt_tokens": 2, "completion_tokens": 3}
    assert approx.usage_approximate is True


def test_stub_chat_records_transcript_event():
    stub = StubChatClient([{"text": "reply"}])
    transcript = Transcript(deterministic=True)
    stub.chat(user_request("q"), transcript)
    event = transcript.events[0]
    assert event.kind == "chat"
    assert event.wall_time == 0.0
    assert transcript.api_calls == 1


# -- rerank stub ----------------------------------------------------------------


def test_stub_rerank_table_and_default():
    stub = StubRerankClient({("q", "a"): 3.5}, default=0.25)
    assert stub.scores("q", ["a", "b"]) == [3.5, 0.25]


def test_stub_rerank_missing_without_default_raises():
    stub = StubRerankClient({})
    with pytest.raises(ProtocolError):
        stub.scores("q", ["unknown"])


def test_stub_rerank_empty_texts():
    transcript = Transcript(deterministic=True)
    assert StubRerankClient({}).scores("q", [], transcript) == []
    assert transcript.events == []


# -- nli stub --------------------------------------------------------------------


def test_stub_nli_reflexivity_via_containment():
    stub = StubNliClient()
    same = stub.entails("The cat sat.", "The cat sat.")
    assert same.label == "entailment" and same.score == 1.0
    sub = stub.entails("Title: X. The cat sat on the mat.", "cat sat on the mat")
    assert sub.label == "entailment"


def test_stub_nli_table_overrides_containment():
    stub = StubNliClient({("p", "p"): 0.1})
    assert stub.entails("p", "p").label == "neutral"


def test_stub_nli_default_and_empty_inputs():
    stub = StubNliClient(default=0.9)
    assert stub.entails("premise text", "unrelated claim").label == "entailment"
    with pytest.raises(ProtocolError):
        stub.entails("", "h")
    with pytest.raises(ProtocolError):
        stub.entails("p", "")


# -- HTTP chat client --------------------------------------------------------------


def _chat_client(handler, **kwargs):
    http = httpx.Client(transport=httpx.MockTransport(handler))
    return HttpChatClient("http://chat.test", http=http, sleep=lambda _: None, **kwargs)


def _ok_response(text="pong", usage=None):
    data = {"choices": [{"message": {"role": "assistant", "content": text}}]}
    if usage is not None:
        data["usage"] = usage
    return httpx.Response(200, json=data)


def test_http_chat_success_wire_shape(monkeypatch):
    monkeypatch.delenv(CHAT_API_KEY_ENV, raising=False)
    seen = {}

    def handler(request):
        seen["url"] = str(request.url)
        seen["body"] = json.loads(request.content)
        seen["auth"] = request.headers.get("authorization")
        return _ok_response(usage={"prompt_tokens": 11, "completion_tokens": 3})

    client = _chat_client(handler, model="test-model", api_key="sk-123")
    response = client.chat(user_request("ping", temperature=0.7, max_output_tokens=64))
    assert seen["url"] == "http://chat.test/v1/chat/completions"
    assert seen["body"] == {
        "model": "test-model",
        "messages": [{"role": "user", "content": "ping"}],
        "temperature": 0.7,
        "max_tokens": 64,
    }
    assert seen["auth"] == "Bearer sk-123"
    assert response.text == "pong"
    assert response.usage == {"prompt_tokens": 11, "completion_tokens": 3}
    assert response.usage_approximate is False


def test_http_chat_api_key_from_env(monkeypatch):
    monkeypatch.setenv(CHAT_API_KEY_ENV, "env-key")
    seen = {}

    def handler(request):
        seen["auth"] = request.headers.get("authorization")
        return _ok_response()

    _chat_client(handler).chat(user_request("q"))
    assert seen["auth"] == "Bearer env-key"


def test_http_chat_missing_usage_falls_back_to_approximate():
    client = _chat_client(lambda request: _ok_response("a b"))
    response = client.chat(user_request("one two three"))
    assert response.usage == {"prompt_tokens": 3, "completion_tokens": 2}
    assert response.usage_approximate is True


def test_http_chat_non_2xx_is_terminal():
    calls = []

    def handler(request):
        calls.append(1)
        return httpx.Response(500, text="boom")

    transcript = Transcript(deterministic=True)
    with pytest.raises(ChatHttpError) as err:
        _chat_client(handler).chat(user_request("q"), transcript)
    assert err.value.status_code == 500
    assert len(calls) == 1  # no retry on HTTP errors
    assert transcript.events[0].error == "http 500"


def test_http_chat_retries_transport_errors_then_fails():
    calls = []
    sleeps = []

    def handler(request):
        calls.append(1)
        raise httpx.ConnectError("refused", request=request)

    http = httpx.Client(transport=httpx.MockTransport(handler))
    client = HttpChatClient("http://chat.test", http=http, retries=2, sleep=sleeps.append)
    transcript = Transcript(deterministic=True)
    with pytest.raises(ChatTransportError) as err:
        client.chat(user_request("q"), transcript)
    assert len(calls) == 3
    assert err.value.attempts == 3
    assert sleeps == [pytest.approx(0.2), pytest.approx(0.4)]
    assert "3 attempts" in transcript.events[0].error


def test_http_chat_recovers_after_transport_error():
    state = {"n": 0}

    def handler(request):
        state["n"] += 1
        if state["n"] == 1:
            raise httpx.ConnectError("refused", request=request)
        return _ok_response("recovered")

    assert _chat_client(handler).chat(user_request("q")).text == "recovered"
    assert state["n"] == 2


def test_http_chat_malformed_response():
    client = _chat_client(lambda request: httpx.Response(200, json={"nope": True}))
    transcript = Transcript(deterministic=True)
    with pytest.raises(ProtocolError):
        client.chat(user_request("q"), transcript)
    assert transcript.events[0].error == "malformed response"


# -- HTTP rerank client --------------------------------------------------------------


def _rerank_client(handler):
    return HttpRerankClient("http://rerank.test", http=httpx.Client(transport=httpx.MockTransport(handler)))


def test_http_rerank_success_and_wire_shape():
    seen = {}

    def handler(request):
        seen["url"] = str(request.url)
        seen["body"] = json.loads(request.content)
        return httpx.Response(200, json={"scores": [1.5, -0.5]})

    transcript = Transcript(deterministic=True)
    scores = _rerank_client(handler).scores("q", ["a", "b"], transcript)
    assert scores == [1.5, -0.5]
    assert seen["url"] == "http://rerank.test/rerank"
    assert seen["body"] == {"query": "q", "texts": ["a", "b"]}
    assert transcript.events[0].kind == "rerank"


def test_http_rerank_empty_texts_short_circuits():
    def handler(request):  # pragma: no cover - must never run
        raise AssertionError("no request expected for empty texts")

    assert _rerank_client(handler).scores("q", []) == []


def test_http_rerank_misaligned_scores():
    handler = lambda request: httpx.Response(200, json={"scores": [1.0]})
    transcript = Transcript(deterministic=True)
    with pytest.raises(ProtocolError, match="1 scores for 2 texts"):
        _rerank_client(handler).scores("q", ["a", "b"], transcript)
    assert transcript.events[0].error == "score array misaligned"


def test_http_rerank_http_error():
    with pytest.raises(ProtocolError, match="503"):
        _rerank_client(lambda request: httpx.Response(503)).scores("q", ["a"])


# -- HTTP nli client ------------------------------------------------------------------


def _nli_client(handler):
    return HttpNliClient("http://nli.test", http=httpx.Client(transport=httpx.MockTransport(handler)))


def test_http_nli_success_and_normalization():
    seen = {}

    def handler(request):
        seen["body"] = json.loads(request.content)
        return httpx.Response(200, json={"label": "contradiction", "score": 0.9})

    verdict = _nli_client(handler).entails("p text", "h text")
    assert seen["body"] == {"premise": "p text", "hypothesis": "h text"}
    # score >= threshold wins over the backend's own label
    assert verdict.label == "entailment" and verdict.score == 0.9


def test_http_nli_below_threshold_keeps_backend_label():
    handler = lambda request: httpx.Response(200, json={"label": "contradiction", "score": 0.1})
    assert _nli_client(handler).entails("p", "h").label == "contradiction"


def test_http_nli_malformed_response():
    handler = lambda request: httpx.Response(200, json={"label": "entailment"})
    with pytest.raises(ProtocolError):
        _nli_client(handler).entails("p", "h")


# -- stub script files -----------------------------------------------------------------


def test_load_stub_script_all_shapes(tmp_path):
    path = tmp_path / "s.jsonl"
    path.write_text(
        "\n".join(
            json.dumps(obj)
            for obj in [
                {"kind": "chat", "text": "hello"},
                {"kind": "chat", "text": "keyed", "digest": "abc"},
                {"kind": "rerank", "query": "q", "text": "t", "score": 2.0},
                {"kind": "rerank", "default": 0.5},
                {"kind": "nli", "premise": "p", "hypothesis": "h", "score": 0.8},
                {"kind": "nli", "default": 0.1},
            ]
        )
        + "\n",
        encoding="utf-8",
    )
    script = load_stub_script(path)
    assert len(script.chat_entries) == 2
    assert script.rerank_table == {("q", "t"): 2.0}
    assert script.rerank_default == 0.5
    assert script.nli_table == {("p", "h"): 0.8}
    assert script.nli_default == 0.1
    # Client factories give independent copies: draining one chat client
    # does not affect the next.
    first = script.chat_client()
    first.chat(user_request("x"))
    assert script.chat_client().remaining() == 2


def test_load_stub_script_errors(tmp_path):
    missing = tmp_path / "nope.jsonl"
    with pytest.raises(ProtocolError):
        load_stub_script(missing)
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"kind": "chat"}\nnot json\n', encoding="utf-8")
    with pytest.raises(ProtocolError, match="2"):
        load_stub_script(bad)
    unknown = tmp_path / "unknown.jsonl"
    unknown.write_text('{"kind": "mystery"}\n', encoding="utf-8")
    with pytest.raises(ProtocolError, match="mystery"):
        load_stub_script(unknown)


# -- transcript counters ------------------------------------------------------------------


def test_transcript_counters_match_recount():
    transcript = Transcript(deterministic=True)
    stub = StubChatClient([{"text": "a"}, {"text": "b"}])
    stub.chat(user_request("1"), transcript)
    stub.chat(user_request("2"), transcript)
    StubRerankClient({}, default=1.0).scores("q", ["t"], transcript)
    transcript.record_decision(1, 3, "answered", ["d1", "d2", "d3"])
    assert transcript.api_calls == 2
    assert transcript.iterations == 1
    assert transcript.passages_fed == 3
    assert transcript.recount() == {"api_calls": 2, "iterations": 1, "passages_fed": 3}
    decision = transcript.events[-1]
    assert decision.meta["fed_ids"] == ["d1", "d2", "d3"]
