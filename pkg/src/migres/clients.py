"""Clients for the three model roles: chat LLM, reranker, and NLI.

Each role has an HTTP client speaking the JSON wire protocol and a
deterministic scripted stub. Every call is recorded into the transcript
passed by the caller, failed calls included.
"""
from __future__ import annotations

import json
import logging
import os
import time
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import httpx

from .errors import ChatHttpError, ChatTransportError, ProtocolError, StubUnderflowError
from .transcript import KIND_CHAT, KIND_NLI, KIND_RERANK, Transcript, digest

log = logging.getLogger(__name__)

CHAT_API_KEY_ENV = "MIGRES_CHAT_API_KEY"

# Score at or above which an NLI verdict counts as entailment.
ENTAIL_THRESHOLD = 0.5

LABEL_ENTAILMENT = "entailment"
LABEL_NEUTRAL = "neutral"
LABEL_CONTRADICTION = "contradiction"

ROLES = ("system", "user", "assistant")


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str


@dataclass
class ChatRequest:
    """An ordered conversation ending in a user turn."""

    messages: list[ChatMessage]
    temperature: float = 0.0
    max_output_tokens: int = 512

    def validate(self) -> None:
        if not self.messages or self.messages[-1].role != "user":
            raise ProtocolError("chat request must end with a user message")
        for m in self.messages:
            if m.role not in ROLES:
                raise ProtocolError(f"unknown chat role {m.role!r}")
        if self.temperature < 0:
            raise ProtocolError("temperature must be >= 0")
        if self.max_output_tokens <= 0:
            raise ProtocolError("max_output_tokens must be positive")

    def payload(self) -> dict:
        return {
            "messages": [{"role": m.role, "content": m.content} for m in self.messages],
            "temperature": self.temperature,
            "max_output_tokens": self.max_output_tokens,
        }

    def digest(self) -> str:
        return digest(self.payload())


def user_request(content: str, temperature: float = 0.0, max_output_tokens: int = 512) -> ChatRequest:
    return ChatRequest([ChatMessage("user", content)], temperature, max_output_tokens)


def approx_tokens(text: str) -> int:
    """Whitespace token count, used when the backend reports no usage."""
    return len(text.split())


@dataclass
class ChatResponse:
    text: str
    usage: dict = field(default_factory=lambda: {"prompt_tokens": 0, "completion_tokens": 0})
    usage_approximate: bool = False


@dataclass(frozen=True)
class NliVerdict:
    label: str
    score: float


def verdict_from_score(score: float, below_label: str = LABEL_NEUTRAL) -> NliVerdict:
    """Apply the entailment threshold; below it the given label stands."""
    if score >= ENTAIL_THRESHOLD:
        return NliVerdict(LABEL_ENTAILMENT, score)
    label = below_label if below_label != LABEL_ENTAILMENT else LABEL_NEUTRAL
    return NliVerdict(label, score)


def _record_chat(transcript, request, response_payload, tokens, wall, error=None):
    if transcript is not None:
        transcript.record(
            KIND_CHAT,
            request.digest(),
            digest(response_payload),
            tokens=tokens,
            wall_time=wall,
            error=error,
        )


# ---------------------------------------------------------------------------
# Scripted stubs
# ---------------------------------------------------------------------------


class StubChatClient:
    """Replays canned chat responses, by request digest when given, else FIFO."""

    def __init__(self, entries: list[dict]):
        self._fifo: deque[dict] = deque()
        self._keyed: dict[str, deque[dict]] = {}
        for entry in entries:
            if "digest" in entry:
                self._keyed.setdefault(entry["digest"], deque()).append(entry)
            else:
                self._fifo.append(entry)

    def remaining(self) -> int:
        return len(self._fifo) + sum(len(q) for q in self._keyed.values())

    def chat(self, request: ChatRequest, transcript: Transcript | None = None) -> ChatResponse:
        request.validate()
        keyed = self._keyed.get(request.digest())
        if keyed:
            entry = keyed.popleft()
        elif self._fifo:
            entry = self._fifo.popleft()
        else:
            _record_chat(transcript, request, {"error": "underflow"}, None, 0.0, error="stub script underflow")
            raise StubUnderflowError("stub script underflow")
        text = str(entry.get("text", ""))
        usage = entry.get("usage")
        if usage:
            response = ChatResponse(text, {
                "prompt_tokens": int(usage.get("prompt_tokens", 0)),
                "completion_tokens": int(usage.get("completion_tokens", 0)),
            })
        else:
            prompt = " ".join(m.content for m in request.messages)
            response = ChatResponse(
                text,
                {"prompt_tokens": approx_tokens(prompt), "completion_tokens": approx_tokens(text)},
                usage_approximate=True,
            )
        _record_chat(transcript, request, {"text": text}, dict(response.usage), 0.0)
        return response


class StubRerankClient:
    """Stateless (query, text) -> score lookup table."""

    def __init__(self, table: dict[tuple[str, str], float], default: float | None = None):
        self.table = table
        self.default = default

    def scores(self, query: str, texts: list[str], transcript: Transcript | None = None) -> list[float]:
        out = []
        for text in texts:
            score = self.table.get((query, text), self.default)
            if score is None:
                raise ProtocolError(f"no stub rerank score for query={query!r} text={text[:60]!r}")
            out.append(float(score))
        if transcript is not None and texts:
            transcript.record(
                KIND_RERANK,
                digest({"query": query, "texts": texts}),
                digest({"scores": out}),
            )
        return out


class StubNliClient:
    """(premise, hypothesis) -> score table with a containment reflexivity rule.

    When the hypothesis appears verbatim inside the premise the stub scores
    1.0, so premise == hypothesis is always entailment.
    """

    def __init__(self, table: dict[tuple[str, str], float] | None = None, default: float = 0.0):
        self.table = table or {}
        self.default = default

    def entails(self, premise: str, hypothesis: str, transcript: Transcript | None = None) -> NliVerdict:
        if not premise or not hypothesis:
            raise ProtocolError("nli premise and hypothesis must be non-empty")
        score = self.table.get((premise, hypothesis))
        if score is None:
            score = 1.0 if hypothesis in premise else self.default
        verdict = verdict_from_score(float(score))
        if transcript is not None:
            transcript.record(
                KIND_NLI,
                digest({"premise": premise, "hypothesis": hypothesis}),
                digest({"label": verdict.label, "score": verdict.score}),
            )
        return verdict


@dataclass
class ModelClients:
    """The three model roles a pipeline run needs."""

    chat: object
    rerank: object
    nli: object


# ---------------------------------------------------------------------------
# HTTP clients
# ---------------------------------------------------------------------------


class _HttpBase:
    def __init__(self, base_url: str, http: httpx.Client | None = None, timeout: float = 60.0):
        self.base_url = base_url.rstrip("/")
        self._http = http or httpx.Client(timeout=timeout)
        self._timeout = timeout


class HttpChatClient(_HttpBase):
    """POST /v1/chat/completions against any hosted-LLM compatible endpoint.

    Transport failures retry up to `retries` times (total attempts
    retries + 1); non-2xx responses are terminal and carry the status.
    """

    def __init__(
        self,
        base_url: str,
        model: str = "gpt-3.5-turbo",
        api_key: str | None = None,
        http: httpx.Client | None = None,
        retries: int = 2,
        timeout: float = 60.0,
        sleep=time.sleep,
    ):
        super().__init__(base_url, http, timeout)
        self.model = model
        self.api_key = api_key if api_key is not None else os.environ.get(CHAT_API_KEY_ENV)
        self.retries = retries
        self._sleep = sleep

    def chat(self, request: ChatRequest, transcript: Transcript | None = None) -> ChatResponse:
        request.validate()
        body = {
            "model": self.model,
            "messages": [{"role": m.role, "content": m.content} for m in request.messages],
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"

        started = transcript.now() if transcript else 0.0
        last_exc = None
        for attempt in range(self.retries + 1):
            try:
                resp = self._http.post(
                    f"{self.base_url}/v1/chat/completions", json=body, headers=headers
                )
            except httpx.TransportError as exc:
                last_exc = exc
                if attempt < self.retries:
                    self._sleep(0.2 * (attempt + 1))
                continue
            wall = transcript.elapsed(started) if transcript else 0.0
            if resp.status_code // 100 != 2:
                detail = resp.text[:500]
                _record_chat(transcript, request, {"status": resp.status_code}, None, wall,
                             error=f"http {resp.status_code}")
                raise ChatHttpError(f"chat backend returned {resp.status_code}: {detail}", resp.status_code)
            try:
                data = resp.json()
                text = data["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                _record_chat(transcript, request, {"error": "malformed"}, None, wall, error="malformed response")
                raise ProtocolError(f"malformed chat response: {exc}") from exc
            usage = data.get("usage") or {}
            prompt_toks = int(usage.get("prompt_tokens", 0))
            completion_toks = int(usage.get("completion_tokens", 0))
            approximate = False
            if prompt_toks == 0 and completion_toks == 0:
                prompt_toks = approx_tokens(" ".join(m.content for m in request.messages))
                completion_toks = approx_tokens(text)
                approximate = True
            tokens = {"prompt_tokens": prompt_toks, "completion_tokens": completion_toks}
            _record_chat(transcript, request, {"text": text}, tokens, wall)
            return ChatResponse(text, tokens, usage_approximate=approximate)

        wall = transcript.elapsed(started) if transcript else 0.0
        attempts = self.retries + 1
        _record_chat(transcript, request, {"error": str(last_exc)}, None, wall,
                     error=f"transport failure after {attempts} attempts")
        raise ChatTransportError(f"chat transport failed after {attempts} attempts: {last_exc}", attempts)


class HttpRerankClient(_HttpBase):
    def scores(self, query: str, texts: list[str], transcript: Transcript | None = None) -> list[float]:
        if not texts:
            return []
        started = transcript.now() if transcript else 0.0
        resp = self._http.post(f"{self.base_url}/rerank", json={"query": query, "texts": texts})
        wall = transcript.elapsed(started) if transcript else 0.0
        if resp.status_code // 100 != 2:
            raise ProtocolError(f"rerank backend returned {resp.status_code}: {resp.text[:300]}")
        scores = resp.json().get("scores")
        if not isinstance(scores, list) or len(scores) != len(texts):
            if transcript is not None:
                transcript.record(
                    KIND_RERANK,
                    digest({"query": query, "texts": texts}),
                    digest({"error": "misaligned"}),
                    wall_time=wall,
                    error="score array misaligned",
                )
            raise ProtocolError(
                f"rerank backend returned {0 if not isinstance(scores, list) else len(scores)} "
                f"scores for {len(texts)} texts"
            )
        out = [float(s) for s in scores]
        if transcript is not None:
            transcript.record(
                KIND_RERANK,
                digest({"query": query, "texts": texts}),
                digest({"scores": out}),
                wall_time=wall,
            )
        return out


class HttpNliClient(_HttpBase):
    def entails(self, premise: str, hypothesis: str, transcript: Transcript | None = None) -> NliVerdict:
        if not premise or not hypothesis:
            raise ProtocolError("nli premise and hypothesis must be non-empty")
        started = transcript.now() if transcript else 0.0
        resp = self._http.post(
            f"{self.base_url}/nli", json={"premise": premise, "hypothesis": hypothesis}
        )
        wall = transcript.elapsed(started) if transcript else 0.0
        if resp.status_code // 100 != 2:
            raise ProtocolError(f"nli backend returned {resp.status_code}: {resp.text[:300]}")
        data = resp.json()
        try:
            score = float(data["score"])
            backend_label = str(data["label"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolError(f"malformed nli response: {exc}") from exc
        # Normalize so the label/threshold invariant holds regardless of the
        # backend's own decision rule.
        verdict = verdict_from_score(score, below_label=backend_label)
        if transcript is not None:
            transcript.record(
                KIND_NLI,
                digest({"premise": premise, "hypothesis": hypothesis}),
                digest({"label": verdict.label, "score": verdict.score}),
                wall_time=wall,
            )
        return verdict


# ---------------------------------------------------------------------------
# Stub script files
# ---------------------------------------------------------------------------


@dataclass
class StubScript:
    """Parsed JSON-lines stub script covering all three model roles."""

    chat_entries: list[dict] = field(default_factory=list)
    rerank_table: dict[tuple[str, str], float] = field(default_factory=dict)
    rerank_default: float | None = None
    nli_table: dict[tuple[str, str], float] = field(default_factory=dict)
    nli_default: float = 0.0

    def chat_client(self) -> StubChatClient:
        return StubChatClient(list(self.chat_entries))

    def rerank_client(self) -> StubRerankClient:
        return StubRerankClient(dict(self.rerank_table), self.rerank_default)

    def nli_client(self) -> StubNliClient:
        return StubNliClient(dict(self.nli_table), self.nli_default)


def load_stub_script(path: str | Path) -> StubScript:
    """Load a JSON-lines stub script.

    Line shapes:
      {"kind": "chat", "text": ..., "usage"?: {...}, "digest"?: ...}
      {"kind": "rerank", "query": ..., "text": ..., "score": ...}
      {"kind": "rerank", "default": ...}
      {"kind": "nli", "premise": ..., "hypothesis": ..., "score": ...}
      {"kind": "nli", "default": ...}
    """
    script = StubScript()
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ProtocolError(f"cannot read stub script {path}: {exc}") from exc
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
        kind = obj.get("kind")
        if kind == "chat":
            script.chat_entries.append(obj)
        elif kind == "rerank":
            if "default" in obj:
                script.rerank_default = float(obj["default"])
            else:
                script.rerank_table[(obj["query"], obj["text"])] = float(obj["score"])
        elif kind == "nli":
            if "default" in obj:
                script.nli_default = float(obj["default"])
            else:
                script.nli_table[(obj["premise"], obj["hypothesis"])] = float(obj["score"])
        else:
            raise ProtocolError(f"{path}:{lineno}: unknown stub kind {kind!r}")
    return script
