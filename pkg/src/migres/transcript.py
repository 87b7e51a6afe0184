"""Append-only call transcript with efficiency counters.

Every outbound model call (including failed ones) lands here exactly once,
alongside per-iteration decision events. Counters are maintained
incrementally and must always equal a fold over the events; recount()
exposes that fold so tests can assert the invariant.
"""
from __future__ import annotations

import hashlib
import json
import threading
import time
from dataclasses import dataclass, field

KIND_CHAT = "chat"
KIND_RERANK = "rerank"
KIND_NLI = "nli"
KIND_RETRIEVE = "retrieve"
KIND_DECISION = "decision"


def digest(payload) -> str:
    """Stable sha256 hex digest of a JSON-serializable payload."""
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass
class Event:
    kind: str
    request_digest: str
    response_digest: str
    tokens: dict | None = None
    wall_time: float = 0.0
    error: str | None = None
    meta: dict | None = None

    def to_dict(self) -> dict:
        out = {
            "kind": self.kind,
            "request_digest": self.request_digest,
            "response_digest": self.response_digest,
            "tokens": self.tokens,
            "wall_time": self.wall_time,
        }
        if self.error is not None:
            out["error"] = self.error
        if self.meta is not None:
            out["meta"] = self.meta
        return out


@dataclass
class Transcript:
    """Serialized append point for one pipeline run.

    With deterministic=True all wall times are recorded as 0.0 so that
    scripted runs serialize byte-identically across repetitions.
    """

    deterministic: bool = False
    events: list[Event] = field(default_factory=list)
    api_calls: int = 0
    iterations: int = 0
    passages_fed: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def now(self) -> float:
        return 0.0 if self.deterministic else time.perf_counter()

    def elapsed(self, started: float) -> float:
        return 0.0 if self.deterministic else time.perf_counter() - started

    def record(
        self,
        kind: str,
        request_digest: str,
        response_digest: str,
        *,
        tokens: dict | None = None,
        wall_time: float = 0.0,
        error: str | None = None,
        meta: dict | None = None,
    ) -> Event:
        event = Event(kind, request_digest, response_digest, tokens, wall_time, error, meta)
        with self._lock:
            self.events.append(event)
            if kind == KIND_CHAT:
                self.api_calls += 1
            elif kind == KIND_DECISION:
                self.iterations += 1
                if meta and "passages" in meta:
                    self.passages_fed += int(meta["passages"])
        return event

    def record_decision(
        self, iteration: int, passages: int, status: str, fed_ids: list[str] | None = None
    ) -> Event:
        meta = {"iteration": iteration, "passages": passages, "status": status}
        if fed_ids is not None:
            meta["fed_ids"] = list(fed_ids)
        return self.record(
            KIND_DECISION,
            digest({"iteration": iteration}),
            digest({"status": status}),
            meta=meta,
        )

    def recount(self) -> dict:
        """Independent fold over events; must equal the stored counters."""
        api = sum(1 for e in self.events if e.kind == KIND_CHAT)
        iters = sum(1 for e in self.events if e.kind == KIND_DECISION)
        fed = sum(
            int(e.meta["passages"])
            for e in self.events
            if e.kind == KIND_DECISION and e.meta and "passages" in e.meta
        )
        return {"api_calls": api, "iterations": iters, "passages_fed": fed}

    def to_dict(self) -> dict:
        return {
            "events": [e.to_dict() for e in self.events],
            "counters": {
                "api_calls": self.api_calls,
                "iterations": self.iterations,
                "passages_fed": self.passages_fed,
            },
        }
