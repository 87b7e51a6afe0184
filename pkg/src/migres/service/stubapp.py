"""Local HTTP servers speaking the three model wire protocols from a script.

One app serves all three: POST /v1/chat/completions replays scripted chat
turns in order (or by request digest), POST /rerank and /nli answer from
the script's lookup tables. Exhausting the chat script is a 409 — the
script, not the caller, is at fault.
"""
from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from ..clients import ChatMessage, ChatRequest, load_stub_script
from ..errors import ProtocolError, StubUnderflowError


class ChatCompletionsBody(BaseModel):
    messages: list[dict]
    model: str = "stub"
    temperature: float = 0.0
    max_tokens: int = 512


class RerankBody(BaseModel):
    query: str
    texts: list[str]


class NliBody(BaseModel):
    premise: str = Field(min_length=1)
    hypothesis: str = Field(min_length=1)


def create_stub_app(script_path: str) -> FastAPI:
    script = load_stub_script(script_path)
    app = FastAPI(title="migres-stubs", version="0.1.0")
    chat = script.chat_client()
    rerank = script.rerank_client()
    nli = script.nli_client()

    @app.exception_handler(StubUnderflowError)
    async def _underflow(request: Request, exc: StubUnderflowError):
        return JSONResponse(status_code=409, content={"detail": str(exc)})

    @app.exception_handler(ProtocolError)
    async def _protocol(request: Request, exc: ProtocolError):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "chat_entries_remaining": chat.remaining()}

    @app.post("/v1/chat/completions")
    def chat_completions(body: ChatCompletionsBody):
        request = ChatRequest(
            [ChatMessage(m.get("role", "user"), m.get("content", "")) for m in body.messages],
            temperature=body.temperature,
            max_output_tokens=body.max_tokens,
        )
        response = chat.chat(request)
        usage = dict(response.usage)
        usage["total_tokens"] = usage.get("prompt_tokens", 0) + usage.get("completion_tokens", 0)
        return {
            "id": "stub-chat",
            "object": "chat.completion",
            "model": body.model,
            "choices": [
                {
                    "index": 0,
                    "message": {"role": "assistant", "content": response.text},
                    "finish_reason": "stop",
                }
            ],
            "usage": usage,
        }

    @app.post("/rerank")
    def rerank_endpoint(body: RerankBody):
        return {"scores": rerank.scores(body.query, body.texts)}

    @app.post("/nli")
    def nli_endpoint(body: NliBody):
        verdict = nli.entails(body.premise, body.hypothesis)
        return {"label": verdict.label, "score": verdict.score}

    return app
