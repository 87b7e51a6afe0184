"""The engine as an HTTP service.

The app is created around a base configuration; requests may override
individual keys at flag precedence. The BM25 index is loaded or built
once and cached on the app. Input problems map to 400, everything the
engine survives (aborted runs) still returns 200 with the aborted result
so partial output reaches the caller.
"""
from __future__ import annotations

import json
import logging
import threading
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from ..clients import (
    HttpChatClient,
    HttpNliClient,
    HttpRerankClient,
    ModelClients,
    StubScript,
    load_stub_script,
)
from ..config import Config
from ..corpus import Bm25Index, load_corpus_jsonl
from ..errors import ConfigError, CorpusError, DatasetError, MigresError
from ..evaluation import evaluate, load_dataset_jsonl, run_baseline
from ..pipeline import run_pipeline
from ..prompts import Templates
from .schemas import (
    AskRequest,
    ConfigResponse,
    EvalRequest,
    HealthResponse,
    IndexRequest,
    IndexResponse,
)

log = logging.getLogger(__name__)

_INPUT_ERRORS = (ConfigError, CorpusError, DatasetError)


def build_clients(config: Config, script: StubScript | None = None) -> ModelClients:
    """Clients per the config: scripted stubs or live HTTP endpoints.

    Chat stubs are stateful (they replay a sequence), so callers needing
    isolation pass the parsed script and get fresh replay state here.
    """
    script_path = config.get("stubs.script")
    if script is None and script_path:
        script = load_stub_script(script_path)
    if script is not None:
        return ModelClients(script.chat_client(), script.rerank_client(), script.nli_client())
    missing = [
        key for key in ("chat.endpoint", "rerank.endpoint", "nli.endpoint") if not config.get(key)
    ]
    if missing:
        raise ConfigError(
            "no stub script configured and endpoint(s) unset: " + ", ".join(missing)
        )
    return ModelClients(
        chat=HttpChatClient(
            config.get("chat.endpoint"),
            model=config.get("chat.model"),
            retries=int(config.get("chat.retries")),
            timeout=float(config.get("chat.timeout")),
        ),
        rerank=HttpRerankClient(config.get("rerank.endpoint")),
        nli=HttpNliClient(config.get("nli.endpoint")),
    )


def create_app(config: Config | None = None) -> FastAPI:
    app = FastAPI(title="migres", version="0.1.0")
    app.state.config = config or Config.resolve()
    app.state.index = None
    app.state.index_lock = threading.Lock()

    @app.exception_handler(MigresError)
    async def _migres_error(request: Request, exc: MigresError):
        status = 400 if isinstance(exc, _INPUT_ERRORS) else 500
        return JSONResponse(status_code=status, content={"detail": str(exc)})

    def _ensure_index(config: Config) -> Bm25Index:
        with app.state.index_lock:
            if app.state.index is not None:
                return app.state.index
            index_path = config.get("index.path")
            corpus_path = config.get("corpus.path")
            if index_path and Path(index_path).is_file():
                app.state.index = Bm25Index.load(index_path)
            elif corpus_path:
                docs = load_corpus_jsonl(corpus_path)
                app.state.index = Bm25Index.build(docs, config.bm25_params())
            else:
                raise ConfigError(
                    "no index available: POST /index first or set index.path / corpus.path"
                )
            return app.state.index

    @app.get("/healthz", response_model=HealthResponse)
    def healthz():
        return HealthResponse(status="ok", index_loaded=app.state.index is not None)

    @app.get("/config", response_model=ConfigResponse)
    def show_config():
        cfg: Config = app.state.config
        return ConfigResponse(lines=cfg.show_lines(), config=cfg.to_dict())

    @app.post("/index", response_model=IndexResponse)
    def build_index(body: IndexRequest):
        cfg: Config = app.state.config
        docs = load_corpus_jsonl(body.corpus)
        index = Bm25Index.build(docs, cfg.bm25_params())
        saved = None
        if body.out:
            index.save(body.out)
            saved = body.out
        with app.state.index_lock:
            app.state.index = index
        return IndexResponse(stats=index.stats(), saved=saved)

    @app.post("/ask")
    def ask(body: AskRequest):
        cfg = app.state.config.with_overrides(body.overrides)
        index = _ensure_index(cfg)
        clients = build_clients(cfg)
        result = run_pipeline(body.question, cfg.pipeline_config(), clients, index)
        return JSONResponse(content=result.to_dict())

    @app.post("/eval")
    def run_eval(body: EvalRequest):
        cfg = app.state.config.with_overrides(body.overrides)
        index = _ensure_index(cfg)
        instances = load_dataset_jsonl(body.dataset)
        mode = body.baseline or cfg.get("eval.baseline")
        pipeline_cfg = cfg.pipeline_config()
        script_path = cfg.get("stubs.script")
        script = load_stub_script(script_path) if script_path else None
        transcript_dir = Path(body.transcript_dir) if body.transcript_dir else None
        if transcript_dir:
            transcript_dir.mkdir(parents=True, exist_ok=True)

        def runner(instance):
            clients = build_clients(cfg, script)
            if mode == "migres":
                result = run_pipeline(instance.question, pipeline_cfg, clients, index)
            else:
                result = run_baseline(mode, instance.question, pipeline_cfg, clients, index)
            if transcript_dir:
                path = transcript_dir / f"{instance.id}.transcript.json"
                path.write_text(
                    json.dumps(result.transcript.to_dict(), ensure_ascii=False, indent=2),
                    encoding="utf-8",
                )
            return result

        judge = build_clients(cfg, script).chat if body.judge else None
        templates = pipeline_cfg.templates or Templates()
        report = evaluate(
            instances,
            runner,
            samples=body.samples if body.samples is not None else cfg.get("eval.samples"),
            seed=body.seed if body.seed is not None else cfg.get("eval.seed"),
            parallel=body.parallel if body.parallel is not None else cfg.get("eval.parallel"),
            judge=judge,
            judge_templates=templates,
        )
        payload = report.to_dict()
        payload["tsv"] = report.to_tsv()
        return JSONResponse(content=payload)

    return app
