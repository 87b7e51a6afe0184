"""Command-line interface.

The CLI is a thin client of the HTTP service: by default it mounts the
service in-process; with --server it talks to a remote instance over HTTP.
Exit codes: 0 ok, 1 run failure, 2 usage/input error.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import httpx

from .config import Config, parse_config_file
from .errors import ConfigError, CorpusError, DatasetError, MigresError

EXIT_OK = 0
EXIT_RUN_FAILURE = 1
EXIT_USAGE = 2

_INPUT_ERRORS = (ConfigError, CorpusError, DatasetError)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="migres",
        description="Iterative retrieval-augmented question answering engine.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, server: bool = True):
        p.add_argument("--config", help="path to a key = value config file")
        p.add_argument("--task", choices=("multihop", "odqa", "commonsense"),
                       help="task family selecting iteration/threshold defaults")
        p.add_argument("--stubs", help="path to a stub model script (JSONL)")
        p.add_argument("--no-nli", action="store_true",
                       help="disable NLI verification of citations")
        p.add_argument("--no-knowledge-prompt", action="store_true",
                       help="disable the LLM knowledge fallback")
        p.add_argument("--few-shot", metavar="TEMPLATE_DIR",
                       help="directory of prompt template overrides")
        p.add_argument("--corpus", help="corpus JSONL path")
        p.add_argument("--index", help="persisted index path")
        if server:
            p.add_argument("--server", help="base URL of a running service "
                                            "(default: run in-process)")

    p_index = sub.add_parser("index", help="build (and optionally save) a BM25 index")
    common(p_index)
    p_index.add_argument("--out", help="where to write the index file")
    p_index.set_defaults(handler=cmd_index)

    p_ask = sub.add_parser("ask", help="answer a single question")
    common(p_ask)
    p_ask.add_argument("--question", required=True)
    p_ask.add_argument("--out", help="also write the result JSON to this file")
    p_ask.set_defaults(handler=cmd_ask)

    for name in ("run", "eval"):
        p_eval = sub.add_parser(name, help="evaluate over a dataset JSONL")
        common(p_eval)
        p_eval.add_argument("--dataset", required=True)
        p_eval.add_argument("--samples", type=int, help="sub-sample size")
        p_eval.add_argument("--seed", type=int, help="sub-sampling seed (default 0)")
        p_eval.add_argument("--parallel", type=int, help="worker threads (default 1)")
        p_eval.add_argument("--baseline",
                            choices=("vanilla", "vanilla_s", "summ", "snippet",
                                     "rerank_n4", "migres"))
        p_eval.add_argument("--judge", action="store_true",
                            help="also score predictions with the LLM judge")
        p_eval.add_argument("--out", help="directory for report + transcripts")
        p_eval.set_defaults(handler=cmd_eval)

    p_serve = sub.add_parser("serve", help="run the engine service over HTTP")
    common(p_serve, server=False)
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8080)
    p_serve.set_defaults(handler=cmd_serve)

    p_stubs = sub.add_parser("serve-stubs",
                             help="serve the three model protocols from a script")
    p_stubs.add_argument("--stubs", required=True)
    p_stubs.add_argument("--host", default="127.0.0.1")
    p_stubs.add_argument("--port", type=int, default=8081)
    p_stubs.set_defaults(handler=cmd_serve_stubs)

    p_show = sub.add_parser("show-config", help="print the resolved configuration")
    common(p_show)
    p_show.set_defaults(handler=cmd_show_config)

    return parser


def _flag_entries(args: argparse.Namespace) -> dict:
    """Map set flags onto config keys."""
    entries: dict[str, object] = {}
    mapping = {
        "task": "task",
        "stubs": "stubs.script",
        "few_shot": "templates.dir",
        "corpus": "corpus.path",
        "index": "index.path",
        "samples": "eval.samples",
        "parallel": "eval.parallel",
        "baseline": "eval.baseline",
    }
    for attr, key in mapping.items():
        value = getattr(args, attr, None)
        if value is not None:
            entries[key] = value
    if getattr(args, "seed", None) is not None and args.command in ("run", "eval"):
        entries["eval.seed"] = args.seed
    if getattr(args, "no_nli", False):
        entries["pipeline.nli_verify_enabled"] = False
    if getattr(args, "no_knowledge_prompt", False):
        entries["pipeline.knowledge_prompt_enabled"] = False
    return entries


def _resolve_config(args: argparse.Namespace) -> Config:
    file_entries = parse_config_file(args.config) if getattr(args, "config", None) else {}
    return Config.resolve(file_entries, _flag_entries(args))


def _render(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if value is None:
        return ""
    return str(value)


class ServiceClient:
    """HTTP access to the service — in-process ASGI or a remote base URL."""

    def __init__(self, args: argparse.Namespace):
        self.remote = bool(getattr(args, "server", None))
        if self.remote:
            self._client = httpx.Client(base_url=args.server.rstrip("/"), timeout=600.0)
            file_entries = (
                parse_config_file(args.config) if getattr(args, "config", None) else {}
            )
            merged = {**file_entries, **_flag_entries(args)}
            self.overrides = {k: _render(v) for k, v in merged.items()}
        else:
            import warnings

            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                from fastapi.testclient import TestClient

            from .service import create_app

            self._client = TestClient(
                create_app(_resolve_config(args)), raise_server_exceptions=False
            )
            self.overrides = {}

    def post(self, path: str, payload: dict) -> httpx.Response:
        return self._client.post(path, json=payload)

    def get(self, path: str) -> httpx.Response:
        return self._client.get(path)


def _fail(response: httpx.Response) -> int:
    try:
        detail = response.json().get("detail", response.text)
    except ValueError:
        detail = response.text
    print(f"error ({response.status_code}): {detail}", file=sys.stderr)
    return EXIT_RUN_FAILURE if response.status_code >= 500 else EXIT_USAGE


def _dump(payload) -> str:
    return json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False)


def cmd_index(args) -> int:
    corpus = args.corpus
    if not corpus and args.config:
        corpus = parse_config_file(args.config).get("corpus.path")
    if not corpus:
        print("error: index needs --corpus (or corpus.path in the config)", file=sys.stderr)
        return EXIT_USAGE
    client = ServiceClient(args)
    response = client.post("/index", {"corpus": corpus, "out": args.out})
    if response.status_code != 200:
        return _fail(response)
    body = response.json()
    stats = body["stats"]
    line = " ".join(f"{k}={stats[k]}" for k in sorted(stats))
    print(f"index built: {line}")
    if body.get("saved"):
        print(f"index saved: {body['saved']}")
    return EXIT_OK


def cmd_ask(args) -> int:
    client = ServiceClient(args)
    response = client.post(
        "/ask", {"question": args.question, "overrides": client.overrides}
    )
    if response.status_code != 200:
        return _fail(response)
    result = response.json()
    text = _dump(result)
    print(text)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    return EXIT_RUN_FAILURE if result.get("status") == "aborted" else EXIT_OK


def cmd_eval(args) -> int:
    client = ServiceClient(args)
    out = args.out
    if not out and args.config:
        out = parse_config_file(args.config).get("output.dir") or None
    out_dir = Path(out) if out else None
    payload = {
        "dataset": args.dataset,
        "samples": args.samples,
        "seed": args.seed,
        "parallel": args.parallel,
        "baseline": args.baseline,
        "judge": args.judge,
        "overrides": client.overrides,
    }
    if out_dir and not client.remote:
        payload["transcript_dir"] = str(out_dir / "transcripts")
    response = client.post("/eval", payload)
    if response.status_code != 200:
        return _fail(response)
    report = response.json()
    print(_dump(report["summary"]))
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "report.json").write_text(_dump(report) + "\n", encoding="utf-8")
        (out_dir / "report.tsv").write_text(report["tsv"], encoding="utf-8")
    return EXIT_RUN_FAILURE if report["summary"]["n_aborted"] else EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(_resolve_config(args)), host=args.host, port=args.port)
    return EXIT_OK


def cmd_serve_stubs(args) -> int:
    import uvicorn

    from .service import create_stub_app

    uvicorn.run(create_stub_app(args.stubs), host=args.host, port=args.port)
    return EXIT_OK


def cmd_show_config(args) -> int:
    if getattr(args, "server", None):
        client = ServiceClient(args)
        response = client.get("/config")
        if response.status_code != 200:
            return _fail(response)
        for line in response.json()["lines"]:
            print(line)
        return EXIT_OK
    for line in _resolve_config(args).show_lines():
        print(line)
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except _INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except MigresError as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_RUN_FAILURE


if __name__ == "__main__":
    sys.exit(main())
