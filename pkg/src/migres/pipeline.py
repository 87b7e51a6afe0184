"""The iterative retrieve-extract-solve loop.

One run is a single logical thread: decide whether the question is
answerable from what is known; if not, turn the stated information gap into
at most three new single-hop queries, retrieve and filter knowledge, extract
citation-backed statements, verify them by entailment, and loop. Runs for
different questions are independent and share only the immutable index and
the clients.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

from .clients import (
    ChatMessage,
    ChatRequest,
    LABEL_ENTAILMENT,
)
from .corpus import ORIGIN_LLM, Passage, tokenize
from .errors import ConfigError, MigresError, ProtocolError
from .filtering import (
    FilterConfig,
    FilteredKnowledge,
    PassageKnowledge,
    assemble_knowledge,
    filter_passages,
    memory_filter,
    sentence_filter,
)
from .jsonextract import parse_json_object
from .prompts import Templates, format_information, format_passages, format_queries
from .transcript import KIND_RETRIEVE, Transcript, digest

log = logging.getLogger(__name__)

STATUS_ANSWERED = "answered"
STATUS_UNANSWERABLE = "unanswerable"

RUN_ANSWERED = "answered"
RUN_FORCED = "forced"
RUN_ABORTED = "aborted"

COMPRESSION_MODES = ("sentence", "none", "summ", "snippet")

MAX_NEW_QUERIES = 3

REPAIR_INSTRUCTION = "Reply with valid JSON only."

# Replies from knowledge prompting that signal the model has nothing to add.
REFUSAL_PATTERNS = ("i don't know", "i do not know", "cannot provide")


def normalize_query(query: str) -> str:
    """Lowercase, strip punctuation, collapse whitespace."""
    return " ".join(tokenize(query))


@dataclass
class MainDecision:
    status: str
    answer: str | None = None
    explanation: str | None = None
    missing_information: str | None = None

    def __post_init__(self):
        if self.status == STATUS_ANSWERED and self.answer is None:
            raise ProtocolError("answered decision needs an answer")
        if self.status == STATUS_UNANSWERABLE and not self.missing_information:
            raise ProtocolError("unanswerable decision needs missing_information")

    def to_dict(self) -> dict:
        out = {"status": self.status}
        for key in ("answer", "explanation", "missing_information"):
            value = getattr(self, key)
            if value is not None:
                out[key] = value
        return out


@dataclass
class KnowledgeItem:
    statement: str
    citations: list[int]
    source_ids: list[str]
    entailed: bool = False
    unverified: bool = False

    def to_dict(self) -> dict:
        return {
            "statement": self.statement,
            "citations": list(self.citations),
            "source_ids": list(self.source_ids),
            "entailed": self.entailed,
            "unverified": self.unverified,
        }


@dataclass
class RunMemory:
    asked_queries: set[str] = field(default_factory=set)
    seen_passage_ids: set[str] = field(default_factory=set)
    hard_negative_ids: set[str] = field(default_factory=set)
    known_info: list[KnowledgeItem] = field(default_factory=list)
    iteration: int = 0

    def to_dict(self) -> dict:
        return {
            "asked_queries": sorted(self.asked_queries),
            "seen_passage_ids": sorted(self.seen_passage_ids),
            "hard_negative_ids": sorted(self.hard_negative_ids),
            "known_info": [item.to_dict() for item in self.known_info],
            "iteration": self.iteration,
        }


@dataclass
class PipelineConfig:
    max_iterations: int = 5
    filter: FilterConfig = field(default_factory=lambda: FilterConfig(3.0))
    retrieve_n: int = 50
    knowledge_prompt_enabled: bool = True
    nli_verify_enabled: bool = True
    compression: str = "sentence"
    deterministic: bool = False
    templates: Templates | None = None

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ConfigError(f"max_iterations must be >= 1, got {self.max_iterations}")
        if self.retrieve_n < 1:
            raise ConfigError(f"retrieve_n must be >= 1, got {self.retrieve_n}")
        if self.compression not in COMPRESSION_MODES:
            raise ConfigError(
                f"compression must be one of {COMPRESSION_MODES}, got {self.compression!r}"
            )


@dataclass
class PipelineResult:
    final_answer: str
    status: str
    forced: bool
    iterations: int
    decision_history: list[MainDecision]
    memory: RunMemory
    transcript: Transcript
    knowledge_tokens: int = 0
    error: str | None = None

    @property
    def api_calls(self) -> int:
        return self.transcript.api_calls

    @property
    def passages_fed(self) -> int:
        return self.transcript.passages_fed

    def to_dict(self) -> dict:
        out = {
            "final_answer": self.final_answer,
            "status": self.status,
            "forced": self.forced,
            "iterations": self.iterations,
            "api_calls": self.api_calls,
            "passages_fed": self.passages_fed,
            "knowledge_tokens": self.knowledge_tokens,
            "decision_history": [d.to_dict() for d in self.decision_history],
            "memory": self.memory.to_dict(),
            "transcript": self.transcript.to_dict(),
        }
        if self.error is not None:
            out["error"] = self.error
        return out


# ---------------------------------------------------------------------------
# LLM steps
# ---------------------------------------------------------------------------


def _chat_json(llm, prompt: str, transcript) -> dict | None:
    """One chat call, parsed as JSON; on garbage, one repair retry."""
    first = llm.chat(ChatRequest([ChatMessage("user", prompt)]), transcript)
    obj = parse_json_object(first.text)
    if obj is not None:
        return obj
    retry = llm.chat(
        ChatRequest(
            [
                ChatMessage("user", prompt),
                ChatMessage("assistant", first.text),
                ChatMessage("user", REPAIR_INSTRUCTION),
            ]
        ),
        transcript,
    )
    return parse_json_object(retry.text)


def main_decide(question, known_info, llm, templates, transcript=None) -> MainDecision:
    """Ask whether the question is answerable from the known information."""
    prompt = templates.render(
        "decide", QUESTION=question, INFORMATION=format_information(known_info)
    )
    obj = _chat_json(llm, prompt, transcript)
    if obj is None or ("answer" not in obj and "missing_information" not in obj):
        log.warning("main decision unparseable; falling back to unanswerable")
        return MainDecision(STATUS_UNANSWERABLE, missing_information=question)
    answer = obj.get("answer")
    answer = str(answer).strip() if answer is not None else ""
    if answer and answer.lower() != "unanswerable":
        explanation = obj.get("explanation")
        return MainDecision(
            STATUS_ANSWERED,
            answer=answer,
            explanation=str(explanation) if explanation is not None else None,
        )
    missing = obj.get("missing_information")
    missing = str(missing).strip() if missing is not None else ""
    return MainDecision(STATUS_UNANSWERABLE, missing_information=missing or question)


def generate_queries(question, missing_information, memory, llm, templates, transcript=None):
    """Turn the information gap into at most three new, unseen queries.

    Queries equal (after normalization) to anything already asked, or to an
    earlier query in the same batch, are dropped; survivors are capped at
    three and recorded in memory.
    """
    prompt = templates.render(
        "queries",
        QUESTION=question,
        PREVIOUS_QUERIES=format_queries(sorted(memory.asked_queries)),
        INFORMATION=format_information(memory.known_info),
        MISSING_INFORMATION=missing_information,
    )
    obj = _chat_json(llm, prompt, transcript)
    raw = obj.get("queries") if obj else None
    if not isinstance(raw, list):
        log.warning("query generation unparseable; returning no queries")
        return []
    kept = []
    for entry in raw:
        query = str(entry).strip()
        norm = normalize_query(query)
        if not norm or norm in memory.asked_queries:
            continue
        memory.asked_queries.add(norm)
        kept.append(query)
        if len(kept) == MAX_NEW_QUERIES:
            break
    return kept


def extract_info(question, queries, knowledge, llm, templates, transcript=None):
    """Distill cited statements from the filtered knowledge.

    Items citing any passage index outside the fed list, and items with no
    citations at all, are dropped.
    """
    fed = knowledge.fed_passages()
    question_block = question
    sub_queries = [q for q in queries if q != question]
    if sub_queries:
        question_block += "\n" + "\n".join(
            f"Sub-question {i}: {q}" for i, q in enumerate(sub_queries, start=1)
        )
    prompt = templates.render(
        "extract", QUESTION=question_block, PASSAGES=format_passages(fed)
    )
    obj = _chat_json(llm, prompt, transcript)
    raw = obj.get("useful_information") if obj else None
    if not isinstance(raw, list):
        log.warning("extraction output unparseable; returning no items")
        return []
    items = []
    for entry in raw:
        if not isinstance(entry, dict):
            continue
        statement = str(entry.get("info", "")).strip()
        cited = entry.get("support_passages")
        if not statement or not isinstance(cited, list) or not cited:
            continue
        try:
            citations = [int(c) for c in cited]
        except (TypeError, ValueError):
            log.warning("dropping item with non-integer citations: %r", statement)
            continue
        if any(c < 0 or c >= len(fed) for c in citations):
            log.warning("dropping item citing out-of-range passage: %r", statement)
            continue
        items.append(
            KnowledgeItem(
                statement=statement,
                citations=citations,
                source_ids=[fed[c].doc_id for c in citations],
            )
        )
    return items


def verify_citations(items, fed_passages, nli, transcript=None, enabled=True):
    """Keep only statements entailed by their cited passages.

    The premise is the cited passages rendered "(Title: t) text" joined by
    newlines; the hypothesis is the statement. An NLI transport failure
    keeps the item (flagged unverified) rather than discarding evidence.
    """
    if not enabled:
        return [replace(item, entailed=True) for item in items]
    kept = []
    for item in items:
        premise = "\n".join(
            f"(Title: {fed_passages[c].title}) {fed_passages[c].text}"
            for c in item.citations
        )
        try:
            verdict = nli.entails(premise, item.statement, transcript)
        except MigresError as exc:
            log.warning("NLI verification failed (%s); keeping item unverified", exc)
            kept.append(replace(item, entailed=True, unverified=True))
            continue
        if verdict.label == LABEL_ENTAILMENT:
            kept.append(replace(item, entailed=True))
    return kept


def knowledge_prompt(queries, llm, templates, run_id, iteration, transcript=None):
    """Fall back to the model's own knowledge when retrieval came up empty."""
    prompt = templates.render("knowledge", QUESTION="; ".join(queries))
    response = llm.chat(ChatRequest([ChatMessage("user", prompt)]), transcript)
    text = response.text.strip()
    lowered = text.lower()
    if not text or any(pattern in lowered for pattern in REFUSAL_PATTERNS):
        return None
    return Passage(
        doc_id=f"llm:{run_id}:{iteration}",
        title="LLM knowledge",
        text=text,
        relevance=0.0,
        origin=ORIGIN_LLM,
    )


# ---------------------------------------------------------------------------
# The loop
# ---------------------------------------------------------------------------


def _retrieve_merged(index, queries, n, transcript):
    """Union of per-query retrievals, deduplicated by doc_id keeping the
    highest relevance; first-seen order otherwise."""
    merged: dict[str, Passage] = {}
    for query in queries:
        hits = index.retrieve(query, n)
        if transcript is not None:
            transcript.record(
                KIND_RETRIEVE,
                digest({"query": query, "n": n}),
                digest({"doc_ids": [p.doc_id for p in hits]}),
            )
        for hit in hits:
            held = merged.get(hit.doc_id)
            if held is None:
                merged[hit.doc_id] = hit
            elif hit.relevance > held.relevance:
                merged[hit.doc_id] = hit
    return list(merged.values())


def _compress(question, rerank_query, survivors, cfg, clients, transcript):
    """Step (1c): reduce admitted passages to the text actually fed onward.

    Returns (knowledge, consumed_ids) where consumed_ids are passages
    absorbed into condensed text (summ/snippet) — spent even though their
    own text is not fed.
    """
    mode = cfg.compression
    if mode == "sentence" and not cfg.filter.sentence_filter_enabled:
        mode = "none"
    if mode == "sentence":
        fragments = [
            sentence_filter(rerank_query, p, cfg.filter, clients.rerank, transcript)
            for p in survivors
        ]
        return assemble_knowledge(fragments), []
    if mode == "none":
        knowledge = assemble_knowledge(
            PassageKnowledge(p, [p.text], retained_whole=True) for p in survivors
        )
        return knowledge, []
    # summ / snippet: one chat call condenses the whole batch.
    if not survivors:
        return FilteredKnowledge(), []
    templates = cfg.templates or Templates()
    template = "summarize" if mode == "summ" else "snippet"
    response = clients.chat.chat(
        ChatRequest(
            [
                ChatMessage(
                    "user",
                    templates.render(
                        template, QUESTION=question, PASSAGES=format_passages(survivors)
                    ),
                )
            ]
        ),
        transcript,
    )
    consumed = [p.doc_id for p in survivors]
    text = response.text.strip()
    if not text or text.lower().startswith("irrelevant"):
        return FilteredKnowledge(), consumed
    title = "Summary" if mode == "summ" else "Snippets"
    condensed = Passage(
        doc_id=f"{mode}:{digest({'texts': consumed})[:12]}",
        title=title,
        text=text,
        relevance=max(p.relevance for p in survivors),
    )
    knowledge = FilteredKnowledge(
        passages=[condensed],
        kept_sentences={condensed.doc_id: [text]},
        token_count=len(tokenize(text)),
    )
    return knowledge, consumed


def run_pipeline(question, cfg, clients, index) -> PipelineResult:
    """Run the full loop for one question."""
    templates = cfg.templates or Templates()
    transcript = Transcript(deterministic=cfg.deterministic)
    memory = RunMemory()
    decision_history: list[MainDecision] = []
    run_id = digest({"question": question})[:12]
    knowledge_tokens = 0
    final_answer = ""
    status = None
    forced = False

    queries = [question]
    memory.asked_queries.add(normalize_query(question))

    try:
        while memory.iteration < cfg.max_iterations:
            memory.iteration += 1
            iteration = memory.iteration

            candidates = _retrieve_merged(index, queries, cfg.retrieve_n, transcript)
            candidates = memory_filter(candidates, memory)
            rerank_query = "; ".join(queries)
            survivors = filter_passages(
                rerank_query, candidates, cfg.filter, clients.rerank, transcript
            )
            knowledge, consumed_ids = _compress(
                question, rerank_query, survivors, cfg, clients, transcript
            )
            memory.seen_passage_ids.update(consumed_ids)

            if knowledge.empty and cfg.knowledge_prompt_enabled:
                generated = knowledge_prompt(
                    queries, clients.chat, templates, run_id, iteration, transcript
                )
                if generated is not None:
                    knowledge = FilteredKnowledge(
                        passages=[generated],
                        kept_sentences={generated.doc_id: [generated.text]},
                        token_count=len(tokenize(generated.text)),
                    )

            fed_count = 0
            fed_ids: list[str] = []
            if not knowledge.empty:
                fed = knowledge.fed_passages()
                fed_count = len(fed)
                fed_ids = [p.doc_id for p in fed]
                knowledge_tokens += knowledge.token_count
                items = extract_info(
                    question, queries, knowledge, clients.chat, templates, transcript
                )
                entailed = verify_citations(
                    items, fed, clients.nli, transcript, enabled=cfg.nli_verify_enabled
                )
                memory.known_info.extend(entailed)
                contributing = {doc_id for item in entailed for doc_id in item.source_ids}
                for passage in fed:
                    memory.seen_passage_ids.add(passage.doc_id)
                    if passage.doc_id not in contributing:
                        memory.hard_negative_ids.add(passage.doc_id)

            decision = main_decide(
                question, memory.known_info, clients.chat, templates, transcript
            )
            decision_history.append(decision)
            transcript.record_decision(iteration, fed_count, decision.status, fed_ids)

            if decision.status == STATUS_ANSWERED:
                final_answer = decision.answer
                status = RUN_ANSWERED
                break

            if memory.iteration == cfg.max_iterations:
                break
            queries = generate_queries(
                question,
                decision.missing_information,
                memory,
                clients.chat,
                templates,
                transcript,
            )
            if not queries:
                log.info("no new queries possible; terminating early")
                break

        if status is None:
            prompt = templates.render(
                "forced_answer",
                QUESTION=question,
                INFORMATION=format_information(memory.known_info),
            )
            response = clients.chat.chat(
                ChatRequest([ChatMessage("user", prompt)]), transcript
            )
            final_answer = response.text.strip()
            status = RUN_FORCED
            forced = True
    except MigresError as exc:
        log.error("pipeline aborted: %s", exc)
        return PipelineResult(
            final_answer="",
            status=RUN_ABORTED,
            forced=False,
            iterations=memory.iteration,
            decision_history=decision_history,
            memory=memory,
            transcript=transcript,
            knowledge_tokens=knowledge_tokens,
            error=str(exc),
        )

    return PipelineResult(
        final_answer=final_answer,
        status=status,
        forced=forced,
        iterations=memory.iteration,
        decision_history=decision_history,
        memory=memory,
        transcript=transcript,
        knowledge_tokens=knowledge_tokens,
    )
