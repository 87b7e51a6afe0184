"""Datasets, answer metrics, baselines, and evaluation reports.

Sub-sampling is seeded by ranking instance ids under
sha256("<seed>:<id>"), which is stable across platforms and runs.
"""
from __future__ import annotations

import hashlib
import json
import logging
import re
import string
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

from .clients import ChatMessage, ChatRequest, LABEL_ENTAILMENT
from .corpus import Passage, tokenize
from .errors import DatasetError
from .filtering import assemble_knowledge, sentence_filter
from .jsonextract import parse_json_object
from .pipeline import (
    STATUS_ANSWERED,
    MainDecision,
    PipelineResult,
    RunMemory,
    run_pipeline,
)
from .prompts import Templates, format_passages
from .transcript import KIND_RETRIEVE, Transcript, digest

log = logging.getLogger(__name__)

BASELINE_MODES = ("vanilla", "vanilla_s", "summ", "snippet", "rerank_n4", "migres")

RERANK_N4_CANDIDATES = 4
RERANK_N4_TEMPERATURE = 0.7

_ARTICLE_RE = re.compile(r"\b(a|an|the)\b")
_PUNCT_TABLE = str.maketrans("", "", string.punctuation)


@dataclass(frozen=True)
class GoldEvidence:
    sub_question: str
    sub_answer: str
    doc_ids: tuple[str, ...] = ()


@dataclass(frozen=True)
class QaInstance:
    id: str
    question: str
    answers: tuple[str, ...]
    gold_evidence: tuple[GoldEvidence, ...] | None = None

    def __post_init__(self):
        if not self.answers:
            raise DatasetError(f"instance {self.id!r} has no answers")


@dataclass
class EvalRecord:
    instance_id: str
    prediction: str
    em: int
    iterations: int
    api_calls: int
    passages_fed: int
    knowledge_tokens: int
    status: str
    acc_judge: bool | None = None
    error: str | None = None

    def to_dict(self) -> dict:
        out = {
            "instance_id": self.instance_id,
            "prediction": self.prediction,
            "em": self.em,
            "iterations": self.iterations,
            "api_calls": self.api_calls,
            "passages_fed": self.passages_fed,
            "knowledge_tokens": self.knowledge_tokens,
            "status": self.status,
        }
        if self.acc_judge is not None:
            out["acc_judge"] = self.acc_judge
        if self.error is not None:
            out["error"] = self.error
        return out


@dataclass
class Report:
    records: list[EvalRecord] = field(default_factory=list)

    def _scored(self) -> list[EvalRecord]:
        return [r for r in self.records if r.status != "aborted"]

    def summary(self) -> dict:
        scored = self._scored()
        n = len(scored)

        def mean(values):
            return sum(values) / n if n else 0.0

        total_iters = sum(r.iterations for r in scored)
        summary = {
            "n_instances": len(self.records),
            "n_scored": n,
            "n_aborted": len(self.records) - n,
            "em": mean([r.em for r in scored]),
            "mean_iterations": mean([r.iterations for r in scored]),
            "mean_api_calls": mean([r.api_calls for r in scored]),
            "mean_passages": mean([r.passages_fed for r in scored]),
            "passages_per_iteration": (
                sum(r.passages_fed for r in scored) / total_iters if total_iters else 0.0
            ),
            "mean_knowledge_tokens": mean([r.knowledge_tokens for r in scored]),
        }
        judged = [r for r in scored if r.acc_judge is not None]
        if judged:
            summary["acc_judge"] = sum(1 for r in judged if r.acc_judge) / len(judged)
        return summary

    def to_dict(self) -> dict:
        return {"summary": self.summary(), "records": [r.to_dict() for r in self.records]}

    def to_tsv(self) -> str:
        """Flat summary row plus one row per instance."""
        summary = self.summary()
        keys = sorted(summary)
        lines = ["\t".join(keys), "\t".join(_fmt(summary[k]) for k in keys), ""]
        cols = ("instance_id", "em", "iterations", "api_calls", "passages_fed",
                "knowledge_tokens", "status", "prediction")
        lines.append("\t".join(cols))
        for r in self.records:
            row = r.to_dict()
            lines.append("\t".join(_fmt(row.get(c, "")) for c in cols))
        return "\n".join(lines) + "\n"


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.4f}"
    return str(value)


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


def normalize_answer(text: str) -> str:
    """Lowercase, drop punctuation and articles, collapse whitespace."""
    text = text.lower().translate(_PUNCT_TABLE)
    text = _ARTICLE_RE.sub(" ", text)
    return " ".join(text.split())


def exact_match(prediction: str, answers) -> int:
    normalized = normalize_answer(prediction)
    return int(any(normalized == normalize_answer(a) for a in answers))


def judge_correct(question, prediction, gold, llm, templates=None, transcript=None) -> bool:
    """LLM-judged correctness: reply must start with "yes"."""
    templates = templates or Templates()
    prompt = templates.render(
        "judge", QUESTION=question, PREDICTION=prediction, ANSWER=gold
    )
    response = llm.chat(ChatRequest([ChatMessage("user", prompt)]), transcript)
    reply = response.text.strip().lower()
    if reply.startswith("yes"):
        return True
    if not reply.startswith("no"):
        log.warning("judge reply neither yes nor no: %r", response.text[:80])
    return False


def extraction_metrics(items, instance: QaInstance) -> dict:
    """Precision/recall of extracted statements against gold sub-answers.

    An item is correct iff its normalized statement contains any normalized
    gold sub-answer; a gold sub-answer is covered iff any item contains it.
    """
    if instance.gold_evidence is None:
        raise DatasetError(f"instance {instance.id!r} has no gold_evidence")
    gold = [normalize_answer(e.sub_answer) for e in instance.gold_evidence]
    statements = [normalize_answer(item.statement) for item in items]

    correct = sum(1 for s in statements if any(g and g in s for g in gold))
    covered = sum(1 for g in gold if g and any(g in s for s in statements))

    if statements:
        precision = correct / len(statements)
        degenerate = False
    else:
        # No extractions: perfect when nothing was there to extract,
        # otherwise a flagged zero rather than a division error.
        precision = 1.0 if not gold else 0.0
        degenerate = bool(gold)
    recall = covered / len(gold) if gold else 1.0
    return {"precision": precision, "recall": recall, "degenerate_precision": degenerate}


# ---------------------------------------------------------------------------
# Baselines
# ---------------------------------------------------------------------------


def _top_k(question, cfg, clients, index, transcript):
    """Shared single-shot front end: retrieve, rerank, keep the top k.

    Unlike the iterative filter there is no threshold — the k best ranked
    passages are fed regardless of score.
    """
    hits = index.retrieve(question, cfg.retrieve_n)
    transcript.record(
        KIND_RETRIEVE,
        digest({"query": question, "n": cfg.retrieve_n}),
        digest({"doc_ids": [p.doc_id for p in hits]}),
    )
    if not hits:
        return []
    scores = clients.rerank.scores(question, [p.text for p in hits], transcript)
    ranked = sorted(
        (replace(p, relevance=s) for p, s in zip(hits, scores)),
        key=lambda p: (-p.relevance, p.doc_id),
    )
    return ranked[: cfg.filter.max_passages]


def _single_answer(prompt, clients, transcript, temperature=0.0):
    response = clients.chat.chat(
        ChatRequest([ChatMessage("user", prompt)], temperature=temperature), transcript
    )
    return response.text.strip()


def run_baseline(mode, question, cfg, clients, index) -> PipelineResult:
    """Single-shot comparison pipelines sharing the retrieval front end."""
    if mode not in BASELINE_MODES:
        raise DatasetError(f"unknown baseline mode {mode!r}")
    if mode == "migres":
        return run_pipeline(question, cfg, clients, index)

    templates = cfg.templates or Templates()
    transcript = Transcript(deterministic=cfg.deterministic)
    memory = RunMemory(iteration=1)
    top = _top_k(question, cfg, clients, index, transcript)
    knowledge_tokens = 0

    if mode == "vanilla_s":
        fragments = [
            sentence_filter(question, p, cfg.filter, clients.rerank, transcript)
            for p in top
        ]
        knowledge = assemble_knowledge(fragments)
        fed = knowledge.fed_passages()
    elif mode in ("summ", "snippet"):
        fed = []
        if top:
            template = "summarize" if mode == "summ" else "snippet"
            condensed = _single_answer(
                templates.render(template, QUESTION=question, PASSAGES=format_passages(top)),
                clients,
                transcript,
            )
            if condensed and not condensed.lower().startswith("irrelevant"):
                fed = [
                    Passage(
                        doc_id=f"{mode}:{digest({'q': question})[:12]}",
                        title="Summary" if mode == "summ" else "Snippets",
                        text=condensed,
                        relevance=max(p.relevance for p in top),
                    )
                ]
    else:
        fed = list(top)

    memory.seen_passage_ids.update(p.doc_id for p in top)
    memory.seen_passage_ids.update(p.doc_id for p in fed)
    knowledge_tokens = sum(len(tokenize(p.text)) for p in fed)
    passages_block = format_passages(fed) if fed else "None"

    if mode == "rerank_n4":
        answer = _rerank_n4_answer(question, fed, cfg, clients, templates, transcript)
    else:
        answer = _single_answer(
            templates.render("baseline_answer", QUESTION=question, PASSAGES=passages_block),
            clients,
            transcript,
        )

    decision = MainDecision(STATUS_ANSWERED, answer=answer)
    transcript.record_decision(1, len(fed), STATUS_ANSWERED, [p.doc_id for p in fed])
    return PipelineResult(
        final_answer=answer,
        status="answered",
        forced=False,
        iterations=1,
        decision_history=[decision],
        memory=memory,
        transcript=transcript,
        knowledge_tokens=knowledge_tokens,
    )


def _rerank_n4_answer(question, fed, cfg, clients, templates, transcript):
    """Sample four cited answers, keep the one with the best citation recall.

    A candidate's citation recall is 1.0 when its cited passages, taken
    together, entail its answer, else 0.0; unparseable candidates score 0.
    Ties keep the earliest candidate.
    """
    prompt = templates.render(
        "baseline_cited_answer",
        QUESTION=question,
        PASSAGES=format_passages(fed) if fed else "None",
    )
    best_answer = ""
    best_recall = -1.0
    for _ in range(RERANK_N4_CANDIDATES):
        text = _single_answer(prompt, clients, transcript, temperature=RERANK_N4_TEMPERATURE)
        obj = parse_json_object(text)
        answer = str(obj.get("answer", "")).strip() if obj else text
        recall = 0.0
        citations = obj.get("citations") if obj else None
        if answer and isinstance(citations, list) and citations:
            try:
                indices = [int(c) for c in citations]
            except (TypeError, ValueError):
                indices = []
            if indices and all(0 <= c < len(fed) for c in indices):
                premise = "\n".join(
                    f"(Title: {fed[c].title}) {fed[c].text}" for c in indices
                )
                verdict = clients.nli.entails(premise, answer, transcript)
                recall = 1.0 if verdict.label == LABEL_ENTAILMENT else 0.0
        if recall > best_recall:
            best_recall = recall
            best_answer = answer
    return best_answer


# ---------------------------------------------------------------------------
# Datasets and evaluation
# ---------------------------------------------------------------------------


def load_dataset_jsonl(path: str | Path) -> list[QaInstance]:
    """JSON-lines: {"id","question","answers":[...],"gold_evidence":[...]?}"""
    instances = []
    seen_ids = set()
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise DatasetError(f"cannot read dataset {path}: {exc}") from exc
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DatasetError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
        try:
            evidence = obj.get("gold_evidence")
            gold = (
                tuple(
                    GoldEvidence(
                        sub_question=str(e["sub_question"]),
                        sub_answer=str(e["sub_answer"]),
                        doc_ids=tuple(e.get("doc_ids", ())),
                    )
                    for e in evidence
                )
                if evidence is not None
                else None
            )
            instance = QaInstance(
                id=str(obj["id"]),
                question=str(obj["question"]),
                answers=tuple(str(a) for a in obj["answers"]),
                gold_evidence=gold,
            )
        except (KeyError, TypeError) as exc:
            raise DatasetError(f"{path}:{lineno}: bad instance: {exc}") from exc
        if instance.id in seen_ids:
            raise DatasetError(f"{path}:{lineno}: duplicate instance id {instance.id!r}")
        seen_ids.add(instance.id)
        instances.append(instance)
    if not instances:
        raise DatasetError(f"dataset {path} is empty")
    return instances


def subsample(instances, samples: int | None, seed: int):
    """Keep the `samples` instances ranked lowest under sha256(seed:id)."""
    if samples is None or samples >= len(instances):
        return list(instances)

    def rank(instance):
        return hashlib.sha256(f"{seed}:{instance.id}".encode("utf-8")).hexdigest()

    chosen = {i.id for i in sorted(instances, key=rank)[:samples]}
    return [i for i in instances if i.id in chosen]


def evaluate(
    instances,
    runner,
    samples: int | None = None,
    seed: int = 0,
    parallel: int = 1,
    judge=None,
    judge_templates=None,
) -> Report:
    """Run `runner` over a (sub-sampled) dataset and fold the records.

    `runner(instance) -> PipelineResult`. Aborted runs are recorded with
    their error and excluded from the summary means. With `judge` set,
    each prediction is also scored by the LLM judge.
    """
    chosen = subsample(instances, samples, seed)

    def score(instance: QaInstance) -> EvalRecord:
        result = runner(instance)
        record = EvalRecord(
            instance_id=instance.id,
            prediction=result.final_answer,
            em=exact_match(result.final_answer, instance.answers) if result.final_answer else 0,
            iterations=result.iterations,
            api_calls=result.api_calls,
            passages_fed=result.passages_fed,
            knowledge_tokens=result.knowledge_tokens,
            status=result.status,
            error=result.error,
        )
        if judge is not None and record.status != "aborted":
            record.acc_judge = judge_correct(
                instance.question,
                result.final_answer,
                "; ".join(instance.answers),
                judge,
                judge_templates,
            )
        return record

    if parallel > 1:
        with ThreadPoolExecutor(max_workers=parallel) as pool:
            records = list(pool.map(score, chosen))
    else:
        records = [score(i) for i in chosen]
    records.sort(key=lambda r: r.instance_id)
    return Report(records=records)
