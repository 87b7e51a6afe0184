"""Knowledge filter: passage thresholding, sentence-level filtering, memory exclusion.

All functions are pure over their inputs plus a scorer client. Relevance
comparisons against the threshold are inclusive (a score equal to the
threshold survives).
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

from .corpus import Passage, tokenize
from .errors import ConfigError
from .sentences import split_sentences

__all__ = [
    "FilterConfig",
    "PassageKnowledge",
    "FilteredKnowledge",
    "filter_passages",
    "sentence_filter",
    "memory_filter",
    "assemble_knowledge",
    "split_sentences",
]


@dataclass(frozen=True)
class FilterConfig:
    """Relevance threshold and passage budget for the knowledge filter."""

    relevance_threshold: float
    sentence_filter_enabled: bool = True
    max_passages: int = 5

    def __post_init__(self):
        if self.max_passages < 1:
            raise ConfigError(f"max_passages must be >= 1, got {self.max_passages}")


@dataclass
class PassageKnowledge:
    """What survived sentence-level filtering for one passage.

    When the retention rule fires, ``kept`` is the singleton full passage
    text and ``retained_whole`` is true.
    """

    passage: Passage
    kept: list[str]
    retained_whole: bool = False

    @property
    def empty(self) -> bool:
        return not self.kept

    def kept_text(self) -> str:
        return " ".join(self.kept)


@dataclass
class FilteredKnowledge:
    """Post-filter knowledge: surviving passages and their kept sentences."""

    passages: list[Passage] = field(default_factory=list)
    kept_sentences: dict[str, list[str]] = field(default_factory=dict)
    token_count: int = 0

    @property
    def empty(self) -> bool:
        return not self.passages

    def fed_passages(self) -> list[Passage]:
        """Passages with text replaced by what the filter kept.

        This is the exact material fed downstream: prompt passages and NLI
        premises are built from it.
        """
        return [
            replace(p, text=" ".join(self.kept_sentences[p.doc_id]))
            for p in self.passages
        ]


def filter_passages(query, passages, cfg, scorer, transcript=None):
    """Keep passages whose reranker relevance passes the threshold.

    Survivors carry the reranker score as their relevance, sorted by
    relevance descending (ties by doc_id ascending), truncated to
    cfg.max_passages.
    """
    if not passages:
        return []
    scores = scorer.scores(query, [p.text for p in passages], transcript)
    survivors = [
        replace(p, relevance=s)
        for p, s in zip(passages, scores)
        if s >= cfg.relevance_threshold
    ]
    survivors.sort(key=lambda p: (-p.relevance, p.doc_id))
    return survivors[: cfg.max_passages]


def sentence_filter(query, passage, cfg, scorer, transcript=None) -> PassageKnowledge:
    """Filter one already-admitted passage at sentence granularity.

    Sentences scoring at or above the threshold are kept in source order.
    If the passage-level relevance strictly exceeds every sentence score,
    the whole passage is preserved verbatim instead. With sentence
    filtering disabled the passage passes through untouched.
    """
    if not cfg.sentence_filter_enabled:
        return PassageKnowledge(passage, [passage.text], retained_whole=True)
    sentences = split_sentences(passage.text)
    if not sentences:
        return PassageKnowledge(passage, [])
    scores = scorer.scores(query, sentences, transcript)
    if passage.relevance > max(scores):
        return PassageKnowledge(passage, [passage.text], retained_whole=True)
    kept = [s for s, sc in zip(sentences, scores) if sc >= cfg.relevance_threshold]
    return PassageKnowledge(passage, kept)


def memory_filter(passages, memory):
    """Drop passages already fed downstream or known to be hard negatives."""
    excluded = memory.seen_passage_ids | memory.hard_negative_ids
    return [p for p in passages if p.doc_id not in excluded]


def assemble_knowledge(fragments) -> FilteredKnowledge:
    """Combine per-passage fragments, dropping the empty ones."""
    knowledge = FilteredKnowledge()
    for frag in fragments:
        if frag.empty:
            continue
        knowledge.passages.append(frag.passage)
        knowledge.kept_sentences[frag.passage.doc_id] = list(frag.kept)
        knowledge.token_count += len(tokenize(frag.kept_text()))
    return knowledge
