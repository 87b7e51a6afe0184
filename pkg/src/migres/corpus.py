"""Document corpus, deterministic BM25 inverted index, and oracle augmentation.

The index is immutable once built: concurrent retrieval is safe without
locks, and augmentation returns a fresh index instead of mutating.
"""
from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .errors import CorpusError

INDEX_FORMAT = "migres.bm25"
INDEX_VERSION = 1

ORIGIN_RETRIEVED = "retrieved"
ORIGIN_ORACLE = "oracle"
ORIGIN_LLM = "llm_generated"

# Reserved doc_id prefix for knowledge generated by the chat model rather
# than retrieved from the corpus.
LLM_DOC_PREFIX = "llm:"

# Tokens are maximal runs of alphanumeric characters (unicode letters and
# digits, underscore excluded) in the lowercased text. No stemming, no
# stopword removal.
_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


def tokenize(text: str) -> list[str]:
    """Lowercase and split into alphanumeric runs."""
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class Document:
    """One unit of the retrieval corpus."""

    id: str
    title: str
    text: str

    def __post_init__(self):
        if not self.id:
            raise CorpusError("document id must be non-empty")
        if not self.text:
            raise CorpusError(f"document {self.id!r} has empty text")


@dataclass(frozen=True)
class Bm25Params:
    """BM25 parameters; defaults k1=0.9, b=0.4."""

    k1: float = 0.9
    b: float = 0.4

    def __post_init__(self):
        if self.k1 < 0:
            raise CorpusError(f"k1 must be non-negative, got {self.k1}")
        if not 0.0 <= self.b <= 1.0:
            raise CorpusError(f"b must be in [0,1], got {self.b}")


@dataclass
class Passage:
    """A unit of knowledge flowing through the pipeline.

    ``relevance`` is scorer-native: the BM25 score right after retrieval,
    replaced by the reranker score once the knowledge filter has run.
    """

    doc_id: str
    title: str
    text: str
    relevance: float = 0.0
    origin: str = ORIGIN_RETRIEVED

    def __post_init__(self):
        if self.origin == ORIGIN_LLM and not self.doc_id.startswith(LLM_DOC_PREFIX):
            raise CorpusError(
                f"llm_generated passage needs a {LLM_DOC_PREFIX!r}-prefixed id, got {self.doc_id!r}"
            )

    def to_dict(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "title": self.title,
            "text": self.text,
            "relevance": self.relevance,
            "origin": self.origin,
        }


@dataclass
class Bm25Index:
    """Inverted index over title + text with Lucene-style BM25 scoring.

    score(q, d) = sum over query tokens t of
        idf(t) * tf(t,d) * (k1 + 1) / (tf(t,d) + k1 * (1 - b + b * |d| / avgdl))
    with idf(t) = ln(1 + (N - df(t) + 0.5) / (df(t) + 0.5)).

    Repeated query tokens contribute once per occurrence.
    """

    params: Bm25Params
    docs: list[Document]
    doc_lens: list[int]
    postings: dict[str, list[tuple[int, int]]]
    oracle_ids: set[str] = field(default_factory=set)

    @classmethod
    def build(cls, documents: Iterable[Document], params: Bm25Params | None = None) -> "Bm25Index":
        """Build from a stream of documents; rejects duplicates and empty corpora."""
        params = params or Bm25Params()
        docs: list[Document] = []
        seen: set[str] = set()
        for doc in documents:
            if doc.id in seen:
                raise CorpusError(f"duplicate document id: {doc.id!r}")
            seen.add(doc.id)
            docs.append(doc)
        if not docs:
            raise CorpusError("cannot build an index over an empty corpus")

        doc_lens: list[int] = []
        postings: dict[str, list[tuple[int, int]]] = {}
        for ix, doc in enumerate(docs):
            tokens = tokenize(f"{doc.title} {doc.text}")
            doc_lens.append(len(tokens))
            tf: dict[str, int] = {}
            for tok in tokens:
                tf[tok] = tf.get(tok, 0) + 1
            for term, count in tf.items():
                postings.setdefault(term, []).append((ix, count))
        return cls(params=params, docs=docs, doc_lens=doc_lens, postings=postings)

    @property
    def n_docs(self) -> int:
        return len(self.docs)

    @property
    def avgdl(self) -> float:
        return sum(self.doc_lens) / len(self.doc_lens)

    def df(self, term: str) -> int:
        """Document frequency; 0 for unseen terms."""
        return len(self.postings.get(term, ()))

    def stats(self) -> dict:
        return {
            "documents": self.n_docs,
            "terms": len(self.postings),
            "avgdl": self.avgdl,
            "oracle_documents": len(self.oracle_ids),
        }

    def retrieve(self, query: str, n: int = 50) -> list[Passage]:
        """Top-n passages by BM25, score descending, ties by doc_id ascending.

        A query with no known tokens returns an empty list; the pipeline
        treats that as "no knowledge retrieved".
        """
        if n <= 0:
            raise CorpusError(f"retrieval count must be positive, got {n}")
        tokens = tokenize(query)
        if not tokens:
            return []

        k1, b = self.params.k1, self.params.b
        avgdl = self.avgdl
        scores: dict[int, float] = {}
        for term in tokens:
            plist = self.postings.get(term)
            if not plist:
                continue
            df = len(plist)
            idf = math.log(1.0 + (self.n_docs - df + 0.5) / (df + 0.5))
            for ix, tf in plist:
                norm = k1 * (1.0 - b + b * self.doc_lens[ix] / avgdl)
                scores[ix] = scores.get(ix, 0.0) + idf * (tf * (k1 + 1.0)) / (tf + norm)

        order = sorted(scores, key=lambda ix: (-scores[ix], self.docs[ix].id))
        out = []
        for ix in order[:n]:
            doc = self.docs[ix]
            origin = ORIGIN_ORACLE if doc.id in self.oracle_ids else ORIGIN_RETRIEVED
            out.append(Passage(doc.id, doc.title, doc.text, relevance=scores[ix], origin=origin))
        return out

    def augment(self, gold_contexts: Iterable[Document]) -> "Bm25Index":
        """Return a new index over the union with the given gold contexts.

        Id collisions are allowed only when the text is identical (the gold
        copy is dropped); otherwise the collision is rejected by id.
        """
        by_id = {doc.id: doc for doc in self.docs}
        merged = list(self.docs)
        oracle_ids = set(self.oracle_ids)
        for gold in gold_contexts:
            existing = by_id.get(gold.id)
            if existing is not None:
                if existing.text != gold.text:
                    raise CorpusError(f"gold context id collision with differing text: {gold.id!r}")
                continue
            by_id[gold.id] = gold
            merged.append(gold)
            oracle_ids.add(gold.id)
        index = Bm25Index.build(merged, self.params)
        index.oracle_ids = oracle_ids
        return index

    def save(self, path: str | Path) -> None:
        """Persist as a single versioned JSON file, byte-stable for identical input order."""
        payload = {
            "format": INDEX_FORMAT,
            "version": INDEX_VERSION,
            "k1": self.params.k1,
            "b": self.params.b,
            "docs": [{"id": d.id, "title": d.title, "text": d.text} for d in self.docs],
            "doc_lens": self.doc_lens,
            "postings": {term: [list(p) for p in plist] for term, plist in self.postings.items()},
            "oracle_ids": sorted(self.oracle_ids),
        }
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
        Path(path).write_bytes(blob.encode("utf-8"))

    @classmethod
    def load(cls, path: str | Path) -> "Bm25Index":
        try:
            payload = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise CorpusError(f"cannot load index file {path}: {exc}") from exc
        if payload.get("format") != INDEX_FORMAT:
            raise CorpusError(f"{path} is not a {INDEX_FORMAT} index file")
        if payload.get("version") != INDEX_VERSION:
            raise CorpusError(f"unsupported index version {payload.get('version')}")
        docs = [Document(d["id"], d["title"], d["text"]) for d in payload["docs"]]
        postings = {
            term: [(int(ix), int(tf)) for ix, tf in plist]
            for term, plist in payload["postings"].items()
        }
        return cls(
            params=Bm25Params(payload["k1"], payload["b"]),
            docs=docs,
            doc_lens=[int(x) for x in payload["doc_lens"]],
            postings=postings,
            oracle_ids=set(payload.get("oracle_ids", [])),
        )


def load_corpus_jsonl(path: str | Path) -> list[Document]:
    """Read a JSON-lines corpus of {"id", "title", "text"} objects."""
    docs = []
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise CorpusError(f"cannot read corpus file {path}: {exc}") from exc
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorpusError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
        if not isinstance(obj, dict) or "id" not in obj or "text" not in obj:
            raise CorpusError(f"{path}:{lineno}: expected an object with id/title/text")
        docs.append(Document(str(obj["id"]), str(obj.get("title", "")), str(obj["text"])))
    return docs
