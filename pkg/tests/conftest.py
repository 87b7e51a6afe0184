"""Shared fixtures: corpora, scripted model worlds, script-file helpers.

The "two-hop world" is a hand-built scenario (film -> director -> birth
place) whose stub script drives the full loop to an answer at iteration 2.
The "adversarial world" never answers: every iteration feeds one fresh
passage that yields nothing, exhausting the budget.
"""
from __future__ import annotations

import json

import pytest

from migres.clients import ModelClients, StubChatClient, StubNliClient, StubRerankClient
from migres.corpus import Bm25Index, Document

# ---------------------------------------------------------------------------
# Ten-document corpus with independently derived BM25 expectations
# ---------------------------------------------------------------------------

TEN_DOCS = [
    ("d0", "Northern Lights", "The aurora appears in the northern sky. Solar wind causes the aurora."),
    ("d1", "Solar Wind", "Solar wind is a stream of charged particles from the sun."),
    ("d2", "Aurora Borealis", "Aurora borealis is the northern lights seen near the arctic."),
    ("d3", "Arctic Circle", "The arctic circle marks the southern boundary of the arctic region."),
    ("d4", "Charged Particle", "A charged particle carries an electric charge."),
    ("d5", "Electric Charge", "Electric charge is a property of matter. Charge comes in positive and negative."),
    ("d6", "Magnetosphere", "The magnetosphere deflects most of the solar wind around the planet."),
    ("d7", "Sky Watching", "Sky watching at night reveals stars, planets, and sometimes the aurora."),
    ("d8", "Sun", "The sun is the star at the center of the solar system."),
    ("d9", "Polar Night", "Polar night occurs in the arctic when the sun stays below the horizon."),
]


@pytest.fixture
def ten_docs():
    return [Document(i, t, x) for i, t, x in TEN_DOCS]


@pytest.fixture
def ten_index(ten_docs):
    return Bm25Index.build(ten_docs)


# ---------------------------------------------------------------------------
# Script-file helpers
# ---------------------------------------------------------------------------


def write_script(path, lines) -> str:
    path.write_text("".join(json.dumps(line) + "\n" for line in lines), encoding="utf-8")
    return str(path)


def write_corpus(path, docs) -> str:
    path.write_text(
        "".join(
            json.dumps({"id": d.id, "title": d.title, "text": d.text}) + "\n" for d in docs
        ),
        encoding="utf-8",
    )
    return str(path)


def clients_from_lines(lines) -> ModelClients:
    """In-process stub clients from script-line dicts (fresh replay state)."""
    chat_entries, rerank_table, nli_table = [], {}, {}
    rerank_default, nli_default = None, 0.0
    for line in lines:
        kind = line["kind"]
        if kind == "chat":
            chat_entries.append(dict(line))
        elif kind == "rerank":
            if "default" in line:
                rerank_default = float(line["default"])
            else:
                rerank_table[(line["query"], line["text"])] = float(line["score"])
        elif kind == "nli":
            if "default" in line:
                nli_default = float(line["default"])
            else:
                nli_table[(line["premise"], line["hypothesis"])] = float(line["score"])
    return ModelClients(
        chat=StubChatClient(chat_entries),
        rerank=StubRerankClient(rerank_table, rerank_default),
        nli=StubNliClient(nli_table, nli_default),
    )


# ---------------------------------------------------------------------------
# Two-hop world
# ---------------------------------------------------------------------------

TWOHOP_QUESTION = "Where was the director of Glass Harbor born?"
TWOHOP_Q2 = "Where was Mira Kovats born?"
TWOHOP_GOLD = "Tallinn, Estonia"

TWOHOP_DOCS = [
    ("film", "Glass Harbor",
     "Glass Harbor is a 2011 drama film directed by Mira Kovats. The film won national awards."),
    ("director", "Mira Kovats",
     "Mira Kovats is a film director. Mira Kovats was born in Tallinn, Estonia. "
     "She studied sculpture before cinema."),
    ("seal", "Harbor Seal",
     "The harbor seal is a true seal found along temperate coastlines. It eats fish."),
]

_FILM_S1 = "Glass Harbor is a 2011 drama film directed by Mira Kovats."
_FILM_S2 = "The film won national awards."
_DIR_S1 = "Mira Kovats is a film director."
_DIR_S2 = "Mira Kovats was born in Tallinn, Estonia."
_DIR_S3 = "She studied sculpture before cinema."


def twohop_docs():
    return [Document(i, t, x) for i, t, x in TWOHOP_DOCS]


def twohop_script_lines():
    """Chat turns in call order, rerank/NLI tables for the known trajectory."""
    q, q2 = TWOHOP_QUESTION, TWOHOP_Q2
    film_text = TWOHOP_DOCS[0][2]
    director_text = TWOHOP_DOCS[1][2]
    seal_text = TWOHOP_DOCS[2][2]
    return [
        # Iteration 1: extract from the film passage, decide unanswerable,
        # generate the birth-place query.
        {"kind": "chat", "text": json.dumps({"useful_information": [
            {"info": "Mira Kovats directed Glass Harbor", "support_passages": [0]}]})},
        {"kind": "chat", "text": json.dumps({"answer": "unanswerable",
            "missing_information": "The birthplace of Mira Kovats."})},
        {"kind": "chat", "text": json.dumps({"queries": [q2]})},
        # Iteration 2: extract the birth place, decide answered.
        {"kind": "chat", "text": json.dumps({"useful_information": [
            {"info": "Mira Kovats was born in Tallinn, Estonia", "support_passages": [0]}]})},
        {"kind": "chat", "text": json.dumps({"answer": TWOHOP_GOLD, "missing_information": ""})},
        # Passage-level rerank, iteration 1 (threshold 3.0 admits the film only).
        {"kind": "rerank", "query": q, "text": film_text, "score": 6.0},
        {"kind": "rerank", "query": q, "text": director_text, "score": 2.0},
        {"kind": "rerank", "query": q, "text": seal_text, "score": 1.0},
        # Sentence-level rerank, iteration 1 (keep the directed-by sentence).
        {"kind": "rerank", "query": q, "text": _FILM_S1, "score": 7.0},
        {"kind": "rerank", "query": q, "text": _FILM_S2, "score": 1.0},
        # Iteration 2 scores.
        {"kind": "rerank", "query": q2, "text": director_text, "score": 8.0},
        {"kind": "rerank", "query": q2, "text": _DIR_S1, "score": 2.0},
        {"kind": "rerank", "query": q2, "text": _DIR_S2, "score": 9.0},
        {"kind": "rerank", "query": q2, "text": _DIR_S3, "score": 1.0},
        {"kind": "rerank", "default": 0.0},
        # The iteration-1 statement is a paraphrase, so the containment rule
        # does not fire; entailment is scripted. Iteration 2's statement is
        # verbatim in its premise and needs no entry.
        {"kind": "nli", "premise": f"(Title: Glass Harbor) {_FILM_S1}",
         "hypothesis": "Mira Kovats directed Glass Harbor", "score": 1.0},
    ]


@pytest.fixture
def twohop_index():
    return Bm25Index.build(twohop_docs())


@pytest.fixture
def twohop_clients():
    return clients_from_lines(twohop_script_lines())


# ---------------------------------------------------------------------------
# Adversarial world: never answers, exhausts the budget at T=5
# ---------------------------------------------------------------------------

ADVERSARIAL_QUESTION = "What lies across bridge1?"
ADVERSARIAL_T = 5


def adversarial_docs():
    docs = []
    for i in range(1, ADVERSARIAL_T + 1):
        docs.append(
            Document(
                f"a{i}",
                f"Bridge {i}",
                f"The bridge{i} crossing leads to fact number {i}. "
                f"It also mentions bridge{i + 1} for the next hop.",
            )
        )
    return docs


def adversarial_script_lines():
    """Every iteration feeds one fresh passage that yields nothing useful.

    Each a{i-1} would outscore a{i} on query i if it were ever re-scored —
    the memory filter must exclude it, or the run feeds a doc twice and the
    uniqueness assertions fail.
    """
    docs = {d.id: d for d in adversarial_docs()}
    queries = [ADVERSARIAL_QUESTION] + [
        f"What lies across bridge{i}?" for i in range(2, ADVERSARIAL_T + 1)
    ]
    lines = []
    for i in range(1, ADVERSARIAL_T + 1):
        lines.append({"kind": "chat", "text": json.dumps({"useful_information": []})})
        lines.append({"kind": "chat", "text": json.dumps(
            {"answer": "unanswerable",
             "missing_information": f"What is across bridge{i + 1}."})})
        if i < ADVERSARIAL_T:
            lines.append({"kind": "chat", "text": json.dumps({"queries": [queries[i]]})})
    lines.append({"kind": "chat", "text": "no definitive answer"})
    for i, query in enumerate(queries, start=1):
        lines.append({"kind": "rerank", "query": query,
                      "text": docs[f"a{i}"].text, "score": 5.0})
        if i > 1:
            # The already-fed predecessor scores even higher — a trap that
            # only the memory filter keeps out of the feed.
            lines.append({"kind": "rerank", "query": query,
                          "text": docs[f"a{i - 1}"].text, "score": 9.0})
    lines.append({"kind": "rerank", "default": 0.0})
    return lines


@pytest.fixture
def adversarial_index():
    return Bm25Index.build(adversarial_docs())


@pytest.fixture
def adversarial_clients():
    return clients_from_lines(adversarial_script_lines())


# ---------------------------------------------------------------------------
# Realistic film-synopsis passage (Wikipedia-style prose) used by the
# segmentation and sentence-filtering tests
# ---------------------------------------------------------------------------

FILM_TITLE = "School on Fire"
FILM_SENTENCES = [
    "School on Fire School on Fire is a 1988 Hong Kong action film directed by Ringo Lam.",
    "The film involves a young schoolgirl Chu Yuen Fong (Fennie Yuen) who becomes caught"
    " in a tragic stranglehold of triad activity after she testifies over a triad beating.",
    "When this news reaches the triad leader Brother Smart (Roy Cheung), Yuen Fong must pay"
    " him protection money for what she has done as events begin to escalate.",
    "The film involves a young schoolgirl Chu Yuen Fong (Fennie Yuen) who becomes caught"
    " in a tragic stranglehold of triad activity after she testifies over a",
]
FILM_TEXT = " ".join(FILM_SENTENCES)


# ---------------------------------------------------------------------------
# Acceptance-criterion reporting: each acceptance test appends one PASS/FAIL
# line here; the hook prints them after the run so every criterion gets
# exactly one visible line regardless of output capturing.
# ---------------------------------------------------------------------------

ACCEPTANCE_RESULTS: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_RESULTS:
            terminalreporter.write_line(line)


class RecordingChat:
    """Stub chat that also keeps every request for prompt assertions."""

    def __init__(self, texts):
        self._stub = StubChatClient([{"text": t} for t in texts])
        self.requests = []

    def chat(self, request, transcript=None):
        self.requests.append(request)
        return self._stub.chat(request, transcript)

    def last_prompt(self) -> str:
        return self.requests[-1].messages[-1].content
