"""Rule-based sentence boundary detection.

A boundary is a run of terminal punctuation (. ! ?), optionally followed by
closing quotes or brackets, then whitespace, then a character that looks
like a sentence opener (uppercase letter, digit, or opening quote/bracket).
A single period is guarded against a fixed list of English abbreviations.
Everything else (decimals, lowercase continuations) never splits because
the opener test fails. Deterministic by construction; no external lexical
resources.
"""
from __future__ import annotations

import re

TERMINALS = ".!?"
_CLOSERS = "\"')”’]"
_OPEN_QUOTES = "\"'“‘(["

# Lowercased, trailing period stripped. Multi-dot abbreviations keep their
# internal periods ("e.g", "u.s").
ABBREVIATIONS = frozenset(
    """
    mr mrs ms dr prof rev fr gen sen rep col capt sgt lt gov pres hon
    st mt ft no nos fig figs vol vols pp approx ca cf al eg ie etc vs
    e.g i.e u.s u.k u.s.a a.m p.m d.c ph.d b.c a.d
    inc ltd co corp dept univ assn bros est
    jan feb mar apr jun jul aug sep sept oct nov dec
    mon tue tues wed thu thur thurs fri sat sun
    """.split()
)

_WORD_BEFORE_RE = re.compile(r"[A-Za-z.]+$")


def _is_abbreviation(text: str, dot_index: int) -> bool:
    """True when the period at dot_index ends a listed abbreviation."""
    word = _WORD_BEFORE_RE.search(text[:dot_index])
    if not word:
        return False
    token = word.group(0).rstrip(".")
    if not token:
        return False
    return token.lower() in ABBREVIATIONS


def split_sentences(text: str) -> list[str]:
    """Split text into sentences; whitespace-only input yields [].

    Concatenating the output, modulo inter-sentence whitespace, reconstructs
    the input. Text without any boundary comes back as a single sentence.
    """
    if not text or not text.strip():
        return []

    boundaries = []
    i = 0
    length = len(text)
    while i < length:
        if text[i] not in TERMINALS:
            i += 1
            continue
        run_start = i
        while i < length and text[i] in TERMINALS:
            i += 1
        end = i
        while end < length and text[end] in _CLOSERS:
            end += 1
        ws = end
        while ws < length and text[ws].isspace():
            ws += 1
        if ws == end or ws >= length:
            continue  # no whitespace after, or end of text
        opener = text[ws]
        if not (opener.isupper() or opener.isdigit() or opener in _OPEN_QUOTES):
            continue
        is_single_period = (i - run_start == 1) and text[run_start] == "."
        if is_single_period and _is_abbreviation(text, run_start):
            continue
        boundaries.append(end)

    sentences = []
    start = 0
    for cut in boundaries:
        piece = text[start:cut].strip()
        if piece:
            sentences.append(piece)
        start = cut
    tail = text[start:].strip()
    if tail:
        sentences.append(tail)
    return sentences
