"""Pull the first balanced JSON object out of free-form model text.

Zero-shot models routinely wrap their JSON in prose ("Sure! Here is the
answer: {...}"), so plain json.loads on the whole reply is not enough.
"""
from __future__ import annotations

import json


def first_json_object(text: str) -> str | None:
    """Return the first balanced {...} region of text, or None.

    Brace counting respects JSON string literals and escape sequences, so
    braces inside quoted values do not confuse the scan.
    """
    start = text.find("{")
    while start != -1:
        depth = 0
        in_string = False
        escaped = False
        for i in range(start, len(text)):
            ch = text[i]
            if in_string:
                if escaped:
                    escaped = False
                elif ch == "\\":
                    escaped = True
                elif ch == '"':
                    in_string = False
                continue
            if ch == '"':
                in_string = True
            elif ch == "{":
                depth += 1
            elif ch == "}":
                depth -= 1
                if depth == 0:
                    return text[start : i + 1]
        start = text.find("{", start + 1)
    return None


def parse_json_object(text: str) -> dict | None:
    """Parse the first balanced JSON object into a dict; None on failure."""
    region = first_json_object(text)
    if region is None:
        return None
    try:
        obj = json.loads(region)
    except json.JSONDecodeError:
        return None
    return obj if isinstance(obj, dict) else None
