"""Prompt templates and their rendering.

Templates are plain text files with {PLACEHOLDER} slots, shipped inside the
package and overridable per-file from a directory (e.g. few-shot variants
that prepend demonstration blocks). Rendering is sequential string
replacement, never str.format — the templates themselves contain JSON
braces.
"""
from __future__ import annotations

from importlib import resources
from pathlib import Path

from .errors import ConfigError

TEMPLATE_NAMES = (
    "decide",
    "extract",
    "queries",
    "knowledge",
    "judge",
    "forced_answer",
    "baseline_answer",
    "baseline_cited_answer",
    "summarize",
    "snippet",
)

_PLACEHOLDERS = (
    "QUESTION",
    "INFORMATION",
    "PASSAGES",
    "MISSING_INFORMATION",
    "PREVIOUS_QUERIES",
    "PREDICTION",
    "ANSWER",
)


class Templates:
    """The template set in use for a run.

    Defaults come from the packaged files; any file of the same name in
    ``override_dir`` shadows its default.
    """

    def __init__(self, override_dir: str | Path | None = None):
        self._cache: dict[str, str] = {}
        self.override_dir = Path(override_dir) if override_dir else None
        if self.override_dir and not self.override_dir.is_dir():
            raise ConfigError(f"template directory not found: {self.override_dir}")

    def get(self, name: str) -> str:
        if name not in TEMPLATE_NAMES:
            raise ConfigError(f"unknown template {name!r}")
        if name not in self._cache:
            self._cache[name] = self._load(name)
        return self._cache[name]

    def _load(self, name: str) -> str:
        if self.override_dir:
            candidate = self.override_dir / f"{name}.txt"
            if candidate.is_file():
                return candidate.read_text(encoding="utf-8")
        ref = resources.files("migres").joinpath("templates", f"{name}.txt")
        return ref.read_text(encoding="utf-8")

    def render(self, name: str, **values: str) -> str:
        """Fill {PLACEHOLDER} slots; unknown placeholder names are an error."""
        text = self.get(name)
        for key, value in values.items():
            if key not in _PLACEHOLDERS:
                raise ConfigError(f"unknown placeholder {key!r} for template {name!r}")
            text = text.replace("{" + key + "}", value)
        return text


def format_passages(passages) -> str:
    """Number passages from 0 in the shape the extraction prompt expects."""
    return "\n".join(
        f"Passage {i}: (Title: {p.title}) {p.text}" for i, p in enumerate(passages)
    )


def format_information(items) -> str:
    """Render known-information statements one per line; 'None' when empty."""
    statements = [getattr(item, "statement", item) for item in items]
    return "\n".join(str(s) for s in statements) if statements else "None"


def format_queries(queries) -> str:
    return "\n".join(queries) if queries else "None"
