"""Run configuration: a flat dotted-key registry with provenance.

Values resolve default < file < flag, and every effective value remembers
where it came from so `show-config` can print the full resolution. Config
files are flat `key = value` lines with `#` comments.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

from .corpus import Bm25Params
from .errors import ConfigError, MigresError
from .filtering import FilterConfig
from .pipeline import COMPRESSION_MODES, PipelineConfig
from .prompts import Templates

TASKS = ("multihop", "odqa", "commonsense")

# Per-task-family defaults: iteration budget T and relevance threshold.
TASK_DEFAULTS = {
    "multihop": {"pipeline.max_iterations": 5, "filter.relevance_threshold": 3.0},
    "odqa": {"pipeline.max_iterations": 3, "filter.relevance_threshold": 5.0},
    "commonsense": {"pipeline.max_iterations": 5, "filter.relevance_threshold": 0.0},
}

# key -> (type, default). Types: int, float, bool, str. A None default for
# int means "unset".
REGISTRY: dict[str, tuple[type, object]] = {
    "task": (str, "multihop"),
    "pipeline.max_iterations": (int, 5),
    "pipeline.retrieve_n": (int, 50),
    "pipeline.knowledge_prompt_enabled": (bool, True),
    "pipeline.nli_verify_enabled": (bool, True),
    "pipeline.compression": (str, "sentence"),
    "pipeline.deterministic": (bool, False),
    "filter.relevance_threshold": (float, 3.0),
    "filter.sentence_filter_enabled": (bool, True),
    "filter.max_passages": (int, 5),
    "bm25.k1": (float, 0.9),
    "bm25.b": (float, 0.4),
    "chat.endpoint": (str, ""),
    "chat.model": (str, "gpt-3.5-turbo"),
    "chat.retries": (int, 2),
    "chat.timeout": (float, 60.0),
    "rerank.endpoint": (str, ""),
    "nli.endpoint": (str, ""),
    "stubs.script": (str, ""),
    "corpus.path": (str, ""),
    "index.path": (str, ""),
    "output.dir": (str, ""),
    "templates.dir": (str, ""),
    "eval.samples": (int, None),
    "eval.seed": (int, 0),
    "eval.parallel": (int, 1),
    "eval.baseline": (str, "migres"),
}


def _parse_value(key: str, raw: str):
    kind, _ = REGISTRY[key]
    raw = raw.strip()
    if kind is bool:
        lowered = raw.lower()
        if lowered in ("true", "yes", "1", "on"):
            return True
        if lowered in ("false", "no", "0", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    if kind is int:
        if raw.lower() in ("", "none"):
            return None
        try:
            return int(raw)
        except ValueError as exc:
            raise ConfigError(f"{key}: expected an integer, got {raw!r}") from exc
    if kind is float:
        try:
            return float(raw)
        except ValueError as exc:
            raise ConfigError(f"{key}: expected a number, got {raw!r}") from exc
    return raw


def parse_config_file(path: str | Path) -> dict[str, object]:
    """Read `key = value` lines; unknown keys are errors.

    Whole-line and trailing `#` comments are stripped (a value therefore
    cannot contain ` #`), so `show-config` output reloads as-is.
    """
    entries: dict[str, object] = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for lineno, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {stripped!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in REGISTRY:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
        raw = re.split(r"\s+#", raw, maxsplit=1)[0]
        entries[key] = _parse_value(key, raw)
    return entries


@dataclass
class Config:
    """Resolved configuration: value and provenance per key."""

    values: dict[str, object]
    provenance: dict[str, str]

    @classmethod
    def resolve(
        cls,
        file_entries: dict[str, object] | None = None,
        flag_entries: dict[str, object] | None = None,
    ) -> "Config":
        file_entries = file_entries or {}
        flag_entries = flag_entries or {}
        for source, entries in (("file", file_entries), ("flag", flag_entries)):
            for key in entries:
                if key not in REGISTRY:
                    raise ConfigError(f"unknown config key {key!r} (from {source})")

        task = flag_entries.get("task", file_entries.get("task", REGISTRY["task"][1]))
        if task not in TASKS:
            raise ConfigError(f"task must be one of {TASKS}, got {task!r}")

        values: dict[str, object] = {}
        provenance: dict[str, str] = {}
        for key, (_, default) in REGISTRY.items():
            values[key] = default
            provenance[key] = "default"
        for key, value in TASK_DEFAULTS[task].items():
            values[key] = value
            provenance[key] = "default"
        values["task"] = task
        for key, value in file_entries.items():
            values[key] = value
            provenance[key] = "file"
        for key, value in flag_entries.items():
            values[key] = value
            provenance[key] = "flag"
        cfg = cls(values, provenance)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.values["pipeline.compression"] not in COMPRESSION_MODES:
            raise ConfigError(
                f"pipeline.compression must be one of {COMPRESSION_MODES}, "
                f"got {self.values['pipeline.compression']!r}"
            )
        # These constructors re-check their own bounds.
        self.filter_config()
        try:
            self.bm25_params()
        except MigresError as exc:
            raise ConfigError(str(exc)) from exc
        if self.values["pipeline.max_iterations"] < 1:
            raise ConfigError("pipeline.max_iterations must be >= 1")
        if self.values["pipeline.retrieve_n"] < 1:
            raise ConfigError("pipeline.retrieve_n must be >= 1")
        if self.values["eval.parallel"] < 1:
            raise ConfigError("eval.parallel must be >= 1")
        samples = self.values["eval.samples"]
        if samples is not None and samples < 1:
            raise ConfigError("eval.samples must be >= 1 when set")

    def get(self, key: str):
        if key not in REGISTRY:
            raise ConfigError(f"unknown config key {key!r}")
        return self.values[key]

    def with_overrides(self, overrides: dict[str, str]) -> "Config":
        """A new Config with raw string overrides applied at flag precedence."""
        if not overrides:
            return self
        parsed = {}
        for key, raw in overrides.items():
            if key not in REGISTRY:
                raise ConfigError(f"unknown config key {key!r}")
            parsed[key] = _parse_value(key, str(raw))
        values = dict(self.values)
        provenance = dict(self.provenance)
        task = parsed.get("task")
        if task is not None and task != values["task"]:
            if task not in TASKS:
                raise ConfigError(f"task must be one of {TASKS}, got {task!r}")
            for key, value in TASK_DEFAULTS[task].items():
                if provenance[key] == "default":
                    values[key] = value
        for key, value in parsed.items():
            values[key] = value
            provenance[key] = "flag"
        cfg = Config(values, provenance)
        cfg.validate()
        return cfg

    # -- derived objects ----------------------------------------------------

    def filter_config(self) -> FilterConfig:
        return FilterConfig(
            relevance_threshold=float(self.values["filter.relevance_threshold"]),
            sentence_filter_enabled=bool(self.values["filter.sentence_filter_enabled"]),
            max_passages=int(self.values["filter.max_passages"]),
        )

    def bm25_params(self) -> Bm25Params:
        return Bm25Params(k1=float(self.values["bm25.k1"]), b=float(self.values["bm25.b"]))

    def pipeline_config(self) -> PipelineConfig:
        templates_dir = self.values["templates.dir"] or None
        return PipelineConfig(
            max_iterations=int(self.values["pipeline.max_iterations"]),
            filter=self.filter_config(),
            retrieve_n=int(self.values["pipeline.retrieve_n"]),
            knowledge_prompt_enabled=bool(self.values["pipeline.knowledge_prompt_enabled"]),
            nli_verify_enabled=bool(self.values["pipeline.nli_verify_enabled"]),
            compression=str(self.values["pipeline.compression"]),
            deterministic=bool(self.values["pipeline.deterministic"]) or bool(self.values["stubs.script"]),
            templates=Templates(templates_dir) if templates_dir else None,
        )

    def show_lines(self) -> list[str]:
        """One `key = value  # provenance` line per key, sorted.

        The output is itself valid config-file syntax (modulo the trailing
        comments), so a resolved config can be saved and reloaded.
        """
        lines = []
        for key in sorted(REGISTRY):
            value = self.values[key]
            if value is None:
                rendered = ""
            elif isinstance(value, bool):
                rendered = "true" if value else "false"
            else:
                rendered = str(value)
            lines.append(f"{key} = {rendered}  # {self.provenance[key]}")
        return lines

    def to_dict(self) -> dict:
        return {
            key: {"value": self.values[key], "source": self.provenance[key]}
            for key in sorted(REGISTRY)
        }
