"""Request/response bodies for the engine service."""
from __future__ import annotations

from pydantic import BaseModel, Field


class IndexRequest(BaseModel):
    corpus: str = Field(min_length=1, description="Path to a corpus JSONL file")
    out: str | None = Field(default=None, description="Optional path to persist the index")


class IndexResponse(BaseModel):
    stats: dict
    saved: str | None = None


class AskRequest(BaseModel):
    question: str = Field(min_length=1)
    overrides: dict[str, str] = Field(default_factory=dict)


class EvalRequest(BaseModel):
    dataset: str = Field(min_length=1, description="Path to a dataset JSONL file")
    samples: int | None = Field(default=None, ge=1)
    seed: int | None = None
    parallel: int | None = Field(default=None, ge=1)
    baseline: str | None = None
    judge: bool = False
    transcript_dir: str | None = None
    overrides: dict[str, str] = Field(default_factory=dict)


class ConfigResponse(BaseModel):
    lines: list[str]
    config: dict


class HealthResponse(BaseModel):
    status: str
    index_loaded: bool
