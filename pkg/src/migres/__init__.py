"""Iterative retrieval-augmented question answering.

The engine answers knowledge-intensive questions by looping: decide whether
the question is answerable from accumulated evidence; if not, describe the
information gap, turn it into targeted single-hop queries, retrieve with
BM25, filter passages and sentences by reranker relevance, extract
citation-backed statements verified by NLI entailment, and try again —
up to an iteration budget.
"""

from .config import Config
from .corpus import Bm25Index, Bm25Params, Document, Passage
from .errors import MigresError
from .evaluation import QaInstance, Report, evaluate, exact_match, normalize_answer
from .filtering import FilterConfig, FilteredKnowledge
from .pipeline import PipelineConfig, PipelineResult, RunMemory, run_pipeline

__version__ = "0.1.0"

__all__ = [
    "Bm25Index",
    "Bm25Params",
    "Config",
    "Document",
    "FilterConfig",
    "FilteredKnowledge",
    "MigresError",
    "Passage",
    "PipelineConfig",
    "PipelineResult",
    "QaInstance",
    "Report",
    "RunMemory",
    "evaluate",
    "exact_match",
    "normalize_answer",
    "run_pipeline",
    "__version__",
]
