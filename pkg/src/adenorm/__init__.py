"""adenorm: zero-shot adverse-drug-event normalization.

Mentions are linked to preferred terms of a terminology by ranking every
lowest-level term per encoder with cosine similarity, fusing the
per-encoder rankings with reciprocal ranks, and taking the top fused
entry's preferred term. Includes BIO span decoding and a span-level
precision/recall/F1 evaluator with an unseen-target breakdown.
"""

from .embeddings import (
    EmbeddingSet,
    fixture_embed,
    fixture_embedding_set,
    load_embeddings,
    write_embeddings,
)
from .errors import AdeNormError
from .evaluation import (
    Annotation,
    EvalReport,
    MetricBlock,
    evaluate,
    f1_from_pr,
    match_annotations,
    prf,
)
from .pipeline import Normalizer, PipelineConfig, stack_mention_vectors
from .retrieval import (
    DEFAULT_RRF_K,
    FusedRanking,
    LinkResult,
    Ranking,
    cosine,
    link_mention,
    rank_terms,
    rrf_fuse,
)
from .spans import LabeledToken, Span, decode_bio, encode_bio
from .terminology import TermRecord, Terminology, load_terminology, write_terminology

__version__ = "0.1.0"

__all__ = [
    "AdeNormError",
    "Annotation",
    "DEFAULT_RRF_K",
    "EmbeddingSet",
    "EvalReport",
    "FusedRanking",
    "LabeledToken",
    "LinkResult",
    "MetricBlock",
    "Normalizer",
    "PipelineConfig",
    "Ranking",
    "Span",
    "TermRecord",
    "Terminology",
    "cosine",
    "decode_bio",
    "encode_bio",
    "evaluate",
    "f1_from_pr",
    "fixture_embed",
    "fixture_embedding_set",
    "link_mention",
    "load_embeddings",
    "load_terminology",
    "match_annotations",
    "prf",
    "rank_terms",
    "rrf_fuse",
    "stack_mention_vectors",
    "write_embeddings",
    "write_terminology",
]
