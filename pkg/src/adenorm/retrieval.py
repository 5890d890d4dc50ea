"""Cosine ranking over a terminology and reciprocal-rank fusion.

One mention is compared to every term of every encoder's embedding set,
giving one full similarity ranking per encoder. The per-encoder rankings
are aggregated by reciprocal-rank fusion: each term scores
``sum over rankings of 1 / (k + rank)``, with ranks starting at 1 and
terms absent from a ranking contributing 0 for it. The fused top term
decides the preferred-term link.

The ranking constant defaults to ``DEFAULT_RRF_K = 46``; it is explicit
everywhere because it deviates from the classic 60.

Ordering is a total order at every stage: similarity (or fused score)
descending, ties broken by term id ascending (bytewise). Fused scores
accumulate each term's contributions smallest-first in a fixed order,
so the result is bitwise independent of the order in which rankings are
supplied and bitwise identical to the batch pipeline's vectorized path.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from .embeddings import EmbeddingSet
from .errors import (
    DimMismatchError,
    EmptyFusionError,
    EmptyInputError,
    ZeroNormError,
)
from .terminology import Terminology

DEFAULT_RRF_K = 46.0

AGGREGATION_TOP_LLT = "top-llt"
AGGREGATION_PT_MAX = "pt-max"
AGGREGATIONS = (AGGREGATION_TOP_LLT, AGGREGATION_PT_MAX)

# Mention vectors within this of unit norm are used as-is; embedding
# sets normalize to well inside it, so ranking a stored mention vector
# never re-rounds it.
_UNIT_TOL = 1e-9

# Term rows are processed in fixed chunks. The batch pipeline keeps a
# chunk cache-hot across a block of mentions; the chunk size must be a
# shared constant because each (chunk, mention) BLAS call must have the
# same shape everywhere for results to be bitwise-reproducible.
SIM_CHUNK_ROWS = 4096


@dataclass(frozen=True, eq=False)
class Ranking:
    """One encoder's full similarity ranking for one mention.

    ``term_ids[i]`` holds rank ``i + 1``; ``similarities`` is aligned and
    descending. Ranks are dense 1..n with no sharing.
    """

    encoder_id: str
    term_ids: tuple[str, ...]
    similarities: np.ndarray = field(repr=False)

    def __post_init__(self):
        sims = np.asarray(self.similarities, dtype=np.float64)
        sims.setflags(write=False)
        object.__setattr__(self, "similarities", sims)

    def __len__(self) -> int:
        return len(self.term_ids)

    @property
    def entries(self) -> list[tuple[str, float, int]]:
        """Materialized ``(term_id, similarity, rank)`` triples."""
        return [
            (tid, float(self.similarities[i]), i + 1)
            for i, tid in enumerate(self.term_ids)
        ]


@dataclass(frozen=True, eq=False)
class FusedRanking:
    """Rank-fused aggregate over encoders, ordered like a Ranking."""

    k: float
    term_ids: tuple[str, ...]
    scores: np.ndarray = field(repr=False)

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=np.float64)
        scores.setflags(write=False)
        object.__setattr__(self, "scores", scores)

    def __len__(self) -> int:
        return len(self.term_ids)

    @property
    def entries(self) -> list[tuple[str, float]]:
        return [(tid, float(self.scores[i])) for i, tid in enumerate(self.term_ids)]


@dataclass(frozen=True)
class LinkResult:
    """A mention linked to its preferred term."""

    llt_code: str
    pt_code: str
    pt_text: str
    rrf_score: float


def cosine(u, v) -> float:
    """Cosine similarity of two vectors, clamped to [-1, 1].

    The clamp absorbs floating-point drift so downstream invariants
    (similarity within [-1, 1]) stay testable.
    """
    a = np.asarray(u, dtype=np.float64)
    b = np.asarray(v, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise DimMismatchError(f"cosine needs equal-length vectors, got {a.shape} and {b.shape}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ZeroNormError("cosine undefined for zero-norm vectors")
    return float(min(1.0, max(-1.0, float(np.dot(a, b) / (na * nb)))))


def similarities_to_terms(mention_vec: np.ndarray, terms: EmbeddingSet) -> np.ndarray:
    """Clamped cosine of a unit-norm mention vector against every term row.

    The single similarity primitive: the ranking API and the batch
    pipeline perform the exact same per-chunk matrix-vector products,
    because BLAS kernels are not bitwise-reproducible across different
    call shapes (gemv vs gemm, or different heights), so sharing the
    call shape is the only way to keep the two paths in exact
    agreement. Callers must pin BLAS to a single thread around it;
    multithreaded BLAS may split reductions differently run to run.
    """
    matrix = terms.matrix
    n = matrix.shape[0]
    sims = np.empty(n, dtype=np.float64)
    for c in range(0, n, SIM_CHUNK_ROWS):
        sims[c : c + SIM_CHUNK_ROWS] = matrix[c : c + SIM_CHUNK_ROWS] @ mention_vec
    np.clip(sims, -1.0, 1.0, out=sims)
    return sims


def _as_unit_mention(mention_vec, dim: int) -> np.ndarray:
    v = np.asarray(mention_vec, dtype=np.float64)
    if v.ndim != 1 or v.shape[0] != dim:
        raise DimMismatchError(f"mention vector has shape {v.shape}, terms have dim {dim}")
    norm = np.linalg.norm(v)
    if norm == 0.0:
        raise ZeroNormError("mention vector has zero norm")
    if abs(norm - 1.0) > _UNIT_TOL:
        v = v / norm
    return v


def rank_terms(mention_vec, terms: EmbeddingSet) -> Ranking:
    """Rank every term of one encoder's set against a mention vector.

    Sorting is similarity descending with ties broken by term id
    ascending; similarities are viewed in term-id order so a stable
    sort on them yields exactly that total order.
    """
    v = _as_unit_mention(mention_vec, terms.dim)
    with threadpool_limits(limits=1, user_api="blas"):
        sims = similarities_to_terms(v, terms)
    by_id = terms.id_argsort()
    order = by_id[np.argsort(-sims[by_id], kind="stable")]
    term_ids = tuple(terms.ids[i] for i in order)
    return Ranking(encoder_id=terms.encoder_id, term_ids=term_ids, similarities=sims[order])


def _canonical_sum(parts: list[float]) -> float:
    """Sum smallest-first: one canonical result for any input order."""
    total = 0.0
    for part in sorted(parts):
        total += part
    return total


def rrf_fuse(rankings: Sequence[Ranking], k: float = DEFAULT_RRF_K) -> FusedRanking:
    """Fuse per-encoder rankings into one reciprocal-rank scored list.

    Every term appearing in any input ranking is scored; terms missing
    from a ranking contribute nothing for it. Output order and scores do
    not depend on the order of ``rankings``.
    """
    if not rankings:
        raise EmptyInputError("rrf_fuse needs at least one ranking")
    if not k > 0:
        raise ValueError(f"ranking constant must be positive, got {k}")

    contributions: dict[str, list[float]] = {}
    for ranking in rankings:
        for pos, term_id in enumerate(ranking.term_ids):
            contributions.setdefault(term_id, []).append(1.0 / (k + pos + 1))

    scored = [(term_id, _canonical_sum(parts)) for term_id, parts in contributions.items()]
    scored.sort(key=lambda item: (-item[1], item[0]))
    return FusedRanking(
        k=float(k),
        term_ids=tuple(term_id for term_id, _ in scored),
        scores=np.array([score for _, score in scored], dtype=np.float64),
    )


def link_mention(
    fused: FusedRanking,
    terminology: Terminology,
    aggregation: str = AGGREGATION_TOP_LLT,
) -> LinkResult:
    """Pick the preferred term for a fused ranking.

    ``top-llt`` takes the top fused LLT and returns its PT. ``pt-max``
    scores each PT as the max fused score over its LLTs and returns the
    best PT (ties by pt_code ascending), with the PT's best-scoring LLT
    as the llt_code.
    """
    if aggregation not in AGGREGATIONS:
        raise ValueError(f"aggregation must be one of {AGGREGATIONS}, got {aggregation!r}")
    if len(fused) == 0:
        raise EmptyFusionError("cannot link from an empty fusion")

    if aggregation == AGGREGATION_TOP_LLT:
        llt_code = fused.term_ids[0]
        pt_code, pt_text = terminology.pt_of(llt_code)
        return LinkResult(llt_code, pt_code, pt_text, float(fused.scores[0]))

    # pt-max: fused order is (score desc, llt asc), so the first LLT seen
    # for a PT is that PT's best-scoring representative.
    best: dict[str, tuple[float, str, str]] = {}
    for i, llt_code in enumerate(fused.term_ids):
        pt_code, pt_text = terminology.pt_of(llt_code)
        if pt_code not in best:
            best[pt_code] = (float(fused.scores[i]), llt_code, pt_text)
    pt_code = min(best, key=lambda code: (-best[code][0], code))
    score, llt_code, pt_text = best[pt_code]
    return LinkResult(llt_code, pt_code, pt_text, score)
