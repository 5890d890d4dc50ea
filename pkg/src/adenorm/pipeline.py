"""Batch normalization engine: rank, fuse, and link many mentions.

This is the same computation as ``rank_terms`` -> ``rrf_fuse`` ->
``link_mention``, restructured so the per-mention cost is a handful of
vectorized passes instead of building ranking objects. It is bitwise
equal to the ranking API, not merely close:

* similarities are computed with the exact per-chunk matrix-vector
  calls the API's ``similarities_to_terms`` makes (BLAS kernels differ
  bitwise across call shapes, so the call shape is shared), with each
  term chunk kept cache-hot across a block of mentions;
* fused scores live on a canonical id-sorted axis (the union of all
  encoders' term ids); per-encoder reciprocal-rank contributions are
  scattered onto it with one fancy-indexed assignment per encoder,
  making a stable argsort realize the (score desc, id asc) total order;
* per term, contributions are summed smallest-first sequentially, the
  same additions ``rrf_fuse`` performs, so fused scores are bitwise
  independent of encoder order and bitwise equal across both paths.

Mentions are processed in fixed-size blocks; with ``threads > 1`` the
blocks fan out over a thread pool (numpy releases the GIL in the heavy
kernels) and results are assembled in input order, so output is bitwise
identical at any parallelism level. BLAS is pinned to one thread for
the whole batch so reductions are reproducible and our own fan-out is
the only parallelism.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from threadpoolctl import threadpool_limits

from .embeddings import EmbeddingSet, load_embeddings
from .errors import (
    EmptyFusionError,
    EmptyInputError,
    EncoderPairingError,
    MissingEmbeddingError,
    UnknownLltError,
)
from .retrieval import (
    AGGREGATION_PT_MAX,
    AGGREGATIONS,
    DEFAULT_RRF_K,
    SIM_CHUNK_ROWS,
    LinkResult,
)
from .terminology import Terminology, load_terminology

_BLOCK = 16


@dataclass
class PipelineConfig:
    """File-level description of one normalization run."""

    terminology_path: str
    term_embedding_paths: list[str]
    mention_embedding_paths: list[str]
    k: float = DEFAULT_RRF_K
    aggregation: str = "top-llt"
    top_n: int = 10

    def __post_init__(self):
        if len(self.term_embedding_paths) != len(self.mention_embedding_paths) or not self.term_embedding_paths:
            raise EncoderPairingError(
                f"{len(self.term_embedding_paths)} term embedding file(s) vs "
                f"{len(self.mention_embedding_paths)} mention embedding file(s); "
                "need equal counts >= 1"
            )
        if self.aggregation not in AGGREGATIONS:
            raise ValueError(f"aggregation must be one of {AGGREGATIONS}")
        if not self.k > 0:
            raise ValueError("ranking constant k must be positive")
        if self.top_n < 1:
            raise ValueError("top_n must be >= 1")

    def load(self) -> tuple[Terminology, list[EmbeddingSet], list[EmbeddingSet]]:
        """Load all referenced files and validate encoder pairing.

        Term and mention files pair positionally; each pair must agree
        on encoder_id.
        """
        with open(self.terminology_path, "rb") as fh:
            terminology = load_terminology(fh)
        term_sets = [_load_set(p) for p in self.term_embedding_paths]
        mention_sets = [_load_set(p) for p in self.mention_embedding_paths]
        for i, (t, m) in enumerate(zip(term_sets, mention_sets)):
            if t.encoder_id != m.encoder_id:
                raise EncoderPairingError(
                    f"position {i}: term encoder {t.encoder_id!r} "
                    f"!= mention encoder {m.encoder_id!r}"
                )
        return terminology, term_sets, mention_sets


def _load_set(path: str) -> EmbeddingSet:
    with open(path, "rb") as fh:
        return load_embeddings(fh)


class Normalizer:
    """Reusable linker for a fixed terminology and term embedding sets.

    Construction validates that every term id of every encoder is a
    known llt_code and precomputes the sorted-order structures; the
    instance is immutable afterwards and safe to share across threads.
    """

    def __init__(self, terminology: Terminology, term_sets: list[EmbeddingSet], k: float = DEFAULT_RRF_K):
        if not term_sets:
            raise EmptyInputError("need at least one term embedding set")
        if not k > 0:
            raise ValueError("ranking constant k must be positive")
        llt_index = terminology.llt_index
        for term_set in term_sets:
            for term_id in term_set.ids:
                if term_id not in llt_index:
                    raise UnknownLltError(term_id)

        self.terminology = terminology
        self.term_sets = term_sets
        self.k = float(k)

        canon = sorted(set().union(*(term_set.ids for term_set in term_sets)))
        self._canon_ids = canon
        canon_arr = np.array(canon) if canon else np.empty(0, dtype="U1")

        self._id_orders: list[np.ndarray] = []
        self._cols: list[np.ndarray] = []
        self._weights: list[np.ndarray] = []
        for term_set in term_sets:
            order = term_set.id_argsort()
            ids_sorted = np.array([term_set.ids[i] for i in order]) if len(order) else np.empty(0, dtype="U1")
            cols = np.searchsorted(canon_arr, ids_sorted).astype(np.intp)
            weights = 1.0 / (self.k + np.arange(1, len(term_set) + 1, dtype=np.float64))
            for arr in (cols, weights):
                arr.setflags(write=False)
            self._id_orders.append(order)
            self._cols.append(cols)
            self._weights.append(weights)

        # PT-side lookups for pt-max aggregation and result assembly.
        pt_codes = sorted({terminology.pt_of(llt)[0] for llt in canon})
        pt_pos = {code: i for i, code in enumerate(pt_codes)}
        self._pt_codes = pt_codes
        self._pt_texts = [""] * len(pt_codes)
        llt_pt = np.zeros(len(canon), dtype=np.intp)
        for i, llt in enumerate(canon):
            code, text = terminology.pt_of(llt)
            llt_pt[i] = pt_pos[code]
            self._pt_texts[pt_pos[code]] = text
        llt_pt.setflags(write=False)
        self._llt_pt = llt_pt
        members: list[list[int]] = [[] for _ in pt_codes]
        for i, p in enumerate(llt_pt):
            members[p].append(i)
        self._pt_members = [np.array(m, dtype=np.intp) for m in members]

    @property
    def canonical_term_ids(self) -> list[str]:
        return list(self._canon_ids)

    def _fused_block(self, vectors: list[np.ndarray], start: int, stop: int) -> np.ndarray:
        """Fused score rows for mentions [start, stop); shape (b, n_canon)."""
        n_encoders = len(self.term_sets)
        n_canon = len(self._canon_ids)
        block = stop - start
        contrib = np.zeros((block, n_encoders, n_canon), dtype=np.float64)
        for e, term_set in enumerate(self.term_sets):
            id_order, cols, weights = self._id_orders[e], self._cols[e], self._weights[e]
            matrix = term_set.matrix
            n_terms = matrix.shape[0]
            # Chunk-major loop keeps each term chunk cache-hot across the
            # block's mentions; every (chunk, mention) product is the
            # same call similarities_to_terms makes, so sims are bitwise
            # identical to the ranking API's.
            sims_block = np.empty((block, n_terms), dtype=np.float64)
            for c in range(0, n_terms, SIM_CHUNK_ROWS):
                chunk = matrix[c : c + SIM_CHUNK_ROWS]
                for m in range(block):
                    sims_block[m, c : c + SIM_CHUNK_ROWS] = chunk @ vectors[e][start + m]
            np.clip(sims_block, -1.0, 1.0, out=sims_block)
            for m in range(block):
                order = np.argsort(-sims_block[m, id_order], kind="stable")
                contrib[m, e, cols[order]] = weights
        if n_encoders == 1:
            return contrib[:, 0, :]
        # Sum per-term contributions smallest-first, sequentially: the
        # exact additions rrf_fuse performs, so both paths agree bitwise.
        contrib.sort(axis=1)
        fused = contrib[:, 0, :].copy()
        for e in range(1, n_encoders):
            fused += contrib[:, e, :]
        return fused

    def link_batch(
        self,
        mention_vectors: list[np.ndarray],
        threads: int = 1,
        aggregation: str = "top-llt",
        top_n: int | None = None,
    ) -> tuple[list[LinkResult], list[list[tuple[str, float]]] | None]:
        """Link a batch of mentions; optionally return fused top-N dumps.

        ``mention_vectors[e]`` is an (n_mentions, dim_e) matrix aligned
        with ``term_sets[e]``; rows are one mention's vectors across
        encoders and must be unit-norm, as loaded embedding sets
        guarantee. Results come back in input order regardless of
        ``threads``.
        """
        if aggregation not in AGGREGATIONS:
            raise ValueError(f"aggregation must be one of {AGGREGATIONS}")
        if len(mention_vectors) != len(self.term_sets):
            raise EncoderPairingError(
                f"{len(mention_vectors)} mention matrices for {len(self.term_sets)} term sets"
            )
        counts = {v.shape[0] for v in mention_vectors}
        if len(counts) > 1:
            raise EncoderPairingError(f"mention counts differ across encoders: {sorted(counts)}")
        total = counts.pop() if counts else 0
        if total == 0:
            return [], ([] if top_n is not None else None)
        if not self._canon_ids:
            raise EmptyFusionError("term embedding sets contain no entries")
        for term_set, vecs in zip(self.term_sets, mention_vectors):
            if vecs.shape[1] != term_set.dim:
                raise EncoderPairingError(
                    f"mention vectors for encoder {term_set.encoder_id!r} have dim "
                    f"{vecs.shape[1]}, term set has dim {term_set.dim}"
                )

        starts = list(range(0, total, _BLOCK))

        def run_block(start: int) -> list:
            stop = min(start + _BLOCK, total)
            fused = self._fused_block(mention_vectors, start, stop)
            out = []
            for row in fused:
                out.append(self._finish(row, aggregation, top_n))
            return out

        with threadpool_limits(limits=1, user_api="blas"):
            if threads <= 1 or len(starts) == 1:
                chunks = [run_block(s) for s in starts]
            else:
                with ThreadPoolExecutor(max_workers=threads) as pool:
                    chunks = list(pool.map(run_block, starts))

        results: list[LinkResult] = []
        dumps: list[list[tuple[str, float]]] | None = [] if top_n is not None else None
        for chunk in chunks:
            for item in chunk:
                if top_n is None:
                    results.append(item)
                else:
                    results.append(item[0])
                    dumps.append(item[1])
        return results, dumps

    def link_one(self, mention_vectors: list[np.ndarray], aggregation: str = "top-llt") -> LinkResult:
        """Link a single mention given one vector per encoder."""
        stacked = [np.asarray(v, dtype=np.float64).reshape(1, -1) for v in mention_vectors]
        results, _ = self.link_batch(stacked, threads=1, aggregation=aggregation)
        return results[0]

    def _finish(self, scores: np.ndarray, aggregation: str, top_n: int | None):
        if aggregation == AGGREGATION_PT_MAX:
            pt_scores = np.full(len(self._pt_codes), -1.0)
            np.maximum.at(pt_scores, self._llt_pt, scores)
            pt_idx = int(np.argmax(pt_scores))  # first max = smallest pt_code
            members = self._pt_members[pt_idx]
            rep = int(members[np.argmax(scores[members])])  # first max = smallest llt
            result = LinkResult(
                self._canon_ids[rep],
                self._pt_codes[pt_idx],
                self._pt_texts[pt_idx],
                float(scores[rep]),
            )
        else:
            best = int(np.argmax(scores))  # canon is id-sorted: first max = smallest id
            result = LinkResult(
                self._canon_ids[best],
                self._pt_codes[self._llt_pt[best]],
                self._pt_texts[self._llt_pt[best]],
                float(scores[best]),
            )
        if top_n is None:
            return result
        order = np.argsort(-scores, kind="stable")[:top_n]
        dump = [(self._canon_ids[i], float(scores[i])) for i in order]
        return result, dump


def stack_mention_vectors(
    mention_sets: list[EmbeddingSet], mention_ids: list[str]
) -> list[np.ndarray]:
    """Per-encoder (n_mentions, dim) matrices for the given mention ids.

    Raises MissingEmbeddingError naming the first id absent from any
    encoder's set.
    """
    matrices = []
    for mention_set in mention_sets:
        rows = np.empty((len(mention_ids), mention_set.dim), dtype=np.float64)
        for i, mention_id in enumerate(mention_ids):
            try:
                rows[i] = mention_set.vector(mention_id)
            except KeyError:
                raise MissingEmbeddingError(mention_id, mention_set.encoder_id) from None
        matrices.append(rows)
    return matrices
