"""Per-encoder embedding sets and the deterministic fixture embedder.

An :class:`EmbeddingSet` holds one encoder's vectors for one side of the
comparison (terms or mentions). All vectors are L2-normalized at load so
the ranking hot loop can use a plain dot product for cosine. Encoders
may have different dimensions; each set is an independent space and only
ranks ever cross encoders.

The on-disk format is UTF-8 JSON Lines: a meta object
``{"encoder": <str>, "dim": <int>}`` first, then one
``{"id": <str>, "v": [<floats>]}`` object per entry. NaN/Infinity tokens
are rejected.
"""

from __future__ import annotations

import json
from typing import BinaryIO, Iterable, Iterator, Sequence

import numpy as np

from .errors import (
    BadMetaError,
    DimMismatchError,
    DuplicateIdError,
    MalformedLineError,
    NonFiniteError,
    ZeroVectorError,
)

# Vectors whose norm is already this close to 1 are stored untouched,
# which makes load(write(load(x))) bitwise idempotent.
_NORM_SKIP_TOL = 1e-9

_FNV_OFFSET = 14695981039346656037
_FNV_PRIME = 1099511628211
_FNV_MASK = 0xFFFFFFFFFFFFFFFF


class EmbeddingSet:
    """Immutable ordered map from entry id to a unit-norm vector.

    Rows of ``matrix`` align with ``ids``; the matrix is read-only and
    shareable across threads.
    """

    __slots__ = ("encoder_id", "dim", "ids", "matrix", "_row_of", "_id_order")

    def __init__(self, encoder_id: str, dim: int, ids: Sequence[str], vectors) -> None:
        if not isinstance(dim, int) or dim < 1:
            raise BadMetaError(f"dim must be a positive integer, got {dim!r}")
        ids = tuple(ids)
        row_of: dict[str, int] = {}
        for i, entry_id in enumerate(ids):
            if entry_id in row_of:
                raise DuplicateIdError(entry_id)
            row_of[entry_id] = i

        if isinstance(vectors, np.ndarray):
            if vectors.shape != (len(ids), dim):
                raise DimMismatchError(
                    f"matrix shape {vectors.shape} does not match ({len(ids)}, {dim})"
                )
            matrix = np.array(vectors, dtype=np.float64, order="C")
        else:
            rows = list(vectors)
            if len(rows) != len(ids):
                raise DimMismatchError(f"{len(ids)} ids but {len(rows)} vectors")
            for entry_id, row in zip(ids, rows):
                if len(row) != dim:
                    raise DimMismatchError(f"vector {entry_id!r} has {len(row)} components, expected {dim}")
            matrix = np.array(rows, dtype=np.float64).reshape(len(ids), dim)

        finite = np.isfinite(matrix).all(axis=1)
        if not finite.all():
            raise NonFiniteError(ids[int(np.argmin(finite))])
        if matrix.size:
            # Scale by the max component first so norms of extreme rows
            # neither overflow nor underflow.
            maxabs = np.max(np.abs(matrix), axis=1)
            if (maxabs == 0.0).any():
                raise ZeroVectorError(ids[int(np.argmax(maxabs == 0.0))])
            scaled = matrix / maxabs[:, None]
            norms = np.linalg.norm(scaled, axis=1)
            with np.errstate(over="ignore"):  # inf norm just means "normalize"
                needs = np.abs(maxabs * norms - 1.0) > _NORM_SKIP_TOL
            if needs.any():
                matrix[needs] = scaled[needs] / norms[needs, None]
        matrix.setflags(write=False)

        self.encoder_id = encoder_id
        self.dim = dim
        self.ids = ids
        self.matrix = matrix
        self._row_of = row_of
        self._id_order = None

    def __len__(self) -> int:
        return len(self.ids)

    def __contains__(self, entry_id: str) -> bool:
        return entry_id in self._row_of

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EmbeddingSet):
            return NotImplemented
        return (
            self.encoder_id == other.encoder_id
            and self.dim == other.dim
            and self.ids == other.ids
            and np.array_equal(self.matrix, other.matrix)
        )

    def vector(self, entry_id: str) -> np.ndarray:
        """Read-only unit-norm vector for an id."""
        row = self._row_of.get(entry_id)
        if row is None:
            raise KeyError(entry_id)
        return self.matrix[row]

    def items(self) -> Iterator[tuple[str, np.ndarray]]:
        for i, entry_id in enumerate(self.ids):
            yield entry_id, self.matrix[i]

    def id_argsort(self) -> np.ndarray:
        """Row indices that order ids ascending (bytewise). Cached."""
        if self._id_order is None:
            order = np.array(sorted(range(len(self.ids)), key=self.ids.__getitem__), dtype=np.intp)
            order.setflags(write=False)
            self._id_order = order
        return self._id_order


def _reject_constant(token: str):
    raise ValueError(f"non-finite JSON token {token!r} not permitted")


def load_embeddings(source: BinaryIO | bytes) -> EmbeddingSet:
    """Parse an embedding JSONL file into an :class:`EmbeddingSet`.

    Every vector is L2-normalized in place; entry order is preserved.
    """
    data = source if isinstance(source, bytes) else source.read()
    lines = data.decode("utf-8").split("\n")
    while lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise BadMetaError("empty embedding file")

    try:
        meta = json.loads(lines[0], parse_constant=_reject_constant)
    except ValueError as exc:
        raise BadMetaError(f"meta line is not valid JSON: {exc}") from exc
    if not isinstance(meta, dict):
        raise BadMetaError("meta line must be a JSON object")
    encoder = meta.get("encoder")
    dim = meta.get("dim")
    if not isinstance(encoder, str):
        raise BadMetaError("meta field 'encoder' must be a string")
    if not isinstance(dim, int) or isinstance(dim, bool) or dim < 1:
        raise BadMetaError("meta field 'dim' must be a positive integer")

    ids: list[str] = []
    rows: list[list[float]] = []
    for lineno, line in enumerate(lines[1:], start=2):
        try:
            obj = json.loads(line, parse_constant=_reject_constant)
        except ValueError as exc:
            raise MalformedLineError(lineno, f"invalid JSON: {exc}") from exc
        if not isinstance(obj, dict):
            raise MalformedLineError(lineno, "entry must be a JSON object")
        entry_id = obj.get("id")
        vec = obj.get("v")
        if not isinstance(entry_id, str):
            raise MalformedLineError(lineno, "entry field 'id' must be a string")
        if not isinstance(vec, list) or not all(
            isinstance(x, (int, float)) and not isinstance(x, bool) for x in vec
        ):
            raise MalformedLineError(lineno, "entry field 'v' must be an array of numbers")
        if len(vec) != dim:
            raise DimMismatchError(f"vector {entry_id!r} has {len(vec)} components, expected {dim}")
        ids.append(entry_id)
        rows.append([float(x) for x in vec])
    return EmbeddingSet(encoder, dim, ids, rows)


def write_embeddings(embedding_set: EmbeddingSet, sink: BinaryIO) -> None:
    """Serialize a set as JSONL: meta line, then entries in stored order.

    Floats use Python's shortest round-trip decimal representation, so a
    reload yields an equal set.
    """
    out = [json.dumps({"encoder": embedding_set.encoder_id, "dim": embedding_set.dim},
                      ensure_ascii=False, separators=(",", ":"))]
    for entry_id, vec in embedding_set.items():
        out.append(json.dumps({"id": entry_id, "v": vec.tolist()},
                              ensure_ascii=False, separators=(",", ":")))
    out.append("")
    sink.write("\n".join(out).encode("utf-8"))


def fixture_embed(text: str, dim: int) -> np.ndarray:
    """Deterministic unit vector for a text, no ML runtime required.

    The text is lowercased and padded as ``"#" + text + "#"``; every
    character trigram of the padded string (the whole padded string when
    it is shorter than 3 characters) is hashed with 64-bit FNV-1a over
    its UTF-8 bytes. Each hash contributes +/-1 (sign from the hash's
    top bit) at index ``hash % dim``; an all-zero accumulation falls
    back to component 0 before L2 normalization.

    Same text in, bitwise-same vector out, on any platform. Lowercasing
    mirrors the case-insensitivity of real sentence encoders.
    """
    if dim < 1:
        raise ValueError("dim must be >= 1")
    padded = "#" + text.lower() + "#"
    if len(padded) < 3:
        features = [padded]
    else:
        features = [padded[i : i + 3] for i in range(len(padded) - 2)]
    acc = np.zeros(dim, dtype=np.float64)
    for feature in features:
        h = _FNV_OFFSET
        for byte in feature.encode("utf-8"):
            h ^= byte
            h = (h * _FNV_PRIME) & _FNV_MASK
        sign = 1.0 if h < 1 << 63 else -1.0
        acc[h % dim] += sign
    if not acc.any():
        acc[0] = 1.0
    return acc / np.linalg.norm(acc)


def fixture_embedding_set(entries: Iterable[tuple[str, str]], dim: int) -> EmbeddingSet:
    """Embed ``(id, text)`` pairs with :func:`fixture_embed`.

    The encoder id is ``fixture-d<dim>`` so paired term/mention sets
    produced at the same dimension validate as the same encoder.
    """
    ids: list[str] = []
    rows: list[np.ndarray] = []
    for entry_id, text in entries:
        ids.append(entry_id)
        rows.append(fixture_embed(text, dim))
    vectors = np.array(rows, dtype=np.float64).reshape(len(ids), dim)
    return EmbeddingSet(f"fixture-d{dim}", dim, ids, vectors)
