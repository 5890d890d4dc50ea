"""Export sentence embeddings to the engine's JSONL format.

Output layout: a meta line ``{"encoder": <model_ref>, "dim": <int>}``
followed by one ``{"id": ..., "v": [...]}`` object per input line, in
input order, ids passed through verbatim. Raw model vectors are written
as-is (finiteness checked); normalization is deliberately left to the
consuming loader so there is a single point of truth for the unit-norm
invariant.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np


class ExporterError(Exception):
    """Base class for exporter failures."""


class ModelLoadError(ExporterError):
    """The model reference could not be loaded by the runtime."""


class MalformedLineError(ExporterError):
    """An input line could not be parsed or lacks required fields."""

    def __init__(self, lineno: int, reason: str):
        super().__init__(f"line {lineno}: {reason}")
        self.lineno = lineno


class DuplicateIdError(ExporterError):
    """Two input lines share an id."""

    def __init__(self, entry_id: str):
        super().__init__(f"duplicate id {entry_id!r}")
        self.entry_id = entry_id


@dataclass
class ExportJob:
    """One batch-export run."""

    model_ref: str
    input_path: str
    output_path: str
    batch_size: int = 32
    device: str = "cpu"

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


def read_texts(path: str) -> list[tuple[str, str]]:
    """Parse a texts JSONL file into unique ``(id, text)`` pairs.

    A line may carry an explicit ``"id"``; otherwise
    ``"<doc_id>:<start>-<end>"`` is derived, matching the engine's
    mention-id convention so decode output embeds directly.
    """
    with open(path, "rb") as fh:
        lines = fh.read().decode("utf-8").split("\n")
    while lines and lines[-1] == "":
        lines.pop()

    entries: list[tuple[str, str]] = []
    seen: set[str] = set()
    for lineno, line in enumerate(lines, start=1):
        if line == "":
            continue
        try:
            obj = json.loads(line)
        except ValueError as exc:
            raise MalformedLineError(lineno, f"invalid JSON: {exc}") from exc
        if not isinstance(obj, dict):
            raise MalformedLineError(lineno, "entry must be a JSON object")
        entry_id = obj.get("id")
        if entry_id is None:
            doc_id, start, end = obj.get("doc_id"), obj.get("start"), obj.get("end")
            if isinstance(doc_id, str) and isinstance(start, int) and isinstance(end, int):
                entry_id = f"{doc_id}:{start}-{end}"
        if not isinstance(entry_id, str):
            raise MalformedLineError(lineno, "entry needs 'id' or doc_id/start/end to derive one")
        text = obj.get("text")
        if not isinstance(text, str):
            raise MalformedLineError(lineno, "entry needs a string 'text' field")
        if entry_id in seen:
            raise DuplicateIdError(entry_id)
        seen.add(entry_id)
        entries.append((entry_id, text))
    return entries


def _load_model(model_ref: str, device: str):
    from sentence_transformers import SentenceTransformer  # deferred: heavy import

    try:
        return SentenceTransformer(model_ref, device=device)
    except Exception as exc:
        raise ModelLoadError(f"cannot load model {model_ref!r}: {exc}") from exc


def _native_dim(model) -> int | None:
    getter = getattr(model, "get_embedding_dimension", None)  # renamed upstream
    if getter is None:
        getter = model.get_sentence_embedding_dimension
    return getter()


def export(job: ExportJob) -> int:
    """Run one export job; returns the number of entries written."""
    entries = read_texts(job.input_path)
    model = _load_model(job.model_ref, job.device)

    dim = _native_dim(model)
    if entries:
        vectors = model.encode(
            [text for _, text in entries],
            batch_size=job.batch_size,
            convert_to_numpy=True,
            normalize_embeddings=False,
            show_progress_bar=False,
        )
        vectors = np.asarray(vectors, dtype=np.float64)
        if dim is None:
            dim = int(vectors.shape[1])
        if vectors.shape != (len(entries), dim):
            raise ExporterError(
                f"model produced shape {vectors.shape}, expected ({len(entries)}, {dim})"
            )
        if not np.isfinite(vectors).all():
            bad = int(np.argmin(np.isfinite(vectors).all(axis=1)))
            raise ExporterError(f"non-finite vector for id {entries[bad][0]!r}")
    else:
        vectors = np.empty((0, 0))
        if dim is None:
            raise ModelLoadError(
                f"model {job.model_ref!r} does not declare an embedding dimension"
            )

    out = [json.dumps({"encoder": job.model_ref, "dim": int(dim)},
                      ensure_ascii=False, separators=(",", ":"))]
    for (entry_id, _), vec in zip(entries, vectors):
        out.append(json.dumps({"id": entry_id, "v": vec.tolist()},
                              ensure_ascii=False, separators=(",", ":")))
    with open(job.output_path, "wb") as fh:
        fh.write(("\n".join(out) + "\n").encode("utf-8"))
    return len(entries)
