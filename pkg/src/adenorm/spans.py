"""BIO label sequences to character-offset spans and back.

Offsets are character offsets (end exclusive) throughout the system;
tweets are multi-byte-heavy, so byte offsets would be a trap. Gaps
between consecutive B/I tokens (whitespace the tokenizer skipped) fall
inside the reconstructed span: a span runs from its first token's start
to its last token's end.

Decoding is lenient by default because model output routinely contains
ill-formed transitions: an I with no open span starts a new span.
Strict mode turns that into an error and exists for gold-data
validation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

from .errors import (
    MalformedLineError,
    MisalignedSpanError,
    OrphanIError,
    OverlappingSpansError,
    UnorderedTokensError,
)

LABELS = ("B", "I", "O")

MODE_LENIENT = "lenient"
MODE_STRICT = "strict"
MODES = (MODE_LENIENT, MODE_STRICT)


@dataclass(frozen=True)
class LabeledToken:
    """A token with character offsets and a BIO label."""

    start: int
    end: int
    label: str

    def __post_init__(self):
        if not 0 <= self.start < self.end:
            raise ValueError(f"need 0 <= start < end, got ({self.start}, {self.end})")
        if self.label not in LABELS:
            raise ValueError(f"label must be one of {LABELS}, got {self.label!r}")


@dataclass(frozen=True)
class Span:
    """A character-offset mention in a document."""

    doc_id: str
    start: int
    end: int
    text: str | None = None

    def __post_init__(self):
        if not 0 <= self.start < self.end:
            raise ValueError(f"need 0 <= start < end, got ({self.start}, {self.end})")
        if self.text is not None and len(self.text) != self.end - self.start:
            raise ValueError(
                f"text length {len(self.text)} does not cover [{self.start}, {self.end})"
            )


def _check_token_order(tokens: Sequence) -> None:
    prev_end = -1
    for i, tok in enumerate(tokens):
        if hasattr(tok, "start"):
            start, end = tok.start, tok.end
        else:
            start, end = tok
        if start < prev_end:
            raise UnorderedTokensError(i)
        prev_end = end


def decode_bio(doc_id: str, tokens: Sequence[LabeledToken], mode: str = MODE_LENIENT) -> list[Span]:
    """Turn a BIO-labeled token sequence into mention spans.

    A maximal run of B followed by consecutive I becomes one span from
    the first token's start to the last token's end. Lenient mode treats
    an orphan I (no open span) as a new span start; strict mode raises
    OrphanIError with the token index. Spans come back in document
    order and never overlap.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    _check_token_order(tokens)

    spans: list[Span] = []
    current: list[int] | None = None
    for i, tok in enumerate(tokens):
        if tok.label == "B":
            if current is not None:
                spans.append(Span(doc_id, current[0], current[1]))
            current = [tok.start, tok.end]
        elif tok.label == "I":
            if current is not None:
                current[1] = tok.end
            elif mode == MODE_STRICT:
                raise OrphanIError(i)
            else:
                current = [tok.start, tok.end]
        else:
            if current is not None:
                spans.append(Span(doc_id, current[0], current[1]))
                current = None
    if current is not None:
        spans.append(Span(doc_id, current[0], current[1]))
    return spans


def encode_bio(spans: Sequence[Span], tokens: Sequence[tuple[int, int]]) -> list[str]:
    """Inverse of :func:`decode_bio` for aligned, non-overlapping spans.

    Tokens fully inside a span get B (first token of the span) or I;
    everything else gets O. Span boundaries must coincide with token
    boundaries, otherwise MisalignedSpanError.
    """
    _check_token_order(tokens)
    ordered = sorted(spans, key=lambda s: (s.start, s.end))
    for prev, cur in zip(ordered, ordered[1:]):
        if cur.start < prev.end:
            raise OverlappingSpansError(cur.start, cur.end)

    labels = ["O"] * len(tokens)
    for span in ordered:
        inside = [
            i
            for i, (ts, te) in enumerate(tokens)
            if ts < span.end and te > span.start  # any overlap with the span
        ]
        if not inside:
            raise MisalignedSpanError(span.start, span.end)
        first, last = tokens[inside[0]], tokens[inside[-1]]
        covered = all(tokens[i][0] >= span.start and tokens[i][1] <= span.end for i in inside)
        if not covered or first[0] != span.start or last[1] != span.end:
            raise MisalignedSpanError(span.start, span.end)
        labels[inside[0]] = "B"
        for i in inside[1:]:
            labels[i] = "I"
    return labels


# --- JSON Lines wire formats -----------------------------------------------


def parse_labeled_docs(
    lines: Iterable[str],
) -> Iterator[tuple[int, str, str | None, list[LabeledToken]]]:
    """Parse token-label JSONL into ``(lineno, doc_id, text, tokens)``.

    One object per document: ``{"doc_id": ..., "text": <optional>,
    "tokens": [{"start":..,"end":..,"label":"B|I|O"}, ...]}``.
    """
    for lineno, line in enumerate(lines, start=1):
        if line == "":
            continue
        try:
            obj = json.loads(line)
        except ValueError as exc:
            raise MalformedLineError(lineno, f"invalid JSON: {exc}") from exc
        if not isinstance(obj, dict) or not isinstance(obj.get("doc_id"), str):
            raise MalformedLineError(lineno, "document needs a string 'doc_id'")
        text = obj.get("text")
        if text is not None and not isinstance(text, str):
            raise MalformedLineError(lineno, "'text' must be a string when present")
        raw_tokens = obj.get("tokens")
        if not isinstance(raw_tokens, list):
            raise MalformedLineError(lineno, "'tokens' must be an array")
        tokens: list[LabeledToken] = []
        for tok in raw_tokens:
            if not isinstance(tok, dict):
                raise MalformedLineError(lineno, "each token must be an object")
            start, end, label = tok.get("start"), tok.get("end"), tok.get("label")
            if (
                not isinstance(start, int)
                or not isinstance(end, int)
                or isinstance(start, bool)
                or isinstance(end, bool)
                or not isinstance(label, str)
            ):
                raise MalformedLineError(lineno, "token needs integer 'start'/'end' and string 'label'")
            try:
                tokens.append(LabeledToken(start, end, label))
            except ValueError as exc:
                raise MalformedLineError(lineno, str(exc)) from exc
        yield lineno, obj["doc_id"], text, tokens


def span_to_json(span: Span) -> str:
    """One mention as a JSONL line: doc_id, start, end, text."""
    return json.dumps(
        {"doc_id": span.doc_id, "start": span.start, "end": span.end, "text": span.text},
        ensure_ascii=False,
        separators=(",", ":"),
    )


def parse_mentions(lines: Iterable[str]) -> Iterator[tuple[int, Span, str]]:
    """Parse mention JSONL into ``(lineno, span, mention_id)``.

    A line may carry an explicit ``"id"``; otherwise the mention id is
    ``"<doc_id>:<start>-<end>"``, the convention the embed-fixture
    command derives as well.
    """
    for lineno, line in enumerate(lines, start=1):
        if line == "":
            continue
        try:
            obj = json.loads(line)
        except ValueError as exc:
            raise MalformedLineError(lineno, f"invalid JSON: {exc}") from exc
        if not isinstance(obj, dict):
            raise MalformedLineError(lineno, "mention must be a JSON object")
        doc_id, start, end = obj.get("doc_id"), obj.get("start"), obj.get("end")
        if (
            not isinstance(doc_id, str)
            or not isinstance(start, int)
            or not isinstance(end, int)
            or isinstance(start, bool)
            or isinstance(end, bool)
        ):
            raise MalformedLineError(lineno, "mention needs string 'doc_id' and integer 'start'/'end'")
        text = obj.get("text")
        if text is not None and not isinstance(text, str):
            raise MalformedLineError(lineno, "'text' must be a string when present")
        mention_id = obj.get("id")
        if mention_id is None:
            mention_id = span_id(doc_id, start, end)
        elif not isinstance(mention_id, str):
            raise MalformedLineError(lineno, "'id' must be a string when present")
        try:
            span = Span(doc_id, start, end, text)
        except ValueError as exc:
            raise MalformedLineError(lineno, str(exc)) from exc
        yield lineno, span, mention_id


def span_id(doc_id: str, start: int, end: int) -> str:
    """Derived mention id: ``<doc_id>:<start>-<end>``."""
    return f"{doc_id}:{start}-{end}"
