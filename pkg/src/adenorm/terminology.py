"""Terminology loading and lookup.

The linking target space is a flat table of lowest-level terms (LLTs),
each mapped to exactly one preferred term (PT). The on-disk format is a
strict TSV: a mandatory header, no quoting or escaping, fields free of
tabs and newlines. LLT text is stored verbatim; any case folding happens
at embedding time, never here.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import BinaryIO, Iterable

from .errors import (
    DuplicateLltError,
    EmptyTerminologyError,
    InconsistentPtError,
    MalformedRowError,
    MissingHeaderError,
    UnknownLltError,
    UnknownPtError,
)

HEADER = "llt_code\tllt_text\tpt_code\tpt_text"
_FIELD_COUNT = 4


@dataclass(frozen=True)
class TermRecord:
    """One LLT row with its PT mapping."""

    llt_code: str
    llt_text: str
    pt_code: str
    pt_text: str


class Terminology:
    """Immutable, indexed collection of :class:`TermRecord`.

    Duplicate llt_text across distinct llt_codes is allowed (real
    terminologies contain synonyms); duplicate llt_codes are not.
    Safe to share read-only across threads once constructed.
    """

    __slots__ = ("records", "llt_index", "pt_index")

    def __init__(self, records: Iterable[TermRecord]):
        records = tuple(records)
        if not records:
            raise EmptyTerminologyError("terminology has no records")
        llt_index: dict[str, TermRecord] = {}
        pt_index: dict[str, tuple[str, list[str]]] = {}
        for rec in records:
            if rec.llt_code in llt_index:
                raise DuplicateLltError(rec.llt_code)
            llt_index[rec.llt_code] = rec
            bucket = pt_index.get(rec.pt_code)
            if bucket is None:
                pt_index[rec.pt_code] = (rec.pt_text, [rec.llt_code])
            else:
                if bucket[0] != rec.pt_text:
                    raise InconsistentPtError(rec.pt_code)
                bucket[1].append(rec.llt_code)
        self.records = records
        self.llt_index = llt_index
        self.pt_index = pt_index

    def __len__(self) -> int:
        return len(self.records)

    def __contains__(self, llt_code: str) -> bool:
        return llt_code in self.llt_index

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Terminology):
            return NotImplemented
        return self.records == other.records

    def __hash__(self) -> int:  # records define identity
        return hash(self.records)

    def pt_of(self, llt_code: str) -> tuple[str, str]:
        """Return ``(pt_code, pt_text)`` for an LLT code."""
        rec = self.llt_index.get(llt_code)
        if rec is None:
            raise UnknownLltError(llt_code)
        return rec.pt_code, rec.pt_text

    def llts_of_pt(self, pt_code: str) -> list[str]:
        """Return the llt_codes of a PT, in record order."""
        bucket = self.pt_index.get(pt_code)
        if bucket is None:
            raise UnknownPtError(pt_code)
        return list(bucket[1])


def load_terminology(source: BinaryIO | bytes) -> Terminology:
    """Parse terminology TSV from a byte stream or bytes.

    The stream must be UTF-8 with the exact header line first. LF and
    CRLF line endings are both accepted; trailing blank lines are
    ignored. Raises MissingHeaderError, MalformedRowError,
    DuplicateLltError, InconsistentPtError, or EmptyTerminologyError.
    """
    data = source if isinstance(source, bytes) else source.read()
    lines = data.decode("utf-8").split("\n")
    lines = [line[:-1] if line.endswith("\r") else line for line in lines]
    while lines and lines[-1] == "":
        lines.pop()
    if not lines or lines[0] != HEADER:
        raise MissingHeaderError(f"first line must be {HEADER!r}")

    records = []
    for lineno, line in enumerate(lines[1:], start=2):
        fields = line.split("\t")
        if len(fields) != _FIELD_COUNT:
            raise MalformedRowError(lineno, f"expected {_FIELD_COUNT} fields, got {len(fields)}")
        if any(f == "" for f in fields):
            raise MalformedRowError(lineno, "empty field")
        if any("\r" in f for f in fields):
            raise MalformedRowError(lineno, "field contains a carriage return")
        records.append(TermRecord(*fields))
    return Terminology(records)


def write_terminology(terminology: Terminology, sink: BinaryIO) -> None:
    """Write terminology back out as TSV (UTF-8, LF line endings).

    Inverse of :func:`load_terminology`: a load of the written bytes
    yields an equal Terminology.
    """
    out = [HEADER]
    for rec in terminology.records:
        fields = (rec.llt_code, rec.llt_text, rec.pt_code, rec.pt_text)
        for f in fields:
            if "\t" in f or "\n" in f or "\r" in f or f == "":
                raise ValueError(f"field not representable in TSV: {f!r}")
        out.append("\t".join(fields))
    out.append("")
    sink.write("\n".join(out).encode("utf-8"))
