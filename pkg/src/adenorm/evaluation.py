"""Scoring of predicted normalized spans against gold annotations.

Matching is greedy one-to-one: predictions are processed in
(doc_id, start, end, pt_code) order and each consumes the first
unmatched gold (same order) with the same doc_id, the same pt_code, and
the span relation of the chosen mode. ``strict`` requires identical
offsets; ``overlap`` (the default, the usual convention for relaxed
normalization metrics) requires the spans to intersect.

The unseen subset restricts both sides to pt_codes absent from the
training gold, i.e. normalization targets the system could not have
seen. All ratios are 0 on a zero denominator.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

from .errors import MalformedLineError

MATCH_STRICT = "strict"
MATCH_OVERLAP = "overlap"
MATCH_MODES = (MATCH_STRICT, MATCH_OVERLAP)


@dataclass(frozen=True)
class Annotation:
    """A normalized mention: document span plus preferred-term code."""

    doc_id: str
    start: int
    end: int
    pt_code: str

    def __post_init__(self):
        if not self.start < self.end:
            raise ValueError(f"need start < end, got ({self.start}, {self.end})")


@dataclass(frozen=True)
class MetricBlock:
    """Counts and derived metrics for one evaluation slice."""

    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class EvalReport:
    overall: MetricBlock
    unseen: MetricBlock
    match_mode: str
    # True when no training gold was supplied and unseen simply mirrors
    # overall rather than being a real restriction.
    unseen_mirrors_overall: bool


def _sort_key(a: Annotation) -> tuple[str, int, int, str]:
    return (a.doc_id, a.start, a.end, a.pt_code)


def _spans_match(pred: Annotation, gold: Annotation, mode: str) -> bool:
    if mode == MATCH_STRICT:
        return pred.start == gold.start and pred.end == gold.end
    return pred.start < gold.end and gold.start < pred.end


def match_annotations(
    preds: Sequence[Annotation],
    golds: Sequence[Annotation],
    mode: str = MATCH_OVERLAP,
) -> tuple[int, int, int]:
    """Greedy one-to-one matching; returns ``(tp, fp, fn)``.

    ``tp + fp == len(preds)`` and ``tp + fn == len(golds)`` always hold.
    """
    if mode not in MATCH_MODES:
        raise ValueError(f"mode must be one of {MATCH_MODES}, got {mode!r}")

    golds_sorted = sorted(golds, key=_sort_key)
    pool: dict[tuple[str, str], list[int]] = {}
    for j, gold in enumerate(golds_sorted):
        pool.setdefault((gold.doc_id, gold.pt_code), []).append(j)

    used = [False] * len(golds_sorted)
    tp = 0
    for pred in sorted(preds, key=_sort_key):
        for j in pool.get((pred.doc_id, pred.pt_code), ()):
            if not used[j] and _spans_match(pred, golds_sorted[j], mode):
                used[j] = True
                tp += 1
                break
    return tp, len(preds) - tp, len(golds) - tp


def prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    """Precision, recall, F1 from counts; 0 on zero denominators."""
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    return precision, recall, f1_from_pr(precision, recall)


def f1_from_pr(p: float, r: float) -> float:
    """Harmonic mean of precision and recall; 0 when both are 0."""
    return 2.0 * p * r / (p + r) if p + r else 0.0


def _block(preds: Sequence[Annotation], golds: Sequence[Annotation], mode: str) -> MetricBlock:
    tp, fp, fn = match_annotations(preds, golds, mode)
    precision, recall, f1 = prf(tp, fp, fn)
    return MetricBlock(tp, fp, fn, precision, recall, f1)


def evaluate(
    preds: Sequence[Annotation],
    golds: Sequence[Annotation],
    train_golds: Sequence[Annotation] | None = None,
    mode: str = MATCH_OVERLAP,
) -> EvalReport:
    """Score predictions overall and on the unseen subset.

    Unseen golds/preds are those whose pt_code does not occur in
    ``train_golds``. With ``train_golds=None`` the unseen block mirrors
    overall and the report says so.
    """
    overall = _block(preds, golds, mode)
    if train_golds is None:
        return EvalReport(overall, overall, mode, unseen_mirrors_overall=True)
    seen = {t.pt_code for t in train_golds}
    unseen = _block(
        [p for p in preds if p.pt_code not in seen],
        [g for g in golds if g.pt_code not in seen],
        mode,
    )
    return EvalReport(overall, unseen, mode, unseen_mirrors_overall=False)


def report_to_dict(report: EvalReport) -> dict:
    """JSON-ready view of a report."""
    def block(b: MetricBlock) -> dict:
        return {
            "tp": b.tp,
            "fp": b.fp,
            "fn": b.fn,
            "precision": b.precision,
            "recall": b.recall,
            "f1": b.f1,
        }

    return {
        "match_mode": report.match_mode,
        "unseen_mirrors_overall": report.unseen_mirrors_overall,
        "overall": block(report.overall),
        "unseen": block(report.unseen),
    }


def format_report_table(report: EvalReport) -> str:
    """Plain-text metrics table, three decimals, overall then unseen."""
    header_groups = f"{'Model':<8}  {'Overall':<26}  {'Unseen':<26}"
    header_cols = (
        f"{'':<8}  {'Precision':>9} {'Recall':>7} {'F1-score':>8} "
        f" {'Precision':>9} {'Recall':>7} {'F1-score':>8}"
    )
    row = (
        f"{'system':<8}  "
        f"{report.overall.precision:>9.3f} {report.overall.recall:>7.3f} {report.overall.f1:>8.3f} "
        f" {report.unseen.precision:>9.3f} {report.unseen.recall:>7.3f} {report.unseen.f1:>8.3f}"
    )
    lines = [header_groups, header_cols, row]
    if report.unseen_mirrors_overall:
        lines.append("(no training gold supplied; unseen mirrors overall)")
    return "\n".join(lines)


# --- JSON Lines wire format -------------------------------------------------


def parse_annotations(lines: Iterable[str]) -> Iterator[tuple[int, Annotation]]:
    """Parse annotation JSONL: doc_id, start, end, pt_code per line.

    Extra keys (pt_text, rrf_score, ...) are ignored so prediction files
    written by the normalize command evaluate directly.
    """
    for lineno, line in enumerate(lines, start=1):
        if line == "":
            continue
        try:
            obj = json.loads(line)
        except ValueError as exc:
            raise MalformedLineError(lineno, f"invalid JSON: {exc}") from exc
        if not isinstance(obj, dict):
            raise MalformedLineError(lineno, "annotation must be a JSON object")
        doc_id, start, end, pt_code = (
            obj.get("doc_id"),
            obj.get("start"),
            obj.get("end"),
            obj.get("pt_code"),
        )
        if (
            not isinstance(doc_id, str)
            or not isinstance(start, int)
            or not isinstance(end, int)
            or isinstance(start, bool)
            or isinstance(end, bool)
            or not isinstance(pt_code, str)
        ):
            raise MalformedLineError(
                lineno, "annotation needs string 'doc_id'/'pt_code' and integer 'start'/'end'"
            )
        try:
            yield lineno, Annotation(doc_id, start, end, pt_code)
        except ValueError as exc:
            raise MalformedLineError(lineno, str(exc)) from exc
