"""Command-line pipeline: decode, embed-fixture, normalize, rank, evaluate.

Exit codes: 0 success, 1 usage/flag errors (including unreadable input
files), 2 data/validation errors. Diagnostics go to stderr; data goes to
files or stdout only. Any command run twice on identical inputs produces
byte-identical output.
"""

from __future__ import annotations

import argparse
import json
import sys
from typing import BinaryIO

from . import __version__
from .embeddings import EmbeddingSet, fixture_embed, write_embeddings
from .errors import AdeNormError, MalformedLineError
from .evaluation import (
    MATCH_MODES,
    MATCH_OVERLAP,
    evaluate,
    format_report_table,
    parse_annotations,
    report_to_dict,
)
from .pipeline import Normalizer, PipelineConfig, stack_mention_vectors
from .retrieval import AGGREGATION_TOP_LLT, AGGREGATIONS, DEFAULT_RRF_K
from .spans import (
    MODE_LENIENT,
    MODES,
    Span,
    decode_bio,
    parse_labeled_docs,
    parse_mentions,
    span_id,
    span_to_json,
)

_JSON_COMPACT = {"ensure_ascii": False, "separators": (",", ":")}


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse maps usage errors to exit 2 by default; this spec wants 1."""

    def error(self, message):
        raise _UsageError(message)


def _read_lines(path: str) -> list[str]:
    with open(path, "rb") as fh:
        text = fh.read().decode("utf-8")
    lines = text.split("\n")
    while lines and lines[-1] == "":
        lines.pop()
    return lines


class _Output:
    """File or stdout sink writing bytes, created only on success paths."""

    def __init__(self, path: str):
        self.path = path

    def __enter__(self) -> BinaryIO:
        if self.path == "-":
            self._fh = None
            return sys.stdout.buffer
        self._fh = open(self.path, "wb")
        return self._fh

    def __exit__(self, *exc):
        if self._fh is not None:
            self._fh.close()
        else:
            sys.stdout.buffer.flush()
        return False


def _positive_int(value: str) -> int:
    n = int(value)
    if n < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return n


def _positive_float(value: str) -> float:
    x = float(value)
    if not x > 0:
        raise argparse.ArgumentTypeError("must be > 0")
    return x


def _add_common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--threads", type=_positive_int, default=1, metavar="N",
                        help="worker threads for per-mention fan-out (default 1)")
    parser.add_argument("--k", type=_positive_float, default=DEFAULT_RRF_K, metavar="REAL",
                        help=f"reciprocal-rank fusion constant (default {DEFAULT_RRF_K:g})")
    parser.add_argument("--aggregation", choices=AGGREGATIONS, default=AGGREGATION_TOP_LLT,
                        help="how fused LLT scores pick a PT (default top-llt)")
    parser.add_argument("--match", choices=MATCH_MODES, default=MATCH_OVERLAP,
                        help="span matching mode for evaluation (default overlap)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="adenorm", description=__doc__.split("\n", 1)[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("decode", help="BIO token labels -> mention spans")
    p.add_argument("labels_file", help="token-label JSONL (one document per line)")
    p.add_argument("-o", "--output", default="-", help="mention JSONL output (default stdout)")
    p.add_argument("--mode", choices=MODES, default=MODE_LENIENT,
                   help="orphan-I handling (default lenient)")
    _add_common_flags(p)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("embed-fixture", help="texts -> deterministic fixture embeddings")
    p.add_argument("texts_file", help="JSONL with id and text fields (mention files work directly)")
    p.add_argument("-o", "--output", default="-", help="embedding JSONL output (default stdout)")
    p.add_argument("--dim", type=_positive_int, default=256, help="vector dimension (default 256)")
    p.add_argument("--id-field", default="auto", metavar="FIELD",
                   help="field holding the entry id; 'auto' uses 'id' when present, "
                        "else doc_id:start-end (default auto)")
    _add_common_flags(p)
    p.set_defaults(func=cmd_embed_fixture)

    for name, help_text in (("normalize", "mentions -> preferred-term predictions"),
                            ("rank", "mentions -> fused top-N ranking dump")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("mentions_file", help="mention JSONL (decode output or id-bearing lines)")
        p.add_argument("-o", "--output", default="-", help="output JSONL (default stdout)")
        p.add_argument("--terminology", required=True, metavar="TSV", help="terminology TSV")
        p.add_argument("--term-emb", action="append", required=True, metavar="JSONL",
                       dest="term_embs", help="term embedding file, one per encoder (repeatable)")
        p.add_argument("--mention-emb", action="append", required=True, metavar="JSONL",
                       dest="mention_embs",
                       help="mention embedding file, paired positionally with --term-emb")
        if name == "rank":
            p.add_argument("--top-n", type=_positive_int, default=10,
                           help="fused entries per mention (default 10)")
        _add_common_flags(p)
        p.set_defaults(func=cmd_normalize if name == "normalize" else cmd_rank)

    p = sub.add_parser("evaluate", help="score predictions against gold annotations")
    p.add_argument("pred_file", help="prediction annotation JSONL")
    p.add_argument("gold_file", help="gold annotation JSONL")
    p.add_argument("--train-gold", metavar="JSONL",
                   help="training gold annotations defining the seen PT codes")
    _add_common_flags(p)
    p.set_defaults(func=cmd_evaluate)

    return parser


def cmd_decode(args) -> int:
    out_lines = []
    for _, doc_id, text, tokens in parse_labeled_docs(_read_lines(args.labels_file)):
        for span in decode_bio(doc_id, tokens, args.mode):
            if text is not None:
                span = Span(span.doc_id, span.start, span.end, text[span.start:span.end])
            out_lines.append(span_to_json(span))
    with _Output(args.output) as sink:
        sink.write("".join(line + "\n" for line in out_lines).encode("utf-8"))
    return 0


def cmd_embed_fixture(args) -> int:
    if args.dim < 1:
        raise _UsageError("--dim must be >= 1")
    entries: list[tuple[str, str]] = []
    for lineno, line in enumerate(_read_lines(args.texts_file), start=1):
        if line == "":
            continue
        try:
            obj = json.loads(line)
        except ValueError as exc:
            raise MalformedLineError(lineno, f"invalid JSON: {exc}") from exc
        if not isinstance(obj, dict):
            raise MalformedLineError(lineno, "entry must be a JSON object")
        entry_id = _entry_id(obj, args.id_field, lineno)
        text = obj.get("text")
        if not isinstance(text, str):
            raise MalformedLineError(lineno, "entry needs a string 'text' field")
        entries.append((entry_id, text))

    vectors = [fixture_embed(text, args.dim) for _, text in entries]
    embedding_set = EmbeddingSet(
        f"fixture-d{args.dim}", args.dim, [e for e, _ in entries], vectors
    )
    with _Output(args.output) as sink:
        write_embeddings(embedding_set, sink)
    return 0


def _entry_id(obj: dict, id_field: str, lineno: int) -> str:
    if id_field != "auto":
        value = obj.get(id_field)
        if not isinstance(value, str):
            raise MalformedLineError(lineno, f"entry needs a string {id_field!r} field")
        return value
    value = obj.get("id")
    if isinstance(value, str):
        return value
    doc_id, start, end = obj.get("doc_id"), obj.get("start"), obj.get("end")
    if isinstance(doc_id, str) and isinstance(start, int) and isinstance(end, int):
        return span_id(doc_id, start, end)
    raise MalformedLineError(lineno, "entry needs 'id' or doc_id/start/end to derive one")


def _load_pipeline(args, top_n: int | None):
    config = PipelineConfig(
        terminology_path=args.terminology,
        term_embedding_paths=list(args.term_embs),
        mention_embedding_paths=list(args.mention_embs),
        k=args.k,
        aggregation=args.aggregation,
        top_n=top_n if top_n is not None else 10,
    )
    terminology, term_sets, mention_sets = config.load()
    mentions = list(parse_mentions(_read_lines(args.mentions_file)))
    normalizer = Normalizer(terminology, term_sets, k=args.k)
    vectors = stack_mention_vectors(mention_sets, [mid for _, _, mid in mentions])
    return normalizer, mentions, vectors


def cmd_normalize(args) -> int:
    normalizer, mentions, vectors = _load_pipeline(args, top_n=None)
    results, _ = normalizer.link_batch(
        vectors, threads=args.threads, aggregation=args.aggregation
    )
    lines = []
    for (_, span, _), result in zip(mentions, results):
        lines.append(json.dumps({
            "doc_id": span.doc_id,
            "start": span.start,
            "end": span.end,
            "pt_code": result.pt_code,
            "pt_text": result.pt_text,
            "rrf_score": result.rrf_score,
        }, **_JSON_COMPACT))
    with _Output(args.output) as sink:
        sink.write("".join(line + "\n" for line in lines).encode("utf-8"))
    return 0


def cmd_rank(args) -> int:
    if args.top_n < 1:
        raise _UsageError("--top-n must be >= 1")
    normalizer, mentions, vectors = _load_pipeline(args, top_n=args.top_n)
    results, dumps = normalizer.link_batch(
        vectors, threads=args.threads, aggregation=args.aggregation, top_n=args.top_n
    )
    lines = []
    for (_, _, mention_id), result, dump in zip(mentions, results, dumps):
        lines.append(json.dumps({
            "mention_id": mention_id,
            "fused": [{"llt": llt, "score": score} for llt, score in dump],
            "pt_code": result.pt_code,
            "pt_text": result.pt_text,
        }, **_JSON_COMPACT))
    with _Output(args.output) as sink:
        sink.write("".join(line + "\n" for line in lines).encode("utf-8"))
    return 0


def cmd_evaluate(args) -> int:
    preds = [a for _, a in parse_annotations(_read_lines(args.pred_file))]
    golds = [a for _, a in parse_annotations(_read_lines(args.gold_file))]
    train = None
    if args.train_gold is not None:
        train = [a for _, a in parse_annotations(_read_lines(args.train_gold))]
    report = evaluate(preds, golds, train, args.match)
    out = json.dumps(report_to_dict(report), ensure_ascii=False, indent=2)
    sys.stdout.write(out + "\n\n" + format_report_table(report) + "\n")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"adenorm: error: {exc}", file=sys.stderr)
        return 1
    if getattr(args, "func", None) is None:
        parser.print_usage(sys.stderr)
        return 1
    try:
        return args.func(args)
    except _UsageError as exc:
        print(f"adenorm: error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"adenorm: error: {exc}", file=sys.stderr)
        return 1
    except UnicodeDecodeError as exc:
        print(f"adenorm: error: input is not valid UTF-8: {exc}", file=sys.stderr)
        return 2
    except AdeNormError as exc:
        print(f"adenorm: error: {exc}", file=sys.stderr)
        return 2


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
