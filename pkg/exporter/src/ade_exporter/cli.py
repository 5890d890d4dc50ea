"""ade-exporter command line.

Exit codes mirror the engine's: 0 success, 1 usage errors and
unreadable files, 2 data or model failures.
"""

from __future__ import annotations

import argparse
import sys

from . import __version__
from .exporter import ExporterError, ExportJob, export


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ade-exporter",
                     description="Batch-compute sentence embeddings into the engine's JSONL format")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("export", help="encode a texts file with a pretrained model")
    p.add_argument("--model", required=True, metavar="REF",
                   help="sentence-transformer checkpoint: hub id or local path")
    p.add_argument("--input", required=True, metavar="JSONL",
                   help="texts JSONL (id + text per line; mention files work directly)")
    p.add_argument("--output", required=True, metavar="JSONL", help="embedding file to write")
    p.add_argument("--batch-size", type=int, default=32, metavar="N")
    p.add_argument("--device", default="cpu", metavar="DEV",
                   help="torch device hint (default cpu)")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"ade-exporter: error: {exc}", file=sys.stderr)
        return 1
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 1
    if args.batch_size < 1:
        print("ade-exporter: error: --batch-size must be >= 1", file=sys.stderr)
        return 1
    job = ExportJob(
        model_ref=args.model,
        input_path=args.input,
        output_path=args.output,
        batch_size=args.batch_size,
        device=args.device,
    )
    try:
        count = export(job)
    except FileNotFoundError as exc:
        print(f"ade-exporter: error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"ade-exporter: error: {exc}", file=sys.stderr)
        return 1
    except ExporterError as exc:
        print(f"ade-exporter: error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {count} embeddings to {args.output}", file=sys.stderr)
    return 0


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
