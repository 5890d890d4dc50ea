import json

import pytest

from adenorm import TermRecord, Terminology

TERM_HEADER = "llt_code\tllt_text\tpt_code\tpt_text"


def tsv_bytes(*rows: tuple[str, str, str, str]) -> bytes:
    lines = [TERM_HEADER] + ["\t".join(r) for r in rows]
    return ("\n".join(lines) + "\n").encode("utf-8")


def embedding_bytes(encoder: str, dim: int, entries: list[tuple[str, list[float]]]) -> bytes:
    lines = [json.dumps({"encoder": encoder, "dim": dim})]
    lines += [json.dumps({"id": i, "v": v}) for i, v in entries]
    return ("\n".join(lines) + "\n").encode("utf-8")


def jsonl_bytes(objs: list[dict]) -> bytes:
    return "".join(json.dumps(o, ensure_ascii=False) + "\n" for o in objs).encode("utf-8")


@pytest.fixture
def mini_terminology() -> Terminology:
    return Terminology(
        [
            TermRecord("10028813", "nausea", "10028813", "Nausea"),
            TermRecord("10019211", "head ache", "10019211", "Headache"),
        ]
    )
