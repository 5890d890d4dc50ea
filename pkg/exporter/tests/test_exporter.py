import json
import math
import shutil
import subprocess
import sys

import pytest

from ade_exporter import (
    DuplicateIdError,
    ExporterError,
    ExportJob,
    MalformedLineError,
    ModelLoadError,
    export,
)
from ade_exporter.cli import main as cli_main

TEXTS = ["nausea", "head ache", "rash on arm", "dizzy spells", "nausea"]


def _write_texts(path, texts, ids=None):
    ids = ids or [f"id{i}" for i in range(len(texts))]
    with open(path, "w", encoding="utf-8") as fh:
        for entry_id, text in zip(ids, texts):
            fh.write(json.dumps({"id": entry_id, "text": text}) + "\n")
    return ids


def _read_embedding_file(path):
    lines = path.read_text().splitlines()
    meta = json.loads(lines[0])
    entries = [json.loads(l) for l in lines[1:]]
    return meta, entries


def _engine_cli(*args):
    """Run the installed primary engine CLI (external interface)."""
    exe = shutil.which("adenorm")
    cmd = [exe, *map(str, args)] if exe else [sys.executable, "-m", "adenorm.cli", *map(str, args)]
    return subprocess.run(cmd, capture_output=True, text=True)


class TestExport:
    def test_meta_order_and_ids_verbatim(self, tiny_model_dir, tmp_path):
        ids = ["z-9", "a 1", "émoji🤢", "id3", "id4"]
        _write_texts(tmp_path / "in.jsonl", TEXTS, ids)
        job = ExportJob(tiny_model_dir, str(tmp_path / "in.jsonl"), str(tmp_path / "out.jsonl"))
        assert export(job) == 5
        meta, entries = _read_embedding_file(tmp_path / "out.jsonl")
        assert meta["encoder"] == tiny_model_dir
        assert meta["dim"] == 32
        assert [e["id"] for e in entries] == ids
        for e in entries:
            assert len(e["v"]) == 32
            assert all(math.isfinite(x) for x in e["v"])

    def test_vectors_not_normalized_by_exporter(self, tiny_model_dir, tmp_path):
        _write_texts(tmp_path / "in.jsonl", TEXTS[:3])
        export(ExportJob(tiny_model_dir, str(tmp_path / "in.jsonl"), str(tmp_path / "out.jsonl")))
        _, entries = _read_embedding_file(tmp_path / "out.jsonl")
        norms = [math.sqrt(sum(x * x for x in e["v"])) for e in entries]
        assert any(abs(n - 1.0) > 1e-6 for n in norms)

    def test_duplicate_text_cosine_after_normalization(self, tiny_model_dir, tmp_path):
        _write_texts(tmp_path / "in.jsonl", ["nausea", "nausea"], ["a", "b"])
        export(ExportJob(tiny_model_dir, str(tmp_path / "in.jsonl"), str(tmp_path / "out.jsonl")))
        _, entries = _read_embedding_file(tmp_path / "out.jsonl")
        u, v = entries[0]["v"], entries[1]["v"]
        nu = math.sqrt(sum(x * x for x in u))
        nv = math.sqrt(sum(x * x for x in v))
        cos = sum(a * b for a, b in zip(u, v)) / (nu * nv)
        assert cos >= 0.99999

    def test_rerun_same_job_within_1e5(self, tiny_model_dir, tmp_path):
        _write_texts(tmp_path / "in.jsonl", TEXTS)
        job1 = ExportJob(tiny_model_dir, str(tmp_path / "in.jsonl"), str(tmp_path / "r1.jsonl"))
        job2 = ExportJob(tiny_model_dir, str(tmp_path / "in.jsonl"), str(tmp_path / "r2.jsonl"))
        export(job1)
        export(job2)
        _, e1 = _read_embedding_file(tmp_path / "r1.jsonl")
        _, e2 = _read_embedding_file(tmp_path / "r2.jsonl")
        for a, b in zip(e1, e2):
            assert max(abs(x - y) for x, y in zip(a["v"], b["v"])) <= 1e-5

    def test_batch_size_does_not_change_results_materially(self, tiny_model_dir, tmp_path):
        _write_texts(tmp_path / "in.jsonl", TEXTS)
        export(ExportJob(tiny_model_dir, str(tmp_path / "in.jsonl"),
                         str(tmp_path / "b1.jsonl"), batch_size=1))
        export(ExportJob(tiny_model_dir, str(tmp_path / "in.jsonl"),
                         str(tmp_path / "b8.jsonl"), batch_size=8))
        _, e1 = _read_embedding_file(tmp_path / "b1.jsonl")
        _, e8 = _read_embedding_file(tmp_path / "b8.jsonl")
        for a, b in zip(e1, e8):
            assert max(abs(x - y) for x, y in zip(a["v"], b["v"])) <= 1e-4

    def test_empty_input_meta_line_only(self, tiny_model_dir, tmp_path):
        (tmp_path / "in.jsonl").write_bytes(b"")
        export(ExportJob(tiny_model_dir, str(tmp_path / "in.jsonl"), str(tmp_path / "out.jsonl")))
        lines = (tmp_path / "out.jsonl").read_text().splitlines()
        assert len(lines) == 1
        assert json.loads(lines[0])["dim"] == 32

    def test_mention_file_ids_derived(self, tiny_model_dir, tmp_path):
        with open(tmp_path / "mentions.jsonl", "w") as fh:
            fh.write('{"doc_id":"t1","start":6,"end":12,"text":"nausea"}\n')
        export(ExportJob(tiny_model_dir, str(tmp_path / "mentions.jsonl"), str(tmp_path / "out.jsonl")))
        _, entries = _read_embedding_file(tmp_path / "out.jsonl")
        assert entries[0]["id"] == "t1:6-12"

    def test_malformed_line_named(self, tiny_model_dir, tmp_path):
        (tmp_path / "in.jsonl").write_text('{"id":"a","text":"ok"}\n{"id":"b"}\n')
        with pytest.raises(MalformedLineError) as exc:
            export(ExportJob(tiny_model_dir, str(tmp_path / "in.jsonl"), str(tmp_path / "o.jsonl")))
        assert exc.value.lineno == 2

    def test_duplicate_ids_rejected(self, tiny_model_dir, tmp_path):
        _write_texts(tmp_path / "in.jsonl", ["x", "y"], ["a", "a"])
        with pytest.raises(DuplicateIdError):
            export(ExportJob(tiny_model_dir, str(tmp_path / "in.jsonl"), str(tmp_path / "o.jsonl")))

    def test_model_load_failure(self, tmp_path):
        _write_texts(tmp_path / "in.jsonl", ["x"])
        with pytest.raises(ModelLoadError):
            export(ExportJob(str(tmp_path / "no-such-model"), str(tmp_path / "in.jsonl"),
                             str(tmp_path / "o.jsonl")))

    def test_bad_batch_size(self, tmp_path):
        with pytest.raises(ValueError):
            ExportJob("m", "i", "o", batch_size=0)


class TestPrimaryLoaderAcceptance:
    """The engine itself must consume exporter output with zero errors."""

    def test_full_normalize_round_trip_through_engine(self, tiny_model_dir, tmp_path):
        texts = ["nausea", "head ache", "rash"]
        llt_ids = ["10028813", "10019211", "10037844"]
        _write_texts(tmp_path / "term_texts.jsonl", texts, llt_ids)
        rows = ["llt_code\tllt_text\tpt_code\tpt_text"] + [
            f"{i}\t{t}\t{i}\t{t.title()}" for i, t in zip(llt_ids, texts)
        ]
        (tmp_path / "terms.tsv").write_text("\n".join(rows) + "\n")
        with open(tmp_path / "mentions.jsonl", "w") as fh:
            fh.write('{"doc_id":"t1","start":0,"end":6,"text":"nausea"}\n')
            fh.write('{"doc_id":"t2","start":0,"end":4,"text":"rash"}\n')

        assert cli_main(["export", "--model", tiny_model_dir,
                         "--input", str(tmp_path / "term_texts.jsonl"),
                         "--output", str(tmp_path / "terms.emb.jsonl")]) == 0
        assert cli_main(["export", "--model", tiny_model_dir,
                         "--input", str(tmp_path / "mentions.jsonl"),
                         "--output", str(tmp_path / "mentions.emb.jsonl")]) == 0

        proc = _engine_cli(
            "normalize", tmp_path / "mentions.jsonl",
            "--terminology", tmp_path / "terms.tsv",
            "--term-emb", tmp_path / "terms.emb.jsonl",
            "--mention-emb", tmp_path / "mentions.emb.jsonl",
            "-o", tmp_path / "preds.jsonl",
        )
        assert proc.returncode == 0, proc.stderr
        preds = [json.loads(l) for l in (tmp_path / "preds.jsonl").read_text().splitlines()]
        assert len(preds) == 2
        assert {p["doc_id"] for p in preds} == {"t1", "t2"}
        assert all(p["pt_code"] in llt_ids for p in preds)

    def test_empty_export_accepted_as_mention_side(self, tiny_model_dir, tmp_path):
        texts = ["nausea"]
        _write_texts(tmp_path / "term_texts.jsonl", texts, ["L1"])
        (tmp_path / "terms.tsv").write_text(
            "llt_code\tllt_text\tpt_code\tpt_text\nL1\tnausea\tP1\tNausea\n"
        )
        (tmp_path / "none.jsonl").write_bytes(b"")
        assert cli_main(["export", "--model", tiny_model_dir,
                         "--input", str(tmp_path / "term_texts.jsonl"),
                         "--output", str(tmp_path / "terms.emb.jsonl")]) == 0
        assert cli_main(["export", "--model", tiny_model_dir,
                         "--input", str(tmp_path / "none.jsonl"),
                         "--output", str(tmp_path / "empty.emb.jsonl")]) == 0
        proc = _engine_cli(
            "normalize", tmp_path / "none.jsonl",
            "--terminology", tmp_path / "terms.tsv",
            "--term-emb", tmp_path / "terms.emb.jsonl",
            "--mention-emb", tmp_path / "empty.emb.jsonl",
            "-o", tmp_path / "preds.jsonl",
        )
        assert proc.returncode == 0, proc.stderr
        assert (tmp_path / "preds.jsonl").read_bytes() == b""


class TestCli:
    def test_usage_errors_exit_1(self, tmp_path):
        assert cli_main([]) == 1
        assert cli_main(["export", "--model", "m"]) == 1  # missing required flags

    def test_missing_input_exit_1(self, tiny_model_dir, tmp_path):
        assert cli_main(["export", "--model", tiny_model_dir,
                         "--input", str(tmp_path / "absent.jsonl"),
                         "--output", str(tmp_path / "o.jsonl")]) == 1

    def test_data_error_exit_2(self, tiny_model_dir, tmp_path):
        (tmp_path / "in.jsonl").write_text("not json\n")
        assert cli_main(["export", "--model", tiny_model_dir,
                         "--input", str(tmp_path / "in.jsonl"),
                         "--output", str(tmp_path / "o.jsonl")]) == 2

    def test_model_failure_exit_2(self, tmp_path):
        (tmp_path / "in.jsonl").write_text('{"id":"a","text":"x"}\n')
        assert cli_main(["export", "--model", str(tmp_path / "missing-model"),
                         "--input", str(tmp_path / "in.jsonl"),
                         "--output", str(tmp_path / "o.jsonl")]) == 2
