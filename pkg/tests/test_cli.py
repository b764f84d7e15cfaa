"""End-to-end command-line behavior, run in-process through main()."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from ecgalign.cli import ENV_CONFIG, main
from ecgalign.signal_io import (
    DatasetManifest,
    ManifestEntry,
    save_manifest,
    save_record,
)
from ecgalign.synthetic import generate


@pytest.fixture(scope="module")
def corpus(tmp_path_factory) -> Path:
    """Four synthetic records with reports and labels, plus a manifest."""
    root = tmp_path_factory.mktemp("corpus")
    specs = [
        ("rec0", 55, "sinus rhythm. normal ecg.", ["SR", "NORM"]),
        ("rec1", 70, "sinus rhythm. left bundle branch block.", ["SR", "LBBB"]),
        ("rec2", 90, "sinus rhythm. st depression.", ["SR", "STD"]),
        ("rec3", 120, "sinus tachycardia. normal ecg.", ["STACH", "NORM"]),
    ]
    entries = []
    for rec_id, bpm, report, labels in specs:
        syn = generate(bpm=bpm, fs=500, duration_s=10.0, noise_mv=0.02,
                       seed=bpm, record_id=rec_id)
        save_record(syn.record, root / f"{rec_id}.csv", format="csv")
        entries.append(ManifestEntry(
            record_path=f"{rec_id}.csv", report=report, labels=labels,
            split="train",
        ))
    save_manifest(DatasetManifest(entries), root / "manifest.jsonl")
    return root


@pytest.fixture(scope="module")
def trained(corpus: Path, tmp_path_factory) -> Path:
    """A checkpoint trained briefly on the corpus, reused across tests."""
    out = tmp_path_factory.mktemp("trained")
    ckpt = out / "model.ckpt"
    rc = main([
        "train", "--manifest", str(corpus / "manifest.jsonl"),
        "--out", str(ckpt), "--epochs", "2", "--batch-size", "4",
        "--patch-size", "500", "--hidden", "32", "--mlp-dim", "64",
        "--embed-dim", "16", "--max-text-len", "24",
    ])
    assert rc == 0
    assert ckpt.exists()
    return ckpt


def run(capsys, argv: list[str]) -> tuple[int, dict]:
    rc = main(argv)
    out = capsys.readouterr().out
    return rc, (json.loads(out) if out.strip() else {})


# ------------------------------------------------------------------ plumbing


def test_no_subcommand_is_usage_error(capsys) -> None:
    assert main([]) == 2


def test_unknown_flag_is_usage_error(corpus, capsys) -> None:
    rc = main(["delineate", "--in", str(corpus / "rec0.csv"), "--bogus"])
    assert rc == 2


def test_missing_input_is_domain_error(tmp_path, capsys) -> None:
    rc = main(["delineate", "--in", str(tmp_path / "nope.csv")])
    assert rc == 1


# ----------------------------------------------------------------- delineate


def test_delineate_reports_features_as_json(corpus, capsys) -> None:
    rc, out = run(capsys, ["delineate", "--in", str(corpus / "rec1.csv")])
    assert rc == 0
    assert out["id"] == "rec1"
    assert out["features"]["heart_rate_bpm"] == pytest.approx(70, abs=2)
    assert out["features"]["n_beats"] > 5


def test_delineate_writes_figure(corpus, tmp_path, capsys) -> None:
    fig = tmp_path / "delin.png"
    rc, out = run(capsys, [
        "delineate", "--in", str(corpus / "rec0.csv"), "--fig", str(fig),
    ])
    assert rc == 0
    assert fig.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


# ---------------------------------------------------------------- preprocess


def test_preprocess_standardizes_to_csv(corpus, tmp_path, capsys) -> None:
    out_path = tmp_path / "std.csv"
    rc, out = run(capsys, [
        "preprocess", "--in", str(corpus / "rec2.csv"),
        "--out", str(out_path), "--fs", "250", "--duration", "8",
    ])
    assert rc == 0
    assert out["fs"] == 250
    assert out["samples"] == 2000
    assert out_path.exists()


# ----------------------------------------------------------------------- wde


def test_wde_appends_measurements_to_report(corpus, capsys) -> None:
    rc, out = run(capsys, [
        "wde", "--in", str(corpus / "rec0.csv"),
        "--report", "sinus rhythm.",
    ])
    assert rc == 0
    assert out["report"] == "sinus rhythm."
    assert out["augmented"].startswith("sinus rhythm. ")
    assert "RR interval" in out["augmented"]


# ------------------------------------------------------- encode/index/retrieve


def test_encode_text_emits_unit_embedding(trained, capsys) -> None:
    rc, out = run(capsys, [
        "encode", "--ckpt", str(trained), "--text", "sinus rhythm.",
    ])
    assert rc == 0
    emb = np.asarray(out["embedding"])
    assert emb.ndim == 1
    assert np.linalg.norm(emb) == pytest.approx(1.0, abs=1e-5)


def test_index_then_retrieve_round_trip(
    corpus, trained, tmp_path, capsys
) -> None:
    idx = tmp_path / "idx.bin"
    rc, out = run(capsys, [
        "index", "--ckpt", str(trained),
        "--manifest", str(corpus / "manifest.jsonl"), "--out", str(idx),
    ])
    assert rc == 0
    assert out["size"] == 4

    rc, out = run(capsys, [
        "retrieve", "--index", str(idx), "--ckpt", str(trained),
        "--query-record", str(corpus / "rec1.csv"), "--k", "4",
    ])
    assert rc == 0
    assert len(out["ids"]) == 4
    assert set(out["ids"]) == {"rec0", "rec1", "rec2", "rec3"}
    # the query record itself is indexed, so it must rank first
    assert out["ids"][0] == "rec1"


def test_eval_retrieval_reports_recalls(corpus, trained, capsys) -> None:
    rc, out = run(capsys, [
        "eval-retrieval", "--ckpt", str(trained),
        "--manifest", str(corpus / "manifest.jsonl"), "--k", "1,4",
    ])
    assert rc == 0
    assert set(out["recall"]) == {"1", "4"}
    assert out["recall"]["4"]["ecg_to_text"] == 1.0


# ------------------------------------------------------------- classification


def test_zeroshot_scores_every_manifest_record(
    corpus, trained, capsys
) -> None:
    rc, out = run(capsys, [
        "zeroshot", "--ckpt", str(trained),
        "--manifest", str(corpus / "manifest.jsonl"),
    ])
    assert rc == 0
    assert len(out["top_label"]) == 4
    assert out["argmax_accuracy"] is None or 0.0 <= out["argmax_accuracy"] <= 1.0


def test_ddp_train_then_prompt(corpus, trained, tmp_path, capsys) -> None:
    clf = tmp_path / "clf.bin"
    rc, out = run(capsys, [
        "ddp-train", "--ckpt", str(trained),
        "--manifest", str(corpus / "manifest.jsonl"),
        "--out", str(clf), "--steps", "50",
    ])
    assert rc == 0
    assert clf.exists()

    rc, out = run(capsys, [
        "ddp-prompt", "--classifier", str(clf), "--ckpt", str(trained),
        "--in", str(corpus / "rec0.csv"),
    ])
    assert rc == 0
    assert "prompt" in out
    assert out["rhythm"] is None or isinstance(out["rhythm"], str)


# ------------------------------------------------------------------- metrics


def test_eval_report_scores_parallel_files(tmp_path, capsys) -> None:
    cand = tmp_path / "cand.txt"
    ref = tmp_path / "ref.txt"
    cand.write_text("sinus rhythm is present\nleft bundle branch block\n")
    ref.write_text("sinus rhythm is present\nright bundle branch block\n")
    rc, out = run(capsys, [
        "eval-report", "--candidates", str(cand), "--references", str(ref),
    ])
    assert rc == 0
    assert out["n"] == 2
    assert 0.0 <= out["bleu"] <= 1.0
    assert out["rouge_l"] > 0.5
    assert "ce" in out


# ------------------------------------------------------------ instruct-build


def test_instruct_build_writes_jsonl(corpus, tmp_path, capsys) -> None:
    out_path = tmp_path / "instruct.jsonl"
    rc, out = run(capsys, [
        "instruct-build", "--manifest", str(corpus / "manifest.jsonl"),
        "--out", str(out_path), "--kind", "mixed",
    ])
    assert rc == 0
    lines = [json.loads(l) for l in out_path.read_text().splitlines()]
    assert len(lines) == out["n_records"]
    kinds = {l["kind"] for l in lines}
    assert kinds <= {"pretrain", "diagnosis", "conversation"}
    assert out["stats"]["n_ecgs"] == 4


# -------------------------------------------------------------------- report


def test_report_writes_tex_csv_and_figure(corpus, tmp_path, capsys) -> None:
    out_tex = tmp_path / "out" / "report.tex"
    rc, out = run(capsys, [
        "report", "--in", str(corpus / "rec1.csv"),
        "--out", str(out_tex), "--labels", "SR,LBBB",
    ])
    assert rc == 0
    tex = out_tex.read_text()
    assert "\\begin{document}" in tex
    assert (
        "Sinus rhythm is present; Left bundle branch block is present."
        in tex
    )
    assert out["violations"] == []
    csv_path = out_tex.parent / "report_features.csv"
    png_path = out_tex.parent / "report_lead_ii.png"
    assert csv_path.exists()
    assert png_path.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
    assert out["tex"] == str(out_tex)
    assert out["csv"] == str(csv_path)
    assert out["figures"] == [str(png_path)]


# ----------------------------------------------------------- config overlay


def test_config_file_supplies_defaults_cli_wins(
    corpus, tmp_path, capsys, monkeypatch
) -> None:
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"duration": 8.0, "fs": 250}))
    out_a = tmp_path / "a.csv"

    rc, out = run(capsys, [
        "preprocess", "--in", str(corpus / "rec0.csv"),
        "--out", str(out_a), "--config", str(cfg),
    ])
    assert rc == 0
    assert out["samples"] == 2000  # both values came from the file

    # an explicit flag beats the config file
    out_b = tmp_path / "b.csv"
    rc, out = run(capsys, [
        "preprocess", "--in", str(corpus / "rec0.csv"),
        "--out", str(out_b), "--config", str(cfg), "--fs", "500",
    ])
    assert rc == 0
    assert out["fs"] == 500
    assert out["samples"] == 4000

    # the environment variable is a fallback --config
    monkeypatch.setenv(ENV_CONFIG, str(cfg))
    out_c = tmp_path / "c.csv"
    rc, out = run(capsys, [
        "preprocess", "--in", str(corpus / "rec0.csv"), "--out", str(out_c),
    ])
    assert rc == 0
    assert out["samples"] == 2000


def test_config_with_unknown_key_is_usage_error(
    corpus, tmp_path, capsys
) -> None:
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"not-a-flag": 1}))
    rc = main([
        "delineate", "--in", str(corpus / "rec0.csv"), "--config", str(cfg),
    ])
    assert rc == 2


def test_config_missing_file_is_usage_error(corpus) -> None:
    rc = main([
        "delineate", "--in", str(corpus / "rec0.csv"),
        "--config", "/nonexistent/cfg.json",
    ])
    assert rc == 2
