"""Command-line interface exposing the pipeline as subcommands.

Results print as JSON on stdout; logs go to stderr. Exit codes: 0 on
success, 1 on domain errors (bad signals, missing beats, incompatible
checkpoints), 2 on usage errors. A JSON config file (``--config`` or the
``ECGALIGN_CONFIG`` environment variable) can supply any flag of the
active subcommand; flags given explicitly on the command line win.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import asdict
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import torch

from . import ddp as ddp_mod
from . import delineation as delin
from . import instruct as instruct_mod
from . import metrics as metrics_mod
from . import retrieval as retrieval_mod
from . import reportgen
from . import signal_io
from . import viz
from .errors import EcgAlignError
from .model import ModelConfig
from .text import tokenize
from .train import (
    AugmentationSpec,
    TrainConfig,
    load_checkpoint,
    model_from_checkpoint,
    save_checkpoint,
    train,
)

logger = logging.getLogger(__name__)

ENV_CONFIG = "ECGALIGN_CONFIG"


def _load_record_arg(path: str, fmt: Optional[str]) -> signal_io.EcgRecord:
    rec = signal_io.load_record(path, format=fmt)
    return signal_io.standardize(signal_io.sanitize(rec))


def _resolve(base: Path, path: str) -> str:
    p = Path(path)
    return str(p if p.is_absolute() else base / p)


def _load_pairs(
    manifest_path: str,
) -> tuple[list[signal_io.EcgRecord], list[str], list[set[str]]]:
    manifest = signal_io.load_manifest(manifest_path)
    base = Path(manifest_path).parent
    records, reports, labels = [], [], []
    for entry in manifest.entries:
        rec = signal_io.load_record(_resolve(base, entry.record_path))
        records.append(signal_io.standardize(signal_io.sanitize(rec)))
        reports.append(entry.report)
        labels.append(set(entry.labels))
    return records, reports, labels


@torch.no_grad()
def _embed_records(model, records, batch_size: int = 16) -> np.ndarray:
    out = []
    for start in range(0, len(records), batch_size):
        chunk = records[start:start + batch_size]
        x = torch.from_numpy(np.stack([r.signal for r in chunk]).astype(np.float32))
        out.append(model.encode_ecg(x).numpy())
    return np.concatenate(out, axis=0).astype(np.float64)


@torch.no_grad()
def _embed_texts(model, vocab, texts, batch_size: int = 32) -> np.ndarray:
    from .train import _pad_batch

    out = []
    for start in range(0, len(texts), batch_size):
        chunk = texts[start:start + batch_size]
        ids = _pad_batch(
            [tokenize(t, vocab) for t in chunk], model.config.max_text_len
        )
        out.append(model.encode_text(ids).numpy())
    return np.concatenate(out, axis=0).astype(np.float64)


def _features_for_record(rec: signal_io.EcgRecord):
    lead = rec.signal[signal_io.LEAD_II].astype(np.float64)
    r_peaks = delin.detect_r_peaks(lead, rec.fs)
    ann = delin.delineate(lead, rec.fs, r_peaks)
    return delin.measure(ann, lead, rec.fs), ann, lead


def _multihot(label_sets: Sequence[set[str]], taxonomy) -> np.ndarray:
    codes = [d.code for d in taxonomy]
    out = np.zeros((len(label_sets), len(codes)))
    for i, labels in enumerate(label_sets):
        for j, code in enumerate(codes):
            if code in labels:
                out[i, j] = 1.0
    return out


def _selection_from_labels(labels: set[str], taxonomy) -> ddp_mod.DiagnosisSelection:
    probs = _multihot([labels], taxonomy)[0]
    return ddp_mod.select(probs, taxonomy)


# ---------------------------------------------------------------- commands


def cmd_preprocess(args) -> dict:
    rec = signal_io.load_record(args.infile, format=args.format)
    rec = signal_io.standardize(
        signal_io.sanitize(rec), target_fs=args.fs, duration_s=args.duration
    )
    out_fmt = "bin" if args.out.endswith(".bin") else "csv"
    signal_io.save_record(rec, args.out, format=out_fmt)
    return {
        "id": rec.id,
        "fs": rec.fs,
        "samples": int(rec.signal.shape[1]),
        "path": args.out,
    }


def cmd_delineate(args) -> dict:
    rec = _load_record_arg(args.infile, args.format)
    features, ann, lead = _features_for_record(rec)
    result = {"id": rec.id, "features": asdict(features)}
    if args.fig:
        viz.plot_delineation(lead, rec.fs, ann, args.fig)
        result["figure"] = args.fig
    return result


def cmd_wde(args) -> dict:
    rec = _load_record_arg(args.infile, args.format)
    features, _, _ = _features_for_record(rec)
    if args.report_file:
        report = Path(args.report_file).read_text(encoding="utf-8").strip()
    else:
        report = args.report
    if report is None:
        raise ValueError("provide --report or --report-file")
    text = delin.features_to_text(features)
    return {
        "report": report,
        "features_text": text,
        "augmented": delin.augment_report(report, features),
    }


def _model_config_from_args(args, vocab_size: int = 8) -> ModelConfig:
    return ModelConfig(
        vocab_size=vocab_size,
        patch_size=args.patch_size,
        ecg_layers=args.ecg_layers,
        text_layers=args.text_layers,
        dec_layers=args.dec_layers,
        hidden=args.hidden,
        heads=args.heads,
        mlp_dim=args.mlp_dim,
        embed_dim=args.embed_dim,
        max_text_len=args.max_text_len,
    )


def cmd_train(args) -> dict:
    records, reports, _ = _load_pairs(args.manifest)
    if args.wde:
        augmented = []
        for rec, rep in zip(records, reports):
            features, _, _ = _features_for_record(rec)
            augmented.append(delin.augment_report(rep, features))
        reports = augmented
    model_cfg = _model_config_from_args(args)
    train_cfg = TrainConfig(
        batch_size=args.batch_size,
        lr=args.lr,
        weight_decay=args.weight_decay,
        epochs=args.epochs,
        lambda_con=args.lambda_con,
        lambda_cap=args.lambda_cap,
        seed=args.seed,
        aug=AugmentationSpec(),
        log_path=args.log,
    )
    manifest = signal_io.DatasetManifest(entries=[])
    ckpt = train(train_cfg, manifest, model_cfg, records=records, reports=reports)
    save_checkpoint(ckpt, args.out)
    return {
        "checkpoint": args.out,
        "n_pairs": len(records),
        "vocab_size": len(ckpt.meta["vocab"]),
        "steps": ckpt.meta["steps"],
    }


def cmd_encode(args) -> dict:
    model, vocab = model_from_checkpoint(load_checkpoint(args.ckpt))
    if args.text is not None:
        emb = _embed_texts(model, vocab, [args.text])[0]
        return {"text": args.text, "embedding": [float(v) for v in emb]}
    if args.infile is not None:
        rec = _load_record_arg(args.infile, args.format)
        emb = _embed_records(model, [rec])[0]
        return {"id": rec.id, "embedding": [float(v) for v in emb]}
    if args.manifest is None or args.out is None:
        raise ValueError("provide --in, --text, or --manifest with --out")
    records, _, _ = _load_pairs(args.manifest)
    embs = _embed_records(model, records)
    from .train import Checkpoint

    save_checkpoint(
        Checkpoint(
            meta={"ids": [r.id for r in records]},
            tensors={"embeddings": embs.astype(np.float32)},
        ),
        args.out,
    )
    return {"out": args.out, "count": len(records)}


def cmd_index(args) -> dict:
    model, _ = model_from_checkpoint(load_checkpoint(args.ckpt))
    records, _, _ = _load_pairs(args.manifest)
    embs = _embed_records(model, records)
    norms = np.linalg.norm(embs, axis=1, keepdims=True)
    index = retrieval_mod.build_index(embs / norms, [r.id for r in records])
    retrieval_mod.save_index(index, args.out)
    return {"index": args.out, "size": len(index)}


def cmd_retrieve(args) -> dict:
    model, vocab = model_from_checkpoint(load_checkpoint(args.ckpt))
    index = retrieval_mod.load_index(args.index)
    if args.query_text is not None:
        q = _embed_texts(model, vocab, [args.query_text])[0]
    elif args.query_record is not None:
        rec = _load_record_arg(args.query_record, None)
        q = _embed_records(model, [rec])[0]
    else:
        raise ValueError("provide --query-text or --query-record")
    ids = retrieval_mod.query_topk(q, index, args.k)
    return {"ids": ids, "k": args.k}


def cmd_eval_retrieval(args) -> dict:
    model, vocab = model_from_checkpoint(load_checkpoint(args.ckpt))
    records, reports, _ = _load_pairs(args.manifest)
    ecg = _embed_records(model, records)
    txt = _embed_texts(model, vocab, reports)
    ks = [int(k) for k in args.k.split(",")]
    recall = {}
    for k in ks:
        r = retrieval_mod.recall_at_k(ecg, txt, k)
        recall[str(k)] = {
            "ecg_to_text": r.ecg_to_text, "text_to_ecg": r.text_to_ecg
        }
    result = {"recall": recall, "n_pairs": len(records)}
    if args.fig:
        viz.plot_recall_bars(
            {k: (recall[str(k)]["ecg_to_text"], recall[str(k)]["text_to_ecg"])
             for k in ks},
            args.fig,
        )
        result["figure"] = args.fig
    return result


def cmd_zeroshot(args) -> dict:
    model, vocab = model_from_checkpoint(load_checkpoint(args.ckpt))
    taxonomy = ddp_mod.load_taxonomy(args.taxonomy)
    records, _, labels = _load_pairs(args.manifest)
    prompts = [retrieval_mod.zero_shot_prompt(d.description) for d in taxonomy]
    prompt_embs = _embed_texts(model, vocab, prompts)
    ecg_embs = _embed_records(model, records)
    scores = ecg_embs @ prompt_embs.T
    codes = [d.code for d in taxonomy]
    top = [codes[int(np.argmax(row))] for row in scores]
    labeled = [i for i, ls in enumerate(labels) if ls]
    accuracy = (
        float(np.mean([top[i] in labels[i] for i in labeled])) if labeled else None
    )
    return {
        "n": len(records),
        "top_label": top,
        "argmax_accuracy": accuracy,
    }


def cmd_probe(args) -> dict:
    model, _ = model_from_checkpoint(load_checkpoint(args.ckpt))
    taxonomy = ddp_mod.load_taxonomy(args.taxonomy)
    train_records, _, train_labels = _load_pairs(args.train_manifest)
    test_records, _, test_labels = _load_pairs(args.test_manifest)
    train_embs = _embed_records(model, train_records)
    test_embs = _embed_records(model, test_records)
    probe = retrieval_mod.fit_linear_probe(
        train_embs, _multihot(train_labels, taxonomy),
        l2=args.l2, steps=args.steps,
    )
    f1 = retrieval_mod.probe_macro_f1(probe, test_embs, _multihot(test_labels, taxonomy))
    return {
        "macro_f1": f1,
        "n_labels_trained": int(probe.trained.sum()),
        "n_train": len(train_records),
        "n_test": len(test_records),
    }


def cmd_ddp_train(args) -> dict:
    model, _ = model_from_checkpoint(load_checkpoint(args.ckpt))
    taxonomy = ddp_mod.load_taxonomy(args.taxonomy)
    records, _, labels = _load_pairs(args.manifest)
    embs = _embed_records(model, records)
    clf = ddp_mod.fit_group_classifiers(
        embs, _multihot(labels, taxonomy), taxonomy, l2=args.l2, steps=args.steps
    )
    ddp_mod.save_classifier(clf, args.out)
    return {"classifier": args.out, "n_labels": len(taxonomy)}


def cmd_ddp_prompt(args) -> dict:
    clf = ddp_mod.load_classifier(args.classifier)
    model, _ = model_from_checkpoint(load_checkpoint(args.ckpt))
    rec = _load_record_arg(args.infile, args.format)
    emb = _embed_records(model, [rec])
    probs = clf.predict_probs(emb)[0]
    sel = ddp_mod.select(
        probs, clf.labels, tau_disease=args.tau_disease, tau_form=args.tau_form
    )
    return {
        "id": rec.id,
        "prompt": ddp_mod.render_prompt(sel),
        "rhythm": sel.rhythm.code if sel.rhythm else None,
        "disease": [d.code for d in sel.disease],
        "form": [d.code for d in sel.form],
        "probabilities": sel.probabilities,
    }


def cmd_eval_report(args) -> dict:
    taxonomy = ddp_mod.load_taxonomy(args.taxonomy)
    candidates = Path(args.candidates).read_text(encoding="utf-8").splitlines()
    references = Path(args.references).read_text(encoding="utf-8").splitlines()
    candidates = [c for c in candidates if c.strip()]
    references = [r for r in references if r.strip()]
    if len(candidates) != len(references):
        raise ValueError(
            f"{len(candidates)} candidates but {len(references)} references"
        )
    bleus, rouges, meteors = [], [], []
    pred_sets, ref_sets = [], []
    for cand, ref in zip(candidates, references):
        ct = metrics_mod.to_tokens(cand)
        rt = metrics_mod.to_tokens(ref)
        bleus.append(metrics_mod.bleu(ct, [rt]) if ct else 0.0)
        rouges.append(metrics_mod.rouge_l(ct, rt)["f"])
        meteors.append(metrics_mod.meteor(ct, rt))
        pred_sets.append(metrics_mod.extract_labels(cand, taxonomy))
        ref_sets.append(metrics_mod.extract_labels(ref, taxonomy))
    ce = metrics_mod.ce_metrics(pred_sets, ref_sets, taxonomy)
    return {
        "n": len(candidates),
        "bleu": float(np.mean(bleus)),
        "rouge_l": float(np.mean(rouges)),
        "meteor": float(np.mean(meteors)),
        "ce": {g: asdict(s) for g, s in ce.items()},
    }


def cmd_instruct_build(args) -> dict:
    taxonomy = ddp_mod.load_taxonomy(args.taxonomy)
    bank = instruct_mod.load_question_bank(args.question_bank)
    records, reports, labels = _load_pairs(args.manifest)
    kinds = (
        ["pretrain", "diagnosis", "conversation"]
        if args.kind == "mixed" else [args.kind]
    )
    out_records = []
    for i, (rec, rep, labs) in enumerate(zip(records, reports, labels)):
        normality = instruct_mod.derive_normality(labs, taxonomy)
        diagnosis_text = ddp_mod.render_prompt(
            _selection_from_labels(labs, taxonomy)
        ) or "No diagnosis stated."
        for kind in kinds:
            seed = args.seed + 31 * i + hash(kind) % 1000
            if kind == "pretrain":
                out_records.append(instruct_mod.build_pretrain_record(
                    rec.id, [rep], bank, normality, seed
                ))
            elif kind == "diagnosis":
                out_records.append(instruct_mod.build_diagnosis_record(
                    rec.id, diagnosis_text, seed
                ))
            else:
                try:
                    features, _, _ = _features_for_record(rec)
                except EcgAlignError as exc:
                    logger.warning("skipping %s: %s", rec.id, exc)
                    continue
                out_records.append(instruct_mod.build_conversation_record(
                    rec.id, features, diagnosis_text, labs, taxonomy, seed
                ))
    instruct_mod.save_records(out_records, args.out)
    return {
        "out": args.out,
        "n_records": len(out_records),
        "stats": instruct_mod.corpus_stats(out_records),
    }


def cmd_report(args) -> dict:
    rec = _load_record_arg(args.infile, args.format)
    features, ann, lead = _features_for_record(rec)

    if args.classifier and args.ckpt:
        clf = ddp_mod.load_classifier(args.classifier)
        model, _ = model_from_checkpoint(load_checkpoint(args.ckpt))
        probs = clf.predict_probs(_embed_records(model, [rec]))[0]
        sel = ddp_mod.select(
            probs, clf.labels,
            tau_disease=args.tau_disease, tau_form=args.tau_form,
        )
    else:
        taxonomy = ddp_mod.load_taxonomy(args.taxonomy)
        labels = set(args.labels.split(",")) if args.labels else set()
        sel = _selection_from_labels(labels, taxonomy)

    if args.backend == "http":
        if not args.url:
            raise ValueError("--url is required with --backend http")
        backend = reportgen.HttpBackend(args.url, timeout_ms=args.timeout_ms)
    else:
        backend = reportgen.TemplateBackend()

    doc = reportgen.assemble(rec.meta, features, sel, backend)
    tex = reportgen.render_latex(doc)
    violations = reportgen.validate_latex(tex)

    out_tex = Path(args.out)
    out_tex.parent.mkdir(parents=True, exist_ok=True)
    out_tex.write_text(tex, encoding="utf-8")

    fig_dir = Path(args.fig_dir) if args.fig_dir else out_tex.parent
    fig_dir.mkdir(parents=True, exist_ok=True)
    fig_path = fig_dir / f"{out_tex.stem}_lead_ii.png"
    viz.plot_delineation(lead, rec.fs, ann, fig_path)

    csv_path = out_tex.with_name(f"{out_tex.stem}_features.csv")
    with open(csv_path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["feature", "value"])
        for key, value in asdict(features).items():
            writer.writerow([key, "" if value is None else value])

    return {
        "tex": str(out_tex),
        "csv": str(csv_path),
        "figures": [str(fig_path)],
        "violations": violations,
        "diagnosis": doc.diagnosis,
    }


# ------------------------------------------------------------ parser setup


def _build_parser() -> tuple[argparse.ArgumentParser, dict[str, set[str]]]:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file supplying any flag")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--verbose", action="store_true")

    parser = argparse.ArgumentParser(
        prog="ecgalign",
        description="ECG-report alignment pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    dests: dict[str, set[str]] = {}

    def register(name: str, fn, configure) -> None:
        p = sub.add_parser(name, parents=[common])
        configure(p)
        p.set_defaults(fn=fn)
        dests[name] = {a.dest for a in p._actions if a.dest != "help"}

    def model_flags(p) -> None:
        p.add_argument("--patch-size", type=int, default=250)
        p.add_argument("--ecg-layers", type=int, default=2)
        p.add_argument("--text-layers", type=int, default=2)
        p.add_argument("--dec-layers", type=int, default=2)
        p.add_argument("--hidden", type=int, default=64)
        p.add_argument("--heads", type=int, default=4)
        p.add_argument("--mlp-dim", type=int, default=128)
        p.add_argument("--embed-dim", type=int, default=32)
        p.add_argument("--max-text-len", type=int, default=64)

    def p_preprocess(p):
        p.add_argument("--in", dest="infile", required=True)
        p.add_argument("--format", choices=["csv", "bin"])
        p.add_argument("--out", required=True)
        p.add_argument("--fs", type=int, default=signal_io.TARGET_FS)
        p.add_argument("--duration", type=float, default=10.0)

    def p_delineate(p):
        p.add_argument("--in", dest="infile", required=True)
        p.add_argument("--format", choices=["csv", "bin"])
        p.add_argument("--fig")

    def p_wde(p):
        p.add_argument("--in", dest="infile", required=True)
        p.add_argument("--format", choices=["csv", "bin"])
        p.add_argument("--report")
        p.add_argument("--report-file")

    def p_train(p):
        p.add_argument("--manifest", required=True)
        p.add_argument("--out", required=True)
        p.add_argument("--epochs", type=int, default=20)
        p.add_argument("--batch-size", type=int, default=16)
        p.add_argument("--lr", type=float, default=1e-3)
        p.add_argument("--weight-decay", type=float, default=0.1)
        p.add_argument("--lambda-con", type=float, default=1.0)
        p.add_argument("--lambda-cap", type=float, default=2.0)
        p.add_argument("--wde", action="store_true",
                       help="append measured waveform text to each report")
        p.add_argument("--log", help="JSONL step-loss log path")
        model_flags(p)

    def p_encode(p):
        p.add_argument("--ckpt", required=True)
        p.add_argument("--in", dest="infile")
        p.add_argument("--format", choices=["csv", "bin"])
        p.add_argument("--text")
        p.add_argument("--manifest")
        p.add_argument("--out")

    def p_index(p):
        p.add_argument("--ckpt", required=True)
        p.add_argument("--manifest", required=True)
        p.add_argument("--out", required=True)

    def p_retrieve(p):
        p.add_argument("--index", required=True)
        p.add_argument("--ckpt", required=True)
        p.add_argument("--query-text")
        p.add_argument("--query-record")
        p.add_argument("--k", type=int, default=5)

    def p_eval_retrieval(p):
        p.add_argument("--ckpt", required=True)
        p.add_argument("--manifest", required=True)
        p.add_argument("--k", default="1,5,10")
        p.add_argument("--fig")

    def p_zeroshot(p):
        p.add_argument("--ckpt", required=True)
        p.add_argument("--manifest", required=True)
        p.add_argument("--taxonomy")

    def p_probe(p):
        p.add_argument("--ckpt", required=True)
        p.add_argument("--train-manifest", required=True)
        p.add_argument("--test-manifest", required=True)
        p.add_argument("--taxonomy")
        p.add_argument("--steps", type=int, default=500)
        p.add_argument("--l2", type=float, default=0.0)

    def p_ddp_train(p):
        p.add_argument("--ckpt", required=True)
        p.add_argument("--manifest", required=True)
        p.add_argument("--out", required=True)
        p.add_argument("--taxonomy")
        p.add_argument("--steps", type=int, default=500)
        p.add_argument("--l2", type=float, default=0.0)

    def p_ddp_prompt(p):
        p.add_argument("--classifier", required=True)
        p.add_argument("--ckpt", required=True)
        p.add_argument("--in", dest="infile", required=True)
        p.add_argument("--format", choices=["csv", "bin"])
        p.add_argument("--tau-disease", type=float, default=ddp_mod.DEFAULT_TAU)
        p.add_argument("--tau-form", type=float, default=ddp_mod.DEFAULT_TAU)

    def p_eval_report(p):
        p.add_argument("--candidates", required=True)
        p.add_argument("--references", required=True)
        p.add_argument("--taxonomy")

    def p_instruct_build(p):
        p.add_argument("--manifest", required=True)
        p.add_argument("--out", required=True)
        p.add_argument("--kind", default="mixed",
                       choices=["pretrain", "diagnosis", "conversation", "mixed"])
        p.add_argument("--taxonomy")
        p.add_argument("--question-bank")

    def p_report(p):
        p.add_argument("--in", dest="infile", required=True)
        p.add_argument("--format", choices=["csv", "bin"])
        p.add_argument("--out", required=True, help="output .tex path")
        p.add_argument("--labels", help="comma-separated label codes")
        p.add_argument("--taxonomy")
        p.add_argument("--classifier")
        p.add_argument("--ckpt")
        p.add_argument("--tau-disease", type=float, default=ddp_mod.DEFAULT_TAU)
        p.add_argument("--tau-form", type=float, default=ddp_mod.DEFAULT_TAU)
        p.add_argument("--backend", choices=["template", "http"],
                       default="template")
        p.add_argument("--url")
        p.add_argument("--timeout-ms", type=int, default=5000)
        p.add_argument("--fig-dir")

    register("preprocess", cmd_preprocess, p_preprocess)
    register("delineate", cmd_delineate, p_delineate)
    register("wde", cmd_wde, p_wde)
    register("train", cmd_train, p_train)
    register("encode", cmd_encode, p_encode)
    register("index", cmd_index, p_index)
    register("retrieve", cmd_retrieve, p_retrieve)
    register("eval-retrieval", cmd_eval_retrieval, p_eval_retrieval)
    register("zeroshot", cmd_zeroshot, p_zeroshot)
    register("probe", cmd_probe, p_probe)
    register("ddp-train", cmd_ddp_train, p_ddp_train)
    register("ddp-prompt", cmd_ddp_prompt, p_ddp_prompt)
    register("eval-report", cmd_eval_report, p_eval_report)
    register("instruct-build", cmd_instruct_build, p_instruct_build)
    register("report", cmd_report, p_report)
    return parser, dests


def _apply_config(args, argv: list[str], known_dests: set[str]) -> None:
    """Overlay config-file values onto flags not given on the command line."""
    path = args.config or os.environ.get(ENV_CONFIG)
    if not path:
        return
    p = Path(path)
    if not p.exists():
        raise _UsageError(f"config file not found: {p}")
    try:
        values = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise _UsageError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(values, dict):
        raise _UsageError("config must be a JSON object")
    for key, value in values.items():
        dest = key.replace("-", "_")
        if dest not in known_dests:
            raise _UsageError(
                f"config key {key!r} is not a flag of this subcommand"
            )
        flag = "--" + dest.replace("_", "-")
        if flag in argv:
            continue  # explicit command line wins
        setattr(args, dest, value)


class _UsageError(Exception):
    pass


def main(argv: Optional[list[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, dests = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    logging.basicConfig(
        stream=sys.stderr,
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        _apply_config(args, argv, dests[args.command])
        result = args.fn(args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except EcgAlignError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(result, indent=2))
    return 0


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
