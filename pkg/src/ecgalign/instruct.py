"""Deterministic instruction-dataset records and corpus statistics.

Three record kinds: ``pretrain`` (one turn describing the full report),
``diagnosis`` (one turn stating the diagnosis), and ``conversation``
(4 to 15 templated turns over heart rate, intervals, rhythm, and
diagnosis, optionally including a denial of a deliberately injected
absent label). All sampling is driven by an explicit seed, so records
are byte-identical across runs.

Corpus statistics count whitespace tokens and sentences (split on
``.!?``) over answer texts.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Literal, Optional, Sequence

import numpy as np

from .ddp import LabelDef
from .delineation import WaveformFeatures
from .errors import EmptyReports, IoError, MalformedRecord, NoAbsentLabels

Normality = Literal["normal", "abnormal", "borderline"]
KINDS = ("pretrain", "diagnosis", "conversation")
MIN_TURNS = 4
MAX_TURNS = 15


@dataclass
class Turn:
    question: str
    answer: str


@dataclass
class InstructRecord:
    ecg_id: str
    kind: str
    turns: list[Turn]

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        n = len(self.turns)
        if self.kind in ("pretrain", "diagnosis") and n != 1:
            raise ValueError(f"{self.kind} records must have exactly 1 turn, got {n}")
        if self.kind == "conversation" and not MIN_TURNS <= n <= MAX_TURNS:
            raise ValueError(
                f"conversation records must have {MIN_TURNS}-{MAX_TURNS} turns, got {n}"
            )


def load_question_bank(path: Optional[str | Path] = None) -> list[str]:
    """Read one question per line; defaults to the packaged bank."""
    if path is None:
        text = (
            resources.files("ecgalign").joinpath("data/questions.txt").read_text("utf-8")
        )
    else:
        p = Path(path)
        if not p.exists():
            raise IoError(f"question bank not found: {p}")
        text = p.read_text(encoding="utf-8")
    bank = [line.strip() for line in text.splitlines() if line.strip()]
    return bank


def derive_normality(labels: set[str], taxonomy: Sequence[LabelDef]) -> Normality:
    """Disease-group labels decide: only NORM is normal, any other is
    abnormal, none at all is borderline."""
    disease = {d.code for d in taxonomy if d.group == "Disease"}
    present = labels & disease
    if present == {"NORM"}:
        return "normal"
    if present - {"NORM"}:
        return "abnormal"
    return "borderline"


def _collapse_periods(text: str) -> str:
    return re.sub(r"\.(?:\s*\.)+", ".", text)


def build_pretrain_record(
    ecg_id: str,
    reports: Sequence[str],
    question_bank: Sequence[str],
    normality: Normality,
    rng_seed: int,
) -> InstructRecord:
    """One-turn record whose answer wraps the reports in the fixed template.

    Answer: "Your ECG shows {r1}; {r2}; ... . It's a {normality} ECG.",
    with runs of duplicate periods collapsed when a report already ends
    in one.
    """
    reports = [r for r in reports if r and r.strip()]
    if not reports:
        raise EmptyReports("need at least one non-empty report")
    if not question_bank:
        raise ValueError("question bank must be non-empty")
    rng = np.random.default_rng(rng_seed)
    question = question_bank[int(rng.integers(len(question_bank)))]
    body = "; ".join(r.strip() for r in reports)
    answer = _collapse_periods(f"Your ECG shows {body}. It's a {normality} ECG.")
    return InstructRecord(
        ecg_id=ecg_id, kind="pretrain", turns=[Turn(question, answer)]
    )


DIAGNOSIS_QUESTIONS = (
    "What is the diagnosis based on this ECG?",
    "What conclusions can be drawn from this ECG?",
    "Which conditions does this ECG point to?",
)


def build_diagnosis_record(
    ecg_id: str,
    diagnosis_text: str,
    rng_seed: int,
    question_bank: Optional[Sequence[str]] = None,
) -> InstructRecord:
    """One-turn record answering with a rendered diagnosis statement."""
    if not diagnosis_text or not diagnosis_text.strip():
        raise EmptyReports("diagnosis text must be non-empty")
    bank = list(question_bank) if question_bank else list(DIAGNOSIS_QUESTIONS)
    rng = np.random.default_rng(rng_seed)
    question = bank[int(rng.integers(len(bank)))]
    return InstructRecord(
        ecg_id=ecg_id, kind="diagnosis",
        turns=[Turn(question, diagnosis_text.strip())],
    )


def build_negative_injection(
    report_labels: set[str],
    taxonomy: Sequence[LabelDef],
    rng_seed: int,
) -> tuple[LabelDef, str]:
    """Pick a label absent from the report and render its denial answer."""
    absent = [d for d in taxonomy if d.code not in report_labels]
    if not absent:
        raise NoAbsentLabels("every taxonomy label appears in the report")
    rng = np.random.default_rng(rng_seed)
    label = absent[int(rng.integers(len(absent)))]
    denial = f"No, there is no evidence of {label.description} in this ECG."
    return label, denial


_RATE_QUESTIONS = (
    "What is the heart rate on this ECG?",
    "How fast is the heart beating here?",
)
_INTERVAL_QUESTIONS = (
    "What are the measured intervals on this ECG?",
    "Can you report the interval measurements?",
)
_RHYTHM_QUESTIONS = (
    "What rhythm does this ECG show?",
    "Is the rhythm regular on this tracing?",
)
_DIAG_QUESTIONS = (
    "What is the overall diagnosis?",
    "Does this ECG suggest any abnormality?",
)


def _fmt(value: Optional[float], digits: int = 0) -> str:
    if value is None:
        return "not measurable"
    return f"{value:.{digits}f}"


def build_conversation_record(
    ecg_id: str,
    features: WaveformFeatures,
    diagnosis_text: str,
    report_labels: set[str],
    taxonomy: Sequence[LabelDef],
    rng_seed: int,
) -> InstructRecord:
    """Multi-turn templated dialogue covering rate, intervals, rhythm,
    diagnosis, and one injected-absent-label denial when possible."""
    rng = np.random.default_rng(rng_seed)
    n_turns = int(rng.integers(MIN_TURNS, MAX_TURNS + 1))

    def pick(options: Sequence[str]) -> str:
        return options[int(rng.integers(len(options)))]

    turns: list[Turn] = [
        Turn(
            pick(_RATE_QUESTIONS),
            f"The heart rate is approximately {_fmt(features.heart_rate_bpm)} "
            f"beats per minute over {features.n_beats} detected beats.",
        ),
        Turn(
            pick(_INTERVAL_QUESTIONS),
            f"RR interval {_fmt(features.rr_ms)} ms, PR interval "
            f"{_fmt(features.pr_ms)} ms, QRS duration {_fmt(features.qrs_ms)} ms, "
            f"QT/QTc {_fmt(features.qt_ms)}/{_fmt(features.qtc_ms)} ms.",
        ),
        Turn(
            pick(_RHYTHM_QUESTIONS),
            f"The RR interval is {_fmt(features.rr_ms)} ms, consistent with a "
            f"rate of {_fmt(features.heart_rate_bpm)} beats per minute.",
        ),
        Turn(pick(_DIAG_QUESTIONS), diagnosis_text.strip() or "No diagnosis stated."),
    ]
    try:
        label, denial = build_negative_injection(
            report_labels, taxonomy, int(rng.integers(2**31 - 1))
        )
        turns.append(
            Turn(f"Is there evidence of {label.description} in this ECG?", denial)
        )
    except NoAbsentLabels:
        pass

    amp_answers = [
        ("R wave peak", features.r_peak_mv),
        ("P wave peak", features.p_peak_mv),
        ("T wave peak", features.t_peak_mv),
    ]
    i = 0
    while len(turns) < n_turns:
        name, value = amp_answers[i % len(amp_answers)]
        val = "not measurable" if value is None else f"{value:.2f} mV"
        turns.append(Turn(f"What is the {name} amplitude?", f"The {name} is {val}."))
        i += 1

    return InstructRecord(ecg_id=ecg_id, kind="conversation", turns=turns[:n_turns])


def corpus_stats(records: Sequence[InstructRecord]) -> dict:
    """Whitespace-token and sentence statistics over answer texts."""
    answers = [t.answer for rec in records for t in rec.turns]
    tokens = [tok for a in answers for tok in a.split()]
    sentences = sum(
        1 for a in answers for s in re.split(r"[.!?]+", a) if s.strip()
    )
    n_answers = len(answers)
    return {
        "vocab_count": len(tokens),
        "distinct_vocab": len(set(tokens)),
        "sentences": sentences,
        "avg_caption_len": len(tokens) / n_answers if n_answers else 0.0,
        "avg_sentences_per_caption": sentences / n_answers if n_answers else 0.0,
        "n_ecgs": len({rec.ecg_id for rec in records}),
    }


def save_records(records: Sequence[InstructRecord], path: str | Path) -> None:
    """Write one JSON object per line: {ecg_id, kind, turns}."""
    with open(path, "w", encoding="utf-8") as f:
        for rec in records:
            f.write(json.dumps({
                "ecg_id": rec.ecg_id,
                "kind": rec.kind,
                "turns": [{"question": t.question, "answer": t.answer}
                          for t in rec.turns],
            }) + "\n")


def load_records(path: str | Path) -> list[InstructRecord]:
    p = Path(path)
    if not p.exists():
        raise IoError(f"instruct file not found: {p}")
    out: list[InstructRecord] = []
    for lineno, line in enumerate(p.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            out.append(InstructRecord(
                ecg_id=obj["ecg_id"],
                kind=obj["kind"],
                turns=[Turn(t["question"], t["answer"]) for t in obj["turns"]],
            ))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise MalformedRecord(f"line {lineno}: {exc}") from exc
    return out
