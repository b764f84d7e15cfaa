"""Grouped label classifiers and diagnosis prompt rendering.

Labels live in one of three groups: Disease, Form, Rhythm. Disease and
Form are multi-label and thresholded; Rhythm is single-label and always
argmaxed, so every prompt carries exactly one rhythm clause whenever the
taxonomy defines rhythm labels. The taxonomy itself is data, loaded from
a JSON file of ``{code, description, group, synonyms?}`` objects.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import DegenerateLabels, IoError, MalformedManifest
from .retrieval import LinearProbe, fit_linear_probe
from .train import Checkpoint, load_checkpoint, save_checkpoint

GROUPS = ("Disease", "Form", "Rhythm")
DEFAULT_TAU = 0.5


@dataclass(frozen=True)
class LabelDef:
    """One taxonomy entry: a short code, its phrase, and its group."""

    code: str
    description: str
    group: str
    synonyms: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.group not in GROUPS:
            raise ValueError(f"group must be one of {GROUPS}, got {self.group!r}")


def load_taxonomy(path: Optional[str | Path] = None) -> list[LabelDef]:
    """Read label definitions from JSON; defaults to the packaged taxonomy."""
    if path is None:
        text = (
            resources.files("ecgalign").joinpath("data/taxonomy.json").read_text("utf-8")
        )
    else:
        p = Path(path)
        if not p.exists():
            raise IoError(f"taxonomy file not found: {p}")
        text = p.read_text(encoding="utf-8")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedManifest(f"taxonomy is not valid JSON: {exc}") from exc
    if not isinstance(raw, list):
        raise MalformedManifest("taxonomy must be a JSON array")

    labels: list[LabelDef] = []
    seen: set[str] = set()
    for item in raw:
        try:
            label = LabelDef(
                code=item["code"],
                description=item["description"],
                group=item["group"],
                synonyms=tuple(item.get("synonyms", ())),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedManifest(f"bad taxonomy entry {item!r}: {exc}") from exc
        if label.code in seen:
            raise MalformedManifest(f"duplicate taxonomy code {label.code!r}")
        seen.add(label.code)
        labels.append(label)
    return labels


@dataclass
class DiagnosisSelection:
    """Thresholded Disease/Form labels plus the argmax Rhythm label."""

    rhythm: Optional[LabelDef]
    disease: list[LabelDef]
    form: list[LabelDef]
    probabilities: dict[str, float] = field(default_factory=dict)


@dataclass
class GroupedClassifier:
    """A linear probe whose columns align with a taxonomy label list."""

    labels: list[LabelDef]
    probe: LinearProbe

    def predict_probs(self, embs: np.ndarray) -> np.ndarray:
        """Per-label probabilities; labels the probe never trained read 0.

        An untrained logistic unit would otherwise sit at sigmoid(0) = 0.5
        and sail over any threshold at or below the default.
        """
        probs = self.probe.predict_proba(np.atleast_2d(embs))
        probs[:, ~self.probe.trained] = 0.0
        return probs


def fit_group_classifiers(
    embs: np.ndarray,
    labels_multihot: np.ndarray,
    label_defs: Sequence[LabelDef],
    l2: float = 0.0,
    steps: int = 500,
) -> GroupedClassifier:
    """One logistic unit per taxonomy label on frozen ECG embeddings."""
    if len(label_defs) == 0:
        raise DegenerateLabels("empty label set")
    labels_multihot = np.asarray(labels_multihot)
    if labels_multihot.ndim != 2 or labels_multihot.shape[1] != len(label_defs):
        raise ValueError(
            f"labels must be (N, {len(label_defs)}), got {labels_multihot.shape}"
        )
    probe = fit_linear_probe(embs, labels_multihot, l2=l2, steps=steps)
    return GroupedClassifier(labels=list(label_defs), probe=probe)


def select(
    probs: np.ndarray,
    label_defs: Sequence[LabelDef],
    tau_disease: float = DEFAULT_TAU,
    tau_form: float = DEFAULT_TAU,
) -> DiagnosisSelection:
    """Threshold Disease/Form probabilities; argmax the Rhythm group.

    Rhythm ties resolve to the lowest taxonomy index. Disease and Form
    keep taxonomy order among labels meeting their threshold.
    """
    probs = np.asarray(probs, dtype=np.float64).reshape(-1)
    if probs.shape[0] != len(label_defs):
        raise ValueError(
            f"{probs.shape[0]} probabilities for {len(label_defs)} labels"
        )
    if probs.size and (probs.min() < 0.0 or probs.max() > 1.0):
        raise ValueError("probabilities must lie in [0, 1]")

    disease = [
        d for d, p in zip(label_defs, probs)
        if d.group == "Disease" and p >= tau_disease
    ]
    form = [
        d for d, p in zip(label_defs, probs)
        if d.group == "Form" and p >= tau_form
    ]
    rhythm_idx = [i for i, d in enumerate(label_defs) if d.group == "Rhythm"]
    rhythm: Optional[LabelDef] = None
    if rhythm_idx:
        # np.argmax returns the first maximum, which is the lowest index
        best = rhythm_idx[int(np.argmax(probs[rhythm_idx]))]
        rhythm = label_defs[best]

    selected = ([rhythm] if rhythm else []) + disease + form
    return DiagnosisSelection(
        rhythm=rhythm,
        disease=disease,
        form=form,
        probabilities={
            d.code: float(probs[i])
            for i, d in enumerate(label_defs)
            if d in selected
        },
    )


def _clause(label: LabelDef) -> str:
    d = label.description
    return f"{d[:1].upper()}{d[1:]} is present"


def render_prompt(sel: DiagnosisSelection) -> str:
    """Join clauses rhythm, then disease, then form; terminate with a period."""
    ordered = ([sel.rhythm] if sel.rhythm else []) + sel.disease + sel.form
    if not ordered:
        return ""
    return "; ".join(_clause(label) for label in ordered) + "."


def save_classifier(clf: GroupedClassifier, path: str | Path) -> None:
    """Persist classifier weights in the checkpoint container."""
    meta = {
        "labels": [
            {
                "code": d.code,
                "description": d.description,
                "group": d.group,
                "synonyms": list(d.synonyms),
            }
            for d in clf.labels
        ]
    }
    save_checkpoint(
        Checkpoint(
            meta=meta,
            tensors={
                "weights": clf.probe.weights,
                "bias": clf.probe.bias,
                "trained": clf.probe.trained.astype(np.float32),
            },
        ),
        path,
    )


def load_classifier(path: str | Path) -> GroupedClassifier:
    ckpt = load_checkpoint(path)
    labels = [
        LabelDef(
            code=d["code"],
            description=d["description"],
            group=d["group"],
            synonyms=tuple(d.get("synonyms", ())),
        )
        for d in ckpt.meta["labels"]
    ]
    probe = LinearProbe(
        weights=ckpt.tensors["weights"].astype(np.float64),
        bias=ckpt.tensors["bias"].astype(np.float64),
        trained=ckpt.tensors["trained"] > 0.5,
    )
    return GroupedClassifier(labels=labels, probe=probe)
