"""Flat embedding index, cross-modal recall, and embedding classifiers.

All search is exhaustive dot-product ranking over unit vectors (equal to
cosine similarity), with ties broken by insertion order so results are
reproducible. Classification on frozen embeddings comes in two forms:
zero-shot scoring against encoded label prompts, and per-label logistic
regressions trained by full-batch gradient descent.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .errors import (
    DegenerateLabels,
    DuplicateId,
    EmptyIndex,
    LengthMismatch,
    NormViolation,
)
from .train import Checkpoint, load_checkpoint, save_checkpoint

logger = logging.getLogger(__name__)

NORM_TOLERANCE = 1e-6
ZERO_SHOT_TEMPLATE = "this ECG shows {description}."


@dataclass
class EmbeddingIndex:
    """Unit-norm row matrix with a parallel unique-id list."""

    matrix: np.ndarray
    ids: list[str]

    def __len__(self) -> int:
        return len(self.ids)


def build_index(vectors: np.ndarray, ids: Sequence[str]) -> EmbeddingIndex:
    """Validate norms and id uniqueness, then wrap into an index."""
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.ndim != 2:
        raise ValueError("vectors must be a 2-D (N, D) array")
    if len(vectors) != len(ids):
        raise LengthMismatch(
            f"{len(vectors)} vectors but {len(ids)} ids"
        )
    norms = np.linalg.norm(vectors, axis=1)
    bad = np.flatnonzero(np.abs(norms - 1.0) > NORM_TOLERANCE)
    if bad.size:
        raise NormViolation(
            f"row {bad[0]} has norm {norms[bad[0]]:.8f}, expected 1"
        )
    seen: set[str] = set()
    for i in ids:
        if i in seen:
            raise DuplicateId(f"duplicate id {i!r}")
        seen.add(i)
    return EmbeddingIndex(matrix=vectors, ids=list(ids))


def query_topk(query: np.ndarray, index: EmbeddingIndex, k: int) -> list[str]:
    """Ids of the k most similar rows, ties broken by insertion order."""
    if len(index) == 0:
        raise EmptyIndex("cannot query an empty index")
    if k < 1:
        raise ValueError("k must be >= 1")
    scores = index.matrix @ np.asarray(query, dtype=np.float64)
    order = np.argsort(-scores, kind="stable")
    return [index.ids[i] for i in order[:k]]


class RecallResult(NamedTuple):
    ecg_to_text: float
    text_to_ecg: float


def recall_at_k(
    ecg_embs: np.ndarray, text_embs: np.ndarray, k: int
) -> RecallResult:
    """Fraction of queries whose true partner ranks in the top k.

    Row i of each matrix is one matched pair; ranking runs over the full
    partner set in both directions with stable tie-breaks.
    """
    ecg_embs = np.asarray(ecg_embs, dtype=np.float64)
    text_embs = np.asarray(text_embs, dtype=np.float64)
    if ecg_embs.shape != text_embs.shape:
        raise LengthMismatch(
            f"shape mismatch {ecg_embs.shape} vs {text_embs.shape}"
        )
    n = ecg_embs.shape[0]
    if n < 1:
        raise ValueError("need at least one pair")
    sims = ecg_embs @ text_embs.T

    def hits(score_rows: np.ndarray) -> float:
        count = 0
        for i in range(n):
            order = np.argsort(-score_rows[i], kind="stable")
            if i in order[:k]:
                count += 1
        return count / n

    return RecallResult(ecg_to_text=hits(sims), text_to_ecg=hits(sims.T))


def zero_shot_prompt(description: str) -> str:
    """Canonical prompt text encoded for a class label."""
    return ZERO_SHOT_TEMPLATE.format(description=description)


def zero_shot_classify(
    ecg_emb: np.ndarray, class_prompts: Sequence[tuple[str, np.ndarray]]
) -> dict[str, float]:
    """Cosine score of one ECG embedding against each encoded label prompt."""
    if not class_prompts:
        raise ValueError("need at least one class prompt")
    return {
        label: float(np.dot(ecg_emb, prompt))
        for label, prompt in class_prompts
    }


def calibrate_thresholds(
    scores: np.ndarray, labels: np.ndarray
) -> np.ndarray:
    """Per-class decision thresholds maximizing F1 on a calibration split.

    ``scores`` is (N, C) zero-shot scores, ``labels`` (N, C) multi-hot.
    Candidate thresholds are midpoints between consecutive sorted scores;
    classes without both positives and negatives fall back to 0.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape:
        raise LengthMismatch("scores and labels must share shape")
    n, c = scores.shape
    out = np.zeros(c)
    for j in range(c):
        y = labels[:, j].astype(bool)
        if not y.any() or y.all():
            continue
        s = np.sort(scores[:, j])
        cands = np.concatenate([[s[0] - 1e-6], (s[:-1] + s[1:]) / 2.0, [s[-1] + 1e-6]])
        best_f1, best_t = -1.0, 0.0
        for t in cands:
            pred = scores[:, j] >= t
            tp = int((pred & y).sum())
            fp = int((pred & ~y).sum())
            fn = int((~pred & y).sum())
            p = tp / (tp + fp) if tp + fp else 0.0
            r = tp / (tp + fn) if tp + fn else 0.0
            f1 = 2 * p * r / (p + r) if p + r else 0.0
            if f1 > best_f1:
                best_f1, best_t = f1, t
        out[j] = best_t
    return out


@dataclass
class LinearProbe:
    """Independent logistic units per label on frozen embeddings."""

    weights: np.ndarray  # (C, D)
    bias: np.ndarray  # (C,)
    trained: np.ndarray = field(default=None)  # (C,) bool; False = skipped

    def __post_init__(self) -> None:
        if self.trained is None:
            self.trained = np.ones(len(self.bias), dtype=bool)

    def predict_proba(self, embs: np.ndarray) -> np.ndarray:
        logits = np.asarray(embs, dtype=np.float64) @ self.weights.T + self.bias
        return 1.0 / (1.0 + np.exp(-logits))

    def predict(self, embs: np.ndarray, threshold: float = 0.5) -> np.ndarray:
        return self.predict_proba(embs) >= threshold


def fit_linear_probe(
    embs: np.ndarray,
    labels: np.ndarray,
    l2: float = 0.0,
    steps: int = 500,
    lr: float = 0.5,
) -> LinearProbe:
    """Full-batch gradient-descent logistic regression, one unit per label.

    Labels that are all-positive or all-negative in training are skipped
    with a warning and their unit stays at zero (probability 0.5). Raises
    :class:`DegenerateLabels` only when no label is trainable.
    """
    embs = np.asarray(embs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if embs.shape[0] != labels.shape[0]:
        raise LengthMismatch("embeddings and labels disagree on sample count")
    if labels.ndim != 2 or labels.shape[1] == 0:
        raise DegenerateLabels("no labels to fit")
    n, c = labels.shape

    pos = labels.sum(axis=0)
    trainable = (pos > 0) & (pos < n)
    for j in np.flatnonzero(~trainable):
        logger.warning(
            "label column %d is degenerate (all %s); skipped",
            j, "positive" if pos[j] == n else "negative",
        )
    if not trainable.any():
        raise DegenerateLabels("every label column is degenerate")

    w = np.zeros((c, embs.shape[1]))
    b = np.zeros(c)
    cols = np.flatnonzero(trainable)
    x = embs
    y = labels[:, cols]
    for _ in range(steps):
        p = 1.0 / (1.0 + np.exp(-(x @ w[cols].T + b[cols])))
        err = p - y  # (N, C')
        gw = err.T @ x / n + l2 * w[cols]
        gb = err.mean(axis=0)
        w[cols] -= lr * gw
        b[cols] -= lr * gb
    return LinearProbe(weights=w, bias=b, trained=trainable)


def probe_macro_f1(
    probe: LinearProbe, embs: np.ndarray, labels: np.ndarray
) -> float:
    """Macro F1 over trained labels at the 0.5 decision threshold."""
    preds = probe.predict(embs)
    labels = np.asarray(labels).astype(bool)
    f1s = []
    for j in np.flatnonzero(probe.trained):
        tp = int((preds[:, j] & labels[:, j]).sum())
        fp = int((preds[:, j] & ~labels[:, j]).sum())
        fn = int((~preds[:, j] & labels[:, j]).sum())
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / (tp + fn) if tp + fn else 0.0
        f1s.append(2 * p * r / (p + r) if p + r else 0.0)
    return float(np.mean(f1s)) if f1s else 0.0


def save_index(index: EmbeddingIndex, path: str | Path) -> None:
    """Persist in the checkpoint container with tensor name ``index``."""
    save_checkpoint(
        Checkpoint(meta={"ids": index.ids}, tensors={"index": index.matrix}),
        path,
    )


def load_index(path: str | Path) -> EmbeddingIndex:
    ckpt = load_checkpoint(path)
    matrix = ckpt.tensors["index"].astype(np.float64)
    # float32 storage perturbs norms; renormalize rows on load
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    matrix = matrix / np.where(norms == 0, 1.0, norms)
    return build_index(matrix, ckpt.meta["ids"])
