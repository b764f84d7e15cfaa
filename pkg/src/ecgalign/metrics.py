"""Text-generation metrics and clinical-efficacy label metrics.

BLEU uses clipped modified n-gram precisions with add-1 smoothing on
zero counts (reported as 0 when even unigram precision is 0), a
geometric mean, and the standard brevity penalty. ROUGE-L is the
LCS-based F with beta=1. METEOR is a simplified exact + suffix-stem
matcher (strip s/es/ed/ing) with the standard parameters alpha=0.9,
beta=3, gamma=0.5; the alignment maximizes matches and then minimizes
chunks by exhaustive search with pruning.

Clinical efficacy compares predicted and reference label sets per
taxonomy group with macro-averaged precision/recall/F1; 0/0 counts as 0.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

from .ddp import GROUPS, LabelDef
from .errors import EmptyCandidate, LengthMismatch
from .text import normalize

METEOR_ALPHA = 0.9
METEOR_BETA = 3.0
METEOR_GAMMA = 0.5
_STEM_SUFFIXES = ("s", "es", "ed", "ing")
_SEARCH_BUDGET = 500_000


def to_tokens(text: str) -> list[str]:
    """Tokenize raw text the same way the report tokenizer does."""
    return normalize(text)


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu(
    candidate: Sequence[str],
    references: Sequence[Sequence[str]],
    max_n: int = 4,
) -> float:
    """Corpus-style BLEU for one candidate against one or more references."""
    if not candidate:
        raise EmptyCandidate("BLEU candidate must be non-empty")
    if not references:
        return 0.0

    log_sum = 0.0
    used = 0
    for n in range(1, max_n + 1):
        total = len(candidate) - n + 1
        if total <= 0:
            continue
        cand_counts = _ngrams(candidate, n)
        max_ref: Counter = Counter()
        for ref in references:
            for gram, count in _ngrams(ref, n).items():
                if count > max_ref[gram]:
                    max_ref[gram] = count
        clipped = sum(min(c, max_ref[g]) for g, c in cand_counts.items())
        if clipped == 0:
            if n == 1:
                return 0.0
            p = 1.0 / (total + 1.0)
        else:
            p = clipped / total
        log_sum += math.log(p)
        used += 1
    if used == 0:
        return 0.0
    geo = math.exp(log_sum / used)

    c = len(candidate)
    r = min(
        (len(ref) for ref in references),
        key=lambda length: (abs(length - c), length),
    )
    bp = 1.0 if c > r else math.exp(1.0 - r / c)
    return bp * geo


def _lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, 1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(
    candidate: Sequence[str], reference: Sequence[str]
) -> dict[str, float]:
    """LCS precision, recall, and F1 (beta = 1); empty input gives zeros."""
    if not candidate or not reference:
        return {"precision": 0.0, "recall": 0.0, "f": 0.0}
    lcs = _lcs_length(candidate, reference)
    p = lcs / len(candidate)
    r = lcs / len(reference)
    f = 2 * p * r / (p + r) if p + r else 0.0
    return {"precision": p, "recall": r, "f": f}


def _stems(word: str) -> frozenset[str]:
    out = {word}
    for suf in _STEM_SUFFIXES:
        if word.endswith(suf) and len(word) - len(suf) >= 2:
            out.add(word[: -len(suf)])
    return frozenset(out)


def _words_match(a: str, b: str) -> bool:
    return a == b or not _stems(a).isdisjoint(_stems(b))


def _max_matching(allowed: list[list[int]], n_ref: int) -> int:
    match_ref = [-1] * n_ref

    def try_assign(i: int, visited: list[bool]) -> bool:
        for j in allowed[i]:
            if visited[j]:
                continue
            visited[j] = True
            if match_ref[j] == -1 or try_assign(match_ref[j], visited):
                match_ref[j] = i
                return True
        return False

    size = 0
    for i in range(len(allowed)):
        if allowed[i] and try_assign(i, [False] * n_ref):
            size += 1
    return size


def _min_chunks(
    allowed: list[list[int]], n_ref: int, target_matches: int
) -> int:
    """Fewest chunks over all maximum matchings, by pruned exhaustive search."""
    n = len(allowed)
    remaining_edges = [0] * (n + 1)
    for i in range(n - 1, -1, -1):
        remaining_edges[i] = remaining_edges[i + 1] + (1 if allowed[i] else 0)

    best = target_matches + 1
    budget = _SEARCH_BUDGET

    def rec(i: int, used: int, matches: int, chunks: int, last_j: int) -> None:
        nonlocal best, budget
        if budget <= 0 or chunks >= best:
            return
        budget -= 1
        if matches + remaining_edges[i] < target_matches:
            return
        if i == n:
            if matches == target_matches and chunks < best:
                best = chunks
            return
        for j in allowed[i]:
            if used & (1 << j):
                continue
            inc = 0 if j == last_j + 1 else 1
            rec(i + 1, used | (1 << j), matches + 1, chunks + inc, j)
        rec(i + 1, used, matches, chunks, -2)

    rec(0, 0, 0, 0, -2)
    if best > target_matches:
        # budget exhausted before any size-M matching closed; every match
        # as its own chunk is a safe upper bound
        return target_matches
    return best


def _alignment(
    candidate: Sequence[str], reference: Sequence[str]
) -> tuple[int, int]:
    """(matches, chunks) of the best unigram alignment."""
    allowed = [
        [j for j, r in enumerate(reference) if _words_match(c, r)]
        for c in candidate
    ]
    matches = _max_matching(allowed, len(reference))
    if matches == 0:
        return 0, 0
    return matches, _min_chunks(allowed, len(reference), matches)


def meteor(
    candidate: Sequence[str],
    reference: Sequence[str],
    alpha: float = METEOR_ALPHA,
    beta: float = METEOR_BETA,
    gamma: float = METEOR_GAMMA,
) -> float:
    """Unigram-alignment METEOR with exact + suffix-stem matching."""
    if not candidate or not reference:
        return 0.0
    matches, chunks = _alignment(candidate, reference)
    if matches == 0:
        return 0.0
    p = matches / len(candidate)
    r = matches / len(reference)
    f_mean = p * r / (alpha * p + (1.0 - alpha) * r)
    penalty = gamma * (chunks / matches) ** beta
    return f_mean * (1.0 - penalty)


@dataclass
class CeScores:
    """Macro-averaged label metrics for one taxonomy group."""

    precision: float
    recall: float
    f1: float


def _prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f


def ce_metrics(
    pred: Sequence[set[str]],
    ref: Sequence[set[str]],
    taxonomy: Sequence[LabelDef],
) -> dict[str, CeScores]:
    """Per-group macro precision/recall/F1 over taxonomy labels.

    A label participates in its group's macro average only if it occurs
    in at least one predicted or reference set; groups with no
    participating labels report zeros.
    """
    if len(pred) != len(ref):
        raise LengthMismatch(
            f"{len(pred)} predictions vs {len(ref)} references"
        )
    out: dict[str, CeScores] = {}
    for group in GROUPS:
        scores: list[tuple[float, float, float]] = []
        for label in taxonomy:
            if label.group != group:
                continue
            code = label.code
            if not any(code in s for s in pred) and not any(code in s for s in ref):
                continue
            tp = sum(1 for p, r in zip(pred, ref) if code in p and code in r)
            fp = sum(1 for p, r in zip(pred, ref) if code in p and code not in r)
            fn = sum(1 for p, r in zip(pred, ref) if code not in p and code in r)
            scores.append(_prf(tp, fp, fn))
        if scores:
            out[group] = CeScores(
                precision=sum(s[0] for s in scores) / len(scores),
                recall=sum(s[1] for s in scores) / len(scores),
                f1=sum(s[2] for s in scores) / len(scores),
            )
        else:
            out[group] = CeScores(0.0, 0.0, 0.0)
    return out


def extract_labels(text: str, taxonomy: Sequence[LabelDef]) -> set[str]:
    """Codes whose description or any synonym appears as a phrase in text."""
    found: set[str] = set()
    for label in taxonomy:
        for phrase in (label.description, *label.synonyms):
            if re.search(
                r"\b" + re.escape(phrase) + r"\b", text, flags=re.IGNORECASE
            ):
                found.add(label.code)
                break
    return found
