"""Word-level report tokenization and vocabulary management.

Normalization lowercases and splits on whitespace plus the punctuation
set ``.,;:()/``. All punctuation is dropped except ``/``, which is kept
as its own token so compound interval names survive round-trips.

Special ids are fixed: PAD=0, BOS=1, EOS=2, UNK=3. Regular words are
assigned ids from 4 upward, ordered by descending frequency with
lexicographic tie-breaks, which makes vocabulary construction
deterministic for a given corpus.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .errors import EmptyCorpus, IoError

PAD_ID = 0
BOS_ID = 1
EOS_ID = 2
UNK_ID = 3
PAD_TOKEN = "<pad>"
BOS_TOKEN = "<bos>"
EOS_TOKEN = "<eos>"
UNK_TOKEN = "<unk>"
SPECIAL_TOKENS = (PAD_TOKEN, BOS_TOKEN, EOS_TOKEN, UNK_TOKEN)

_DROPPED = ".,;:()"
_KEPT = "/"


def normalize(text: str) -> list[str]:
    """Lowercase and split into word tokens.

    Characters in ``.,;:()`` act as separators and are dropped; ``/``
    separates but is emitted as a standalone token.
    """
    out: list[str] = []
    word: list[str] = []

    def flush() -> None:
        if word:
            out.append("".join(word))
            word.clear()

    for ch in text.lower():
        if ch.isspace() or ch in _DROPPED:
            flush()
        elif ch in _KEPT:
            flush()
            out.append(ch)
        else:
            word.append(ch)
    flush()
    return out


@dataclass
class Vocab:
    """Bidirectional token/id mapping with fixed special ids."""

    token_to_id: dict[str, int]
    id_to_token: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.id_to_token:
            self.id_to_token = [""] * len(self.token_to_id)
            for tok, i in self.token_to_id.items():
                self.id_to_token[i] = tok

    def __len__(self) -> int:
        return len(self.id_to_token)

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_id

    def lookup(self, token: str) -> int:
        return self.token_to_id.get(token, UNK_ID)

    def save(self, path: str | Path) -> None:
        payload = {"tokens": self.id_to_token}
        Path(path).write_text(json.dumps(payload, indent=0), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocab":
        p = Path(path)
        if not p.exists():
            raise IoError(f"vocab file not found: {p}")
        tokens = json.loads(p.read_text(encoding="utf-8"))["tokens"]
        return cls(token_to_id={t: i for i, t in enumerate(tokens)},
                   id_to_token=list(tokens))


def build_vocab(
    corpus: Iterable[str],
    min_freq: int = 1,
    max_size: Optional[int] = None,
) -> Vocab:
    """Build a vocabulary from raw report strings.

    Words are ranked by descending frequency, ties broken
    lexicographically. ``max_size`` caps the total size including the
    four specials. Raises :class:`EmptyCorpus` when no tokens survive.
    """
    counts: Counter[str] = Counter()
    n_docs = 0
    for doc in corpus:
        n_docs += 1
        counts.update(normalize(doc))
    if n_docs == 0 or not counts:
        raise EmptyCorpus("no tokens in corpus")

    words = [w for w, c in counts.items() if c >= min_freq]
    words.sort(key=lambda w: (-counts[w], w))
    if max_size is not None:
        words = words[: max(0, max_size - len(SPECIAL_TOKENS))]
    if not words:
        raise EmptyCorpus(f"no tokens with frequency >= {min_freq}")

    id_to_token = list(SPECIAL_TOKENS) + words
    return Vocab(token_to_id={t: i for i, t in enumerate(id_to_token)},
                 id_to_token=id_to_token)


def tokenize(text: str, vocab: Vocab) -> list[int]:
    """Encode text as ``[BOS, ...word ids..., EOS]``; unknown words map to UNK."""
    return [BOS_ID] + [vocab.lookup(t) for t in normalize(text)] + [EOS_ID]


def detokenize(ids: Sequence[int], vocab: Vocab) -> str:
    """Decode ids back to a space-joined string, skipping special tokens."""
    words = [
        vocab.id_to_token[i]
        for i in ids
        if 0 <= i < len(vocab) and i not in (PAD_ID, BOS_ID, EOS_ID, UNK_ID)
    ]
    return " ".join(words)
