"""Dual-encoder with caption decoder and the combined training losses.

The ECG encoder is a 1-D vision transformer: the 12x5000 signal is cut
into non-overlapping windows of ``patch_size`` samples, each window
flattened across all leads into one token of dimension
``12 * patch_size``, prepended with a learned CLS token. The text
encoder is a standard transformer over word ids whose BOS position
serves as CLS. Both CLS states project into a shared space and are
L2-normalized.

The caption decoder is causally masked self-attention plus
cross-attention over the full ECG patch-token sequence, trained with
teacher forcing.

Losses: a symmetric InfoNCE contrastive term over the scaled similarity
matrix (matched pairs on the diagonal), a mean per-token negative
log-likelihood captioning term, and their weighted sum. The similarity
temperature is a learnable log-parameter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import torch
import torch.nn.functional as F
from torch import Tensor, nn

from .errors import BatchMismatch, SequenceTooLong, ShapeMismatch
from .signal_io import N_LEADS, TARGET_SAMPLES
from .text import BOS_ID, EOS_ID, PAD_ID

INIT_TEMPERATURE = 0.07


@dataclass
class ModelConfig:
    """Architecture hyperparameters for the dual encoder and decoder."""

    vocab_size: int
    patch_size: int = 50
    ecg_layers: int = 12
    text_layers: int = 12
    dec_layers: int = 6
    hidden: int = 768
    heads: int = 12
    mlp_dim: int = 3072
    embed_dim: int = 512
    max_text_len: int = 128
    n_leads: int = N_LEADS
    n_samples: int = TARGET_SAMPLES

    def __post_init__(self) -> None:
        if self.hidden % self.heads != 0:
            raise ValueError(
                f"hidden ({self.hidden}) must be divisible by heads ({self.heads})"
            )
        if self.n_samples % self.patch_size != 0:
            raise ValueError(
                f"n_samples ({self.n_samples}) must be divisible by "
                f"patch_size ({self.patch_size})"
            )
        if self.vocab_size < 5:
            raise ValueError("vocab_size must cover the four special ids")

    @property
    def n_patches(self) -> int:
        return self.n_samples // self.patch_size


class _Attention(nn.Module):
    """Multi-head scaled dot-product attention over explicit projections."""

    def __init__(self, hidden: int, heads: int) -> None:
        super().__init__()
        self.heads = heads
        self.head_dim = hidden // heads
        self.q = nn.Linear(hidden, hidden)
        self.k = nn.Linear(hidden, hidden)
        self.v = nn.Linear(hidden, hidden)
        self.out = nn.Linear(hidden, hidden)

    def forward(
        self,
        query: Tensor,
        keyval: Tensor,
        causal: bool = False,
        key_pad_mask: Optional[Tensor] = None,
    ) -> Tensor:
        b, lq, _ = query.shape
        lk = keyval.shape[1]

        def split(t: Tensor, length: int) -> Tensor:
            return t.view(b, length, self.heads, self.head_dim).transpose(1, 2)

        q = split(self.q(query), lq)
        k = split(self.k(keyval), lk)
        v = split(self.v(keyval), lk)
        scores = (q @ k.transpose(-2, -1)) / math.sqrt(self.head_dim)
        if causal:
            mask = torch.triu(
                torch.ones(lq, lk, dtype=torch.bool, device=scores.device), 1
            )
            scores = scores.masked_fill(mask, float("-inf"))
        if key_pad_mask is not None:
            scores = scores.masked_fill(
                key_pad_mask[:, None, None, :], float("-inf")
            )
        attn = torch.softmax(scores, dim=-1)
        mixed = (attn @ v).transpose(1, 2).reshape(b, lq, -1)
        return self.out(mixed)


class _Mlp(nn.Module):
    def __init__(self, hidden: int, mlp_dim: int) -> None:
        super().__init__()
        self.fc1 = nn.Linear(hidden, mlp_dim)
        self.fc2 = nn.Linear(mlp_dim, hidden)

    def forward(self, x: Tensor) -> Tensor:
        return self.fc2(F.gelu(self.fc1(x)))


class _EncoderBlock(nn.Module):
    """Pre-norm transformer block: self-attention then MLP, residual each."""

    def __init__(self, hidden: int, heads: int, mlp_dim: int) -> None:
        super().__init__()
        self.norm1 = nn.LayerNorm(hidden)
        self.attn = _Attention(hidden, heads)
        self.norm2 = nn.LayerNorm(hidden)
        self.mlp = _Mlp(hidden, mlp_dim)

    def forward(self, x: Tensor, key_pad_mask: Optional[Tensor] = None) -> Tensor:
        h = self.norm1(x)
        x = x + self.attn(h, h, key_pad_mask=key_pad_mask)
        return x + self.mlp(self.norm2(x))


class _DecoderBlock(nn.Module):
    """Causal self-attention, cross-attention to ECG latents, then MLP."""

    def __init__(self, hidden: int, heads: int, mlp_dim: int) -> None:
        super().__init__()
        self.norm1 = nn.LayerNorm(hidden)
        self.self_attn = _Attention(hidden, heads)
        self.norm2 = nn.LayerNorm(hidden)
        self.cross_attn = _Attention(hidden, heads)
        self.norm3 = nn.LayerNorm(hidden)
        self.mlp = _Mlp(hidden, mlp_dim)

    def forward(self, x: Tensor, memory: Tensor) -> Tensor:
        h = self.norm1(x)
        x = x + self.self_attn(h, h, causal=True)
        x = x + self.cross_attn(self.norm2(x), memory)
        return x + self.mlp(self.norm3(x))


class DualEncoderModel(nn.Module):
    """ECG encoder, text encoder, caption decoder, and temperature."""

    def __init__(self, config: ModelConfig) -> None:
        super().__init__()
        self.config = config
        c = config

        self.patch_proj = nn.Linear(c.n_leads * c.patch_size, c.hidden)
        self.ecg_cls = nn.Parameter(torch.zeros(1, 1, c.hidden))
        self.ecg_pos = nn.Parameter(torch.zeros(1, c.n_patches + 1, c.hidden))
        self.ecg_blocks = nn.ModuleList(
            _EncoderBlock(c.hidden, c.heads, c.mlp_dim) for _ in range(c.ecg_layers)
        )
        self.ecg_norm = nn.LayerNorm(c.hidden)
        self.ecg_proj = nn.Linear(c.hidden, c.embed_dim, bias=False)

        self.tok_embed = nn.Embedding(c.vocab_size, c.hidden)
        self.text_pos = nn.Parameter(torch.zeros(1, c.max_text_len, c.hidden))
        self.text_blocks = nn.ModuleList(
            _EncoderBlock(c.hidden, c.heads, c.mlp_dim) for _ in range(c.text_layers)
        )
        self.text_norm = nn.LayerNorm(c.hidden)
        self.text_proj = nn.Linear(c.hidden, c.embed_dim, bias=False)

        self.dec_embed = nn.Embedding(c.vocab_size, c.hidden)
        self.dec_pos = nn.Parameter(torch.zeros(1, c.max_text_len, c.hidden))
        self.dec_blocks = nn.ModuleList(
            _DecoderBlock(c.hidden, c.heads, c.mlp_dim) for _ in range(c.dec_layers)
        )
        self.dec_norm = nn.LayerNorm(c.hidden)
        self.lm_head = nn.Linear(c.hidden, c.vocab_size)

        self.log_temperature = nn.Parameter(
            torch.tensor(math.log(1.0 / INIT_TEMPERATURE))
        )

    @property
    def temperature(self) -> Tensor:
        """Similarity temperature sigma = exp(-log_temperature) > 0."""
        return torch.exp(-self.log_temperature)

    def ecg_latents(self, x: Tensor) -> Tensor:
        """Full patch-token latents (B, n_patches+1, hidden); CLS at index 0."""
        c = self.config
        if x.ndim != 3 or x.shape[1] != c.n_leads or x.shape[2] != c.n_samples:
            raise ShapeMismatch(
                f"expected (B, {c.n_leads}, {c.n_samples}), got {tuple(x.shape)}"
            )
        b = x.shape[0]
        # (B, leads, n_patches, patch) -> (B, n_patches, leads * patch)
        patches = (
            x.view(b, c.n_leads, c.n_patches, c.patch_size)
            .permute(0, 2, 1, 3)
            .reshape(b, c.n_patches, c.n_leads * c.patch_size)
        )
        h = self.patch_proj(patches)
        h = torch.cat([self.ecg_cls.expand(b, -1, -1), h], dim=1) + self.ecg_pos
        for block in self.ecg_blocks:
            h = block(h)
        return self.ecg_norm(h)

    def encode_ecg(self, x: Tensor) -> Tensor:
        """Unit-norm embeddings (B, embed_dim) from standardized signals."""
        cls = self.ecg_latents(x)[:, 0]
        return F.normalize(self.ecg_proj(cls), dim=-1)

    def encode_text(self, ids: Tensor) -> Tensor:
        """Unit-norm embeddings (B, embed_dim) from padded token id batches."""
        c = self.config
        if ids.shape[1] > c.max_text_len:
            raise SequenceTooLong(
                f"sequence length {ids.shape[1]} exceeds max_text_len {c.max_text_len}"
            )
        pad_mask = ids.eq(PAD_ID)
        h = self.tok_embed(ids) + self.text_pos[:, : ids.shape[1]]
        for block in self.text_blocks:
            h = block(h, key_pad_mask=pad_mask)
        cls = self.text_norm(h)[:, 0]
        return F.normalize(self.text_proj(cls), dim=-1)

    def decode_logits(self, ids: Tensor, memory: Tensor) -> Tensor:
        """Next-token logits (B, L, vocab) given decoder input ids and ECG latents."""
        c = self.config
        if ids.shape[1] > c.max_text_len:
            raise SequenceTooLong(
                f"sequence length {ids.shape[1]} exceeds max_text_len {c.max_text_len}"
            )
        h = self.dec_embed(ids) + self.dec_pos[:, : ids.shape[1]]
        for block in self.dec_blocks:
            h = block(h, memory)
        return self.lm_head(self.dec_norm(h))


def init_params(model: DualEncoderModel, seed: int) -> DualEncoderModel:
    """Reinitialize all parameters from a seeded generator, in place.

    Weight matrices, embeddings, and CLS/position parameters draw from
    N(0, 0.02); biases start at zero; layer norms at identity. Using an
    explicit generator makes initialization reproducible regardless of
    global RNG state.
    """
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for name, p in model.named_parameters():
            if name == "log_temperature":
                p.fill_(math.log(1.0 / INIT_TEMPERATURE))
            elif name.endswith(".bias") or "norm" in name:
                if name.endswith(".weight"):
                    p.fill_(1.0)
                else:
                    p.zero_()
            else:
                values = torch.empty(
                    p.shape, dtype=torch.float32
                ).normal_(0.0, 0.02, generator=gen)
                p.copy_(values.to(p.dtype))
    return model


class ContrastiveLoss(NamedTuple):
    """Total symmetric loss plus its directional mean cross-entropies."""

    total: Tensor
    ecg_to_text: Tensor
    text_to_ecg: Tensor


def contrastive_loss(
    ecg_emb: Tensor, text_emb: Tensor, sigma: Tensor | float
) -> ContrastiveLoss:
    """Symmetric InfoNCE over the scaled similarity matrix.

    Each directional term is the mean cross-entropy of the matched pair
    under a softmax over the batch; the total is their sum. Identical
    embeddings give exactly 2*ln(N); a single pair gives 0.
    """
    if ecg_emb.ndim != 2 or text_emb.ndim != 2:
        raise BatchMismatch("embeddings must be 2-D (N, embed_dim) batches")
    if ecg_emb.shape != text_emb.shape:
        raise BatchMismatch(
            f"batch shapes differ: {tuple(ecg_emb.shape)} vs {tuple(text_emb.shape)}"
        )
    if ecg_emb.shape[0] < 1:
        raise BatchMismatch("need at least one pair")
    logits = (ecg_emb @ text_emb.T) / sigma
    diag = torch.arange(logits.shape[0], device=logits.device)
    e2t = -torch.log_softmax(logits, dim=1)[diag, diag].mean()
    t2e = -torch.log_softmax(logits, dim=0)[diag, diag].mean()
    return ContrastiveLoss(total=e2t + t2e, ecg_to_text=e2t, text_to_ecg=t2e)


def captioning_loss(
    model: DualEncoderModel, ecg_latents: Tensor, target_ids: Tensor
) -> Tensor:
    """Teacher-forced mean NLL over non-PAD target positions.

    The decoder consumes ``target_ids[:, :-1]`` and is scored on
    ``target_ids[:, 1:]``; PAD positions are excluded from the mean.
    """
    inputs = target_ids[:, :-1]
    targets = target_ids[:, 1:]
    logits = model.decode_logits(inputs, ecg_latents)
    logp = torch.log_softmax(logits, dim=-1)
    token_nll = -logp.gather(-1, targets.unsqueeze(-1)).squeeze(-1)
    keep = targets.ne(PAD_ID)
    return (token_nll * keep).sum() / keep.sum().clamp(min=1)


def total_loss(
    l_con: Tensor | float,
    l_cap: Tensor | float,
    lambda_con: float = 1.0,
    lambda_cap: float = 2.0,
) -> Tensor | float:
    """Weighted sum of the contrastive and captioning terms."""
    return lambda_con * l_con + lambda_cap * l_cap


@torch.no_grad()
def generate_caption(
    model: DualEncoderModel, x: Tensor, max_len: int = 64
) -> list[int]:
    """Greedy decode for one signal (12, n_samples) or batch of one.

    Starts from BOS and stops at EOS or after ``max_len`` generated
    tokens; the returned ids include BOS (and EOS when produced).
    """
    if x.ndim == 2:
        x = x.unsqueeze(0)
    memory = model.ecg_latents(x)
    ids = [BOS_ID]
    limit = min(max_len, model.config.max_text_len - 1)
    for _ in range(limit):
        inp = torch.tensor([ids], dtype=torch.long, device=x.device)
        logits = model.decode_logits(inp, memory)
        nxt = int(torch.argmax(logits[0, -1]))
        ids.append(nxt)
        if nxt == EOS_ID:
            break
    return ids
