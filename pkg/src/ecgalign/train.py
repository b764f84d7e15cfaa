"""Augmentations, AdamW, training loop, gradient check, checkpoints.

The trainer is single-process and fully deterministic given its seed:
parameter init, epoch shuffles, and augmentation draws all derive from
the configured seed, so two runs with identical inputs produce bitwise
identical checkpoints.

Checkpoints use a small versioned container: an 8-byte magic, a JSON
header describing metadata and the tensor directory, then raw float32
little-endian payloads. Writes are atomic (temp file + rename) and
round-trips are bit-exact.
"""

from __future__ import annotations

import json
import logging
import math
import os
import struct
import tempfile
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional

import numpy as np
import torch
from torch import Tensor

from . import model as model_mod
from .errors import EmptyDataset, IncompatibleVersion, IoError, ShapeMismatch
from .model import DualEncoderModel, ModelConfig, contrastive_loss, captioning_loss
from .signal_io import DatasetManifest, EcgRecord, load_record, standardize
from .text import EOS_ID, PAD_ID, Vocab, build_vocab, tokenize

logger = logging.getLogger(__name__)

CKPT_MAGIC = b"ECGCKPT1"


@dataclass
class WanderSpec:
    """Sinusoidal baseline drift added to every lead with random phase."""

    amplitude_mv: float = 0.1
    freq_hz: float = 0.25
    prob: float = 0.0

    def __post_init__(self) -> None:
        if not 0.05 <= self.freq_hz <= 0.5:
            raise ValueError("wander freq_hz must lie in [0.05, 0.5]")
        if not 0.0 <= self.prob <= 1.0:
            raise ValueError("prob must lie in [0, 1]")


@dataclass
class CutmixSpec:
    """Swap one contiguous segment between two batch members."""

    fraction: float = 0.25
    prob: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.fraction <= 0.5:
            raise ValueError("cutmix fraction must lie in [0, 0.5]")
        if not 0.0 <= self.prob <= 1.0:
            raise ValueError("prob must lie in [0, 1]")


@dataclass
class MaskSpec:
    """Zero out random time windows across all leads."""

    n_windows: int = 2
    window_len: int = 250
    prob: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.prob <= 1.0:
            raise ValueError("prob must lie in [0, 1]")


@dataclass
class AugmentationSpec:
    wander: WanderSpec = field(default_factory=WanderSpec)
    cutmix: CutmixSpec = field(default_factory=CutmixSpec)
    mask: MaskSpec = field(default_factory=MaskSpec)


@dataclass
class TrainConfig:
    """Optimizer and loop hyperparameters."""

    batch_size: int = 128
    lr: float = 1e-4
    weight_decay: float = 0.1
    epochs: int = 20
    lambda_con: float = 1.0
    lambda_cap: float = 2.0
    seed: int = 0
    aug: AugmentationSpec = field(default_factory=AugmentationSpec)
    log_path: Optional[str] = None
    log_every: int = 50

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.lambda_con < 0 or self.lambda_cap < 0:
            raise ValueError("loss weights must be non-negative")


def augment(
    batch: list[EcgRecord], spec: AugmentationSpec, rng_seed: int
) -> list[EcgRecord]:
    """Apply baseline wander, cutmix, and random masking to a batch copy.

    Input records are never mutated; shapes, ids, and batch order are
    preserved. All randomness comes from ``rng_seed``.
    """
    rng = np.random.default_rng(rng_seed)
    signals = [rec.signal.copy() for rec in batch]

    for sig, rec in zip(signals, batch):
        if spec.wander.prob > 0 and rng.random() < spec.wander.prob:
            t = np.arange(sig.shape[1], dtype=np.float64) / rec.fs
            phase = rng.uniform(0.0, 2.0 * np.pi)
            drift = spec.wander.amplitude_mv * np.sin(
                2.0 * np.pi * spec.wander.freq_hz * t + phase
            )
            sig += drift.astype(np.float32)[None, :]

    if spec.cutmix.prob > 0 and len(signals) >= 2:
        order = rng.permutation(len(signals))
        for a, b in zip(order[0::2], order[1::2]):
            if rng.random() >= spec.cutmix.prob:
                continue
            n = signals[a].shape[1]
            seg = int(round(spec.cutmix.fraction * n))
            if seg < 1:
                continue
            start = int(rng.integers(0, n - seg + 1))
            sl = slice(start, start + seg)
            tmp = signals[a][:, sl].copy()
            signals[a][:, sl] = signals[b][:, sl]
            signals[b][:, sl] = tmp

    for sig in signals:
        if spec.mask.prob > 0 and rng.random() < spec.mask.prob:
            n = sig.shape[1]
            w = min(spec.mask.window_len, n)
            for _ in range(spec.mask.n_windows):
                start = int(rng.integers(0, n - w + 1))
                sig[:, start:start + w] = 0.0

    return [
        EcgRecord(id=rec.id, signal=sig, fs=rec.fs, meta=rec.meta)
        for rec, sig in zip(batch, signals)
    ]


@dataclass
class AdamState:
    """First/second moment accumulators and the shared step counter."""

    step: int = 0
    m: dict[str, Tensor] = field(default_factory=dict)
    v: dict[str, Tensor] = field(default_factory=dict)


def adamw_step(
    params: dict[str, Tensor],
    grads: dict[str, Optional[Tensor]],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    weight_decay: float = 0.0,
) -> tuple[dict[str, Tensor], AdamState]:
    """One decoupled-weight-decay Adam update, in place.

    Parameters whose gradient is None are skipped entirely, including
    the decay term, so loss terms that never touch a subnetwork leave it
    bitwise unchanged.
    """
    state.step += 1
    t = state.step
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    with torch.no_grad():
        for name, p in params.items():
            g = grads.get(name)
            if g is None:
                continue
            if g.shape != p.shape:
                raise ShapeMismatch(
                    f"grad shape {tuple(g.shape)} != param shape "
                    f"{tuple(p.shape)} for {name}"
                )
            if name not in state.m:
                state.m[name] = torch.zeros_like(p)
                state.v[name] = torch.zeros_like(p)
            m, v = state.m[name], state.v[name]
            p.mul_(1.0 - lr * weight_decay)
            m.mul_(beta1).add_(g, alpha=1.0 - beta1)
            v.mul_(beta2).addcmul_(g, g, value=1.0 - beta2)
            m_hat = m / bc1
            v_hat = v / bc2
            p.addcdiv_(m_hat, v_hat.sqrt().add_(eps), value=-lr)
    return params, state


def grad_check(
    loss_fn: Callable[[], Tensor],
    params: dict[str, Tensor],
    eps: float = 1e-4,
    n_probes: int = 200,
    seed: int = 0,
) -> float:
    """Max relative error between autograd and central finite differences.

    Probes ``n_probes`` coordinates sampled uniformly over all parameter
    entries. Run with float64 parameters; the relative-error denominator
    is floored so that coordinates with near-zero true gradient do not
    amplify finite-difference roundoff into false alarms.
    """
    for p in params.values():
        if p.grad is not None:
            p.grad = None
    loss = loss_fn()
    loss.backward()
    analytic = {
        name: (p.grad.detach().clone() if p.grad is not None else None)
        for name, p in params.items()
    }

    names = list(params)
    sizes = np.array([params[n].numel() for n in names], dtype=np.int64)
    total = int(sizes.sum())
    rng = np.random.default_rng(seed)
    flat_picks = rng.integers(0, total, size=n_probes)
    bounds = np.cumsum(sizes)

    worst = 0.0
    with torch.no_grad():
        for pick in flat_picks:
            which = int(np.searchsorted(bounds, pick, side="right"))
            idx = int(pick - (bounds[which - 1] if which > 0 else 0))
            name = names[which]
            p = params[name].view(-1)
            old = p[idx].item()

            p[idx] = old + eps
            with torch.enable_grad():
                up = loss_fn().item()
            p[idx] = old - eps
            with torch.enable_grad():
                down = loss_fn().item()
            p[idx] = old

            numeric = (up - down) / (2.0 * eps)
            g = analytic[name]
            a = g.view(-1)[idx].item() if g is not None else 0.0
            denom = max(abs(a) + abs(numeric), 1e-2)
            worst = max(worst, abs(a - numeric) / denom)
    return worst


@dataclass
class Checkpoint:
    """Named float32 tensors plus a JSON-serializable metadata block."""

    meta: dict
    tensors: dict[str, np.ndarray]


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> None:
    """Write the container atomically: temp file in place, then rename."""
    path = Path(path)
    directory = []
    payloads = []
    for name, arr in ckpt.tensors.items():
        # asarray keeps 0-d shapes intact; tobytes emits C-order regardless
        a = np.asarray(arr, dtype="<f4")
        directory.append({"name": name, "shape": list(a.shape)})
        payloads.append(a.tobytes())
    header = json.dumps(
        {"version": 1, "meta": ckpt.meta, "tensors": directory},
        sort_keys=True,
        separators=(",", ":"),
    ).encode("utf-8")

    fd, tmp = tempfile.mkstemp(dir=path.parent or Path("."), suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(CKPT_MAGIC)
            f.write(struct.pack("<I", len(header)))
            f.write(header)
            for blob in payloads:
                f.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_checkpoint(path: str | Path) -> Checkpoint:
    """Read and validate a checkpoint container."""
    path = Path(path)
    if not path.exists():
        raise IoError(f"checkpoint not found: {path}")
    data = path.read_bytes()
    if len(data) < len(CKPT_MAGIC) + 4 or data[: len(CKPT_MAGIC)] != CKPT_MAGIC:
        raise IncompatibleVersion(f"bad checkpoint magic in {path}")
    hlen = struct.unpack_from("<I", data, len(CKPT_MAGIC))[0]
    start = len(CKPT_MAGIC) + 4
    if start + hlen > len(data):
        raise IncompatibleVersion("truncated checkpoint header")
    try:
        header = json.loads(data[start:start + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise IncompatibleVersion(f"unreadable checkpoint header: {exc}") from exc
    if header.get("version") != 1:
        raise IncompatibleVersion(f"unsupported version {header.get('version')!r}")

    tensors: dict[str, np.ndarray] = {}
    offset = start + hlen
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        nbytes = count * 4
        if offset + nbytes > len(data):
            raise IncompatibleVersion("tensor payload shorter than directory")
        arr = np.frombuffer(data, dtype="<f4", count=count, offset=offset)
        tensors[entry["name"]] = arr.reshape(shape).copy()
        offset += nbytes
    if offset != len(data):
        raise IncompatibleVersion("trailing bytes after declared tensors")
    return Checkpoint(meta=header["meta"], tensors=tensors)


def model_to_checkpoint(
    model: DualEncoderModel, vocab: Vocab, extra_meta: Optional[dict] = None
) -> Checkpoint:
    meta = {
        "model_config": asdict(model.config),
        "vocab": vocab.id_to_token,
    }
    if extra_meta:
        meta.update(extra_meta)
    tensors = {
        name: p.detach().cpu().numpy().astype(np.float32)
        for name, p in model.named_parameters()
    }
    return Checkpoint(meta=meta, tensors=tensors)


def model_from_checkpoint(ckpt: Checkpoint) -> tuple[DualEncoderModel, Vocab]:
    cfg = ModelConfig(**ckpt.meta["model_config"])
    vocab_tokens = ckpt.meta["vocab"]
    vocab = Vocab(
        token_to_id={t: i for i, t in enumerate(vocab_tokens)},
        id_to_token=list(vocab_tokens),
    )
    model = DualEncoderModel(cfg)
    with torch.no_grad():
        for name, p in model.named_parameters():
            if name not in ckpt.tensors:
                raise IncompatibleVersion(f"checkpoint missing tensor {name}")
            arr = ckpt.tensors[name]
            if tuple(arr.shape) != tuple(p.shape):
                raise IncompatibleVersion(
                    f"tensor {name}: checkpoint shape {arr.shape} != "
                    f"model shape {tuple(p.shape)}"
                )
            p.copy_(torch.from_numpy(arr))
    return model, vocab


def _pad_batch(token_lists: list[list[int]], max_len: int) -> Tensor:
    clipped = []
    for toks in token_lists:
        if len(toks) > max_len:
            toks = toks[: max_len - 1] + [EOS_ID]
        clipped.append(toks)
    width = max(len(t) for t in clipped)
    out = torch.full((len(clipped), width), PAD_ID, dtype=torch.long)
    for i, toks in enumerate(clipped):
        out[i, : len(toks)] = torch.tensor(toks, dtype=torch.long)
    return out


def train(
    cfg: TrainConfig,
    data: DatasetManifest,
    model_cfg: ModelConfig,
    records: Optional[list[EcgRecord]] = None,
    reports: Optional[list[str]] = None,
) -> Checkpoint:
    """Train the dual encoder on (record, report) pairs from a manifest.

    Records and reports may be passed directly (already standardized);
    otherwise they are loaded from the manifest entry paths. The
    vocabulary is built from the training reports and
    ``model_cfg.vocab_size`` is overridden to match. Constant learning
    rate after a linear warmup over the first 5% of steps.
    """
    if records is None or reports is None:
        if not data.entries:
            raise EmptyDataset("manifest has no entries")
        records = []
        reports = []
        for entry in data.entries:
            rec = load_record(entry.record_path)
            records.append(standardize(rec))
            reports.append(entry.report)
    if not records:
        raise EmptyDataset("no training records")

    vocab = build_vocab(reports)
    cfg_resolved = replace(model_cfg, vocab_size=len(vocab))
    model = model_mod.init_params(DualEncoderModel(cfg_resolved), cfg.seed)
    token_lists = [tokenize(r, vocab) for r in reports]

    params = dict(model.named_parameters())
    state = AdamState()
    n = len(records)
    steps_per_epoch = math.ceil(n / cfg.batch_size)
    total_steps = cfg.epochs * steps_per_epoch
    warmup = max(1, int(round(0.05 * total_steps)))

    log_file = open(cfg.log_path, "w", encoding="utf-8") if cfg.log_path else None
    try:
        global_step = 0
        for epoch in range(cfg.epochs):
            order = np.random.default_rng(cfg.seed + 7919 * epoch).permutation(n)
            for start in range(0, n, cfg.batch_size):
                idx = order[start:start + cfg.batch_size]
                batch = [records[i] for i in idx]
                batch = augment(
                    batch, cfg.aug, rng_seed=cfg.seed * 1_000_003 + global_step
                )
                x = torch.from_numpy(
                    np.stack([r.signal for r in batch]).astype(np.float32)
                )
                ids = _pad_batch(
                    [token_lists[i] for i in idx], cfg_resolved.max_text_len
                )

                latents = model.ecg_latents(x)
                ecg_emb = torch.nn.functional.normalize(
                    model.ecg_proj(latents[:, 0]), dim=-1
                )
                text_emb = model.encode_text(ids)
                l_con = contrastive_loss(ecg_emb, text_emb, model.temperature).total
                if cfg.lambda_cap > 0:
                    l_cap = captioning_loss(model, latents, ids)
                else:
                    l_cap = torch.zeros(())
                loss = cfg.lambda_con * l_con + cfg.lambda_cap * l_cap

                for p in params.values():
                    p.grad = None
                loss.backward()
                grads = {name: p.grad for name, p in params.items()}
                lr_t = cfg.lr * min(1.0, (global_step + 1) / warmup)
                adamw_step(
                    params, grads, state, lr=lr_t, weight_decay=cfg.weight_decay
                )

                entry = {
                    "step": global_step,
                    "l_con": float(l_con.detach()),
                    "l_cap": float(l_cap.detach()),
                    "total": float(loss.detach()),
                }
                if log_file is not None:
                    log_file.write(json.dumps(entry) + "\n")
                if global_step % cfg.log_every == 0:
                    logger.info(
                        "step %d/%d l_con %.4f l_cap %.4f total %.4f",
                        global_step, total_steps, entry["l_con"],
                        entry["l_cap"], entry["total"],
                    )
                global_step += 1
    finally:
        if log_file is not None:
            log_file.close()

    return model_to_checkpoint(
        model,
        vocab,
        extra_meta={"train_config": _train_cfg_meta(cfg), "steps": total_steps},
    )


def _train_cfg_meta(cfg: TrainConfig) -> dict:
    meta = asdict(cfg)
    meta.pop("log_path", None)
    return meta
