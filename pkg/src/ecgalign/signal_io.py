"""Loading, sanitizing, and standardizing ECG records and dataset manifests.

Two on-disk record formats are supported:

* ``csv``  -- one header line ``fs=<int>``, then one row per sample with 12
  comma-separated lead values in millivolts.
* ``bin``  -- little-endian container: magic ``ECG1``, uint32 lead count,
  uint32 sampling rate, uint32 sample count, then a lead-major float32
  payload.

Dataset manifests are JSON-lines files with one entry per line carrying
``record_path``, ``report``, ``labels`` and ``split``.
"""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Literal, Optional

import numpy as np

from .errors import IoError, MalformedManifest, MalformedRecord

logger = logging.getLogger(__name__)

N_LEADS = 12
TARGET_FS = 500
TARGET_DURATION_S = 10
TARGET_SAMPLES = TARGET_FS * TARGET_DURATION_S

BIN_MAGIC = b"ECG1"

LEAD_NAMES = ("I", "II", "III", "aVR", "aVL", "aVF",
              "V1", "V2", "V3", "V4", "V5", "V6")
LEAD_II = 1

SPLITS = ("train", "val", "test")

RecordFormat = Literal["csv", "bin"]


@dataclass
class PatientMeta:
    """Optional patient context attached to a record."""

    age: Optional[int] = None
    sex: Optional[str] = None
    history: Optional[str] = None


@dataclass
class EcgRecord:
    """A 12-lead ECG signal matrix in millivolts with its sampling rate."""

    id: str
    signal: np.ndarray  # (12, S) float32, mV
    fs: int
    meta: PatientMeta = field(default_factory=PatientMeta)

    def __post_init__(self) -> None:
        self.signal = np.asarray(self.signal, dtype=np.float32)
        if self.signal.ndim != 2 or self.signal.shape[0] != N_LEADS:
            raise MalformedRecord(
                f"record {self.id!r}: expected {N_LEADS} leads, "
                f"got shape {self.signal.shape}"
            )
        if self.fs <= 0:
            raise MalformedRecord(f"record {self.id!r}: fs must be positive, got {self.fs}")

    @property
    def n_samples(self) -> int:
        return self.signal.shape[1]

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.fs

    @property
    def is_dirty(self) -> bool:
        """True when any sample is NaN or infinite."""
        return not bool(np.isfinite(self.signal).all())

    def lead(self, index: int) -> np.ndarray:
        return self.signal[index]


@dataclass
class ManifestEntry:
    record_path: str
    report: str
    labels: list[str]
    split: str


@dataclass
class DatasetManifest:
    entries: list[ManifestEntry] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)

    def subset(self, split: str) -> "DatasetManifest":
        return DatasetManifest([e for e in self.entries if e.split == split])


def load_record(path: str | Path, format: RecordFormat | None = None) -> EcgRecord:
    """Load an ECG record from ``path`` in the named on-disk format.

    When ``format`` is omitted it is inferred from the file extension
    (``.csv`` or ``.bin``). Literal ``NAN``/``inf`` cells in CSV input
    parse to non-finite sentinel values; the returned record reports them
    through ``is_dirty`` and they are only replaced by :func:`sanitize`.
    """
    path = Path(path)
    if not path.is_file():
        raise IoError(f"record file not found: {path}")
    if format is None:
        suffix = path.suffix.lower().lstrip(".")
        if suffix not in ("csv", "bin"):
            raise ValueError(
                f"cannot infer record format from extension {path.suffix!r}"
            )
        format = suffix  # type: ignore[assignment]
    if format == "csv":
        record = _load_csv(path)
    elif format == "bin":
        record = _load_bin(path)
    else:
        raise ValueError(f"unknown record format: {format!r}")
    if record.is_dirty:
        logger.warning("record %s contains NaN/inf samples; run sanitize", record.id)
    return record


def save_record(record: EcgRecord, path: str | Path, format: RecordFormat = "bin") -> None:
    """Write a record; the ``bin`` format round-trips bit-exactly."""
    path = Path(path)
    try:
        if format == "csv":
            _save_csv(record, path)
        elif format == "bin":
            _save_bin(record, path)
        else:
            raise ValueError(f"unknown record format: {format!r}")
    except OSError as exc:
        raise IoError(f"cannot write record to {path}: {exc}") from exc


def _load_csv(path: Path) -> EcgRecord:
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    if not lines or not lines[0].strip().lower().startswith("fs="):
        raise MalformedRecord(f"{path}: missing 'fs=<int>' header line")
    try:
        fs = int(lines[0].strip().split("=", 1)[1])
    except ValueError as exc:
        raise MalformedRecord(f"{path}: unparseable fs header {lines[0]!r}") from exc

    rows: list[list[float]] = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cells = line.split(",")
        if len(cells) != N_LEADS:
            raise MalformedRecord(
                f"{path}:{lineno}: expected {N_LEADS} columns, got {len(cells)}"
            )
        try:
            rows.append([float(c) for c in cells])
        except ValueError as exc:
            raise MalformedRecord(f"{path}:{lineno}: unparseable value: {exc}") from exc
    if not rows:
        raise MalformedRecord(f"{path}: no sample rows")
    signal = np.asarray(rows, dtype=np.float32).T  # (12, S)
    return EcgRecord(id=path.stem, signal=signal, fs=fs)


def _save_csv(record: EcgRecord, path: Path) -> None:
    with open(path, "w") as fh:
        fh.write(f"fs={record.fs}\n")
        for row in record.signal.T:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def _load_bin(path: Path) -> EcgRecord:
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    header_size = len(BIN_MAGIC) + 12
    if len(blob) < header_size or blob[: len(BIN_MAGIC)] != BIN_MAGIC:
        raise MalformedRecord(f"{path}: not an {BIN_MAGIC!r} record file")
    n_leads, fs, n_samples = struct.unpack_from("<III", blob, len(BIN_MAGIC))
    if n_leads != N_LEADS:
        raise MalformedRecord(f"{path}: expected {N_LEADS} leads, header says {n_leads}")
    expected = header_size + 4 * n_leads * n_samples
    if len(blob) != expected:
        raise MalformedRecord(
            f"{path}: payload size mismatch (got {len(blob)} bytes, expected {expected})"
        )
    payload = np.frombuffer(blob, dtype="<f4", offset=header_size)
    signal = payload.reshape(n_leads, n_samples).copy()
    return EcgRecord(id=path.stem, signal=signal, fs=fs)


def _save_bin(record: EcgRecord, path: Path) -> None:
    sig = np.ascontiguousarray(record.signal, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(BIN_MAGIC)
        fh.write(struct.pack("<III", sig.shape[0], record.fs, sig.shape[1]))
        fh.write(sig.tobytes())


def sanitize(record: EcgRecord) -> EcgRecord:
    """Replace every NaN/inf sample with 0.0, leaving the rest bit-identical."""
    sig = record.signal
    clean = np.where(np.isfinite(sig), sig, np.float32(0.0))
    return replace(record, signal=clean)


def standardize(
    record: EcgRecord,
    target_fs: int = TARGET_FS,
    duration_s: float = TARGET_DURATION_S,
) -> EcgRecord:
    """Resample/truncate/pad a record to exactly ``target_fs * duration_s`` samples.

    Off-rate inputs are linearly resampled, longer recordings keep their
    first ``duration_s`` seconds, and shorter ones are zero-padded at the
    tail.
    """
    if record.n_samples < 1:
        raise MalformedRecord(f"record {record.id!r}: zero-length lead")
    sig = record.signal
    if record.fs != target_fs:
        sig = _resample_linear(sig, record.fs, target_fs)
    n_target = int(round(target_fs * duration_s))
    if sig.shape[1] >= n_target:
        sig = sig[:, :n_target]
    else:
        pad = np.zeros((N_LEADS, n_target - sig.shape[1]), dtype=np.float32)
        sig = np.concatenate([sig, pad], axis=1)
    return replace(record, signal=sig.astype(np.float32), fs=target_fs)


def _resample_linear(signal: np.ndarray, fs: int, target_fs: int) -> np.ndarray:
    n_in = signal.shape[1]
    n_out = int(round(n_in * target_fs / fs))
    if n_out < 1:
        raise MalformedRecord("resampling would produce an empty signal")
    t_in = np.arange(n_in, dtype=np.float64) / fs
    t_out = np.arange(n_out, dtype=np.float64) / target_fs
    out = np.empty((signal.shape[0], n_out), dtype=np.float32)
    for i in range(signal.shape[0]):
        out[i] = np.interp(t_out, t_in, signal[i].astype(np.float64))
    return out


def load_manifest(path: str | Path) -> DatasetManifest:
    """Parse a JSON-lines manifest, rejecting duplicates and bad splits."""
    path = Path(path)
    if not path.is_file():
        raise IoError(f"manifest not found: {path}")
    entries: list[ManifestEntry] = []
    seen: set[str] = set()
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedManifest(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            entries.append(_parse_entry(raw, f"{path}:{lineno}", seen))
    if not entries:
        logger.warning("manifest %s is empty", path)
    return DatasetManifest(entries)


def _parse_entry(raw: object, where: str, seen: set[str]) -> ManifestEntry:
    if not isinstance(raw, dict):
        raise MalformedManifest(f"{where}: entry must be a JSON object")
    missing = {"record_path", "report", "labels", "split"} - raw.keys()
    if missing:
        raise MalformedManifest(f"{where}: missing fields {sorted(missing)}")
    record_path = raw["record_path"]
    if not isinstance(record_path, str) or not record_path:
        raise MalformedManifest(f"{where}: record_path must be a non-empty string")
    if record_path in seen:
        raise MalformedManifest(f"{where}: duplicate record_path {record_path!r}")
    seen.add(record_path)
    if raw["split"] not in SPLITS:
        raise MalformedManifest(
            f"{where}: split must be one of {SPLITS}, got {raw['split']!r}"
        )
    labels = raw["labels"]
    if not isinstance(labels, list) or not all(isinstance(l, str) for l in labels):
        raise MalformedManifest(f"{where}: labels must be a list of strings")
    if not isinstance(raw["report"], str):
        raise MalformedManifest(f"{where}: report must be a string")
    return ManifestEntry(
        record_path=record_path,
        report=raw["report"],
        labels=list(labels),
        split=raw["split"],
    )


def save_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    try:
        with open(path, "w") as fh:
            for e in manifest.entries:
                fh.write(json.dumps({
                    "record_path": e.record_path,
                    "report": e.report,
                    "labels": e.labels,
                    "split": e.split,
                }) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write manifest to {path}: {exc}") from exc
