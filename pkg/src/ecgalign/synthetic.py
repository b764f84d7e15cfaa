"""Synthetic 12-lead ECG generation with known beat geometry.

Each beat is a sum of Gaussian bumps (P, Q, R, S, T) placed at fixed offsets
from the R center, so interval and amplitude ground truth is available in
closed form. The generator is the reference against which the delineation
chain is validated, and doubles as the demo-data source for the CLI.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .signal_io import EcgRecord, LEAD_II, N_LEADS

# (center_ms relative to R, sigma_ms, amplitude_mv)
P_WAVE = (-160.0, 22.0, 0.15)
Q_WAVE = (-30.0, 7.0, -0.10)
R_WAVE = (0.0, 12.0, 1.00)
S_WAVE = (30.0, 7.0, -0.20)
T_WAVE = (280.0, 45.0, 0.30)

# Effective wave extent convention: +/- 2 sigma around the bump center.
EDGE_SIGMAS = 2.0

# Relative projection of the lead II waveform onto the other 11 leads.
LEAD_SCALES = (0.6, 1.0, 0.4, -0.5, 0.2, 0.7, -0.3, 0.5, 0.8, 0.9, 0.85, 0.75)

FIRST_BEAT_S = 0.5


@dataclass
class GroundTruth:
    """Closed-form interval/amplitude values implied by the beat geometry."""

    rr_ms: float
    pr_ms: float
    qrs_ms: float
    qt_ms: float
    qtc_ms: float
    p_peak_mv: float
    r_peak_mv: float
    t_peak_mv: float
    heart_rate_bpm: float
    n_beats: int


@dataclass
class SyntheticEcg:
    record: EcgRecord
    r_times_s: np.ndarray
    truth: GroundTruth


def _rate_scale(rr_ms: float) -> float:
    # Repolarization shortens with rate so T waves stay clear of the next P.
    return float(np.clip(np.sqrt(rr_ms / 1000.0), 0.6, 1.0))


def generate(
    bpm: float,
    fs: int = 500,
    duration_s: float = 10.0,
    noise_mv: float = 0.0,
    seed: int = 0,
    record_id: Optional[str] = None,
    r_amp_mv: float = R_WAVE[2],
    t_amp_mv: float = T_WAVE[2],
) -> SyntheticEcg:
    """Generate a clean 12-lead ECG at ``bpm`` with known ground truth."""
    if bpm <= 0:
        raise ValueError("bpm must be positive")
    rr_s = 60.0 / bpm
    rr_ms = 1000.0 * rr_s
    n = int(round(fs * duration_s))
    t = np.arange(n, dtype=np.float64) / fs

    r_times = np.arange(FIRST_BEAT_S, duration_s - 1e-9, rr_s)
    scale = _rate_scale(rr_ms)
    waves = [
        P_WAVE,
        Q_WAVE,
        (R_WAVE[0], R_WAVE[1], r_amp_mv),
        S_WAVE,
        (T_WAVE[0] * scale, T_WAVE[1] * scale, t_amp_mv),
    ]

    lead = np.zeros(n, dtype=np.float64)
    for r_t in r_times:
        for center_ms, sigma_ms, amp in waves:
            c = r_t + center_ms / 1000.0
            s = sigma_ms / 1000.0
            lead += amp * np.exp(-0.5 * ((t - c) / s) ** 2)

    signal = np.empty((N_LEADS, n), dtype=np.float64)
    for i, lead_scale in enumerate(LEAD_SCALES):
        signal[i] = lead * lead_scale
    signal[LEAD_II] = lead

    if noise_mv > 0:
        rng = np.random.default_rng(seed)
        signal += rng.normal(0.0, noise_mv, size=signal.shape)

    record = EcgRecord(
        id=record_id or f"synth_{int(round(bpm))}bpm_{seed}",
        signal=signal.astype(np.float32),
        fs=fs,
    )
    truth = _ground_truth(rr_ms, scale, len(r_times), r_amp_mv, t_amp_mv)
    return SyntheticEcg(record=record, r_times_s=r_times, truth=truth)


def _ground_truth(
    rr_ms: float, scale: float, n_beats: int, r_amp: float, t_amp: float
) -> GroundTruth:
    p_on = P_WAVE[0] - EDGE_SIGMAS * P_WAVE[1]
    qrs_on = Q_WAVE[0] - EDGE_SIGMAS * Q_WAVE[1]
    qrs_off = S_WAVE[0] + EDGE_SIGMAS * S_WAVE[1]
    t_off = (T_WAVE[0] + EDGE_SIGMAS * T_WAVE[1]) * scale
    qt = t_off - qrs_on
    return GroundTruth(
        rr_ms=rr_ms,
        pr_ms=qrs_on - p_on,
        qrs_ms=qrs_off - qrs_on,
        qt_ms=qt,
        qtc_ms=qt / np.sqrt(rr_ms / 1000.0),
        p_peak_mv=P_WAVE[2],
        r_peak_mv=r_amp,
        t_peak_mv=t_amp,
        heart_rate_bpm=60000.0 / rr_ms,
        n_beats=n_beats,
    )
