"""Beat detection, wave delineation, interval measurement, and waveform text.

The R-peak detector is a Pan-Tompkins-style chain: 5-15 Hz band-pass
(second-order sections, causal), derivative, squaring, 150 ms
moving-window integral, then an adaptive dual threshold with a 200 ms
refractory period. Every stage is causal, so truncating the record tail
never changes detections well before the cut.

Delineation works on lead II only: P and T peaks are located by windowed
extrema around each R peak, QRS onset/offset by a slope-threshold
walk-out from R. Failed searches leave the annotation absent for that
beat rather than fabricating one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.signal import butter, sosfilt

from .errors import EmptyReport, NoBeatsDetected

REFRACTORY_S = 0.2
MWI_WINDOW_S = 0.15
BANDPASS_HZ = (5.0, 15.0)

# Windowed-extrema search ranges relative to the R peak, in ms.
P_WINDOW_MS = (-300.0, -100.0)
T_WINDOW_MS = (100.0, 450.0)
QRS_WALK_MS = 120.0

# A located P/T peak must rise at least this far above the window baseline.
PEAK_FLOOR_MV = 0.05
# Wave boundaries are placed where the signal falls to this fraction of peak.
BOUNDARY_FRACTION = 0.1
# QRS boundary: slope must stay below this fraction of the R upslope.
QRS_SLOPE_FRACTION = 0.06
QRS_QUIET_MS = 6.0


@dataclass
class BeatAnnotations:
    """Per-beat wave landmarks as sample indices; None when a search failed."""

    r_indices: np.ndarray
    p_onset: list[Optional[int]]
    p_peak: list[Optional[int]]
    p_offset: list[Optional[int]]
    qrs_onset: list[Optional[int]]
    qrs_offset: list[Optional[int]]
    t_onset: list[Optional[int]]
    t_peak: list[Optional[int]]
    t_offset: list[Optional[int]]

    @property
    def n_beats(self) -> int:
        return len(self.r_indices)


@dataclass
class WaveformFeatures:
    """Median interval/amplitude measurements across all delineated beats."""

    rr_ms: float
    heart_rate_bpm: float
    n_beats: int
    r_peak_mv: float
    pr_ms: Optional[float] = None
    qrs_ms: Optional[float] = None
    qt_ms: Optional[float] = None
    qtc_ms: Optional[float] = None
    p_peak_mv: Optional[float] = None
    t_peak_mv: Optional[float] = None


def qtc_bazett(qt_ms: float, rr_ms: float) -> float:
    """Rate-corrected QT: QT divided by the square root of RR in seconds."""
    return qt_ms / math.sqrt(rr_ms / 1000.0)


def detect_r_peaks(lead_ii: np.ndarray, fs: int) -> np.ndarray:
    """Detect R-peak sample indices on a single lead.

    Returns a strictly increasing index array with pairwise gaps of at
    least ``0.2 * fs`` samples. Raises :class:`NoBeatsDetected` when fewer
    than two peaks survive.
    """
    if fs < 100:
        raise ValueError(f"fs must be >= 100 Hz, got {fs}")
    x = np.asarray(lead_ii, dtype=np.float64)
    if x.ndim != 1 or x.size < 2 * fs:
        raise ValueError("need at least 2 s of single-lead signal")

    mwi = _transform(x, fs)
    refractory = int(round(REFRACTORY_S * fs))
    candidates = _local_maxima(mwi)
    accepted = _adaptive_threshold(mwi, candidates, fs, refractory)
    peaks = _refine_on_raw(x, accepted, fs, refractory)
    if len(peaks) < 2:
        raise NoBeatsDetected(f"found {len(peaks)} R peaks, need at least 2")
    return peaks


def _transform(x: np.ndarray, fs: int) -> np.ndarray:
    sos = butter(2, BANDPASS_HZ, btype="bandpass", fs=fs, output="sos")
    filtered = sosfilt(sos, x)
    deriv = np.diff(filtered, prepend=filtered[0])
    squared = deriv * deriv
    window = max(1, int(round(MWI_WINDOW_S * fs)))
    csum = np.concatenate([[0.0], np.cumsum(squared)])
    starts = np.maximum(np.arange(1, x.size + 1) - window, 0)
    return (csum[1:] - csum[starts]) / window


def _local_maxima(mwi: np.ndarray) -> np.ndarray:
    if mwi.size < 3:
        return np.empty(0, dtype=np.intp)
    interior = mwi[1:-1]
    mask = (interior > mwi[:-2]) & (interior >= mwi[2:])
    return np.flatnonzero(mask) + 1


def _adaptive_threshold(
    mwi: np.ndarray, candidates: np.ndarray, fs: int, refractory: int
) -> list[int]:
    init = mwi[: min(mwi.size, 2 * fs)]
    spk = float(init.max())
    npk = float(init.mean())
    if spk <= 0.0:
        return []
    thr = npk + 0.25 * (spk - npk)

    accepted: list[int] = []
    for idx in candidates:
        v = float(mwi[idx])
        if accepted and idx - accepted[-1] < refractory:
            continue
        if v > thr:
            accepted.append(int(idx))
            spk = 0.125 * v + 0.875 * spk
        else:
            npk = 0.125 * v + 0.875 * npk
        thr = npk + 0.25 * (spk - npk)
    return accepted


def _refine_on_raw(
    x: np.ndarray, mwi_peaks: Sequence[int], fs: int, refractory: int
) -> np.ndarray:
    # The MWI peak trails the R apex by the integration window plus filter
    # delay; the apex is recovered as the absolute extremum of the raw lead
    # in a trailing search window.
    back = int(round(0.225 * fs))
    fwd = int(round(0.05 * fs))
    peaks: list[int] = []
    for idx in mwi_peaks:
        lo = max(0, idx - back)
        hi = min(x.size, idx + fwd + 1)
        r = lo + int(np.argmax(np.abs(x[lo:hi])))
        if peaks and r - peaks[-1] < refractory:
            continue
        peaks.append(r)
    return np.asarray(peaks, dtype=np.intp)


def delineate(lead_ii: np.ndarray, fs: int, r_indices: np.ndarray) -> BeatAnnotations:
    """Locate P/QRS/T landmarks around each R peak on lead II."""
    x = np.asarray(lead_ii, dtype=np.float64)
    slope = _smoothed_slope(x, fs)

    ann = BeatAnnotations(
        r_indices=np.asarray(r_indices, dtype=np.intp),
        p_onset=[], p_peak=[], p_offset=[],
        qrs_onset=[], qrs_offset=[],
        t_onset=[], t_peak=[], t_offset=[],
    )
    for r in ann.r_indices:
        p_on, p_pk, p_off = _wave_in_window(x, fs, r, P_WINDOW_MS)
        t_on, t_pk, t_off = _wave_in_window(x, fs, r, T_WINDOW_MS)
        q_on, q_off = _qrs_walk_out(x, slope, fs, int(r))
        ann.p_onset.append(p_on)
        ann.p_peak.append(p_pk)
        ann.p_offset.append(p_off)
        ann.qrs_onset.append(q_on)
        ann.qrs_offset.append(q_off)
        ann.t_onset.append(t_on)
        ann.t_peak.append(t_pk)
        ann.t_offset.append(t_off)
    return ann


def _smoothed_slope(x: np.ndarray, fs: int) -> np.ndarray:
    d = np.gradient(x) * fs  # mV/s
    k = max(1, int(round(0.004 * fs)) | 1)
    kernel = np.ones(k) / k
    return np.convolve(d, kernel, mode="same")


def _wave_in_window(
    x: np.ndarray, fs: int, r: int, window_ms: tuple[float, float]
) -> tuple[Optional[int], Optional[int], Optional[int]]:
    lo = r + int(round(window_ms[0] * fs / 1000.0))
    hi = r + int(round(window_ms[1] * fs / 1000.0))
    lo_c, hi_c = max(0, lo), min(x.size, hi)
    if hi_c - lo_c < int(round(0.05 * fs)):
        return None, None, None
    seg = x[lo_c:hi_c]
    baseline = float(np.median(seg))
    peak_rel = int(np.argmax(seg - baseline))
    peak = lo_c + peak_rel
    # Reject edge hits (the true extremum lies outside the clipped window)
    # and bumps that do not clear the amplitude floor.
    if peak_rel == 0 or peak_rel == seg.size - 1:
        return None, None, None
    amp = float(x[peak] - baseline)
    if amp < PEAK_FLOOR_MV:
        return None, None, None
    level = baseline + BOUNDARY_FRACTION * amp
    onset = _cross_below(x, peak, lo_c, -1, level)
    offset = _cross_below(x, peak, hi_c - 1, +1, level)
    return onset, peak, offset


def _cross_below(
    x: np.ndarray, start: int, limit: int, step: int, level: float
) -> Optional[int]:
    j = start
    while j != limit + step:
        if x[j] <= level:
            return j
        j += step
    return None


def _qrs_walk_out(
    x: np.ndarray, slope: np.ndarray, fs: int, r: int
) -> tuple[Optional[int], Optional[int]]:
    span = int(round(QRS_WALK_MS * fs / 1000.0))
    near = int(round(0.06 * fs))
    lo = max(0, r - near)
    hi = min(x.size, r + near + 1)
    slope_ref = float(np.max(np.abs(slope[lo:hi])))
    if slope_ref <= 0.0:
        return None, None
    thr = QRS_SLOPE_FRACTION * slope_ref
    quiet = max(2, int(round(QRS_QUIET_MS * fs / 1000.0)))

    onset = _walk_until_quiet(slope, r, max(0, r - span), -1, thr, quiet)
    offset = _walk_until_quiet(slope, r, min(x.size - 1, r + span), +1, thr, quiet)
    return onset, offset


def _walk_until_quiet(
    slope: np.ndarray, start: int, limit: int, step: int, thr: float, quiet: int
) -> Optional[int]:
    run = 0
    j = start
    while j != limit + step:
        if abs(slope[j]) < thr:
            run += 1
            if run >= quiet:
                return j - step * (quiet - 1)
        else:
            run = 0
        j += step
    return None


def measure(ann: BeatAnnotations, lead_ii: np.ndarray, fs: int) -> WaveformFeatures:
    """Reduce per-beat landmarks to median intervals and amplitudes."""
    if ann.n_beats < 2:
        raise NoBeatsDetected("measurement needs at least 2 R peaks")
    x = np.asarray(lead_ii, dtype=np.float64)
    ms = 1000.0 / fs

    rr = float(np.median(np.diff(ann.r_indices))) * ms
    pr = _median_interval(ann.p_onset, ann.qrs_onset, ms)
    qrs = _median_interval(ann.qrs_onset, ann.qrs_offset, ms)
    qt = _median_interval(ann.qrs_onset, ann.t_offset, ms)
    qtc = qtc_bazett(qt, rr) if qt is not None else None

    return WaveformFeatures(
        rr_ms=rr,
        heart_rate_bpm=60000.0 / rr,
        n_beats=ann.n_beats,
        r_peak_mv=float(np.median(x[ann.r_indices])),
        pr_ms=pr,
        qrs_ms=qrs,
        qt_ms=qt,
        qtc_ms=qtc,
        p_peak_mv=_median_amplitude(x, ann.p_peak),
        t_peak_mv=_median_amplitude(x, ann.t_peak),
    )


def _median_interval(
    starts: list[Optional[int]], ends: list[Optional[int]], ms: float
) -> Optional[float]:
    values = [
        (e - s) * ms
        for s, e in zip(starts, ends)
        if s is not None and e is not None and e > s
    ]
    return float(np.median(values)) if values else None


def _median_amplitude(x: np.ndarray, peaks: list[Optional[int]]) -> Optional[float]:
    values = [float(x[p]) for p in peaks if p is not None]
    return float(np.median(values)) if values else None


def _fmt_ms(value: Optional[float]) -> str:
    return "n/a" if value is None else f"{round(value)} ms"


def _fmt_mv(value: Optional[float]) -> str:
    return "n/a" if value is None else f"{value:.2f} mV"


def features_to_text(f: WaveformFeatures) -> str:
    """Render features to the canonical waveform sentence.

    Milliseconds are rounded half-even to integers, millivolts to two
    decimals; absent measurements render as ``n/a``.
    """
    if f.qt_ms is None and f.qtc_ms is None:
        qt_part = "n/a"
    else:
        qt = "n/a" if f.qt_ms is None else str(round(f.qt_ms))
        qtc = "n/a" if f.qtc_ms is None else str(round(f.qtc_ms))
        qt_part = f"{qt}/{qtc} ms"
    return (
        f"RR interval: {_fmt_ms(f.rr_ms)}; "
        f"PR interval: {_fmt_ms(f.pr_ms)}; "
        f"QRS duration: {_fmt_ms(f.qrs_ms)}; "
        f"QT/QTc interval: {qt_part}; "
        f"P wave peak: {_fmt_mv(f.p_peak_mv)}; "
        f"R wave peak: {_fmt_mv(f.r_peak_mv)}; "
        f"T wave peak: {_fmt_mv(f.t_peak_mv)}."
    )


def augment_report(report: str, f: WaveformFeatures) -> str:
    """Append the waveform sentence to a report, separated by one space."""
    if not report or not report.strip():
        raise EmptyReport("cannot augment an empty report")
    return report + " " + features_to_text(f)
