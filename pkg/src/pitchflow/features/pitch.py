"""Fundamental-frequency estimation with the YIN difference function.

Runs on the same 64 ms window / 16 ms hop grid as the Mel extractor so
contours and spectrograms pair frame for frame.  The difference function
is evaluated over a fixed-length summation window via FFT
cross-correlation, normalized cumulatively, thresholded at 0.15 and
refined by parabolic interpolation around the selected lag minimum.
Frames with no dip under the threshold are unvoiced and carry log-F0 0.
"""

from __future__ import annotations

import numpy as np

from .audio import SAMPLE_RATE
from .mel import HOP_LENGTH, WINDOW_LENGTH, FeatureError, frame_count

F0_MIN = 50.0
F0_MAX = 600.0
LOG_F0_MIN = float(np.log(F0_MIN))
LOG_F0_MAX = float(np.log(F0_MAX))
CMND_THRESHOLD = 0.15


def estimate_f0(samples):
    """Per-frame log-F0 of a waveform; float64 [frames], 0 where unvoiced."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 1:
        raise FeatureError(f"expected a 1-d waveform, got shape {samples.shape}")
    t = frame_count(samples.shape[0])
    max_lag = int(SAMPLE_RATE / F0_MIN)  # 320 samples
    min_lag = int(np.ceil(SAMPLE_RATE / F0_MAX))  # 27 samples
    summation = WINDOW_LENGTH - max_lag  # every (j, j + lag) pair stays in-window

    idx = np.arange(WINDOW_LENGTH)[None, :] + HOP_LENGTH * np.arange(t)[:, None]
    frames = samples[idx]  # [T, window]

    # d(lag) = sum_{j < summation} (x[j] - x[j + lag])^2, all lags at once:
    # the cross term is a correlation of the truncated window with the full
    # window, evaluated by FFT.
    head = frames[:, :summation]
    n_fft = 2048
    spec_full = np.fft.rfft(frames, n=n_fft, axis=1)
    spec_head = np.fft.rfft(head, n=n_fft, axis=1)
    cross = np.fft.irfft(np.conj(spec_head) * spec_full, n=n_fft, axis=1)[:, : max_lag + 1]

    sq = frames * frames
    cum = np.concatenate([np.zeros((t, 1)), np.cumsum(sq, axis=1)], axis=1)
    head_energy = cum[:, summation]  # sum_{j < summation} x[j]^2
    lags = np.arange(max_lag + 1)
    shifted_energy = cum[:, lags + summation] - cum[:, lags]
    diff = head_energy[:, None] + shifted_energy - 2.0 * cross
    diff = np.maximum(diff, 0.0)

    # cumulative-mean normalization: d'(0) = 1, d'(lag) = d * lag / sum_{1..lag} d
    running = np.cumsum(diff[:, 1:], axis=1)
    cmnd = np.ones_like(diff)
    with np.errstate(divide="ignore", invalid="ignore"):
        cmnd[:, 1:] = diff[:, 1:] * lags[1:] / running
    cmnd[~np.isfinite(cmnd)] = 1.0

    log_f0 = np.zeros(t, dtype=np.float64)
    for frame in range(t):
        row = cmnd[frame]
        lag = _select_lag(row, min_lag, max_lag)
        if lag is None:
            continue
        refined = _parabolic(row, lag)
        f0 = SAMPLE_RATE / refined
        if F0_MIN <= f0 <= F0_MAX:
            log_f0[frame] = np.log(f0)
    return log_f0


def _select_lag(cmnd_row, min_lag, max_lag):
    """First lag dipping under the threshold, walked to its local minimum."""
    below = np.nonzero(cmnd_row[min_lag : max_lag + 1] < CMND_THRESHOLD)[0]
    if below.size == 0:
        return None
    lag = int(below[0]) + min_lag
    while lag + 1 <= max_lag and cmnd_row[lag + 1] < cmnd_row[lag]:
        lag += 1
    return lag


def _parabolic(row, lag):
    """Sub-sample minimum of the normalized difference around ``lag``."""
    if lag <= 0 or lag >= row.size - 1:
        return float(lag)
    left, mid, right = row[lag - 1], row[lag], row[lag + 1]
    denom = left - 2.0 * mid + right
    if abs(denom) < 1e-12:
        return float(lag)
    shift = 0.5 * (left - right) / denom
    return float(lag) + float(np.clip(shift, -1.0, 1.0))
