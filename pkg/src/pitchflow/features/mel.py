"""Log-Mel spectrograms on a fixed 16 ms / 64 ms analysis grid.

Frames are anchored at the start of the signal: frame t covers samples
[t * hop, t * hop + window), so the frame count is
floor((n_samples - window) / hop) + 1 and every analysis window lies
entirely inside the signal.  The fundamental-frequency estimator uses the
same grid, which keeps the two feature streams aligned frame for frame.
"""

from __future__ import annotations

import numpy as np

MEL_CHANNELS = 80
HOP_LENGTH = 256
WINDOW_LENGTH = 1024
N_FFT = 1024
FMIN = 0.0
FMAX = 8000.0
LOG_FLOOR = 1e-5


class FeatureError(ValueError):
    pass


def frame_count(n_samples, window=WINDOW_LENGTH, hop=HOP_LENGTH):
    if n_samples < window:
        raise FeatureError(
            f"signal of {n_samples} samples is shorter than one {window}-sample analysis window"
        )
    return (n_samples - window) // hop + 1


def _hz_to_mel(f):
    """Slaney's mel scale: linear below 1 kHz, logarithmic above."""
    f = np.asarray(f, dtype=np.float64)
    mel = f / (200.0 / 3.0)
    log_region = f >= 1000.0
    mel = np.where(
        log_region,
        15.0 + np.log(np.maximum(f, 1e-10) / 1000.0) / (np.log(6.4) / 27.0),
        mel,
    )
    return mel


def _mel_to_hz(m):
    m = np.asarray(m, dtype=np.float64)
    f = m * (200.0 / 3.0)
    log_region = m >= 15.0
    return np.where(log_region, 1000.0 * np.exp((m - 15.0) * (np.log(6.4) / 27.0)), f)


def mel_filterbank(n_mels=MEL_CHANNELS, n_fft=N_FFT, sample_rate=16000,
                   fmin=FMIN, fmax=FMAX):
    """Slaney-style triangular filters, area-normalized; [n_mels, n_fft//2 + 1]."""
    fft_freqs = np.linspace(0.0, sample_rate / 2.0, n_fft // 2 + 1)
    mel_points = np.linspace(_hz_to_mel(fmin), _hz_to_mel(fmax), n_mels + 2)
    hz_points = _mel_to_hz(mel_points)
    fb = np.zeros((n_mels, n_fft // 2 + 1), dtype=np.float64)
    for i in range(n_mels):
        lo, center, hi = hz_points[i], hz_points[i + 1], hz_points[i + 2]
        up = (fft_freqs - lo) / max(center - lo, 1e-10)
        down = (hi - fft_freqs) / max(hi - center, 1e-10)
        fb[i] = np.maximum(0.0, np.minimum(up, down))
        fb[i] *= 2.0 / (hi - lo)  # equal-area normalization
    return fb


_FILTERBANK_CACHE = {}


def _cached_filterbank():
    key = (MEL_CHANNELS, N_FFT)
    if key not in _FILTERBANK_CACHE:
        _FILTERBANK_CACHE[key] = mel_filterbank()
    return _FILTERBANK_CACHE[key]


def mel_spectrogram(samples):
    """Log-Mel spectrogram [80, frames] of a waveform in [-1, 1].

    Power spectra of Hann-windowed frames are pooled through the Slaney
    filterbank and floored at 1e-5 before the natural log, so silence maps
    to log(1e-5) everywhere.
    """
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 1:
        raise FeatureError(f"expected a 1-d waveform, got shape {samples.shape}")
    t = frame_count(samples.shape[0])
    idx = np.arange(WINDOW_LENGTH)[None, :] + HOP_LENGTH * np.arange(t)[:, None]
    frames = samples[idx]
    window = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(WINDOW_LENGTH) / WINDOW_LENGTH)
    spectra = np.fft.rfft(frames * window, n=N_FFT, axis=1)
    power = spectra.real**2 + spectra.imag**2  # [T, bins]
    mel = _cached_filterbank() @ power.T  # [80, T]
    return np.log(np.maximum(mel, LOG_FLOOR))
