"""16-bit PCM mono waveform I/O at a fixed 16 kHz rate."""

from __future__ import annotations

import wave

import numpy as np

SAMPLE_RATE = 16000


class AudioFormatError(ValueError):
    pass


def load_wav(path):
    """Read a WAV file into float64 samples in [-1, 1].

    Only 16-bit PCM, mono, 16 kHz input is accepted; anything else is a
    format error, as is a file whose payload is shorter than its header
    claims.
    """
    with wave.open(str(path), "rb") as wf:
        channels = wf.getnchannels()
        width = wf.getsampwidth()
        rate = wf.getframerate()
        n_frames = wf.getnframes()
        if channels != 1:
            raise AudioFormatError(f"{path}: expected mono audio, got {channels} channels")
        if width != 2:
            raise AudioFormatError(f"{path}: expected 16-bit PCM, got {8 * width}-bit samples")
        if rate != SAMPLE_RATE:
            raise AudioFormatError(f"{path}: expected {SAMPLE_RATE} Hz, got {rate} Hz")
        raw = wf.readframes(n_frames)
    if len(raw) != 2 * n_frames:
        raise AudioFormatError(
            f"{path}: truncated file, header declares {n_frames} frames "
            f"but only {len(raw) // 2} are present"
        )
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64)
    return samples / 32768.0


def write_wav(path, samples):
    """Write float samples in [-1, 1] as 16-bit PCM mono at 16 kHz."""
    samples = np.asarray(samples, dtype=np.float64)
    clipped = np.clip(samples, -1.0, 32767.0 / 32768.0)
    pcm = np.round(clipped * 32768.0).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(SAMPLE_RATE)
        wf.writeframes(pcm.tobytes())
