"""Deterministic feature extraction: waveform I/O, Mel spectrograms,
fundamental-frequency estimation, text tokenization, speaker vectors and
dataset manifests."""

from .audio import SAMPLE_RATE, AudioFormatError, load_wav, write_wav
from .manifest import (
    ManifestEntry,
    ManifestError,
    load_speaker_vector,
    normalize_speaker,
    read_manifest,
    write_manifest,
)
from .mel import HOP_LENGTH, MEL_CHANNELS, WINDOW_LENGTH, FeatureError, frame_count, mel_filterbank, mel_spectrogram
from .pitch import LOG_F0_MAX, LOG_F0_MIN, estimate_f0
from .text import BLANK_ID, VOCAB_SIZE, TextError, normalize_text, tokenize

__all__ = [
    "SAMPLE_RATE", "AudioFormatError", "load_wav", "write_wav",
    "MEL_CHANNELS", "HOP_LENGTH", "WINDOW_LENGTH", "frame_count",
    "mel_filterbank", "mel_spectrogram", "FeatureError",
    "estimate_f0", "LOG_F0_MIN", "LOG_F0_MAX",
    "tokenize", "normalize_text", "BLANK_ID", "VOCAB_SIZE", "TextError",
    "ManifestEntry", "ManifestError", "read_manifest", "write_manifest",
    "normalize_speaker", "load_speaker_vector",
]
