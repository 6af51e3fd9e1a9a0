"""Synthetic harmonic-tone corpus with known pitch and duration statistics.

Each letter token becomes a burst of five harmonics at a log-F0 drawn from
the speaker's distribution, mixed with quiet broadband noise whose spectral
emphasis depends on the letter; spaces become a distinct noise burst and
blanks near-silence.  The noise layers matter more than they look: they keep
every Mel channel carrying content, which the alignment search needs --
bands that are active for no token ever are constant up to the noise floor,
and channel standardization inside the decoder then amplifies them until
they drown the content geometry the aligner feeds on.  The generator writes
the true contour and durations next to the audio so tests can compare
learned statistics against exact targets instead of estimates.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .features import (
    HOP_LENGTH,
    SAMPLE_RATE,
    WINDOW_LENGTH,
    normalize_speaker,
    normalize_text,
    tokenize,
    write_wav,
)
from .features.manifest import save_speaker_vector, write_manifest
from .features.text import BLANK_ID, CHAR_TO_ID

N_HARMONICS = 5
EDGE_FADE = 64  # 4 ms raised-cosine ramp at voiced segment edges
# Tail silence so the analysis frame count equals the sum of token durations.
TAIL_PAD = WINDOW_LENGTH - HOP_LENGTH
# Rendered audio lags the nominal frame span by half of (window - hop), so
# a frame's window is centred on the span that owns the frame.  Without
# this the window (4 hops long) smears every token ~3 frames past its
# span, one-sidedly: alignment search then settles on boundaries shifted
# from the labeled ones and duration statistics drift.
CENTRE_SHIFT = (WINDOW_LENGTH - HOP_LENGTH) // 2
# Rendered segments additionally shrink by half a hop per side inside the
# labeled span.  Combined with the centre shift, the windows of the frames
# around a label boundary overlap the segment by exactly 25% (last outside
# frame) and 50% (first inside frame), mirrored at both edges.  In
# log-compressed features the lit/unlit decision threshold falls between
# those two, so every frame reads as belonging to its labeled token and
# the boundary the aligner discovers coincides with the labeled one.
RENDER_PAD = HOP_LENGTH // 2
PEAK_AMPLITUDE = 0.5
# Broadband noise mixed into letters (token-coloured emphasis band) and the
# burst standing in for spaces.  Quiet enough that the periodicity detector
# never wavers, loud enough that letter frames clear the Mel floor in every
# channel.
LETTER_NOISE_RMS = 0.015
SPACE_NOISE_RMS = 0.01
NOISE_BUMP_GAIN = 4.0
LETTER_BAND_SIGMA = 300.0
SPACE_BAND_CENTRE = 1000.0
SPACE_BAND_SIGMA = 200.0
_SPACE_ID = CHAR_TO_ID[" "]

GROUND_TRUTH_NAME = "ground_truth.tsv"


class CorpusError(ValueError):
    """Raised for invalid corpus or speaker specifications."""


@dataclass(frozen=True)
class SpeakerSpec:
    """Generating distribution for one synthetic speaker."""

    speaker_id: str
    log_f0_mean: float
    log_f0_std: float
    duration_mean: int = 10
    timbre_seed: int = 0

    def __post_init__(self):
        f0 = math.exp(self.log_f0_mean)
        if not 80.0 <= f0 <= 400.0:
            raise CorpusError(
                f"speaker {self.speaker_id!r} base F0 {f0:.1f} Hz outside [80, 400]")
        if self.log_f0_std < 0.0:
            raise CorpusError(f"speaker {self.speaker_id!r} has negative log-F0 std")
        if self.duration_mean < 2:
            raise CorpusError(f"speaker {self.speaker_id!r} duration mean must be >= 2")
        if not self.speaker_id:
            raise CorpusError("speaker id must be non-empty")

    def vector(self):
        """Unit-norm 256-dim identity vector, deterministic from the id."""
        digest = hashlib.sha256(self.speaker_id.encode("utf-8")).digest()
        rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
        return normalize_speaker(rng.standard_normal(256))


@dataclass(frozen=True)
class CorpusSpec:
    speakers: tuple = ()
    utterances_per_speaker: int = 50
    alphabet: str = "abcdefgh"
    seed: int = 0
    words_range: tuple = (1, 2)
    word_length_range: tuple = (2, 4)
    blank_frames: int = 6
    noise_amplitude: float = 1e-3
    validation_fraction: float = 0.1

    def __post_init__(self):
        if not self.speakers:
            raise CorpusError("corpus needs at least one speaker")
        ids = [s.speaker_id for s in self.speakers]
        if len(set(ids)) != len(ids):
            raise CorpusError("duplicate speaker ids")
        if self.utterances_per_speaker < 1:
            raise CorpusError("utterances_per_speaker must be >= 1")
        if not self.alphabet or any(c not in CHAR_TO_ID or c == " " for c in self.alphabet):
            raise CorpusError("alphabet must be non-empty lowercase letters")
        if self.blank_frames < 1:
            raise CorpusError("blank_frames must be >= 1")
        if self.noise_amplitude < 0.0:
            raise CorpusError("noise_amplitude must be >= 0")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise CorpusError("validation_fraction must lie in [0, 1)")


def _speaker_profile(timbre_seed):
    rng = np.random.default_rng(np.uint64(timbre_seed))
    return 0.4 + 0.6 * rng.random(N_HARMONICS)


def _token_gains(token_id):
    # Smooth bump over harmonic index; the centre depends on the letter, so
    # every token id has a distinct, fixed spectral shape.
    centre = 1.0 + 4.0 * ((token_id * 7) % 26) / 25.0
    h = np.arange(1, N_HARMONICS + 1, dtype=np.float64)
    return 0.25 + 0.75 * np.exp(-0.5 * (h - centre) ** 2)


def _token_band_centre(token_id):
    # Different multiplier than the harmonic bump so letters that sound
    # alike low in the spectrum still differ high up.
    return 1500.0 + 1900.0 * ((token_id * 5) % 26) / 25.0


def _edge_fade(wave):
    fade = min(EDGE_FADE, wave.size // 2)
    if fade:
        ramp = 0.5 - 0.5 * np.cos(math.pi * (np.arange(fade) + 0.5) / fade)
        wave[:fade] *= ramp
        wave[-fade:] *= ramp[::-1]
    return wave


def _shaped_noise(rng, n_samples, centre_hz, sigma_hz, rms):
    """White noise with a Gaussian emphasis band, normalized to a target rms."""
    noise = rng.standard_normal(n_samples)
    spectrum = np.fft.rfft(noise)
    freqs = np.fft.rfftfreq(n_samples, 1.0 / SAMPLE_RATE)
    gain = 1.0 + NOISE_BUMP_GAIN * np.exp(-0.5 * ((freqs - centre_hz) / sigma_hz) ** 2)
    shaped = np.fft.irfft(spectrum * gain, n_samples)
    shaped *= rms / max(float(np.sqrt(np.mean(shaped**2))), 1e-12)
    return _edge_fade(shaped)


def _voiced_segment(f0, n_samples, amplitudes):
    t = np.arange(n_samples, dtype=np.float64) / SAMPLE_RATE
    wave = np.zeros(n_samples, dtype=np.float64)
    for h, amp in enumerate(amplitudes, start=1):
        wave += amp * np.sin(2.0 * math.pi * h * f0 * t)
    wave *= PEAK_AMPLITUDE / np.sum(amplitudes)
    return _edge_fade(wave)


def generate_utterance(speaker, text, rng, blank_frames=6, noise_amplitude=1e-3):
    """Render one utterance.

    Returns (samples, contour, durations): float64 waveform in [-1, 1], the
    true per-frame log-F0 (0.0 on unvoiced frames), and per-token frame
    counts.  A frame counts as voiced only when its full analysis window
    lies inside the token's steady (post-fade) span.  Letters carry a quiet
    token-coloured noise layer and spaces a noise burst (see the module
    docstring for why the aligner needs them); the trailing white noise
    floor keeps even silence off the exact spectrogram floor, where
    constant channels would degenerate the density model.
    """
    ids = tokenize(text)
    profile = _speaker_profile(speaker.timbre_seed)
    durations = np.empty(len(ids), dtype=np.int64)
    log_f0 = np.zeros(len(ids), dtype=np.float64)
    for i, token in enumerate(ids):
        if token == BLANK_ID or token == _SPACE_ID:
            durations[i] = blank_frames
        else:
            durations[i] = speaker.duration_mean + rng.choice((-1, 0, 1), p=(0.2, 0.6, 0.2))
            log_f0[i] = speaker.log_f0_mean + speaker.log_f0_std * rng.standard_normal()

    total_frames = int(durations.sum())
    samples = np.zeros(total_frames * HOP_LENGTH + TAIL_PAD, dtype=np.float64)
    contour = np.zeros(total_frames, dtype=np.float64)
    start_frame = 0
    for i, token in enumerate(ids):
        d = int(durations[i])
        s = start_frame * HOP_LENGTH + CENTRE_SHIFT + RENDER_PAD
        n = d * HOP_LENGTH - 2 * RENDER_PAD
        if n > 0 and log_f0[i] != 0.0:
            gains = _token_gains(token)
            samples[s:s + n] = _voiced_segment(math.exp(log_f0[i]), n, profile * gains)
            samples[s:s + n] += _shaped_noise(rng, n, _token_band_centre(token),
                                              LETTER_BAND_SIGMA, LETTER_NOISE_RMS)
            # Voiced only where the window [t*hop, t*hop + win) sits inside
            # the unfaded part of the rendered span.
            first = -(-(s + EDGE_FADE) // HOP_LENGTH)
            last = (s + n - EDGE_FADE - WINDOW_LENGTH) // HOP_LENGTH
            if last >= first:
                contour[first:last + 1] = log_f0[i]
        elif n > 0 and token == _SPACE_ID:
            samples[s:s + n] = _shaped_noise(rng, n, SPACE_BAND_CENTRE,
                                             SPACE_BAND_SIGMA, SPACE_NOISE_RMS)
        start_frame += d
    if noise_amplitude:
        # Drawn after all token-level draws so the floor never shifts them.
        samples += noise_amplitude * rng.standard_normal(samples.size)
    return samples, contour, durations


def _draw_text(spec, rng):
    lo_w, hi_w = spec.words_range
    words = []
    for _ in range(int(rng.integers(lo_w, hi_w + 1))):
        lo, hi = spec.word_length_range
        length = int(rng.integers(lo, hi + 1))
        letters = rng.choice(list(spec.alphabet), size=length)
        words.append("".join(letters))
    return " ".join(words)


def _utterance_rng(seed, speaker_index, utterance_index):
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(speaker_index, utterance_index))
    return np.random.default_rng(ss)


def generate_corpus(spec, out_dir):
    """Write WAVs, speaker vectors, manifests and the ground-truth sidecar.

    Returns the path of the full manifest.  Everything is deterministic
    given the corpus seed; utterances use independent per-index seeds.
    """
    out_dir = Path(out_dir)
    wav_dir = out_dir / "wav"
    spk_dir = out_dir / "speakers"
    wav_dir.mkdir(parents=True, exist_ok=True)
    spk_dir.mkdir(parents=True, exist_ok=True)

    rows = []
    truth_lines = []
    per_speaker_rows = {s.speaker_id: [] for s in spec.speakers}
    for si, speaker in enumerate(spec.speakers):
        vec_path = spk_dir / f"{speaker.speaker_id}.vec"
        save_speaker_vector(vec_path, speaker.vector())
        for ui in range(spec.utterances_per_speaker):
            rng = _utterance_rng(spec.seed, si, ui)
            text = normalize_text(_draw_text(spec, rng))
            samples, contour, durations = generate_utterance(
                speaker, text, rng, blank_frames=spec.blank_frames,
                noise_amplitude=spec.noise_amplitude)
            utt_id = f"{speaker.speaker_id}_{ui:04d}"
            wav_path = wav_dir / f"{utt_id}.wav"
            write_wav(wav_path, samples)
            row = (str(wav_path.relative_to(out_dir)), text, speaker.speaker_id,
                   str(vec_path.relative_to(out_dir)))
            rows.append(row)
            per_speaker_rows[speaker.speaker_id].append(row)
            truth_lines.append("\t".join((
                utt_id,
                ",".join(str(int(d)) for d in durations),
                ",".join(f"{v:.17g}" for v in contour),
            )))

    write_manifest(out_dir / "manifest.tsv", rows)
    train_rows = []
    val_rows = []
    for speaker_rows in per_speaker_rows.values():
        n_val = int(round(spec.validation_fraction * len(speaker_rows)))
        cut = len(speaker_rows) - n_val
        train_rows.extend(speaker_rows[:cut])
        val_rows.extend(speaker_rows[cut:])
    write_manifest(out_dir / "train.tsv", train_rows)
    write_manifest(out_dir / "val.tsv", val_rows if val_rows else train_rows[-1:])
    (out_dir / GROUND_TRUTH_NAME).write_text(
        "\n".join(truth_lines) + "\n", encoding="utf-8")
    return out_dir / "manifest.tsv"


def read_ground_truth(path):
    """Load the sidecar as {utt_id: (durations, contour)}."""
    table = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line:
            continue
        utt_id, dur_field, contour_field = line.split("\t")
        durations = np.array([int(v) for v in dur_field.split(",")], dtype=np.int64)
        contour = np.array([float(v) for v in contour_field.split(",")], dtype=np.float64)
        table[utt_id] = (durations, contour)
    return table
