"""Objective pitch evaluation: log-F0 histograms, W1 distance, diversity.

Contours use the package convention of natural-log F0 with 0.0 marking
unvoiced frames.  Histograms cover voiced frames only, after trimming
estimation outliers outside the [1st, 99th] percentile window; both the
trim rule and the 40-bin [log 65, log 440] grid are conventions recorded
in the emitted report metadata.  Systems without an explicit pitch track
are measured through a harmonic-template estimate on their generated
Mel spectrograms, so every system can be compared on the same scale.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .features.mel import MEL_CHANNELS, N_FFT, mel_filterbank
from .features.audio import SAMPLE_RATE

HIST_BINS = 40
HIST_LOG_MIN = float(np.log(65.0))
HIST_LOG_MAX = float(np.log(440.0))
TRIM_PERCENTILES = (1.0, 99.0)


class EvalError(ValueError):
    """Raised for invalid evaluation inputs."""


def default_edges():
    return np.linspace(HIST_LOG_MIN, HIST_LOG_MAX, HIST_BINS + 1)


@dataclass(frozen=True)
class LogF0Histogram:
    edges: np.ndarray
    counts: np.ndarray
    voiced_total: int
    trimmed: int
    system: str = ""
    speaker: str = ""

    def probabilities(self):
        if self.voiced_total == 0:
            raise EvalError("histogram holds no voiced frames")
        return self.counts.astype(np.float64) / self.voiced_total


def logf0_histogram(contours, edges=None, system="", speaker=""):
    """Voiced-only histogram of log-F0 values across contours.

    Frames outside the [1st, 99th] percentile window of the pooled voiced
    values are dropped as estimation outliers; surviving values are clipped
    into the grid so every one lands in a bin.
    """
    if edges is None:
        edges = default_edges()
    edges = np.asarray(edges, dtype=np.float64)
    if edges.ndim != 1 or edges.size < 2 or np.any(np.diff(edges) <= 0):
        raise EvalError("bin edges must be a strictly increasing 1-d grid")
    voiced = [np.asarray(c, dtype=np.float64)[np.asarray(c) > 0] for c in contours]
    voiced = np.concatenate(voiced) if voiced else np.empty(0)
    if voiced.size == 0:
        raise EvalError("all frames are unvoiced; no pitch observations")
    lo, hi = np.percentile(voiced, TRIM_PERCENTILES)
    kept = voiced[(voiced >= lo) & (voiced <= hi)]
    clipped = np.clip(kept, edges[0], np.nextafter(edges[-1], -np.inf))
    counts, _ = np.histogram(clipped, bins=edges)
    return LogF0Histogram(edges=edges, counts=counts, voiced_total=int(counts.sum()),
                          trimmed=int(voiced.size - kept.size),
                          system=system, speaker=speaker)


def distribution_distance(h1, h2):
    """Wasserstein-1 distance between two histograms on the same grid.

    Mass sits at bin centres, so the distance is the CDF difference
    integrated over the centre spacing (log-Hz units).
    """
    if h1.edges.shape != h2.edges.shape or not np.allclose(h1.edges, h2.edges):
        raise EvalError("histograms use different bin grids")
    p1 = h1.probabilities()
    p2 = h2.probabilities()
    centers = 0.5 * (h1.edges[:-1] + h1.edges[1:])
    cdf_gap = np.cumsum(p1 - p2)[:-1]
    return float(np.sum(np.abs(cdf_gap) * np.diff(centers)))


def frame_mean_voiced(contour):
    """Mean log-F0 over voiced frames; 0.0 for an all-unvoiced contour."""
    contour = np.asarray(contour, dtype=np.float64)
    voiced = contour[contour > 0]
    return float(voiced.mean()) if voiced.size else 0.0


@dataclass(frozen=True)
class DiversityReport:
    temperatures: dict
    n_seeds: int
    entries: tuple  # (text, speaker, across-seed std of frame-mean log-F0)

    @property
    def mean_std(self):
        return float(np.mean([std for _, _, std in self.entries]))

    @property
    def max_std(self):
        return float(np.max([std for _, _, std in self.entries]))


def diversity_score(render, texts, speakers, seeds, temperatures):
    """Across-seed intonation spread for every (text, speaker) pair.

    ``render(text, speaker, seed, temperatures)`` must return a contour.
    The statistic is the population std over seeds of each rendering's
    voiced frame-mean log-F0.
    """
    seeds = list(seeds)
    if len(seeds) < 3:
        raise EvalError(f"diversity needs at least 3 seeds, got {len(seeds)}")
    entries = []
    for text in texts:
        for speaker in speakers:
            means = [frame_mean_voiced(render(text, speaker, seed, temperatures))
                     for seed in seeds]
            entries.append((text, speaker, float(np.std(means))))
    return DiversityReport(temperatures=dict(temperatures), n_seeds=len(seeds),
                           entries=tuple(entries))


# --- pitch read-back from generated Mel spectrograms ----------------------

N_TEMPLATE_HARMONICS = 5
_TEMPLATE_CACHE = {}


def _harmonic_templates(n_candidates, fmin, fmax):
    key = (n_candidates, fmin, fmax)
    if key not in _TEMPLATE_CACHE:
        fb = mel_filterbank()  # [mel, fft_bins]
        freqs = np.exp(np.linspace(np.log(fmin), np.log(fmax), n_candidates))
        bin_hz = SAMPLE_RATE / N_FFT
        templates = np.zeros((MEL_CHANNELS, n_candidates))
        for ci, f0 in enumerate(freqs):
            for h in range(1, N_TEMPLATE_HARMONICS + 1):
                pos = h * f0 / bin_hz
                lo = int(pos)
                frac = pos - lo
                if lo + 1 < fb.shape[1]:
                    templates[:, ci] += (1.0 - frac) * fb[:, lo] + frac * fb[:, lo + 1]
        norms = np.linalg.norm(templates, axis=0)
        _TEMPLATE_CACHE[key] = (freqs, templates / norms)
    return _TEMPLATE_CACHE[key]


def estimate_logf0_from_mel(log_mel, fmin=65.0, fmax=480.0, n_candidates=192,
                            energy_floor=0.05, min_score=0.5):
    """Template-matched log-F0 readout from a log-Mel spectrogram.

    Scores every candidate F0 by the cosine between the frame's linear
    Mel power and a 5-harmonic comb pushed through the same filterbank,
    then refines the winning candidate parabolically on the log grid.
    Low-energy or low-score frames are unvoiced (0.0).
    """
    log_mel = np.asarray(log_mel, dtype=np.float64)
    if log_mel.ndim != 2 or log_mel.shape[0] != MEL_CHANNELS:
        raise EvalError(f"expected [{MEL_CHANNELS}, T] log-Mel input, got {log_mel.shape}")
    power = np.exp(log_mel)
    freqs, templates = _harmonic_templates(n_candidates, fmin, fmax)
    log_grid = np.log(freqs)
    step = log_grid[1] - log_grid[0]

    energy = power.sum(axis=0)
    norms = np.linalg.norm(power, axis=0)
    scores = templates.T @ (power / np.maximum(norms, 1e-30))  # [cand, T]

    out = np.zeros(log_mel.shape[1])
    best = np.argmax(scores, axis=0)
    for t in range(log_mel.shape[1]):
        c = int(best[t])
        if energy[t] < energy_floor or scores[c, t] < min_score:
            continue
        value = log_grid[c]
        if 0 < c < n_candidates - 1:
            left, mid, right = scores[c - 1, t], scores[c, t], scores[c + 1, t]
            denom = left - 2.0 * mid + right
            if abs(denom) > 1e-12:
                value += step * float(np.clip(0.5 * (left - right) / denom, -1.0, 1.0))
        out[t] = value
    return out


# --- report files ----------------------------------------------------------

def _convention_lines():
    return [
        f"# trim: voiced frames outside the [{TRIM_PERCENTILES[0]:g}, "
        f"{TRIM_PERCENTILES[1]:g}] percentile window are dropped",
        f"# bins: {HIST_BINS} over [log {65.0:g} Hz, log {440.0:g} Hz]; "
        "values are natural-log F0",
        "# unvoiced frames (contour value 0.0) are excluded",
    ]


def write_histogram_csv(path, histograms):
    lines = ["system,speaker,bin_lo,bin_hi,count,probability"]
    for h in histograms:
        p = h.probabilities()
        for i in range(h.counts.size):
            lines.append(f"{h.system},{h.speaker},{h.edges[i]:.6f},"
                         f"{h.edges[i + 1]:.6f},{int(h.counts[i])},{p[i]:.8f}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_histogram_gnuplot(path, histograms):
    """Blocks of `center probability` rows, one indexed block per histogram."""
    lines = list(_convention_lines())
    for h in histograms:
        p = h.probabilities()
        centers = 0.5 * (h.edges[:-1] + h.edges[1:])
        lines.append(f'# system="{h.system}" speaker="{h.speaker}" '
                     f"voiced={h.voiced_total} trimmed={h.trimmed}")
        lines.extend(f"{c:.6f} {q:.8f}" for c, q in zip(centers, p))
        lines.append("")
        lines.append("")
    Path(path).write_text("\n".join(lines).rstrip("\n") + "\n", encoding="utf-8")


def write_diversity_csv(path, reports):
    """reports: {system: DiversityReport}"""
    lines = ["system,text,speaker,across_seed_std,n_seeds,t_prior,t_duration,t_pitch"]
    for system, rep in reports.items():
        t = rep.temperatures
        for text, speaker, std in rep.entries:
            lines.append(f"{system},{text},{speaker},{std:.8f},{rep.n_seeds},"
                         f"{t.get('prior', '')},{t.get('duration', '')},{t.get('pitch', '')}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
