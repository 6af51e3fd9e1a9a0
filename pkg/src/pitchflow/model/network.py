"""Full acoustic model: encoder, flow decoder, duration and pitch predictors.

Three system variants share the code path:

* ``baseline``  - deterministic duration regressor, no pitch pathway
* ``std``       - stochastic (flow) duration predictor, no pitch pathway
* ``stdp``      - stochastic duration plus stochastic pitch prediction,
                  with the sampled contour conditioning the decoder

Training maximizes the exact spectrogram likelihood under a unit-variance
Gaussian prior whose per-frame means come from monotonic alignment
search, plus the duration objective and (stdp) the pitch flow likelihood;
all three terms carry weight 1 and are normalized per element (mel
elements, tokens, frames respectively).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import align
from .. import autodiff as ad
from .. import nn
from ..autodiff import Tensor
from ..flows import FlowStep, squeeze, unsqueeze
from .encoder import TextEncoder
from .predictors import (
    DeterministicDurationPredictor,
    StochasticDurationPredictor,
    StochasticPitchPredictor,
    expand_by_duration,
)

LOG_TWO_PI = float(np.log(2.0 * np.pi))
VARIANTS = ("baseline", "std", "stdp")


class ModelError(RuntimeError):
    pass


@dataclass
class ModelConfig:
    variant: str = "stdp"
    vocab_size: int = 28
    mel_channels: int = 80
    speaker_dim: int = 256
    encoder_dim: int = 64
    encoder_layers: int = 3
    decoder_blocks: int = 4
    decoder_hidden: int = 64
    wn_layers: int = 3
    kernel_size: int = 5
    squeeze_ratio: int = 2
    duration_flows: int = 4
    duration_post_flows: int = 4
    duration_filter: int = 64
    pitch_blocks: int = 4
    pitch_filter: int = 64
    dds_depth: int = 3
    spline_bins: int = 10
    spline_bound: float = 5.0
    pitch_padding: int = 1
    init_seed: int = 0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ModelError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")


@dataclass
class SynthesisResult:
    mel: np.ndarray
    contour: np.ndarray | None
    durations: np.ndarray


class SpectrogramDecoder(nn.Layer):
    """Squeeze -> flow steps -> unsqueeze, reporting the total log-det."""

    def __init__(self, prefix, rng, config, pitch_channels, dtype=np.float32):
        self.ratio = config.squeeze_ratio
        channels = config.mel_channels * self.ratio
        self.steps = [
            FlowStep(f"{prefix}.step{i}", rng, channels, config.decoder_hidden,
                     n_layers=config.wn_layers, kernel_size=config.kernel_size,
                     speaker_dim=config.speaker_dim, pitch_channels=pitch_channels,
                     dtype=dtype)
            for i in range(config.decoder_blocks)
        ]

    def forward(self, mel, speaker, pitch=None, training=True):
        x = squeeze(mel, self.ratio)
        total = Tensor(np.zeros((), dtype=x.data.dtype))
        for step in self.steps:
            x, ld = step.forward(x, speaker=speaker, pitch=pitch, training=training)
            total = ad.add(total, ld)
        return unsqueeze(x, self.ratio), total

    def inverse(self, z, speaker, pitch=None):
        x = squeeze(z, self.ratio)
        for step in reversed(self.steps):
            x = step.inverse(x, speaker=speaker, pitch=pitch)
        return unsqueeze(x, self.ratio)

    def initialize_actnorms(self, squeezed_items, speakers, pitches):
        """Data-dependent init, one step at a time over a whole batch."""
        current = [Tensor(x) for x in squeezed_items]
        for step in self.steps:
            stacked = np.concatenate([t.data for t in current], axis=1)
            step.actnorm.initialize_from(stacked)
            current = [
                Tensor(step.forward(t, speaker=s, pitch=p, training=True)[0].data)
                for t, s, p in zip(current, speakers, pitches)
            ]

    def actnorms_initialized(self):
        return all(step.actnorm.initialized for step in self.steps)

    def mark_initialized(self):
        for step in self.steps:
            step.actnorm.initialized = True


class AcousticModel(nn.Layer):
    def __init__(self, config: ModelConfig, dtype=np.float32):
        self.config = config
        rng = np.random.default_rng(config.init_seed)
        self.dtype = dtype
        self.encoder = TextEncoder("encoder", rng, config.vocab_size, config.encoder_dim,
                                   config.mel_channels, n_layers=config.encoder_layers,
                                   kernel_size=config.kernel_size,
                                   speaker_dim=config.speaker_dim, dtype=dtype)
        pitch_channels = config.mel_channels * config.squeeze_ratio if config.variant == "stdp" else 0
        self.decoder = SpectrogramDecoder("decoder", rng, config, pitch_channels, dtype=dtype)
        if config.variant == "baseline":
            self.duration = DeterministicDurationPredictor(
                "duration", rng, config.encoder_dim, config.duration_filter,
                speaker_dim=config.speaker_dim, dtype=dtype)
        else:
            self.duration = StochasticDurationPredictor(
                "duration", rng, config.encoder_dim, config.duration_filter,
                n_flows=config.duration_flows,
                n_post_flows=config.duration_post_flows, depth=config.dds_depth,
                n_bins=config.spline_bins, bound=config.spline_bound,
                speaker_dim=config.speaker_dim, dtype=dtype)
        if config.variant == "stdp":
            self.pitch = StochasticPitchPredictor(
                "pitch", rng, config.encoder_dim, config.pitch_filter,
                n_blocks=config.pitch_blocks, depth=config.dds_depth,
                n_bins=config.spline_bins, bound=config.spline_bound,
                padding_channels=config.pitch_padding,
                speaker_dim=config.speaker_dim, dtype=dtype)
            self.pitch_proj = nn.Conv1d("pitch_proj", rng, 1, config.mel_channels, 1,
                                        dtype=dtype)
        else:
            self.pitch = None
            self.pitch_proj = None

    # plumbing -----------------------------------------------------------
    def params(self):
        out = list(self.encoder.params()) + list(self.decoder.params())
        out += self.duration.params()
        if self.pitch is not None:
            out += self.pitch.params() + self.pitch_proj.params()
        return out

    def param_count(self):
        return sum(int(np.prod(p.data.shape)) for p in self.params())

    @property
    def initialized(self):
        return self.decoder.actnorms_initialized()

    def speaker_tensor(self, speaker_vec):
        vec = np.asarray(speaker_vec, dtype=self.dtype)
        if vec.shape != (self.config.speaker_dim,):
            raise ModelError(
                f"speaker vector has shape {vec.shape}, expected ({self.config.speaker_dim},)"
            )
        return Tensor(vec[:, None])

    def _kept_frames(self, t):
        r = self.config.squeeze_ratio
        return (t // r) * r

    def pitch_condition(self, contour):
        """Project a log-F0 contour and squeeze it onto the decoder grid.

        contour: float [T] (T divisible by the squeeze ratio).  Returns a
        Tensor [mel * ratio, T / ratio] for the coupling conditioners.
        """
        if self.pitch_proj is None:
            raise ModelError(f"variant {self.config.variant!r} has no pitch pathway")
        contour = np.asarray(contour, dtype=self.dtype)
        bundle = self.pitch_proj(Tensor(contour[None, :]))
        return squeeze(bundle, self.config.squeeze_ratio)

    # training ------------------------------------------------------------
    def initialize_from_batch(self, batch):
        """Data-dependent actnorm init; call once before the first step."""
        squeezed, speakers, pitches = [], [], []
        for item in batch:
            t_kept = self._kept_frames(item["mel"].shape[1])
            mel = Tensor(np.asarray(item["mel"][:, :t_kept], dtype=self.dtype))
            squeezed.append(squeeze(mel, self.config.squeeze_ratio).data)
            speakers.append(self.speaker_tensor(item["speaker_vec"]))
            if self.pitch is not None:
                bundle = self.pitch_condition(item["contour"][:t_kept])
                pitches.append(Tensor(bundle.data))
            else:
                pitches.append(None)
        self.decoder.initialize_actnorms(squeezed, speakers, pitches)

    def item_loss(self, item, rng, alignment=None):
        """Loss terms for one utterance.

        item: dict with ``tokens`` (int [N]), ``speaker_vec`` (float [S]),
        ``mel`` (float [80, T]) and, for stdp, ``contour`` (float [T]).
        Returns (total Tensor, components dict, durations int [N]).
        """
        tokens = np.asarray(item["tokens"])
        speaker = self.speaker_tensor(item["speaker_vec"])
        t_kept = self._kept_frames(item["mel"].shape[1])
        mel = Tensor(np.asarray(item["mel"][:, :t_kept], dtype=self.dtype))

        mu, hidden = self.encoder(tokens, speaker)

        bundle = None
        if self.pitch is not None:
            contour = np.asarray(item["contour"])[:t_kept]
            bundle = self.pitch_condition(contour)

        z, logdet = self.decoder.forward(mel, speaker, pitch=bundle, training=True)

        if alignment is None:
            scores = align.likelihoods(mu.data, z.data)
            alignment = align.mas(scores)
        durations = align.durations_from_path(alignment, tokens.size)

        mu_frames = ad.take(mu, alignment, axis=1)
        diff = ad.sub(z, mu_frames)
        d, t = z.shape
        mel_nll = ad.mul(
            ad.sub(ad.add(ad.mul(ad.sum(ad.mul(diff, diff)), 0.5),
                          0.5 * d * t * LOG_TWO_PI),
                   logdet),
            1.0 / (d * t),
        )

        dur_loss = self.duration.train_loss(hidden, durations, speaker, rng)

        components = {
            "mel_nll": float(mel_nll.data),
            "duration": float(dur_loss.data),
        }
        total = ad.add(mel_nll, dur_loss)
        if self.pitch is not None:
            pitch_loss = self.pitch.train_loss(contour, hidden, speaker, durations, rng)
            components["pitch_nll"] = float(pitch_loss.data)
            total = ad.add(total, pitch_loss)
        return total, components, durations

    def batch_loss(self, batch, rng, alignments=None):
        """Mean item loss over a batch (scalar Tensor, components dict)."""
        if not self.initialized:
            raise ModelError("actnorm statistics are uninitialized; "
                             "call initialize_from_batch before training")
        totals = []
        sums = {}
        for i, item in enumerate(batch):
            alignment = None if alignments is None else alignments[i]
            loss, components, _ = self.item_loss(item, rng, alignment=alignment)
            totals.append(loss)
            for k, v in components.items():
                sums[k] = sums.get(k, 0.0) + v
        n = len(batch)
        total = totals[0]
        for t in totals[1:]:
            total = ad.add(total, t)
        return ad.mul(total, 1.0 / n), {k: v / n for k, v in sums.items()}

    # inference -----------------------------------------------------------
    def synthesize(self, tokens, speaker_vec, rng, t_prior=0.667, t_duration=0.8,
                   t_pitch=0.8):
        """Sample (mel, contour, durations) for a token sequence.

        Draws happen in a fixed order (durations, then pitch, then the
        prior), so one seeded generator makes the output deterministic.
        """
        if not self.initialized:
            raise ModelError("model is untrained: actnorm statistics are uninitialized")
        tokens = np.asarray(tokens)
        speaker = self.speaker_tensor(speaker_vec)
        mu, hidden = self.encoder(tokens, speaker)

        durations = self.duration.sample(hidden, speaker, rng, temperature=t_duration)
        r = self.config.squeeze_ratio
        remainder = (-int(durations.sum())) % r
        durations = durations.copy()
        durations[-1] += remainder  # keep the frame count divisible by the squeeze
        t_frames = int(durations.sum())

        contour = None
        bundle = None
        if self.pitch is not None:
            contour = self.pitch.sample(hidden, speaker, durations, rng, temperature=t_pitch)
            bundle = self.pitch_condition(contour)

        mu_frames = expand_by_duration(mu, durations)
        noise = rng.standard_normal((self.config.mel_channels, t_frames)) * t_prior
        z = Tensor((mu_frames.data + noise).astype(self.dtype))
        mel = self.decoder.inverse(z, speaker, pitch=bundle)
        return SynthesisResult(mel=mel.data.astype(np.float64),
                               contour=contour,
                               durations=durations)
