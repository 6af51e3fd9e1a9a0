"""Invertible layers for the spectrogram decoder.

Each layer maps [channels, frames] -> [channels, frames] and reports the
log-determinant of its Jacobian as a scalar tensor.  The training
direction (data to noise) is differentiable; ``inverse`` is the sampling
direction and carries no tape.

Layer zoo: activation normalization with data-dependent init, an
invertible pointwise (1x1) channel mix, an affine coupling whose
conditioner is a stack of weight-normalized gated convolutions (speaker
and pitch conditioning enter through per-layer pointwise projections),
and the squeeze that trades frame rate for channels.
"""

from __future__ import annotations

import warnings

import numpy as np

from . import autodiff as ad
from . import nn
from .autodiff import Param, Tensor


class FlowError(ValueError):
    pass


def squeeze(x, ratio):
    """[C, T] -> [C * ratio, floor(T / ratio)]; trailing frames drop.

    Output channel j * C + c at frame t holds input channel c at frame
    t * ratio + j, so adjacent frames interleave into channel groups.
    """
    if ratio < 1:
        raise FlowError(f"squeeze ratio must be >= 1, got {ratio}")
    c, t = x.shape
    kept = (t // ratio) * ratio
    x = ad.narrow(x, 1, 0, kept) if kept != t else x
    x = ad.reshape(x, (c, kept // ratio, ratio))
    x = ad.transpose(x, (2, 0, 1))
    return ad.reshape(x, (ratio * c, kept // ratio))


def unsqueeze(x, ratio):
    """Inverse of ``squeeze`` (up to the dropped trailing frames)."""
    if ratio < 1:
        raise FlowError(f"squeeze ratio must be >= 1, got {ratio}")
    rc, t = x.shape
    if rc % ratio:
        raise FlowError(f"cannot unsqueeze {rc} channels by ratio {ratio}")
    c = rc // ratio
    x = ad.reshape(x, (ratio, c, t))
    x = ad.transpose(x, (1, 2, 0))
    return ad.reshape(x, (c, t * ratio))


class ActNorm(nn.Layer):
    """Per-channel affine y = scale * (x + bias), initialized from data."""

    def __init__(self, prefix, channels, dtype=np.float32):
        self.scale = Param(f"{prefix}.scale", np.ones((channels, 1), dtype=dtype))
        self.bias = Param(f"{prefix}.bias", np.zeros((channels, 1), dtype=dtype))
        self.initialized = False

    def initialize_from(self, x_data):
        """Set scale/bias so this batch item comes out zero-mean, unit-var."""
        mean = x_data.mean(axis=1, keepdims=True)
        var = x_data.var(axis=1, keepdims=True)
        if np.any(var < 1e-6):
            warnings.warn("actnorm init saw near-constant channels; variance floored "
                          "at 1e-6", RuntimeWarning, stacklevel=2)
            var = np.maximum(var, 1e-6)
        self.scale.data = (1.0 / np.sqrt(var)).astype(self.scale.data.dtype)
        self.bias.data = (-mean).astype(self.bias.data.dtype)
        self.initialized = True

    def forward(self, x, training=True):
        if training and not self.initialized:
            raise FlowError("actnorm used in training mode before data-dependent init")
        t = x.shape[1]
        y = ad.mul(ad.add(x, self.bias), self.scale)
        # log|scale| via 0.5 * log(scale^2) keeps the sign-free magnitude
        logdet = ad.mul(ad.sum(ad.mul(ad.log(ad.mul(self.scale, self.scale)), 0.5)), float(t))
        return y, logdet

    def inverse(self, y):
        x = ad.sub(ad.div(y, Tensor(self.scale.data)), Tensor(self.bias.data))
        return Tensor(x.data)


class InvertiblePointwiseConv(nn.Layer):
    """Channel mix y = W x with W initialized to a random rotation."""

    def __init__(self, prefix, channels, rng, dtype=np.float32):
        q, _ = np.linalg.qr(rng.standard_normal((channels, channels)))
        self.weight = Param(f"{prefix}.weight", q.astype(dtype))

    def forward(self, x, training=True):
        t = x.shape[1]
        y = ad.matmul(self.weight, x)
        logdet = ad.mul(ad.log_abs_det(self.weight), float(t))
        return y, logdet

    def inverse(self, y):
        w = self.weight.data.astype(np.float64)
        cond = np.linalg.cond(w)
        if not np.isfinite(cond) or cond > 1e12:
            raise FlowError(
                f"pointwise mix is numerically singular (condition number {cond:.3e})"
            )
        x = np.linalg.solve(w, y.data.astype(np.float64))
        return Tensor(x.astype(y.data.dtype))


class AffineCoupling(nn.Layer):
    """Half the channels pass through and steer an affine map of the rest.

    The conditioner is a stack of weight-normalized convolutions with
    gated-tanh units.  A speaker vector and (optionally) a pitch feature
    bundle are projected pointwise into every gate.  The output projection
    starts at zero so the coupling is the identity at init; the log-scale
    is tanh-bounded and stretched by a learned per-channel factor.
    """

    def __init__(self, prefix, rng, channels, hidden, n_layers=3, kernel_size=5,
                 dilation=1, speaker_dim=0, pitch_channels=0, dtype=np.float32):
        if channels % 2:
            raise FlowError(f"coupling needs an even channel count, got {channels}")
        self.half = channels // 2
        self.start = nn.Conv1d(f"{prefix}.start", rng, self.half, hidden, 1, dtype=dtype)
        self.convs = [
            nn.WeightNormConv1d(f"{prefix}.conv{i}", rng, hidden, 2 * hidden,
                                kernel_size, dilation=dilation, dtype=dtype)
            for i in range(n_layers)
        ]
        self.speaker_projs = [
            nn.Dense(f"{prefix}.spk{i}", rng, speaker_dim, 2 * hidden, dtype=dtype)
            for i in range(n_layers)
        ] if speaker_dim else []
        self.pitch_projs = [
            nn.Conv1d(f"{prefix}.pitch{i}", rng, pitch_channels, 2 * hidden, 1, dtype=dtype)
            for i in range(n_layers)
        ] if pitch_channels else []
        self.end = nn.Conv1d(f"{prefix}.end", rng, hidden, channels, 1,
                             zero_init=True, dtype=dtype)
        self.log_scale_factor = Param(f"{prefix}.log_scale_factor",
                                      np.ones((self.half, 1), dtype=dtype))
        self.hidden = hidden

    def _transform_params(self, x_a, speaker, pitch):
        t = x_a.shape[1]
        if pitch is not None and pitch.shape[1] != t:
            raise FlowError(
                f"pitch conditioning has {pitch.shape[1]} frames but features have {t}"
            )
        h = self.start(x_a)
        for i, conv in enumerate(self.convs):
            acts = conv(h)
            if self.speaker_projs and speaker is not None:
                acts = ad.add(acts, self.speaker_projs[i](speaker))
            if self.pitch_projs and pitch is not None:
                acts = ad.add(acts, self.pitch_projs[i](pitch))
            gate_a, gate_b = ad.split(acts, [self.hidden, self.hidden], axis=0)
            h = ad.add(h, ad.mul(ad.tanh(gate_a), ad.sigmoid(gate_b)))
        out = self.end(h)
        shift, raw_scale = ad.split(out, [self.half, self.half], axis=0)
        log_s = ad.mul(ad.tanh(raw_scale), self.log_scale_factor)
        return shift, log_s

    def forward(self, x, speaker=None, pitch=None, training=True):
        x_a, x_b = ad.split(x, [self.half, self.half], axis=0)
        shift, log_s = self._transform_params(x_a, speaker, pitch)
        y_b = ad.add(ad.mul(x_b, ad.exp(log_s)), shift)
        logdet = ad.sum(log_s)
        return ad.concat([x_a, y_b], axis=0), logdet

    def inverse(self, y, speaker=None, pitch=None):
        y_a, y_b = ad.split(y, [self.half, self.half], axis=0)
        shift, log_s = self._transform_params(y_a, speaker, pitch)
        x_b = ad.mul(ad.sub(y_b, shift), ad.exp(ad.mul(log_s, -1.0)))
        return Tensor(ad.concat([y_a, x_b], axis=0).data)


class FlowStep(nn.Layer):
    """actnorm -> pointwise mix -> affine coupling."""

    def __init__(self, prefix, rng, channels, hidden, n_layers=3, kernel_size=5,
                 speaker_dim=0, pitch_channels=0, dtype=np.float32):
        self.actnorm = ActNorm(f"{prefix}.actnorm", channels, dtype=dtype)
        self.mix = InvertiblePointwiseConv(f"{prefix}.mix", channels, rng, dtype=dtype)
        self.coupling = AffineCoupling(f"{prefix}.coupling", rng, channels, hidden,
                                       n_layers=n_layers, kernel_size=kernel_size,
                                       speaker_dim=speaker_dim,
                                       pitch_channels=pitch_channels, dtype=dtype)

    def forward(self, x, speaker=None, pitch=None, training=True):
        x, ld1 = self.actnorm.forward(x, training=training)
        x, ld2 = self.mix.forward(x, training=training)
        x, ld3 = self.coupling.forward(x, speaker=speaker, pitch=pitch, training=training)
        return x, ad.add(ad.add(ld1, ld2), ld3)

    def inverse(self, y, speaker=None, pitch=None):
        y = self.coupling.inverse(y, speaker=speaker, pitch=pitch)
        y = self.mix.inverse(y)
        return self.actnorm.inverse(y)
