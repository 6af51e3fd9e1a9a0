"""Duration and pitch predictors.

Both stochastic predictors are conditional normalizing flows over spline
couplings; both apply a stop-gradient to the encoder hidden features so
their training signal never reshapes the encoder.

The duration predictor models one positive integer per token.  Training
lifts the integer count into a continuous value with a flow-parameterized
sigmoid dequantization (an auxiliary posterior over the fractional part
plus one companion noise channel), then measures the likelihood of the
dequantized pair under a second flow stack; the reported loss is the
variational bound (flow negative log-likelihood plus posterior
log-density).  Sampling inverts the second stack only.

The pitch predictor models the per-frame log-F0 contour (zero at unvoiced
frames).  The scalar contour is augmented with an independent Gaussian
padding channel so a two-channel coupling applies, and is trained by
maximum likelihood in that augmented space; conditioning comes from the
speaker-conditioned hidden features expanded token-by-token to frame
length using the alignment durations.
"""

from __future__ import annotations

import numpy as np

from .. import autodiff as ad
from .. import nn
from ..autodiff import Tensor
from ..spline import (
    DDSConv,
    ElementwiseAffine,
    Flip,
    LogFlow,
    SplineCoupling,
    variational_augment,
)

LOG_TWO_PI = float(np.log(2.0 * np.pi))
UNVOICED_LOG_F0 = float(np.log(50.0))
MAX_LOG_F0 = float(np.log(600.0))
# Shift init centering voiced log-F0 (about log 150 ~ 5.0) and unvoiced zeros
# inside the spline interval [-bound, bound].
PITCH_SHIFT_INIT = -2.5


def expand_by_duration(x, durations):
    """Repeat token columns: [C, N] with durations [N] -> [C, sum(durations)]."""
    durations = np.asarray(durations)
    if durations.min() < 0:
        raise ValueError("durations must be non-negative")
    idx = np.repeat(np.arange(durations.size), durations)
    return ad.take(x, idx, axis=1)


def _run_forward(flows, z, cond):
    total = Tensor(np.zeros((), dtype=z.data.dtype))
    for flow in flows:
        z, ld = flow.forward(z, cond=cond)
        total = ad.add(total, ld)
    return z, total


def _run_inverse(flows, z, cond):
    for flow in reversed(flows):
        z = flow.inverse(z, cond=cond)
    return z


class StochasticDurationPredictor(nn.Layer):
    def __init__(self, prefix, rng, in_channels, filter_channels, n_flows=4,
                 n_post_flows=4, depth=3, n_bins=10, bound=5.0, speaker_dim=256,
                 dtype=np.float32):
        self.pre = nn.Conv1d(f"{prefix}.pre", rng, in_channels, filter_channels, 1, dtype=dtype)
        self.cond = nn.Dense(f"{prefix}.cond", rng, speaker_dim, filter_channels, dtype=dtype)
        self.convs = DDSConv(f"{prefix}.convs", rng, filter_channels, depth=depth, dtype=dtype)
        self.proj = nn.Conv1d(f"{prefix}.proj", rng, filter_channels, filter_channels, 1, dtype=dtype)

        self.flows = [ElementwiseAffine(f"{prefix}.flow_affine", 2, dtype=dtype)]
        for i in range(n_flows):
            self.flows.append(SplineCoupling(f"{prefix}.flow{i}", rng, 2, filter_channels,
                                             n_bins=n_bins, bound=bound, depth=depth, dtype=dtype))
            self.flows.append(Flip())

        self.post_pre = nn.Conv1d(f"{prefix}.post_pre", rng, 1, filter_channels, 1, dtype=dtype)
        self.post_convs = DDSConv(f"{prefix}.post_convs", rng, filter_channels, depth=depth, dtype=dtype)
        self.post_proj = nn.Conv1d(f"{prefix}.post_proj", rng, filter_channels, filter_channels, 1, dtype=dtype)
        self.post_flows = [ElementwiseAffine(f"{prefix}.post_affine", 2, dtype=dtype)]
        for i in range(n_post_flows):
            self.post_flows.append(SplineCoupling(f"{prefix}.post_flow{i}", rng, 2,
                                                  filter_channels, n_bins=n_bins,
                                                  bound=bound, depth=depth, dtype=dtype))
            self.post_flows.append(Flip())
        self.log_flow = LogFlow()

    def _conditioning(self, hidden, speaker):
        x = ad.stop_gradient(hidden)
        x = self.pre(x)
        x = ad.add(x, self.cond(speaker))
        x = self.convs(x)
        return self.proj(x)

    def train_loss(self, hidden, durations, speaker, rng):
        """Variational duration bound, normalized per token (scalar Tensor)."""
        n = hidden.shape[1]
        x = self._conditioning(hidden, speaker)
        w = Tensor(np.asarray(durations, dtype=x.data.dtype)[None, :])

        h_w = self.post_proj(self.post_convs(self.post_pre(w)))
        e_q = Tensor(rng.standard_normal((2, n)).astype(x.data.dtype))
        z_q, logdet_q = _run_forward(self.post_flows, e_q, ad.add(x, h_w))
        z_u, z1 = ad.split(z_q, [1, 1], axis=0)
        u = ad.sigmoid(z_u)
        z0 = ad.sub(w, u)
        logdet_q = ad.add(logdet_q,
                          ad.sum(ad.add(ad.log_sigmoid(z_u), ad.log_sigmoid(ad.mul(z_u, -1.0)))))
        # logq = -0.5 sum(log 2pi + e^2) - logdet_q
        logq = ad.sub(ad.mul(ad.sum(ad.add(ad.mul(ad.mul(e_q, e_q), 0.5),
                                           0.5 * LOG_TWO_PI)), -1.0),
                      logdet_q)

        z0, logdet_w = self.log_flow.forward(z0)
        z = ad.concat([z0, z1], axis=0)
        z, logdet = _run_forward(self.flows, z, x)
        logdet = ad.add(logdet, logdet_w)
        nll = ad.sub(ad.sum(ad.add(ad.mul(ad.mul(z, z), 0.5), 0.5 * LOG_TWO_PI)), logdet)
        return ad.mul(ad.add(nll, logq), 1.0 / n)

    def sample(self, hidden, speaker, rng, temperature=0.8):
        """Integer durations [N]: invert the duration flows from scaled noise."""
        n = hidden.shape[1]
        x = self._conditioning(hidden, speaker)
        z = Tensor((rng.standard_normal((2, n)) * temperature).astype(x.data.dtype))
        z = _run_inverse(self.flows, z, x)
        log_w = z.data[0]
        return np.maximum(1, np.ceil(np.exp(log_w))).astype(np.int64)


class DeterministicDurationPredictor(nn.Layer):
    """Two convolution blocks regressing log-durations (ablation baseline)."""

    def __init__(self, prefix, rng, in_channels, filter_channels, kernel_size=3,
                 speaker_dim=256, dtype=np.float32):
        self.cond = nn.Dense(f"{prefix}.cond", rng, speaker_dim, in_channels, dtype=dtype)
        self.conv1 = nn.Conv1d(f"{prefix}.conv1", rng, in_channels, filter_channels,
                               kernel_size, dtype=dtype)
        self.norm1 = nn.ChannelLayerNorm(f"{prefix}.norm1", filter_channels, dtype=dtype)
        self.conv2 = nn.Conv1d(f"{prefix}.conv2", rng, filter_channels, filter_channels,
                               kernel_size, dtype=dtype)
        self.norm2 = nn.ChannelLayerNorm(f"{prefix}.norm2", filter_channels, dtype=dtype)
        self.proj = nn.Conv1d(f"{prefix}.proj", rng, filter_channels, 1, 1, dtype=dtype)

    def predict_log_durations(self, hidden, speaker):
        x = ad.stop_gradient(hidden)
        x = ad.add(x, self.cond(speaker))
        x = self.norm1(ad.gelu(self.conv1(x)))
        x = self.norm2(ad.gelu(self.conv2(x)))
        return self.proj(x)  # [1, N]

    def train_loss(self, hidden, durations, speaker, rng=None):
        log_w = self.predict_log_durations(hidden, speaker)
        target = np.log(np.asarray(durations, dtype=np.float64)).astype(log_w.data.dtype)
        diff = ad.sub(log_w, Tensor(target[None, :]))
        return ad.mean(ad.mul(diff, diff))

    def sample(self, hidden, speaker, rng=None, temperature=None):
        log_w = self.predict_log_durations(hidden, speaker)
        return np.maximum(1, np.ceil(np.exp(log_w.data[0]))).astype(np.int64)


class StochasticPitchPredictor(nn.Layer):
    """Conditional spline flow over (log-F0, Gaussian padding) frame pairs."""

    def __init__(self, prefix, rng, in_channels, filter_channels, n_blocks=4,
                 depth=3, n_bins=10, bound=5.0, padding_channels=1,
                 speaker_dim=256, dtype=np.float32):
        if padding_channels != 1:
            raise ValueError("the two-channel coupling supports exactly one padding channel")
        self.padding_channels = padding_channels
        self.pre = nn.Conv1d(f"{prefix}.pre", rng, in_channels, filter_channels, 1, dtype=dtype)
        self.cond = nn.Dense(f"{prefix}.cond", rng, speaker_dim, filter_channels, dtype=dtype)
        self.convs = DDSConv(f"{prefix}.convs", rng, filter_channels, depth=depth, dtype=dtype)
        self.proj = nn.Conv1d(f"{prefix}.proj", rng, filter_channels, filter_channels, 1, dtype=dtype)
        affine = ElementwiseAffine(f"{prefix}.flow_affine", 2, dtype=dtype)
        affine.shift.data[0, 0] = PITCH_SHIFT_INIT  # payload channel only
        self.flows = [affine]
        for i in range(n_blocks):
            self.flows.append(SplineCoupling(f"{prefix}.flow{i}", rng, 2, filter_channels,
                                             n_bins=n_bins, bound=bound, depth=depth, dtype=dtype))
            self.flows.append(Flip())

    def _conditioning(self, hidden, speaker, durations):
        x = ad.stop_gradient(hidden)
        x = self.pre(x)
        x = ad.add(x, self.cond(speaker))
        x = expand_by_duration(x, durations)  # frame rate from here on
        x = self.convs(x)
        return self.proj(x)

    def train_loss(self, contour, hidden, speaker, durations, rng):
        """Augmented-space NLL per frame (scalar Tensor).

        contour: float [T] log-F0 targets (0 at unvoiced frames); durations
        must sum to T.
        """
        durations = np.asarray(durations)
        t = int(durations.sum())
        contour = np.asarray(contour)
        if contour.shape[0] != t:
            raise ValueError(
                f"contour has {contour.shape[0]} frames but durations sum to {t}"
            )
        x = self._conditioning(hidden, speaker, durations)
        payload = Tensor(contour.astype(x.data.dtype)[None, :])
        z, pad_logq = variational_augment(payload, self.padding_channels, rng)
        z, logdet = _run_forward(self.flows, z, x)
        nll = ad.sub(ad.sum(ad.add(ad.mul(ad.mul(z, z), 0.5), 0.5 * LOG_TWO_PI)), logdet)
        return ad.mul(ad.add(nll, pad_logq), 1.0 / t)

    def sample(self, hidden, speaker, durations, rng, temperature=0.8):
        """Sampled log-F0 contour [sum(durations)]; below log(50) is unvoiced 0."""
        durations = np.asarray(durations)
        t = int(durations.sum())
        x = self._conditioning(hidden, speaker, durations)
        z = Tensor((rng.standard_normal((2, t)) * temperature).astype(x.data.dtype))
        z = _run_inverse(self.flows, z, x)
        log_f0 = z.data[0].astype(np.float64)
        voiced = log_f0 >= UNVOICED_LOG_F0
        log_f0 = np.where(voiced, np.minimum(log_f0, MAX_LOG_F0), 0.0)
        return log_f0
