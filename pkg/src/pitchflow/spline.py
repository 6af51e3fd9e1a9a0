"""Monotonic rational-quadratic spline flows and their conditioners.

The spline maps [-B, B] onto itself through K monotone rational-quadratic
segments whose widths, heights and knot derivatives come from
unconstrained conditioner outputs (softmax for bin sizes, softplus for
derivatives, boundary derivatives pinned to 1).  Outside the interval the
map is the identity.  Everything is composed from autodiff primitives, so
the transform is differentiable in both its input and its parameters.

Also here: the dilated depth-separable convolution stack used as the
spline conditioner, channel flips, elementwise affine and log flows, and
the Gaussian padding used to lift scalar sequences into an even channel
count for coupling (variational augmentation).
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from . import nn
from .autodiff import Param, Tensor

MIN_BIN_WIDTH = 1e-3
MIN_BIN_HEIGHT = 1e-3
MIN_DERIVATIVE = 1e-3


class SplineError(ValueError):
    pass


def _boundary_raw_derivative(min_derivative=MIN_DERIVATIVE):
    """Raw value whose softplus-parameterized derivative is exactly 1."""
    return float(np.log(np.expm1(1.0 - min_derivative)))


def identity_raw_params(shape, n_bins, dtype=np.float64):
    """Raw (widths, heights, derivatives) producing the identity spline."""
    widths = np.zeros(shape + (n_bins,), dtype=dtype)
    heights = np.zeros(shape + (n_bins,), dtype=dtype)
    derivs = np.full(shape + (n_bins - 1,), _boundary_raw_derivative(), dtype=dtype)
    return widths, heights, derivs


def _knots(raw, n_bins, bound, min_size, dtype):
    fractions = ad.softmax(raw, axis=-1)
    sizes = ad.mul(ad.add(ad.mul(fractions, 1.0 - min_size * n_bins), min_size), 2.0 * bound)
    zeros = Tensor(np.zeros(raw.shape[:-1] + (1,), dtype=dtype))
    cum = ad.add(ad.concat([zeros, ad.cumsum(sizes, axis=-1)], axis=-1), -bound)
    return sizes, cum


def rational_quadratic_spline(x, widths_raw, heights_raw, derivs_raw, bound=5.0,
                              inverse=False, min_bin_width=MIN_BIN_WIDTH,
                              min_bin_height=MIN_BIN_HEIGHT,
                              min_derivative=MIN_DERIVATIVE):
    """Apply the spline elementwise.

    x: Tensor [...]; widths_raw/heights_raw: Tensor [..., K];
    derivs_raw: Tensor [..., K - 1] (interior knots).
    Returns (y, log_jacobian) with log_jacobian elementwise [...]: the log
    derivative of the applied map (forward or inverse), 0 outside the
    interval where the map is the identity.
    """
    for t in (widths_raw, heights_raw, derivs_raw):
        if not np.all(np.isfinite(t.data)):
            raise SplineError("non-finite spline parameters")
    n_bins = widths_raw.shape[-1]
    if n_bins * min_bin_width > 1.0 or n_bins * min_bin_height > 1.0:
        raise SplineError(f"minimum bin size too large for {n_bins} bins")
    dtype = x.data.dtype

    widths, cumwidths = _knots(widths_raw, n_bins, bound, min_bin_width, dtype)
    heights, cumheights = _knots(heights_raw, n_bins, bound, min_bin_height, dtype)
    boundary = Tensor(np.full(derivs_raw.shape[:-1] + (1,), _boundary_raw_derivative(min_derivative), dtype=dtype))
    derivs = ad.add(ad.softplus(ad.concat([boundary, derivs_raw, boundary], axis=-1)),
                    min_derivative)

    inside = np.abs(x.data) <= bound
    x_in = ad.clamp_min(ad.mul(ad.clamp_min(ad.mul(x, -1.0), -bound), -1.0), -bound)

    locate = cumheights if inverse else cumwidths
    loc = locate.data.copy()
    loc[..., -1] += 1e-6  # keep the right boundary inside the last bin
    idx = np.clip((x_in.data[..., None] >= loc).sum(axis=-1) - 1, 0, n_bins - 1)

    x0 = ad.take_along_last(cumwidths, idx)
    w = ad.take_along_last(widths, idx)
    y0 = ad.take_along_last(cumheights, idx)
    h = ad.take_along_last(heights, idx)
    d0 = ad.take_along_last(derivs, idx)
    d1 = ad.take_along_last(derivs, idx + 1)
    s = ad.div(h, w)

    if not inverse:
        theta = ad.div(ad.sub(x_in, x0), w)
        om = ad.sub(1.0, theta)
        tt = ad.mul(theta, om)
        denom = ad.add(s, ad.mul(ad.sub(ad.add(d0, d1), ad.mul(s, 2.0)), tt))
        numer = ad.mul(h, ad.add(ad.mul(s, ad.mul(theta, theta)), ad.mul(d0, tt)))
        y = ad.add(y0, ad.div(numer, denom))
        deriv_numer = ad.mul(ad.mul(s, s),
                             ad.add(ad.add(ad.mul(d1, ad.mul(theta, theta)),
                                           ad.mul(ad.mul(s, 2.0), tt)),
                                    ad.mul(d0, ad.mul(om, om))))
        log_jac = ad.sub(ad.log(deriv_numer), ad.mul(ad.log(denom), 2.0))
    else:
        dy = ad.sub(x_in, y0)
        two_s = ad.sub(ad.add(d0, d1), ad.mul(s, 2.0))
        a = ad.add(ad.mul(dy, two_s), ad.mul(h, ad.sub(s, d0)))
        b = ad.sub(ad.mul(h, d0), ad.mul(dy, two_s))
        c = ad.mul(ad.mul(s, dy), -1.0)
        disc = ad.sub(ad.mul(b, b), ad.mul(ad.mul(a, c), 4.0))
        disc = ad.clamp_min(disc, 0.0)
        root = ad.div(ad.mul(c, 2.0), ad.sub(ad.mul(b, -1.0), ad.power(disc, 0.5)))
        y = ad.add(ad.mul(root, w), x0)
        om = ad.sub(1.0, root)
        tt = ad.mul(root, om)
        denom = ad.add(s, ad.mul(two_s, tt))
        deriv_numer = ad.mul(ad.mul(s, s),
                             ad.add(ad.add(ad.mul(d1, ad.mul(root, root)),
                                           ad.mul(ad.mul(s, 2.0), tt)),
                                    ad.mul(d0, ad.mul(om, om))))
        log_jac = ad.sub(ad.mul(ad.log(denom), 2.0), ad.log(deriv_numer))

    y = ad.where(inside, y, x)
    log_jac = ad.where(inside, log_jac, Tensor(np.zeros_like(x.data)))
    return y, log_jac


class DDSConv(nn.Layer):
    """Dilated depth-separable convolution stack with residual connections.

    Layer i uses a depthwise kernel-3 convolution at dilation 3**i, then a
    pointwise mix, with channel layer norm and a GELU-like activation
    after each; conditioning is added to the input.  The receptive-field
    radius after `depth` layers is sum_i 3**i.
    """

    def __init__(self, prefix, rng, channels, depth=3, kernel_size=3, dtype=np.float32):
        self.depthwise = []
        self.pointwise = []
        self.norms1 = []
        self.norms2 = []
        for i in range(depth):
            dilation = kernel_size**i
            self.depthwise.append(nn.Conv1d(f"{prefix}.dw{i}", rng, channels, channels,
                                            kernel_size, dilation=dilation,
                                            groups=channels, dtype=dtype))
            self.pointwise.append(nn.Conv1d(f"{prefix}.pw{i}", rng, channels, channels,
                                            1, dtype=dtype))
            self.norms1.append(nn.ChannelLayerNorm(f"{prefix}.ln1_{i}", channels, dtype=dtype))
            self.norms2.append(nn.ChannelLayerNorm(f"{prefix}.ln2_{i}", channels, dtype=dtype))

    def __call__(self, x, cond=None):
        if cond is not None:
            x = ad.add(x, cond)
        for dw, pw, n1, n2 in zip(self.depthwise, self.pointwise, self.norms1, self.norms2):
            h = ad.gelu(n1(dw(x)))
            h = ad.gelu(n2(pw(h)))
            x = ad.add(x, h)
        return x


class SplineCoupling(nn.Layer):
    """Coupling layer whose transform of the second half is a spline.

    The first half of the channels passes through a pointwise projection
    and a DDSConv stack (plus optional conditioning) to produce the spline
    parameters of the second half.  The parameter projection starts at
    zero, so the layer begins as a fixed input-independent monotone map
    (uniform bins, softplus(0) knot derivatives).
    """

    def __init__(self, prefix, rng, channels, filter_channels, n_bins=10, bound=5.0,
                 depth=3, kernel_size=3, dtype=np.float32):
        if channels % 2:
            raise SplineError(f"spline coupling needs even channels, got {channels}")
        self.half = channels // 2
        self.n_bins = n_bins
        self.bound = bound
        self.filter_channels = filter_channels
        self.pre = nn.Conv1d(f"{prefix}.pre", rng, self.half, filter_channels, 1, dtype=dtype)
        self.convs = DDSConv(f"{prefix}.convs", rng, filter_channels, depth=depth,
                             kernel_size=kernel_size, dtype=dtype)
        self.proj = nn.Conv1d(f"{prefix}.proj", rng, filter_channels,
                              self.half * (3 * n_bins - 1), 1, zero_init=True, dtype=dtype)

    def _spline_params(self, x_a, cond):
        h = self.pre(x_a)
        h = self.convs(h, cond=cond)
        raw = self.proj(h)  # [half * (3K - 1), T]
        t = raw.shape[1]
        raw = ad.transpose(ad.reshape(raw, (self.half, 3 * self.n_bins - 1, t)), (0, 2, 1))
        widths = ad.narrow(raw, 2, 0, self.n_bins)
        heights = ad.narrow(raw, 2, self.n_bins, self.n_bins)
        derivs = ad.narrow(raw, 2, 2 * self.n_bins, self.n_bins - 1)
        scale = 1.0 / np.sqrt(self.filter_channels)
        return ad.mul(widths, scale), ad.mul(heights, scale), derivs

    def forward(self, x, cond=None, training=True):
        x_a, x_b = ad.split(x, [self.half, self.half], axis=0)
        widths, heights, derivs = self._spline_params(x_a, cond)
        y_b, log_jac = rational_quadratic_spline(x_b, widths, heights, derivs,
                                                 bound=self.bound, inverse=False)
        return ad.concat([x_a, y_b], axis=0), ad.sum(log_jac)

    def inverse(self, y, cond=None):
        y_a, y_b = ad.split(y, [self.half, self.half], axis=0)
        widths, heights, derivs = self._spline_params(y_a, cond)
        x_b, _ = rational_quadratic_spline(y_b, widths, heights, derivs,
                                           bound=self.bound, inverse=True)
        return Tensor(ad.concat([y_a, x_b], axis=0).data)


class ElementwiseAffine(nn.Layer):
    """y = shift + exp(log_scale) * x per channel."""

    def __init__(self, prefix, channels, shift_init=0.0, dtype=np.float32):
        self.shift = Param(f"{prefix}.shift", np.full((channels, 1), shift_init, dtype=dtype))
        self.log_scale = Param(f"{prefix}.log_scale", np.zeros((channels, 1), dtype=dtype))

    def forward(self, x, cond=None, training=True):
        y = ad.add(ad.mul(x, ad.exp(self.log_scale)), self.shift)
        logdet = ad.mul(ad.sum(self.log_scale), float(x.shape[1]))
        return y, logdet

    def inverse(self, y, cond=None):
        x = ad.mul(ad.sub(y, Tensor(self.shift.data)),
                   Tensor(np.exp(-self.log_scale.data)))
        return Tensor(x.data)


class Flip(nn.Layer):
    """Reverse channel order; volume preserving."""

    def forward(self, x, cond=None, training=True):
        idx = np.arange(x.shape[0])[::-1].copy()
        return ad.take(x, idx, axis=0), Tensor(np.zeros((), dtype=x.data.dtype))

    def inverse(self, y, cond=None):
        idx = np.arange(y.shape[0])[::-1].copy()
        return Tensor(ad.take(y, idx, axis=0).data)


class LogFlow(nn.Layer):
    """y = log(max(x, 1e-5)); usable only on positive data."""

    def forward(self, x, cond=None, training=True):
        y = ad.log(ad.clamp_min(x, 1e-5))
        logdet = ad.mul(ad.sum(y), -1.0)
        return y, logdet

    def inverse(self, y, cond=None):
        return Tensor(np.exp(y.data))


def variational_augment(payload, padding_channels, rng, temperature=1.0):
    """Concatenate Gaussian noise channels below the payload.

    Returns (augmented, padding_log_density): the lifted [C + P, T] tensor
    and the log-density of the drawn padding under its own standard-normal
    source, which the augmented-space likelihood objective must account
    for.
    """
    if padding_channels < 1:
        raise SplineError(f"padding_channels must be >= 1, got {padding_channels}")
    t = payload.shape[-1]
    noise = rng.standard_normal((padding_channels, t)) * temperature
    noise = noise.astype(payload.data.dtype)
    log_density = float((-0.5 * noise**2 - 0.5 * np.log(2.0 * np.pi)).sum())
    return ad.concat([payload, Tensor(noise)], axis=0), log_density
