"""Small neural-network layers composed from autodiff primitives.

Layers own their Params (named hierarchically with a dotted prefix) and
expose ``params()`` so containers can enumerate state for the optimizer
and the checkpoint codec.  Everything operates on [channels, frames]
arrays for one utterance; batching is a Python loop at the training-step
level.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Param, Tensor


def init_normal(rng, shape, scale, dtype):
    return rng.standard_normal(shape).astype(dtype) * scale


class Layer:
    def params(self):
        out = []
        for value in self.__dict__.values():
            if isinstance(value, Param):
                out.append(value)
            elif isinstance(value, Layer):
                out.extend(value.params())
            elif isinstance(value, (list, tuple)):
                for item in value:
                    if isinstance(item, Layer):
                        out.extend(item.params())
                    elif isinstance(item, Param):
                        out.append(item)
        return out


class Conv1d(Layer):
    def __init__(self, prefix, rng, in_channels, out_channels, kernel_size,
                 dilation=1, groups=1, padding="same", zero_init=False,
                 dtype=np.float32):
        scale = 0.0 if zero_init else 1.0 / np.sqrt(in_channels // groups * kernel_size)
        self.weight = Param(
            f"{prefix}.weight",
            init_normal(rng, (out_channels, in_channels // groups, kernel_size), scale, dtype),
        )
        self.bias = Param(f"{prefix}.bias", np.zeros((out_channels, 1), dtype=dtype))
        self.dilation = dilation
        self.groups = groups
        self.padding = padding

    def __call__(self, x):
        y = ad.conv1d(x, self.weight, dilation=self.dilation, groups=self.groups,
                      padding=self.padding)
        return ad.add(y, self.bias)


class WeightNormConv1d(Layer):
    """Conv1d with weight normalization: W = g * V / ||V|| per out channel."""

    def __init__(self, prefix, rng, in_channels, out_channels, kernel_size,
                 dilation=1, padding="same", dtype=np.float32):
        v = init_normal(rng, (out_channels, in_channels, kernel_size),
                        1.0 / np.sqrt(in_channels * kernel_size), dtype)
        norms = np.sqrt((v * v).sum(axis=(1, 2), keepdims=False)) + 1e-8
        self.v = Param(f"{prefix}.v", v)
        self.g = Param(f"{prefix}.g", norms.astype(dtype))
        self.bias = Param(f"{prefix}.bias", np.zeros((out_channels, 1), dtype=dtype))
        self.dilation = dilation
        self.padding = padding

    def __call__(self, x):
        norm = ad.power(ad.sum(ad.mul(self.v, self.v), axis=(1, 2), keepdims=True), 0.5)
        scale = ad.reshape(ad.div(self.g, ad.reshape(norm, (-1,))), (-1, 1, 1))
        w = ad.mul(self.v, scale)
        y = ad.conv1d(x, w, dilation=self.dilation, padding=self.padding)
        return ad.add(y, self.bias)


class Dense(Layer):
    def __init__(self, prefix, rng, in_dim, out_dim, zero_init=False, dtype=np.float32):
        scale = 0.0 if zero_init else 1.0 / np.sqrt(in_dim)
        self.weight = Param(f"{prefix}.weight", init_normal(rng, (out_dim, in_dim), scale, dtype))
        self.bias = Param(f"{prefix}.bias", np.zeros((out_dim, 1), dtype=dtype))

    def __call__(self, x):
        return ad.add(ad.matmul(self.weight, x), self.bias)


class Embedding(Layer):
    def __init__(self, prefix, rng, vocab_size, dim, dtype=np.float32):
        self.weight = Param(f"{prefix}.weight",
                            init_normal(rng, (vocab_size, dim), dim**-0.5, dtype))
        self.vocab_size = vocab_size

    def __call__(self, ids):
        ids = np.asarray(ids)
        if ids.size and (ids.min() < 0 or ids.max() >= self.vocab_size):
            raise ValueError(
                f"unknown token id {int(ids.max())} for vocabulary of size {self.vocab_size}"
            )
        # [N, dim] -> [dim, N]
        return ad.transpose(ad.take(self.weight, ids, axis=0), (1, 0))


class ChannelLayerNorm(Layer):
    """Normalizes over the channel axis at each frame."""

    def __init__(self, prefix, channels, dtype=np.float32):
        self.gamma = Param(f"{prefix}.gamma", np.ones((channels, 1), dtype=dtype))
        self.beta = Param(f"{prefix}.beta", np.zeros((channels, 1), dtype=dtype))

    def __call__(self, x):
        mu = ad.mean(x, axis=0, keepdims=True)
        centered = ad.sub(x, mu)
        var = ad.mean(ad.mul(centered, centered), axis=0, keepdims=True)
        inv = ad.power(ad.add(var, 1e-5), -0.5)
        return ad.add(ad.mul(ad.mul(centered, inv), self.gamma), self.beta)


class Sequential(Layer):
    def __init__(self, layers):
        self.layers = list(layers)

    def __call__(self, x):
        for layer in self.layers:
            x = layer(x)
        return x


def constant(value, dtype):
    return Tensor(np.asarray(value, dtype=dtype))
