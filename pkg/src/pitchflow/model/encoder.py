"""Token encoder: embeddings plus a short convolutional stack.

Produces per-token prior means for the spectrogram latent and the hidden
features the duration and pitch predictors condition on.  The speaker
vector is projected and added at every token position, so both outputs
are speaker dependent.
"""

from __future__ import annotations

import numpy as np

from .. import autodiff as ad
from .. import nn


class TextEncoder(nn.Layer):
    def __init__(self, prefix, rng, vocab_size, dim, mel_channels, n_layers=3,
                 kernel_size=5, speaker_dim=256, dtype=np.float32):
        self.embedding = nn.Embedding(f"{prefix}.embedding", rng, vocab_size, dim, dtype=dtype)
        self.speaker_proj = nn.Dense(f"{prefix}.speaker", rng, speaker_dim, dim, dtype=dtype)
        self.convs = [
            nn.Conv1d(f"{prefix}.conv{i}", rng, dim, dim, kernel_size, dtype=dtype)
            for i in range(n_layers)
        ]
        self.norms = [
            nn.ChannelLayerNorm(f"{prefix}.norm{i}", dim, dtype=dtype)
            for i in range(n_layers)
        ]
        self.mu_proj = nn.Conv1d(f"{prefix}.mu", rng, dim, mel_channels, 1, dtype=dtype)

    def __call__(self, token_ids, speaker):
        """token_ids: int sequence [N]; speaker: Tensor [S, 1].

        Returns (mu [mel, N], hidden [dim, N]).
        """
        h = self.embedding(token_ids)  # [dim, N]
        h = ad.add(h, self.speaker_proj(speaker))
        for conv, norm in zip(self.convs, self.norms):
            h = norm(ad.gelu(conv(h)))
        return self.mu_proj(h), h
