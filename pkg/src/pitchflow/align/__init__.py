"""Monotonic alignment search between token statistics and latent frames.

The inner dynamic program runs per batch item at every training step, so
it ships as a compiled extension with a numpy fallback selected at import
time.  Both backends take the same float64 likelihood matrix and produce
identical paths; ``BACKEND`` reports which one is active.

Alignment is a hard decision: inputs are detached numpy arrays and no
gradient flows through the search itself.
"""

from __future__ import annotations

from itertools import combinations

import numpy as np

from . import _fallback

try:
    from . import _core

    COMPILED_AVAILABLE = True
except ImportError:  # pragma: no cover - depends on the build environment
    _core = None
    COMPILED_AVAILABLE = False

BACKEND = "compiled" if COMPILED_AVAILABLE else "numpy"


class AlignmentError(ValueError):
    pass


def likelihoods(mu, z):
    """Per-token frame log-likelihoods under a unit-variance Gaussian prior.

    mu: [D, N] token means; z: [D, T] latent frames.
    Returns float64 [N, T] with entries -0.5 * ||z_t - mu_i||^2 - (D/2) log(2 pi).
    """
    mu = np.asarray(mu, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if mu.shape[0] != z.shape[0]:
        raise AlignmentError(
            f"likelihoods: feature dims differ, mu {mu.shape} vs z {z.shape}"
        )
    d = mu.shape[0]
    cross = mu.T @ z  # [N, T]
    sq_mu = (mu * mu).sum(axis=0)[:, None]
    sq_z = (z * z).sum(axis=0)[None, :]
    return -0.5 * (sq_mu + sq_z - 2.0 * cross) - 0.5 * d * np.log(2.0 * np.pi)


def _validated(values):
    values = np.ascontiguousarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise AlignmentError(f"expected a 2-d likelihood matrix, got shape {values.shape}")
    n, t = values.shape
    if t < n:
        raise AlignmentError(
            f"cannot align {n} tokens to {t} frames: every token needs at least one frame"
        )
    return values


def mas(values, backend=None):
    """Monotone surjective path maximizing the summed likelihood.

    values: [N, T]; returns int64 [T] of token indices (non-decreasing,
    starting at 0, ending at N-1, unit steps).  Ties prefer staying on the
    current token.
    """
    values = _validated(values)
    if backend is None:
        backend = BACKEND
    if backend == "compiled":
        if not COMPILED_AVAILABLE:
            raise AlignmentError("compiled alignment kernel is not available")
        return _core.best_path(values)
    if backend == "numpy":
        return _fallback.best_path(values)
    raise AlignmentError(f"unknown alignment backend {backend!r}")


def durations_from_path(path, n_tokens):
    """Frames per token for a monotone path; int64 [n_tokens]."""
    path = np.asarray(path)
    return np.bincount(path, minlength=n_tokens).astype(np.int64)


def enumerate_paths(n_tokens, n_frames):
    """All monotone surjective paths as an int64 matrix [paths, n_frames].

    A path is determined by the frame at which each of the n_tokens - 1
    token advances happens, so there are C(n_frames - 1, n_tokens - 1)
    rows.  Exponential in general; intended as a test oracle at small
    sizes.
    """
    paths = []
    for advance_frames in combinations(range(1, n_frames), n_tokens - 1):
        path = np.zeros(n_frames, dtype=np.int64)
        for frame in advance_frames:
            path[frame:] += 1
        paths.append(path)
    return np.stack(paths, axis=0)


def mas_brute_force(values):
    """Exhaustive-search oracle.

    Returns (path, score, unique): the best-scoring monotone surjective
    path, its total (accumulated left to right, matching the DP's
    arithmetic), and whether the optimum is unique.
    """
    values = _validated(values)
    n, t = values.shape
    paths = enumerate_paths(n, t)
    scores = values[paths[:, 0], 0].copy()
    for frame in range(1, t):
        scores = scores + values[paths[:, frame], frame]
    best = int(np.argmax(scores))
    best_score = scores[best]
    unique = int((scores == best_score).sum()) == 1
    return paths[best], best_score, unique
