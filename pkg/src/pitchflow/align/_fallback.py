"""Numpy implementation of the monotonic-alignment dynamic program.

Kept arithmetically identical to the compiled kernel: each cell adds one
float64 likelihood to one accumulated predecessor, so path totals match
the compiled backend (and an exhaustive left-to-right path sum) bit for
bit.
"""

from __future__ import annotations

import numpy as np


def best_path(values):
    """Highest-scoring monotone surjective token-per-frame assignment.

    values: float64 [tokens, frames].  Returns int64 [frames].
    """
    n, t = values.shape
    q = np.full((n, t), -np.inf, dtype=np.float64)
    q[0, 0] = values[0, 0]
    stay_better = np.zeros((n, t), dtype=bool)
    advanced = np.empty(n, dtype=np.float64)
    for frame in range(1, t):
        stay = q[:, frame - 1]
        advanced[0] = -np.inf
        advanced[1:] = q[:-1, frame - 1]
        choose_stay = stay >= advanced  # ties keep the current token
        stay_better[:, frame] = choose_stay
        q[:, frame] = np.where(choose_stay, stay, advanced) + values[:, frame]
    path = np.empty(t, dtype=np.int64)
    token = n - 1
    path[t - 1] = token
    for frame in range(t - 1, 0, -1):
        if not stay_better[token, frame]:
            token -= 1
        path[frame - 1] = token
    return path
