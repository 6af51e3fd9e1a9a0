"""Compiled kernel for the monotonic-alignment dynamic program."""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def best_path(double[:, ::1] values):
    """Highest-scoring monotone surjective token-per-frame assignment.

    values: float64 [tokens, frames].  Returns int64 [frames].
    """
    cdef Py_ssize_t n = values.shape[0]
    cdef Py_ssize_t t = values.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] q_arr = np.full((n, t), -np.inf, dtype=np.float64)
    cdef cnp.ndarray[cnp.uint8_t, ndim=2] stay_arr = np.zeros((n, t), dtype=np.uint8)
    cdef double[:, ::1] q = q_arr
    cdef cnp.uint8_t[:, ::1] stay = stay_arr
    cdef cnp.ndarray[cnp.int64_t, ndim=1] path_arr = np.empty(t, dtype=np.int64)
    cdef cnp.int64_t[::1] path = path_arr
    cdef Py_ssize_t frame, token
    cdef double stay_score, advance_score
    cdef double neg_inf = -np.inf

    q[0, 0] = values[0, 0]
    for frame in range(1, t):
        for token in range(n):
            stay_score = q[token, frame - 1]
            advance_score = q[token - 1, frame - 1] if token > 0 else neg_inf
            if stay_score >= advance_score:  # ties keep the current token
                stay[token, frame] = 1
                q[token, frame] = stay_score + values[token, frame]
            else:
                q[token, frame] = advance_score + values[token, frame]

    token = n - 1
    path[t - 1] = token
    for frame in range(t - 1, 0, -1):
        if not stay[token, frame]:
            token -= 1
        path[frame - 1] = token
    return path_arr
