"""Reverse-mode automatic differentiation over numpy arrays.

A deliberately small tape: every operation that touches a differentiable
input records a backward closure on the output tensor, and ``backward()``
replays the closures in reverse topological order.  The primitive set is
closed (arithmetic, a handful of elementwise nonlinearities, reductions,
matmul, 1-d convolution, indexing/concatenation, cumulative sum) and every
higher-level layer in this package is composed from it, so a finite
difference check of any composite model exercises nothing outside this
file.

Arrays keep whatever float dtype they were created with.  Training code
uses float32; verification code builds the same graphs in float64 and
compares against central finite differences.
"""

from __future__ import annotations

import numpy as np

# When enabled, every primitive asserts its output is finite.  Slow; meant
# for tests and debugging runs, not training.
CHECK_FINITE = False


class AutodiffError(ValueError):
    pass


def _check(data, op):
    if CHECK_FINITE and not np.all(np.isfinite(data)):
        raise AutodiffError(f"{op}: non-finite values in output")
    return data


class Tensor:
    """A numpy array plus an optional position on the tape."""

    __slots__ = ("data", "grad", "_parents", "_backward", "requires_grad")

    def __init__(self, data, parents=(), backward=None, requires_grad=False):
        self.data = data if isinstance(data, np.ndarray) else np.asarray(data, dtype=np.float64)
        self.grad = None
        self._parents = parents
        self._backward = backward
        self.requires_grad = requires_grad or backward is not None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def item(self):
        return float(self.data)

    def backward(self):
        if self.data.size != 1:
            raise AutodiffError(
                f"backward() requires a scalar loss, got shape {self.data.shape}"
            )
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # operator sugar -----------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __pow__(self, p):
        return power(self, p)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"


class Param(Tensor):
    """A named trainable leaf."""

    __slots__ = ("name",)

    def __init__(self, name, value):
        value = np.array(value, copy=True)
        if value.dtype not in (np.float32, np.float64):
            value = value.astype(np.float32)
        super().__init__(value, requires_grad=True)
        self.name = name

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Param({self.name!r}, shape={self.data.shape}, dtype={self.data.dtype})"


def _as_tensor(x, like=None):
    if isinstance(x, Tensor):
        return x
    dtype = like.data.dtype if like is not None else np.float64
    return Tensor(np.asarray(x, dtype=dtype))


def _accum(t, g):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _unbroadcast(g, shape):
    """Sum ``g`` down to ``shape`` (inverse of numpy broadcasting)."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _make(data, parents, backward, op):
    if any(p.requires_grad for p in parents):
        return Tensor(_check(data, op), parents=tuple(parents), backward=backward)
    return Tensor(_check(data, op))


# elementwise arithmetic ------------------------------------------------


def add(a, b):
    a = _as_tensor(a, b if isinstance(b, Tensor) else None)
    b = _as_tensor(b, a)
    out_data = a.data + b.data

    def backward(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(g, b.data.shape))

    return _make(out_data, (a, b), backward, "add")


def sub(a, b):
    a = _as_tensor(a, b if isinstance(b, Tensor) else None)
    b = _as_tensor(b, a)
    out_data = a.data - b.data

    def backward(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(-g, b.data.shape))

    return _make(out_data, (a, b), backward, "sub")


def mul(a, b):
    a = _as_tensor(a, b if isinstance(b, Tensor) else None)
    b = _as_tensor(b, a)
    out_data = a.data * b.data

    def backward(g):
        _accum(a, _unbroadcast(g * b.data, a.data.shape))
        _accum(b, _unbroadcast(g * a.data, b.data.shape))

    return _make(out_data, (a, b), backward, "mul")


def div(a, b):
    a = _as_tensor(a, b if isinstance(b, Tensor) else None)
    b = _as_tensor(b, a)
    out_data = a.data / b.data

    def backward(g):
        _accum(a, _unbroadcast(g / b.data, a.data.shape))
        _accum(b, _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

    return _make(out_data, (a, b), backward, "div")


def power(a, p):
    a = _as_tensor(a)
    p = float(p)
    out_data = a.data**p

    def backward(g):
        _accum(a, g * p * a.data ** (p - 1.0))

    return _make(out_data, (a,), backward, "power")


# elementwise nonlinearities --------------------------------------------


def exp(a):
    a = _as_tensor(a)
    out_data = np.exp(a.data)

    def backward(g):
        _accum(a, g * out_data)

    return _make(out_data, (a,), backward, "exp")


def log(a):
    a = _as_tensor(a)
    out_data = np.log(a.data)

    def backward(g):
        _accum(a, g / a.data)

    return _make(out_data, (a,), backward, "log")


def tanh(a):
    a = _as_tensor(a)
    out_data = np.tanh(a.data)

    def backward(g):
        _accum(a, g * (1.0 - out_data * out_data))

    return _make(out_data, (a,), backward, "tanh")


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a):
    a = _as_tensor(a)
    out_data = _sigmoid(a.data)

    def backward(g):
        _accum(a, g * out_data * (1.0 - out_data))

    return _make(out_data, (a,), backward, "sigmoid")


def softplus(a):
    a = _as_tensor(a)
    out_data = np.maximum(a.data, 0.0) + np.log1p(np.exp(-np.abs(a.data)))

    def backward(g):
        _accum(a, g * _sigmoid(a.data))

    return _make(out_data, (a,), backward, "softplus")


def log_sigmoid(a):
    """log(sigmoid(x)), computed stably as -softplus(-x)."""
    a = _as_tensor(a)
    out_data = -(np.maximum(-a.data, 0.0) + np.log1p(np.exp(-np.abs(a.data))))

    def backward(g):
        _accum(a, g * _sigmoid(-a.data))

    return _make(out_data, (a,), backward, "log_sigmoid")


# reductions -------------------------------------------------------------


def sum(a, axis=None, keepdims=False):  # noqa: A001 - mirrors numpy naming
    a = _as_tensor(a)
    out_data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        gg = np.asarray(g)
        if axis is not None and not keepdims:
            gg = np.expand_dims(gg, axis)
        _accum(a, np.broadcast_to(gg, a.data.shape).copy())

    return _make(out_data, (a,), backward, "sum")


def mean(a, axis=None, keepdims=False):
    a = _as_tensor(a)
    if axis is None:
        count = a.data.size
    elif isinstance(axis, tuple):
        count = int(np.prod([a.data.shape[ax] for ax in axis]))
    else:
        count = a.data.shape[axis]
    return mul(sum(a, axis=axis, keepdims=keepdims), 1.0 / count)


# shape ops ---------------------------------------------------------------


def reshape(a, shape):
    a = _as_tensor(a)
    out_data = a.data.reshape(shape)

    def backward(g):
        _accum(a, g.reshape(a.data.shape))

    return _make(out_data, (a,), backward, "reshape")


def transpose(a, axes):
    a = _as_tensor(a)
    out_data = np.transpose(a.data, axes)
    inverse = np.argsort(axes)

    def backward(g):
        _accum(a, np.transpose(g, inverse))

    return _make(out_data, (a,), backward, "transpose")


def concat(tensors, axis=0):
    tensors = [_as_tensor(t) for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            _accum(t, g[tuple(idx)])

    return _make(out_data, tuple(tensors), backward, "concat")


def narrow(a, axis, start, length):
    """Contiguous slice along one axis."""
    a = _as_tensor(a)
    idx = [slice(None)] * a.data.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)
    out_data = a.data[idx].copy()

    def backward(g):
        buf = np.zeros_like(a.data)
        buf[idx] = g
        _accum(a, buf)

    return _make(out_data, (a,), backward, "narrow")


def split(a, sizes, axis=0):
    out = []
    start = 0
    for s in sizes:
        out.append(narrow(a, axis, start, s))
        start += s
    if start != a.data.shape[axis]:
        raise AutodiffError(
            f"split sizes {sizes} do not cover axis {axis} of shape {a.data.shape}"
        )
    return out


def take(a, indices, axis=0):
    """Select slices by integer index; repeated indices accumulate gradient."""
    a = _as_tensor(a)
    indices = np.asarray(indices)
    if indices.size and (indices.min() < 0 or indices.max() >= a.data.shape[axis]):
        raise AutodiffError(
            f"take: index out of range for axis {axis} with size {a.data.shape[axis]}"
        )
    out_data = np.take(a.data, indices, axis=axis)

    def backward(g):
        buf = np.zeros_like(a.data)
        moved = np.moveaxis(buf, axis, 0)
        np.add.at(moved, indices, np.moveaxis(g, axis, 0))
        _accum(a, buf)

    return _make(out_data, (a,), backward, "take")


def take_along_last(a, idx):
    """Per-row selection along the last axis; ``idx.shape == a.shape[:-1]``."""
    a = _as_tensor(a)
    idx = np.asarray(idx)
    out_data = np.take_along_axis(a.data, idx[..., None], axis=-1)[..., 0]

    def backward(g):
        buf = np.zeros_like(a.data)
        np.put_along_axis(buf, idx[..., None], g[..., None], axis=-1)
        _accum(a, buf)

    return _make(out_data, (a,), backward, "take_along_last")


def cumsum(a, axis=-1):
    a = _as_tensor(a)
    out_data = np.cumsum(a.data, axis=axis)

    def backward(g):
        _accum(a, np.flip(np.cumsum(np.flip(g, axis), axis=axis), axis))

    return _make(out_data, (a,), backward, "cumsum")


def where(cond, a, b):
    cond = np.asarray(cond, dtype=bool)
    a = _as_tensor(a, b if isinstance(b, Tensor) else None)
    b = _as_tensor(b, a)
    out_data = np.where(cond, a.data, b.data)

    def backward(g):
        _accum(a, _unbroadcast(np.where(cond, g, 0.0), a.data.shape))
        _accum(b, _unbroadcast(np.where(cond, 0.0, g), b.data.shape))

    return _make(out_data, (a, b), backward, "where")


def clamp_min(a, lo):
    a = _as_tensor(a)
    out_data = np.maximum(a.data, lo)

    def backward(g):
        _accum(a, np.where(a.data >= lo, g, 0.0))

    return _make(out_data, (a,), backward, "clamp_min")


def stop_gradient(a):
    """Block gradient flow: the value passes through, the tape ends here."""
    a = _as_tensor(a)
    return Tensor(a.data)


# linear algebra ----------------------------------------------------------


def matmul(a, b):
    a = _as_tensor(a)
    b = _as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise AutodiffError(
            f"matmul expects 2-d operands, got {a.data.shape} and {b.data.shape}"
        )
    if a.data.shape[1] != b.data.shape[0]:
        raise AutodiffError(
            f"matmul: inner dimensions differ, {a.data.shape} vs {b.data.shape}"
        )
    out_data = a.data @ b.data

    def backward(g):
        _accum(a, g @ b.data.T)
        _accum(b, a.data.T @ g)

    return _make(out_data, (a, b), backward, "matmul")


def dense(weight, x):
    """weight [out, in] applied to x [in, T] -> [out, T]."""
    return matmul(weight, x)


def log_abs_det(w):
    """log|det W| for a square matrix, with a singularity diagnostic."""
    w = _as_tensor(w)
    sign, logdet = np.linalg.slogdet(w.data)
    if sign == 0 or not np.isfinite(logdet):
        cond = np.linalg.cond(w.data)
        raise AutodiffError(
            f"log_abs_det: matrix of shape {w.data.shape} is singular (cond={cond:.3e})"
        )
    out_data = np.asarray(logdet, dtype=w.data.dtype)

    def backward(g):
        _accum(w, g * np.linalg.inv(w.data).T.astype(w.data.dtype))

    return _make(out_data, (w,), backward, "log_abs_det")


def conv1d(x, kernel, dilation=1, groups=1, padding="same"):
    """1-d convolution (cross-correlation) over [channels, frames].

    kernel has shape [out_channels, in_channels // groups, width].  Both
    padding modes preserve the frame count: "same" pads symmetrically
    (odd width required), "causal" pads on the left only.
    """
    x = _as_tensor(x)
    kernel = _as_tensor(kernel)
    if x.data.ndim != 2 or kernel.data.ndim != 3:
        raise AutodiffError(
            f"conv1d: expected input [C, T] and kernel [O, I, K], got {x.data.shape} and {kernel.data.shape}"
        )
    c_in, t = x.data.shape
    c_out, c_in_g, k = kernel.data.shape
    if c_in % groups or c_out % groups:
        raise AutodiffError(
            f"conv1d: channels ({c_in} in, {c_out} out) not divisible by groups={groups}"
        )
    if c_in_g != c_in // groups:
        raise AutodiffError(
            f"conv1d: kernel expects {c_in_g} input channels per group but input {x.data.shape} "
            f"with groups={groups} provides {c_in // groups}"
        )
    span = (k - 1) * dilation
    if padding == "same":
        if k % 2 == 0:
            raise AutodiffError(f"conv1d: same padding requires odd kernel width, got {k}")
        left = span // 2
        right = span - left
    elif padding == "causal":
        left, right = span, 0
    else:
        raise AutodiffError(f"conv1d: unknown padding mode {padding!r}")

    if span:
        xp = np.zeros((c_in, t + span), dtype=x.data.dtype)
        xp[:, left : left + t] = x.data
    else:
        xp = x.data
    # cols[c, j, t] = padded[c, t + j * dilation]
    cols = np.empty((c_in, k, t), dtype=x.data.dtype)
    for j in range(k):
        cols[:, j, :] = xp[:, j * dilation : j * dilation + t]
    cols_g = cols.reshape(groups, c_in_g * k, t)
    w_g = kernel.data.reshape(groups, c_out // groups, c_in_g * k)
    out_data = np.matmul(w_g, cols_g).reshape(c_out, t)

    def backward(g):
        g_g = g.reshape(groups, c_out // groups, t)
        if kernel.requires_grad:
            gw = np.matmul(g_g, cols_g.transpose(0, 2, 1))
            _accum(kernel, gw.reshape(kernel.data.shape))
        if x.requires_grad:
            dcols = np.matmul(w_g.transpose(0, 2, 1), g_g).reshape(c_in, k, t)
            dxp = np.zeros((c_in, t + span), dtype=g.dtype)
            for j in range(k):
                dxp[:, j * dilation : j * dilation + t] += dcols[:, j, :]
            _accum(x, dxp[:, left : left + t])

    return _make(out_data, (x, kernel), backward, "conv1d")


# composite helpers (built from primitives, no new backward rules) -------


def softmax(a, axis=-1):
    shift = np.max(a.data, axis=axis, keepdims=True)
    e = exp(sub(a, Tensor(shift)))
    return div(e, sum(e, axis=axis, keepdims=True))


def gelu(a):
    """Sigmoid-weighted linear unit; a close, cheap stand-in for GELU."""
    return mul(a, sigmoid(mul(a, 1.702)))


# evaluation / checking ---------------------------------------------------


def evaluate_with_gradients(loss_fn, params):
    """Run ``loss_fn`` and populate gradients on ``params``.

    Returns the scalar loss value.  Gradients are reset first, so one call
    corresponds to exactly one accumulation.
    """
    for p in params:
        p.zero_grad()
    loss = loss_fn()
    if not isinstance(loss, Tensor):
        raise AutodiffError("loss_fn must return a Tensor")
    if loss.data.size != 1:
        raise AutodiffError(f"loss must be scalar, got shape {loss.data.shape}")
    loss.backward()
    return loss.item()


def finite_difference_gradients(loss_fn, params, step=1e-4):
    """Central finite differences of ``loss_fn`` w.r.t. every Param element.

    ``loss_fn`` must be deterministic (seed any sampling internally).  Run
    in float64 for meaningful comparisons.
    """
    grads = []
    for p in params:
        g = np.zeros_like(p.data)
        flat = p.data.ravel()
        gflat = g.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = loss_fn().item()
            flat[i] = orig - step
            down = loss_fn().item()
            flat[i] = orig
            gflat[i] = (up - down) / (2.0 * step)
        grads.append(g)
    return grads


def max_relative_gradient_error(loss_fn, params, step=1e-4):
    """Worst relative disagreement between the tape and finite differences.

    Per parameter array the error is ||g_ad - g_fd||_2 / (||g_ad||_2 +
    ||g_fd||_2 + tiny); the maximum over arrays is returned.
    """
    evaluate_with_gradients(loss_fn, params)
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]
    numeric = finite_difference_gradients(loss_fn, params, step=step)
    worst = 0.0
    for ga, gn in zip(analytic, numeric):
        denom = np.linalg.norm(ga) + np.linalg.norm(gn) + 1e-12
        err = np.linalg.norm(ga - gn) / denom
        worst = max(worst, err)
    return worst
