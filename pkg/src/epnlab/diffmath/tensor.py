"""Reverse-mode tensor math on numpy arrays.

A Tensor wraps an ndarray; ops append backward closures to an explicit
Tape while one is active, and ``backward`` replays the tape in reverse.
The op set is exactly what the agents here need (dense linear algebra,
layer norm, dot-product attention, feature-wise max pooling); there is
deliberately no general broadcasting engine beyond what those ops use.

Ops accept leading batch dimensions: the documented 2-D contracts
(e.g. linear on [n, d_in]) extend to [..., n, d_in] unchanged.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np

DEFAULT_DTYPE = np.float32


class ShapeError(ValueError):
    """Operand shapes do not conform; message names both shapes."""


class EmptyInputError(ValueError):
    """An op that needs at least one row was given zero rows."""


class Tensor:
    """Immutable-by-contract ndarray wrapper with a gradient slot."""

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a scalar, got shape {self.data.shape}")
        return float(self.data.reshape(()))

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class Tape:
    """Op graph of one forward pass: backward closures in forward order.

    Appending in forward order makes the list a topological order, so a
    single reverse sweep visits every node exactly once and the graph is
    acyclic by construction.
    """

    def __init__(self):
        self._ops: list = []

    def __len__(self):
        return len(self._ops)

    def record(self, backward_fn) -> None:
        self._ops.append(backward_fn)

    def run_backward(self) -> None:
        for fn in reversed(self._ops):
            fn()


_tls = threading.local()


def active_tape() -> Tape | None:
    return getattr(_tls, "tape", None)


@contextmanager
def recording(tape: Tape):
    """Make ``tape`` the active tape on this thread for the with-block."""
    prev = getattr(_tls, "tape", None)
    _tls.tape = tape
    try:
        yield tape
    finally:
        _tls.tape = prev


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _result(data: np.ndarray, inputs: tuple, backward_fn_factory) -> Tensor:
    """Build an op result; record its backward closure if a tape is live."""
    tape = active_tape()
    needs = tape is not None and any(i.requires_grad for i in inputs)
    out = Tensor(data, requires_grad=needs)
    if needs:
        tape.record(backward_fn_factory(out))
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (inverse of numpy broadcasting)."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------- basic ops


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data + b.data

    def bw(out):
        def fn():
            if out.grad is None:
                return
            if a.requires_grad:
                _accumulate(a, _unbroadcast(out.grad, a.data.shape))
            if b.requires_grad:
                _accumulate(b, _unbroadcast(out.grad, b.data.shape))
        return fn

    return _result(data, (a, b), bw)


def sub(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data - b.data

    def bw(out):
        def fn():
            if out.grad is None:
                return
            if a.requires_grad:
                _accumulate(a, _unbroadcast(out.grad, a.data.shape))
            if b.requires_grad:
                _accumulate(b, -_unbroadcast(out.grad, b.data.shape))
        return fn

    return _result(data, (a, b), bw)


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data * b.data

    def bw(out):
        def fn():
            if out.grad is None:
                return
            if a.requires_grad:
                _accumulate(a, _unbroadcast(out.grad * b.data, a.data.shape))
            if b.requires_grad:
                _accumulate(b, _unbroadcast(out.grad * a.data, b.data.shape))
        return fn

    return _result(data, (a, b), bw)


def scale(a: Tensor, s: float) -> Tensor:
    a = as_tensor(a)
    s = float(s)

    def bw(out):
        def fn():
            if out.grad is not None and a.requires_grad:
                _accumulate(a, out.grad * s)
        return fn

    return _result(a.data * s, (a,), bw)


def neg(a: Tensor) -> Tensor:
    return scale(a, -1.0)


def relu(a: Tensor) -> Tensor:
    a = as_tensor(a)
    data = np.maximum(a.data, 0)

    def bw(out):
        mask = a.data > 0

        def fn():
            if out.grad is not None and a.requires_grad:
                _accumulate(a, out.grad * mask)
        return fn

    return _result(data, (a,), bw)


def tanh(a: Tensor) -> Tensor:
    a = as_tensor(a)
    data = np.tanh(a.data)

    def bw(out):
        def fn():
            if out.grad is not None and a.requires_grad:
                _accumulate(a, out.grad * (1.0 - out.data * out.data))
        return fn

    return _result(data, (a,), bw)


def sigmoid(a: Tensor) -> Tensor:
    a = as_tensor(a)
    data = 1.0 / (1.0 + np.exp(-a.data))

    def bw(out):
        def fn():
            if out.grad is not None and a.requires_grad:
                _accumulate(a, out.grad * out.data * (1.0 - out.data))
        return fn

    return _result(data, (a,), bw)


def tsum(a: Tensor) -> Tensor:
    a = as_tensor(a)

    def bw(out):
        def fn():
            if out.grad is not None and a.requires_grad:
                _accumulate(a, np.full_like(a.data, out.grad.reshape(())))
        return fn

    return _result(np.asarray(a.data.sum(), dtype=a.dtype), (a,), bw)


def tmean(a: Tensor) -> Tensor:
    return scale(tsum(a), 1.0 / a.data.size)


def reshape(a: Tensor, shape) -> Tensor:
    a = as_tensor(a)
    shape = tuple(shape)

    def bw(out):
        def fn():
            if out.grad is not None and a.requires_grad:
                _accumulate(a, out.grad.reshape(a.data.shape))
        return fn

    return _result(a.data.reshape(shape), (a,), bw)


def swapaxes(a: Tensor, ax1: int, ax2: int) -> Tensor:
    a = as_tensor(a)

    def bw(out):
        def fn():
            if out.grad is not None and a.requires_grad:
                _accumulate(a, out.grad.swapaxes(ax1, ax2))
        return fn

    return _result(a.data.swapaxes(ax1, ax2), (a,), bw)


def concat(parts: list, axis: int = -1) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    data = np.concatenate([p.data for p in parts], axis=axis)

    def bw(out):
        sizes = [p.data.shape[axis] for p in parts]
        splits = np.cumsum(sizes)[:-1]

        def fn():
            if out.grad is None:
                return
            for p, piece in zip(parts, np.split(out.grad, splits, axis=axis)):
                if p.requires_grad:
                    _accumulate(p, piece)
        return fn

    return _result(data, tuple(parts), bw)


def slice_last(a: Tensor, start: int, stop: int) -> Tensor:
    """Slice [start:stop] along the last axis."""
    a = as_tensor(a)

    def bw(out):
        def fn():
            if out.grad is not None and a.requires_grad:
                g = np.zeros_like(a.data)
                g[..., start:stop] = out.grad
                _accumulate(a, g)
        return fn

    return _result(a.data[..., start:stop].copy(), (a,), bw)


def slice_rows(a: Tensor, start: int, stop: int) -> Tensor:
    """Slice [start:stop] along the row axis (axis -2)."""
    a = as_tensor(a)

    def bw(out):
        def fn():
            if out.grad is not None and a.requires_grad:
                g = np.zeros_like(a.data)
                g[..., start:stop, :] = out.grad
                _accumulate(a, g)
        return fn

    return _result(a.data[..., start:stop, :].copy(), (a,), bw)


def repeat_rows(a: Tensor, n: int) -> Tensor:
    """Insert a row axis before the feature axis: [..., d] -> [..., n, d]."""
    a = as_tensor(a)
    data = np.broadcast_to(a.data[..., None, :], (*a.data.shape[:-1], n, a.data.shape[-1])).copy()

    def bw(out):
        def fn():
            if out.grad is not None and a.requires_grad:
                _accumulate(a, out.grad.sum(axis=-2))
        return fn

    return _result(data, (a,), bw)


def expand_leading(a: Tensor, n: int) -> Tensor:
    """Prepend a broadcast batch axis: shape -> [n, *shape]."""
    a = as_tensor(a)
    data = np.broadcast_to(a.data, (n, *a.data.shape)).copy()

    def bw(out):
        def fn():
            if out.grad is not None and a.requires_grad:
                _accumulate(a, out.grad.sum(axis=0))
        return fn

    return _result(data, (a,), bw)


# ------------------------------------------------------------- linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product; supports matched leading batch dims and 2-D weights."""
    a, b = as_tensor(a), as_tensor(b)
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ShapeError(f"matmul inner dims differ: {a.data.shape} vs {b.data.shape}")
    data = a.data @ b.data

    def bw(out):
        def fn():
            if out.grad is None:
                return
            g = out.grad
            if a.requires_grad:
                ga = g @ b.data.swapaxes(-1, -2)
                _accumulate(a, _unbroadcast(ga, a.data.shape))
            if b.requires_grad:
                gb = a.data.swapaxes(-1, -2) @ g
                _accumulate(b, _unbroadcast(gb, b.data.shape))
        return fn

    return _result(data, (a, b), bw)


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """x[..., d_in] @ w[d_in, d_out] + b[d_out], flattened to one GEMM."""
    x, w = as_tensor(x), as_tensor(w)
    d_in = x.data.shape[-1]
    if w.data.ndim != 2 or w.data.shape[0] != d_in:
        raise ShapeError(f"linear: x {x.data.shape} does not conform to w {w.data.shape}")
    if b is not None:
        b = as_tensor(b)
        if b.data.shape != (w.data.shape[1],):
            raise ShapeError(f"linear: bias {b.data.shape} does not match w {w.data.shape}")
    lead = x.data.shape[:-1]
    x2 = x.data.reshape(-1, d_in)
    y2 = x2 @ w.data
    if b is not None:
        y2 = y2 + b.data
    data = y2.reshape(*lead, w.data.shape[1])

    def bw(out):
        def fn():
            if out.grad is None:
                return
            g2 = out.grad.reshape(-1, out.grad.shape[-1])
            if x.requires_grad:
                _accumulate(x, (g2 @ w.data.T).reshape(x.data.shape))
            if w.requires_grad:
                _accumulate(w, x2.T @ g2)
            if b is not None and b.requires_grad:
                _accumulate(b, g2.sum(axis=0))
        return fn

    inputs = (x, w) if b is None else (x, w, b)
    return _result(data, inputs, bw)


def embedding(table: Tensor, ids) -> Tensor:
    """Row lookup table[ids]; ids is an int array of any shape."""
    table = as_tensor(table)
    idx = np.asarray(ids, dtype=np.int64)
    data = table.data[idx]

    def bw(out):
        def fn():
            if out.grad is not None and table.requires_grad:
                g = np.zeros_like(table.data)
                np.add.at(g, idx.reshape(-1), out.grad.reshape(-1, table.data.shape[-1]))
                _accumulate(table, g)
        return fn

    return _result(data, (table,), bw)


def take_last(x: Tensor, idx) -> Tensor:
    """Pick x[..., idx[...]] along the last axis; used for log-prob gather."""
    x = as_tensor(x)
    ii = np.asarray(idx, dtype=np.int64)
    if ii.shape != x.data.shape[:-1]:
        raise ShapeError(f"take_last: index shape {ii.shape} vs x {x.data.shape}")
    data = np.take_along_axis(x.data, ii[..., None], axis=-1)[..., 0]

    def bw(out):
        def fn():
            if out.grad is not None and x.requires_grad:
                g = np.zeros_like(x.data)
                np.put_along_axis(g, ii[..., None], out.grad[..., None], axis=-1)
                _accumulate(x, g)
        return fn

    return _result(data, (x,), bw)


def softmax(x: Tensor) -> Tensor:
    """Softmax along the last axis."""
    x = as_tensor(x)
    m = x.data.max(axis=-1, keepdims=True)
    e = np.exp(x.data - m)
    data = e / e.sum(axis=-1, keepdims=True)

    def bw(out):
        def fn():
            if out.grad is not None and x.requires_grad:
                y = out.data
                dot = (out.grad * y).sum(axis=-1, keepdims=True)
                _accumulate(x, y * (out.grad - dot))
        return fn

    return _result(data, (x,), bw)


def log_softmax(x: Tensor) -> Tensor:
    x = as_tensor(x)
    m = x.data.max(axis=-1, keepdims=True)
    z = x.data - m
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    data = z - lse

    def bw(out):
        def fn():
            if out.grad is not None and x.requires_grad:
                p = np.exp(out.data)
                _accumulate(x, out.grad - p * out.grad.sum(axis=-1, keepdims=True))
        return fn

    return _result(data, (x,), bw)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then affine."""
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    d = x.data.shape[-1]
    if d < 2:
        raise ShapeError(f"layer_norm needs a feature axis of >= 2, got {x.data.shape}")
    if gain.data.shape != (d,) or bias.data.shape != (d,):
        raise ShapeError(
            f"layer_norm affine shapes {gain.data.shape}/{bias.data.shape} do not match x {x.data.shape}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    y = xc * inv
    data = y * gain.data + bias.data

    def bw(out):
        def fn():
            if out.grad is None:
                return
            g = out.grad
            if gain.requires_grad:
                _accumulate(gain, (g * y).reshape(-1, d).sum(axis=0))
            if bias.requires_grad:
                _accumulate(bias, g.reshape(-1, d).sum(axis=0))
            if x.requires_grad:
                h = g * gain.data
                hm = h.mean(axis=-1, keepdims=True)
                hym = (h * y).mean(axis=-1, keepdims=True)
                _accumulate(x, (h - hm - y * hym) * inv)
        return fn

    return _result(data, (x, gain, bias), bw)


def normalized(x: Tensor, eps: float = 1e-5) -> Tensor:
    """layer_norm without the affine part (unit gain, zero bias)."""
    d = x.data.shape[-1]
    one = Tensor(np.ones(d, dtype=x.dtype))
    zero = Tensor(np.zeros(d, dtype=x.dtype))
    return layer_norm(x, one, zero, eps)


def feature_max_pool(x: Tensor) -> Tensor:
    """Column-wise max over the row axis: [..., n, d] -> [..., d].

    Gradient routes to the first maximal row per column.
    """
    x = as_tensor(x)
    if x.data.ndim < 2 or x.data.shape[-2] == 0:
        raise EmptyInputError(f"feature_max_pool needs >= 1 row, got shape {x.data.shape}")
    arg = x.data.argmax(axis=-2)
    data = np.take_along_axis(x.data, arg[..., None, :], axis=-2)[..., 0, :]

    def bw(out):
        def fn():
            if out.grad is not None and x.requires_grad:
                g = np.zeros_like(x.data)
                np.put_along_axis(g, arg[..., None, :], out.grad[..., None, :], axis=-2)
                _accumulate(x, g)
        return fn

    return _result(data, (x,), bw)


# ---------------------------------------------------------------- attention


@dataclass
class MhaParams:
    """Projection weights for one multi-head attention block."""
    wq: Tensor
    wk: Tensor
    wv: Tensor
    wo: Tensor
    bq: Tensor
    bk: Tensor
    bv: Tensor
    bo: Tensor


def multi_head_attention(q_in: Tensor, kv_in: Tensor, params: MhaParams,
                         n_heads: int, return_weights: bool = False):
    """Scaled dot-product attention; q_in [..., n, d], kv_in [..., m, d].

    Per head: softmax(Q K^T / sqrt(d/n_heads)) V; heads are concatenated
    and passed through the output projection. q_in is kv_in for
    self-attention; cross-attention passes a separate memory.
    """
    q_in, kv_in = as_tensor(q_in), as_tensor(kv_in)
    d = q_in.data.shape[-1]
    if kv_in.data.shape[-1] != d:
        raise ShapeError(f"attention width mismatch: {q_in.data.shape} vs {kv_in.data.shape}")
    n, m = q_in.data.shape[-2], kv_in.data.shape[-2]
    if n == 0 or m == 0:
        raise EmptyInputError(f"attention needs non-empty inputs, got n={n}, m={m}")
    if d % n_heads != 0:
        raise ShapeError(f"width {d} not divisible by n_heads={n_heads}")
    dh = d // n_heads

    q = linear(q_in, params.wq, params.bq)
    k = linear(kv_in, params.wk, params.bk)
    v = linear(kv_in, params.wv, params.bv)

    lead = q_in.data.shape[:-2]

    def split_heads(t: Tensor, rows: int) -> Tensor:
        t = reshape(t, (*lead, rows, n_heads, dh))
        return swapaxes(t, -2, -3)  # [..., heads, rows, dh]

    qh = split_heads(q, n)
    kh = split_heads(k, m)
    vh = split_heads(v, m)

    scores = scale(matmul(qh, swapaxes(kh, -1, -2)), 1.0 / np.sqrt(dh))
    weights = softmax(scores)  # [..., heads, n, m]
    mixed = matmul(weights, vh)
    merged = reshape(swapaxes(mixed, -2, -3), (*lead, n, d))
    out = linear(merged, params.wo, params.bo)
    if return_weights:
        return out, weights
    return out


# ----------------------------------------------------------------- backward


def backward(loss: Tensor, tape: Tape) -> None:
    """Run reverse-mode accumulation from a finite scalar loss."""
    if loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.data.shape}")
    if not np.isfinite(loss.data.reshape(())):
        raise ValueError("backward called on a non-finite loss")
    loss.grad = np.ones_like(loss.data)
    tape.run_backward()
