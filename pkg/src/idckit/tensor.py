"""Reverse-mode automatic differentiation over float64 numpy arrays.

Operations on Tensors record entries onto an explicit Tape; backward() walks
the tape in reverse and accumulates vector-Jacobian products. Every VJP is
itself written in terms of the same recorded operations, so running backward
with create_graph=True yields gradients that can be differentiated again.
This is what lets the condensation loop differentiate a distance between
network gradients with respect to the pixels that produced them.

All data is float64. Integer bookkeeping (masks, gather indices) is stored as
untracked constants, never as differentiable inputs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import backend


class ShapeError(ValueError):
    """An operation was given arrays whose extents do not fit."""


class TapeError(RuntimeError):
    """Backward was asked to run without the recording it needs."""


# --------------------------------------------------------------------------
# tape machinery

class Tape:
    """Ordered record of executed operations.

    Entries are (op name, input tensors, output tensor, saved context)
    tuples appended in execution order, so a single reverse sweep visits
    every node after all of its consumers.
    """

    __slots__ = ("entries", "closed")

    def __init__(self) -> None:
        self.entries: list[_Entry] = []
        self.closed = False

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, *exc) -> None:
        # Break the Tensor<->Tape reference cycles on the way out so the
        # recorded intermediates are reclaimed by refcount immediately;
        # waiting for the cycle collector lets hundreds of MB of conv
        # buffers pile up across training steps.
        _TAPE_STACK.pop()
        self.closed = True
        for e in self.entries:
            e.inputs = ()
            e.output = None
            e.ctx = None
            e.vjp = None
        self.entries.clear()

    def __len__(self) -> int:
        return len(self.entries)


_TAPE_STACK: list[Tape] = []
_GRAD_DEPTH = 0  # >0 means recording is suspended


class no_grad:
    """Context manager that suspends tape recording."""

    def __enter__(self) -> None:
        global _GRAD_DEPTH
        _GRAD_DEPTH += 1

    def __exit__(self, *exc) -> None:
        global _GRAD_DEPTH
        _GRAD_DEPTH -= 1


def _recording_tape() -> Tape | None:
    if _GRAD_DEPTH > 0 or not _TAPE_STACK:
        return None
    return _TAPE_STACK[-1]


class _Entry:
    __slots__ = ("name", "inputs", "output", "ctx", "vjp")

    def __init__(self, name, inputs, output, ctx, vjp):
        self.name = name
        self.inputs = inputs
        self.output = output
        self.ctx = ctx
        self.vjp = vjp


class Tensor:
    """A float64 numpy array plus gradient bookkeeping."""

    __slots__ = ("data", "requires_grad", "grad", "_tape")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: Tensor | None = None
        self._tape: Tape | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # small operator sugar; everything routes through the recorded ops
    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, _as_tensor(other))

    def __rmul__(self, other):
        return mul(_as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, _as_tensor(other))

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __neg__(self):
        return scale(self, -1.0)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def constant(data) -> Tensor:
    """An untracked tensor (requires_grad False)."""
    return Tensor(data)


def _emit(name: str, inputs: tuple[Tensor, ...], out_data: np.ndarray,
          ctx, vjp: Callable) -> Tensor:
    out = Tensor(out_data)
    if any(t.requires_grad for t in inputs):
        tape = _recording_tape()
        if tape is not None:
            out.requires_grad = True
            out._tape = tape
            tape.entries.append(_Entry(name, inputs, out, ctx, vjp))
    return out


def _require(cond: bool, op: str, msg: str) -> None:
    if not cond:
        raise ShapeError(f"{op}: {msg}")


# --------------------------------------------------------------------------
# primitives: structure

def reshape(x: Tensor, shape) -> Tensor:
    shape = tuple(int(s) for s in shape)
    _require(int(np.prod(shape, dtype=np.int64)) == x.data.size
             or -1 in shape, "reshape",
             f"cannot reshape {x.shape} to {shape}")

    def vjp(entry, g):
        return (reshape(g, entry.ctx),)

    return _emit("reshape", (x,), x.data.reshape(shape), x.shape, vjp)


def transpose(x: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(int(a) for a in axes)
    _require(sorted(axes) == list(range(x.ndim)), "transpose",
             f"axes {axes} is not a permutation for ndim {x.ndim}")
    inv = tuple(int(a) for a in np.argsort(axes))

    def vjp(entry, g):
        return (transpose(g, entry.ctx),)

    # a strided view is enough: BLAS and ufuncs take it directly, and
    # reshape copies on its own exactly when the layout requires it
    return _emit("transpose", (x,), x.data.transpose(axes), inv, vjp)


def concat(xs: Sequence[Tensor], axis: int = 0) -> Tensor:
    _require(len(xs) > 0, "concat", "needs at least one input")
    nd = xs[0].ndim
    for t in xs:
        _require(t.ndim == nd, "concat",
                 f"rank mismatch {t.ndim} vs {nd}")
    sizes = [t.shape[axis] for t in xs]

    def vjp(entry, g):
        ax, sz = entry.ctx
        grads = []
        start = 0
        for s in sz:
            grads.append(narrow(g, ax, start, s))
            start += s
        return tuple(grads)

    return _emit("concat", tuple(xs),
                 np.concatenate([t.data for t in xs], axis=axis),
                 (axis, sizes), vjp)


def narrow(x: Tensor, axis: int, start: int, length: int) -> Tensor:
    _require(0 <= start and start + length <= x.shape[axis], "narrow",
             f"slice [{start}:{start + length}) exceeds extent "
             f"{x.shape[axis]} on axis {axis}")
    idx = [slice(None)] * x.ndim
    idx[axis] = slice(start, start + length)

    def vjp(entry, g):
        ax, st, full = entry.ctx
        return (embed(g, ax, st, full),)

    return _emit("narrow", (x,), x.data[tuple(idx)],
                 (axis, start, x.shape[axis]), vjp)


def embed(x: Tensor, axis: int, start: int, full: int) -> Tensor:
    """Zero-pad x along one axis so it occupies [start, start+len) of extent
    full; the adjoint of narrow."""
    _require(start + x.shape[axis] <= full, "embed",
             f"segment [{start}:{start + x.shape[axis]}) exceeds extent {full}")
    shape = list(x.shape)
    length = shape[axis]
    shape[axis] = full
    out = np.zeros(shape, dtype=np.float64)
    idx = [slice(None)] * x.ndim
    idx[axis] = slice(start, start + length)
    out[tuple(idx)] = x.data

    def vjp(entry, g):
        ax, st, ln = entry.ctx
        return (narrow(g, ax, st, ln),)

    return _emit("embed", (x,), out, (axis, start, length), vjp)


def gather_rows(x: Tensor, index: np.ndarray) -> Tensor:
    index = np.asarray(index, dtype=np.int64)
    _require(index.ndim == 1, "gather_rows", "index must be 1-D")
    _require(index.size == 0 or (index.min() >= 0 and index.max() < x.shape[0]),
             "gather_rows", f"index out of range for {x.shape[0]} rows")

    def vjp(entry, g):
        idx, nrows = entry.ctx
        return (scatter_rows(g, idx, nrows),)

    return _emit("gather_rows", (x,), np.ascontiguousarray(x.data[index]),
                 (index, x.shape[0]), vjp)


def scatter_rows(x: Tensor, index: np.ndarray, num_rows: int) -> Tensor:
    """Accumulate rows of x into a zero tensor with num_rows rows; the
    adjoint of gather_rows."""
    index = np.asarray(index, dtype=np.int64)
    _require(index.shape == (x.shape[0],), "scatter_rows",
             f"index shape {index.shape} does not match {x.shape[0]} rows")
    out = np.zeros((num_rows,) + x.shape[1:], dtype=np.float64)
    np.add.at(out, index, x.data)

    def vjp(entry, g):
        return (gather_rows(g, entry.ctx),)

    return _emit("scatter_rows", (x,), out, index, vjp)


def broadcast_to(x: Tensor, shape) -> Tensor:
    shape = tuple(int(s) for s in shape)

    def vjp(entry, g):
        return (sum_to(g, entry.ctx),)

    return _emit("broadcast_to", (x,),
                 np.ascontiguousarray(np.broadcast_to(x.data, shape)),
                 x.shape, vjp)


# --------------------------------------------------------------------------
# primitives: reductions and elementwise

def tsum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        axes = tuple(range(x.ndim))
    elif isinstance(axis, int):
        axes = (axis % max(x.ndim, 1),)
    else:
        axes = tuple(a % x.ndim for a in axis)

    def vjp(entry, g):
        in_shape, red_axes, kept = entry.ctx
        if not kept:
            kshape = list(in_shape)
            for a in red_axes:
                kshape[a] = 1
            g = reshape(g, kshape)
        return (broadcast_to(g, in_shape),)

    return _emit("sum", (x,), np.sum(x.data, axis=axes, keepdims=keepdims),
                 (x.shape, axes, keepdims), vjp)


def tmean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        count = x.data.size
    elif isinstance(axis, int):
        count = x.shape[axis]
    else:
        count = int(np.prod([x.shape[a] for a in axis]))
    return scale(tsum(x, axis=axis, keepdims=keepdims), 1.0 / count)


def sum_to(x: Tensor, shape) -> Tensor:
    """Reduce-sum x down to a numpy-broadcast-compatible shape."""
    shape = tuple(int(s) for s in shape)
    if x.shape == shape:
        return x
    lead = x.ndim - len(shape)
    _require(lead >= 0, "sum_to", f"cannot reduce {x.shape} to {shape}")
    axes = list(range(lead))
    for i, s in enumerate(shape):
        if s == 1 and x.shape[lead + i] != 1:
            axes.append(lead + i)
    out = tsum(x, axis=tuple(axes), keepdims=True) if axes else x
    if out.shape != shape:
        out = reshape(out, shape)
    return out


def add(a: Tensor, b: Tensor) -> Tensor:
    def vjp(entry, g):
        sa, sb = entry.ctx
        return (sum_to(g, sa), sum_to(g, sb))

    return _emit("add", (a, b), a.data + b.data, (a.shape, b.shape), vjp)


def sub(a: Tensor, b: Tensor) -> Tensor:
    def vjp(entry, g):
        sa, sb = entry.ctx
        return (sum_to(g, sa), scale(sum_to(g, sb), -1.0))

    return _emit("sub", (a, b), a.data - b.data, (a.shape, b.shape), vjp)


def mul(a: Tensor, b: Tensor) -> Tensor:
    def vjp(entry, g):
        ta, tb = entry.inputs
        ga = sum_to(mul(g, tb), ta.shape) if ta.requires_grad else None
        gb = sum_to(mul(g, ta), tb.shape) if tb.requires_grad else None
        return (ga, gb)

    return _emit("mul", (a, b), a.data * b.data, None, vjp)


def scale(x: Tensor, c: float) -> Tensor:
    def vjp(entry, g):
        return (scale(g, entry.ctx),)

    return _emit("scale", (x,), x.data * c, float(c), vjp)


def add_const(x: Tensor, c: float) -> Tensor:
    def vjp(entry, g):
        return (g,)

    return _emit("add_const", (x,), x.data + c, None, vjp)


def pow_const(x: Tensor, p: float) -> Tensor:
    def vjp(entry, g):
        (t,) = entry.inputs
        e = entry.ctx
        return (mul(g, scale(pow_const(t, e - 1.0), e)),)

    return _emit("pow_const", (x,), x.data ** p, float(p), vjp)


def texp(x: Tensor) -> Tensor:
    def vjp(entry, g):
        return (mul(g, entry.output),)

    return _emit("exp", (x,), np.exp(x.data), None, vjp)


def tlog(x: Tensor) -> Tensor:
    def vjp(entry, g):
        (t,) = entry.inputs
        return (mul(g, pow_const(t, -1.0)),)

    return _emit("log", (x,), np.log(x.data), None, vjp)


def tabs(x: Tensor) -> Tensor:
    def vjp(entry, g):
        return (mul(g, Tensor(entry.ctx)),)

    return _emit("abs", (x,), np.abs(x.data), np.sign(x.data), vjp)


def relu(x: Tensor) -> Tensor:
    def vjp(entry, g):
        pos = entry.inputs[0].data > 0.0
        if _recording_tape() is None:
            return (Tensor(np.where(pos, g.data, 0.0)),)
        return (mul(g, Tensor(pos.astype(np.float64))),)

    return _emit("relu", (x,), np.maximum(x.data, 0.0), None, vjp)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    _require(a.ndim == 2 and b.ndim == 2, "matmul",
             f"expects 2-D operands, got {a.shape} and {b.shape}")
    _require(a.shape[1] == b.shape[0], "matmul",
             f"inner extents differ: {a.shape} @ {b.shape}")

    def vjp(entry, g):
        ta, tb = entry.inputs
        ga = matmul(g, transpose(tb, (1, 0))) if ta.requires_grad else None
        gb = matmul(transpose(ta, (1, 0)), g) if tb.requires_grad else None
        return (ga, gb)

    return _emit("matmul", (a, b), a.data @ b.data, None, vjp)


# --------------------------------------------------------------------------
# primitives: array kernels (compiled or numpy backend)

def im2col(x: Tensor, kh: int, kw: int, ph: int, pw: int) -> Tensor:
    _require(x.ndim == 4, "im2col", f"expects (N,C,H,W), got {x.shape}")

    def vjp(entry, g):
        n, c, h, w, kh_, kw_, ph_, pw_ = entry.ctx
        return (col2im(g, n, c, h, w, kh_, kw_, ph_, pw_),)

    n, c, h, w = x.shape
    return _emit("im2col", (x,), backend.im2col(x.data, kh, kw, ph, pw),
                 (n, c, h, w, kh, kw, ph, pw), vjp)


def col2im(cols: Tensor, n: int, c: int, h: int, w: int,
           kh: int, kw: int, ph: int, pw: int) -> Tensor:
    _require(cols.ndim == 2, "col2im", f"expects 2-D columns, got {cols.shape}")

    def vjp(entry, g):
        kh_, kw_, ph_, pw_ = entry.ctx
        return (im2col(g, kh_, kw_, ph_, pw_),)

    return _emit("col2im", (cols,),
                 backend.col2im(cols.data, n, c, h, w, kh, kw, ph, pw),
                 (kh, kw, ph, pw), vjp)


def bilinear_upsample(x: Tensor, out_h: int, out_w: int) -> Tensor:
    _require(x.ndim == 4, "bilinear_upsample",
             f"expects (N,C,H,W), got {x.shape}")

    def vjp(entry, g):
        h, w = entry.ctx
        return (bilinear_adjoint(g, h, w),)

    return _emit("bilinear_upsample", (x,),
                 backend.bilinear_up(x.data, out_h, out_w),
                 (x.shape[2], x.shape[3]), vjp)


def bilinear_adjoint(g: Tensor, h: int, w: int) -> Tensor:
    _require(g.ndim == 4, "bilinear_adjoint",
             f"expects (N,C,H,W), got {g.shape}")

    def vjp(entry, gg):
        oh, ow = entry.ctx
        return (bilinear_upsample(gg, oh, ow),)

    return _emit("bilinear_adjoint", (g,),
                 backend.bilinear_up_adj(g.data, h, w),
                 (g.shape[2], g.shape[3]), vjp)


def _avg_pool_even(x: Tensor, k: int) -> Tensor:
    n, c, h, w = x.shape

    def vjp(entry, g):
        return (avg_unpool(g, entry.ctx),)

    pooled = np.zeros((n, c, h // k, w // k))
    for di in range(k):
        for dj in range(k):
            pooled += x.data[:, :, di::k, dj::k]
    pooled *= 1.0 / (k * k)
    return _emit("avg_pool", (x,), pooled, k, vjp)


def avg_unpool(x: Tensor, k: int) -> Tensor:
    """Adjoint of the even average pool: repeat each cell k*k times / k^2."""
    def vjp(entry, g):
        return (_avg_pool_even(g, entry.ctx),)

    n, c, h, w = x.shape
    rep = np.empty((n, c, h * k, w * k))
    v = x.data * (1.0 / (k * k))
    for di in range(k):
        for dj in range(k):
            rep[:, :, di::k, dj::k] = v
    return _emit("avg_unpool", (x,), rep, k, vjp)


def avg_pool2d(x: Tensor, k: int) -> Tensor:
    """k x k average pooling with stride k; trailing rows/columns that do not
    fill a window are dropped."""
    _require(x.ndim == 4, "avg_pool2d", f"expects (N,C,H,W), got {x.shape}")
    _require(k >= 1, "avg_pool2d", f"kernel {k} must be >= 1")
    n, c, h, w = x.shape
    _require(h >= k and w >= k, "avg_pool2d",
             f"kernel {k} exceeds input ({h}x{w})")
    th, tw = (h // k) * k, (w // k) * k
    if th != h:
        x = narrow(x, 2, 0, th)
    if tw != w:
        x = narrow(x, 3, 0, tw)
    return _avg_pool_even(x, k)


def pad2d(x: Tensor, pad: int) -> Tensor:
    """Zero-pad the two trailing axes by pad on every side."""
    _require(x.ndim == 4, "pad2d", f"expects (N,C,H,W), got {x.shape}")
    out = embed(x, 2, pad, x.shape[2] + 2 * pad)
    return embed(out, 3, pad, x.shape[3] + 2 * pad)


# --------------------------------------------------------------------------
# composite network ops

def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """Stride-1 'same' 2-D convolution (odd kernels) via im2col + matmul."""
    _require(x.ndim == 4, "conv2d", f"input must be (N,C,H,W), got {x.shape}")
    _require(w.ndim == 4, "conv2d", f"weight must be (O,C,kh,kw), got {w.shape}")
    n, c, h, wd = x.shape
    o, ci, kh, kw = w.shape
    _require(ci == c, "conv2d",
             f"input channels {c} do not match weight channels {ci}")
    _require(kh % 2 == 1 and kw % 2 == 1, "conv2d",
             f"same-padding needs odd kernels, got ({kh},{kw})")
    cols = im2col(x, kh, kw, kh // 2, kw // 2)          # (C*kh*kw, N*H*W)
    y = matmul(reshape(w, (o, c * kh * kw)), cols)       # (O, N*H*W)
    y = transpose(reshape(y, (o, n, h, wd)), (1, 0, 2, 3))
    if b is not None:
        _require(b.shape == (o,), "conv2d",
                 f"bias shape {b.shape} does not match {o} output channels")
        y = add(y, reshape(b, (1, o, 1, 1)))
    return y


def instance_norm(x: Tensor, eps: float = 1e-5) -> Tensor:
    """Per-sample, per-channel normalization over the spatial axes, no
    learned affine part.

    Recorded as one fused entry. The backward rule for a normalized group
    is inv_std * (g - mean(g) - y * mean(g * y)); when nothing is recording
    it runs as raw array math, and under an active tape it is rebuilt from
    recorded primitives so gradients of gradients stay exact.
    """
    _require(x.ndim == 4, "instance_norm", f"expects (N,C,H,W), got {x.shape}")

    def vjp(entry, g):
        inv, eps_ = entry.ctx
        if _recording_tape() is None:
            y = entry.output.data
            gm = g.data.mean(axis=(2, 3), keepdims=True)
            gy = np.mean(g.data * y, axis=(2, 3), keepdims=True)
            dx = g.data - gm
            dx -= y * gy
            dx *= inv
            return (Tensor(dx),)
        xt = entry.inputs[0]
        xc = sub(xt, tmean(xt, axis=(2, 3), keepdims=True))
        var = tmean(mul(xc, xc), axis=(2, 3), keepdims=True)
        invt = pow_const(add_const(var, eps_), -0.5)
        yt = mul(xc, invt)
        gm = tmean(g, axis=(2, 3), keepdims=True)
        gy = tmean(mul(g, yt), axis=(2, 3), keepdims=True)
        return (mul(invt, sub(sub(g, gm), mul(yt, gy))),)

    mu = x.data.mean(axis=(2, 3), keepdims=True)
    xc = x.data - mu
    var = np.mean(xc * xc, axis=(2, 3), keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    return _emit("instance_norm", (x,), xc * inv, (inv, eps), vjp)


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    _require(x.ndim == 2, "linear", f"input must be 2-D, got {x.shape}")
    _require(w.ndim == 2, "linear", f"weight must be (out,in), got {w.shape}")
    _require(x.shape[1] == w.shape[1], "linear",
             f"features {x.shape[1]} do not match weight {w.shape}")
    y = matmul(x, transpose(w, (1, 0)))
    if b is not None:
        y = add(y, reshape(b, (1, w.shape[0])))
    return y


def global_avg_pool(x: Tensor) -> Tensor:
    _require(x.ndim == 4, "global_avg_pool", f"expects (N,C,H,W), got {x.shape}")
    return reshape(tmean(x, axis=(2, 3)), (x.shape[0], x.shape[1]))


def log_softmax(logits: Tensor) -> Tensor:
    _require(logits.ndim == 2, "log_softmax",
             f"expects (N,K) logits, got {logits.shape}")
    # the shift is a constant, so higher-order gradients stay exact
    shift = Tensor(np.max(logits.data, axis=1, keepdims=True))
    z = sub(logits, shift)
    lse = tlog(tsum(texp(z), axis=1, keepdims=True))
    return sub(z, lse)


def cross_entropy_soft(logits: Tensor, labels: np.ndarray | Tensor) -> Tensor:
    """Mean cross-entropy against soft label rows (each row sums to one)."""
    lab = labels.data if isinstance(labels, Tensor) else np.asarray(labels, dtype=np.float64)
    _require(lab.shape == logits.shape, "cross_entropy_soft",
             f"labels {lab.shape} do not match logits {logits.shape}")
    rowsums = lab.sum(axis=1)
    if not np.all(np.abs(rowsums - 1.0) <= 1e-6):
        bad = int(np.argmax(np.abs(rowsums - 1.0)))
        raise ShapeError(
            f"cross_entropy_soft: label row {bad} sums to {rowsums[bad]:.8f}, "
            "expected 1 within 1e-6")
    n = logits.shape[0]
    return scale(tsum(mul(log_softmax(logits), Tensor(lab))), -1.0 / n)


# --------------------------------------------------------------------------
# dispatcher

_FORWARD_OPS: dict[str, Callable] = {}


def _register_forward() -> None:
    _FORWARD_OPS.update({
        "add": lambda ins, attrs: add(ins[0], ins[1]),
        "scale": lambda ins, attrs: scale(ins[0], attrs["value"]),
        "reshape": lambda ins, attrs: reshape(ins[0], attrs["shape"]),
        "concat": lambda ins, attrs: concat(ins, attrs.get("axis", 0)),
        "relu": lambda ins, attrs: relu(ins[0]),
        "conv2d": lambda ins, attrs: conv2d(*ins),
        "linear": lambda ins, attrs: linear(*ins),
        "instance_norm": lambda ins, attrs: instance_norm(
            ins[0], attrs.get("eps", 1e-5)),
        "avg_pool2d": lambda ins, attrs: avg_pool2d(ins[0], attrs["kernel"]),
        "bilinear_upsample": lambda ins, attrs: bilinear_upsample(
            ins[0], attrs["out_h"], attrs["out_w"]),
        "cross_entropy_soft": lambda ins, attrs: cross_entropy_soft(
            ins[0], attrs["labels"]),
    })


_register_forward()


def forward_op(kind: str, inputs: Sequence[Tensor], attrs: dict | None = None) -> Tensor:
    """Name-based dispatch over the differentiable op vocabulary."""
    fn = _FORWARD_OPS.get(kind)
    if fn is None:
        raise KeyError(
            f"unknown op kind {kind!r}; available: {sorted(_FORWARD_OPS)}")
    return fn(list(inputs), attrs or {})


# --------------------------------------------------------------------------
# backward

def _sweep(loss: Tensor, seed: Tensor, create_graph: bool) -> dict[int, Tensor]:
    tape = loss._tape
    if tape is None:
        raise TapeError(
            "backward needs a loss recorded on an active tape; run the "
            "forward pass inside `with Tape():`")
    if tape.closed:
        raise TapeError(
            "the tape this loss was recorded on has already been closed; "
            "take gradients inside the `with Tape():` block")
    grads: dict[int, Tensor] = {id(loss): seed}
    entries = list(tape.entries)
    if create_graph:
        _TAPE_STACK.append(tape)
    else:
        global _GRAD_DEPTH
        _GRAD_DEPTH += 1
    try:
        for entry in reversed(entries):
            g = grads.get(id(entry.output))
            if g is None:
                continue
            in_grads = entry.vjp(entry, g)
            for t, gi in zip(entry.inputs, in_grads):
                if gi is None or not t.requires_grad:
                    continue
                prev = grads.get(id(t))
                grads[id(t)] = gi if prev is None else add(prev, gi)
    finally:
        if create_graph:
            _TAPE_STACK.pop()
        else:
            _GRAD_DEPTH -= 1
    return grads


def backward(loss: Tensor, create_graph: bool = False) -> None:
    """Accumulate d(loss)/d(leaf) into .grad for every reachable leaf."""
    if loss.data.size != 1:
        raise ShapeError(
            f"backward: loss must be a scalar, got shape {loss.shape}")
    seed = Tensor(np.ones_like(loss.data))
    grads = _sweep(loss, seed, create_graph)
    seen: set[int] = set()
    tape = loss._tape
    for entry in tape.entries:
        for t in entry.inputs:
            if t.requires_grad and t._tape is None and id(t) not in seen:
                seen.add(id(t))
                g = grads.get(id(t))
                if g is None:
                    continue
                if t.grad is None:
                    t.grad = Tensor(g.data.copy())
                else:
                    t.grad = Tensor(t.grad.data + g.data)


def grad(loss: Tensor, wrt: Sequence[Tensor], create_graph: bool = False) -> list[Tensor]:
    """Return d(loss)/d(t) for each t in wrt without touching .grad fields.

    With create_graph=True the returned tensors stay on the tape, so a
    function of them can be differentiated again.
    """
    if loss.data.size != 1:
        raise ShapeError(
            f"grad: loss must be a scalar, got shape {loss.shape}")
    seed = Tensor(np.ones_like(loss.data))
    grads = _sweep(loss, seed, create_graph)
    out = []
    for t in wrt:
        g = grads.get(id(t))
        if g is None:
            g = Tensor(np.zeros_like(t.data))
        out.append(g)
    return out


# --------------------------------------------------------------------------
# finite-difference checking

@dataclass
class GradCheckReport:
    max_abs_err: float
    max_rel_err: float
    passed: bool


def grad_check(fn: Callable[..., Tensor], inputs: Sequence[np.ndarray],
               eps: float = 1e-6, tol: float = 1e-4) -> GradCheckReport:
    """Compare analytic gradients of scalar-valued fn against central
    finite differences, elementwise over every input."""
    leaves = [Tensor(np.asarray(a, dtype=np.float64).copy(), requires_grad=True)
              for a in inputs]
    with Tape():
        out = fn(*leaves)
        if out.data.size != 1:
            raise ShapeError(
                f"grad_check: fn must return a scalar, got {out.shape}")
        analytic = grad(out, leaves)

    max_abs = 0.0
    max_rel = 0.0
    for leaf, ga in zip(leaves, analytic):
        flat = leaf.data.reshape(-1)
        gflat = ga.data.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            # each probe runs under a throwaway tape so fn may itself
            # differentiate internally
            flat[i] = keep + eps
            with Tape():
                hi = float(fn(*leaves).data)
            flat[i] = keep - eps
            with Tape():
                lo = float(fn(*leaves).data)
            flat[i] = keep
            fd = (hi - lo) / (2.0 * eps)
            err = abs(fd - gflat[i])
            denom = max(abs(fd), abs(gflat[i]), 1.0)
            max_abs = max(max_abs, err)
            max_rel = max(max_rel, err / denom)
    return GradCheckReport(float(max_abs), float(max_rel), bool(max_rel <= tol))
