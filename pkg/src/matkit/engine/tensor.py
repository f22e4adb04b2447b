"""Minimal reverse-mode automatic differentiation over dense numpy arrays.

Tensors record their parents and a backward closure as they are produced;
``Tensor.backward`` replays the tape in reverse topological order.  Arrays
are row-major float32 by default; gradient checking runs the same graph in
float64.  Every op validates that its output is finite (NaN propagation is
treated as a bug, not a value).
"""

from __future__ import annotations

import numpy as np

from ..errors import NumericError, ShapeError
from ..tiling import circular_pad

default_dtype = np.float32


def _as_array(value, dtype=None):
    arr = np.asarray(value)
    if arr.dtype not in (np.float32, np.float64):
        arr = arr.astype(dtype or default_dtype)
    return arr


def _check_finite(data: np.ndarray, op: str) -> None:
    # one float64 reduction: any nan/inf in the data poisons the sum
    if not np.isfinite(data.sum(dtype=np.float64)):
        raise NumericError(f"non-finite values produced by op '{op}'")


class Tensor:
    """A dense real array with an optional gradient."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_op")

    def __init__(self, data, requires_grad: bool = False, _parents=(), _backward=None, _op: str = "leaf"):
        self.data = _as_array(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents = _parents
        self._backward = _backward
        self._op = _op

    # -- introspection -------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self._op}, requires_grad={self.requires_grad})"

    # -- autograd ------------------------------------------------------

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, grad: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += grad

    def backward(self) -> None:
        """Populate .grad on every reachable requires_grad leaf.

        The loss must be scalar.  Repeated calls without zero_grad
        accumulate into existing gradients.
        """
        if self.size != 1:
            raise ShapeError(f"backward requires a scalar loss, got shape {self.shape}")
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited and p.requires_grad:
                    stack.append((p, False))

        adjoint: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(topo):
            g = adjoint.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node._accumulate(g)
                continue
            for parent, contrib in node._backward(g):
                if not parent.requires_grad:
                    continue
                key = id(parent)
                if key in adjoint:
                    adjoint[key] += contrib
                else:
                    adjoint[key] = np.array(contrib, copy=True)

    # -- operator sugar ------------------------------------------------

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

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return slice_(self, index)

    def reshape(self, shape):
        return reshape(self, shape)


def tensor(data, requires_grad: bool = False, dtype=None) -> Tensor:
    """Wrap data as a leaf tensor."""
    t = Tensor(_as_array(data, dtype))
    t.requires_grad = requires_grad
    return t


def _wrap(value, like: Tensor | None = None) -> Tensor:
    if isinstance(value, Tensor):
        return value
    dtype = like.dtype if like is not None else None
    return Tensor(_as_array(value, dtype))


def _make(data, parents, backward, op) -> Tensor:
    _check_finite(data, op)
    if not any(p.requires_grad for p in parents):
        return Tensor(data, _op=op)
    out = Tensor(data, requires_grad=True, _parents=tuple(parents), _backward=backward, _op=op)
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a broadcast gradient back to the original operand shape."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (g, s) in enumerate(zip(grad.shape, shape)) if s == 1 and g != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# -- elementwise binary ops ---------------------------------------------


def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b, a)
    data = a.data + b.data

    def backward(g):
        return ((a, _unbroadcast(g, a.shape)), (b, _unbroadcast(g, b.shape)))

    return _make(data, (a, b), backward, "add")


def sub(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b, a)
    data = a.data - b.data

    def backward(g):
        return ((a, _unbroadcast(g, a.shape)), (b, _unbroadcast(-g, b.shape)))

    return _make(data, (a, b), backward, "sub")


def mul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b, a)
    data = a.data * b.data

    def backward(g):
        return ((a, _unbroadcast(g * b.data, a.shape)), (b, _unbroadcast(g * a.data, b.shape)))

    return _make(data, (a, b), backward, "mul")


def div(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b, a)
    data = a.data / b.data

    def backward(g):
        ga = g / b.data
        gb = -g * a.data / (b.data * b.data)
        return ((a, _unbroadcast(ga, a.shape)), (b, _unbroadcast(gb, b.shape)))

    return _make(data, (a, b), backward, "div")


def maximum(a, b) -> Tensor:
    """Elementwise max; ties route gradient to the first operand."""
    a, b = _wrap(a), _wrap(b, a)
    data = np.maximum(a.data, b.data)

    def backward(g):
        take_a = a.data >= b.data
        return ((a, _unbroadcast(g * take_a, a.shape)),
                (b, _unbroadcast(g * (~take_a), b.shape)))

    return _make(data, (a, b), backward, "maximum")


# -- elementwise unary ops ------------------------------------------------


def exp(a) -> Tensor:
    a = _wrap(a)
    data = np.exp(a.data)

    def backward(g):
        return ((a, g * data),)

    return _make(data, (a,), backward, "exp")


def log(a) -> Tensor:
    a = _wrap(a)
    data = np.log(a.data)

    def backward(g):
        return ((a, g / a.data),)

    return _make(data, (a,), backward, "log")


def sqrt(a) -> Tensor:
    a = _wrap(a)
    data = np.sqrt(a.data)

    def backward(g):
        return ((a, g * (0.5 / data)),)

    return _make(data, (a,), backward, "sqrt")


def abs_(a) -> Tensor:
    """|a|; the subgradient at 0 is 0."""
    a = _wrap(a)
    data = np.abs(a.data)

    def backward(g):
        return ((a, g * np.sign(a.data)),)

    return _make(data, (a,), backward, "abs")


def sigmoid(a) -> Tensor:
    a = _wrap(a)
    # numerically stable two-sided form, one exp evaluation
    x = a.data
    t = np.exp(-np.abs(x))
    data = np.where(x >= 0, 1.0 / (1.0 + t), t / (1.0 + t)).astype(x.dtype, copy=False)

    def backward(g):
        return ((a, g * data * (1.0 - data)),)

    return _make(data, (a,), backward, "sigmoid")


def silu(a) -> Tensor:
    """x * sigmoid(x)."""
    a = _wrap(a)
    x = a.data
    t = np.exp(-np.abs(x))
    sig = np.where(x >= 0, 1.0 / (1.0 + t), t / (1.0 + t)).astype(x.dtype, copy=False)
    data = x * sig

    def backward(g):
        return ((a, g * (sig * (1.0 + x * (1.0 - sig)))),)

    return _make(data, (a,), backward, "silu")


def relu(a) -> Tensor:
    return maximum(a, 0.0)


def clamp(a, lo: float, hi: float) -> Tensor:
    a = _wrap(a)
    data = np.clip(a.data, lo, hi)

    def backward(g):
        inside = (a.data >= lo) & (a.data <= hi)
        return ((a, g * inside),)

    return _make(data, (a,), backward, "clamp")


def where(mask: np.ndarray, a, b) -> Tensor:
    """Select by a constant boolean mask (no gradient flows through mask)."""
    a, b = _wrap(a), _wrap(b, a)
    mask = np.asarray(mask, dtype=bool)
    data = np.where(mask, a.data, b.data)

    def backward(g):
        return ((a, _unbroadcast(g * mask, a.shape)), (b, _unbroadcast(g * (~mask), b.shape)))

    return _make(data, (a, b), backward, "where")


# -- reductions ------------------------------------------------------------


def sum_(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _wrap(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is None:
            return ((a, np.broadcast_to(g, a.shape).copy()),)
        g2 = g if keepdims else np.expand_dims(g, axis)
        return ((a, np.broadcast_to(g2, a.shape).copy()),)

    return _make(data, (a,), backward, "sum")


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _wrap(a)
    data = a.data.mean(axis=axis, keepdims=keepdims)
    count = a.size / data.size

    def backward(g):
        if axis is None:
            return ((a, np.broadcast_to(g / count, a.shape).copy()),)
        g2 = g if keepdims else np.expand_dims(g, axis)
        return ((a, np.broadcast_to(g2 / count, a.shape).copy()),)

    return _make(data, (a,), backward, "mean")


def mse(a, b) -> Tensor:
    """Mean squared error over all elements."""
    a, b = _wrap(a), _wrap(b, a)
    if a.shape != b.shape:
        raise ShapeError(f"mse operands differ: {a.shape} vs {b.shape}")
    d = sub(a, b)
    return mean(mul(d, d))


# -- shape ops --------------------------------------------------------------


def reshape(a, shape) -> Tensor:
    a = _wrap(a)
    data = a.data.reshape(shape)

    def backward(g):
        return ((a, g.reshape(a.shape)),)

    return _make(data, (a,), backward, "reshape")


def transpose(a, axes) -> Tensor:
    a = _wrap(a)
    data = np.transpose(a.data, axes)
    inverse = tuple(np.argsort(axes))

    def backward(g):
        return ((a, np.transpose(g, inverse)),)

    return _make(data, (a,), backward, "transpose")


def concat(tensors, axis: int) -> Tensor:
    tensors = [_wrap(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        parts = np.split(g, splits, axis=axis)
        return tuple((t, p) for t, p in zip(tensors, parts))

    return _make(data, tuple(tensors), backward, "concat")


def slice_(a, index) -> Tensor:
    a = _wrap(a)
    data = a.data[index]

    def backward(g):
        full = np.zeros_like(a.data)
        full[index] = g
        return ((a, full),)

    return _make(data, (a,), backward, "slice")


def take_rows(table, idx: np.ndarray) -> Tensor:
    """Row gather (embedding lookup) with scatter-add backward."""
    table = _wrap(table)
    idx = np.asarray(idx, dtype=np.int64)
    data = table.data[idx]

    def backward(g):
        full = np.zeros_like(table.data)
        np.add.at(full, idx, g)
        return ((table, full),)

    return _make(data, (table,), backward, "take_rows")


# -- linear algebra ----------------------------------------------------------


def matmul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b, a)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError("matmul expects 2-D operands")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dims differ: {a.shape} @ {b.shape}")
    data = a.data @ b.data

    def backward(g):
        return ((a, g @ b.data.T), (b, a.data.T @ g))

    return _make(data, (a, b), backward, "matmul")


def dense(x, w, b=None) -> Tensor:
    """Affine map over the last axis: x @ w + b."""
    x = _wrap(x)
    lead = x.shape[:-1]
    flat = reshape(x, (-1, x.shape[-1]))
    out = matmul(flat, w)
    if b is not None:
        out = add(out, b)
    return reshape(out, lead + (out.shape[-1],))


# -- spatial ops (NHWC) -------------------------------------------------------


def _conv2d(x, w, b, pad_mode: str) -> Tensor:
    x, w = _wrap(x), _wrap(w)
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError("conv2d expects x:(B,H,W,Cin) and w:(k,k,Cin,Cout)")
    k = w.shape[0]
    if w.shape[1] != k or k % 2 != 1:
        raise ShapeError("conv2d kernels must be square with odd size")
    if w.shape[2] != x.shape[3]:
        raise ShapeError(f"conv2d channel mismatch: {x.shape} vs {w.shape}")
    B, H, W, Cin = x.shape
    Cout = w.shape[3]
    p = (k - 1) // 2

    if p == 0:
        xp = x.data
    elif pad_mode == "circular":
        xp = circular_pad(x.data, p, axes=(1, 2))
    else:
        xp = np.pad(x.data, ((0, 0), (p, p), (p, p), (0, 0)))

    s = xp.strides
    col = np.lib.stride_tricks.as_strided(
        xp, (B, H, W, k, k, Cin), (s[0], s[1], s[2], s[1], s[2], s[3]))
    col = np.ascontiguousarray(col).reshape(B * H * W, k * k * Cin)
    wm = w.data.reshape(k * k * Cin, Cout)
    out = col @ wm
    if b is not None:
        out = out + _wrap(b).data
    out = out.reshape(B, H, W, Cout)

    bt = _wrap(b) if b is not None else None

    def backward(g):
        gf = g.reshape(B * H * W, Cout)
        grads = []
        if w.requires_grad or w._parents:
            gw = (col.T @ gf).reshape(w.shape)
            grads.append((w, gw))
        if bt is not None and (bt.requires_grad or bt._parents):
            grads.append((bt, gf.sum(axis=0)))
        if x.requires_grad or x._parents:
            dcol = (gf @ wm.T).reshape(B, H, W, k, k, Cin)
            dxp = np.zeros_like(xp)
            for a_ in range(k):
                for b_ in range(k):
                    dxp[:, a_:a_ + H, b_:b_ + W, :] += dcol[:, :, :, a_, b_, :]
            if p == 0:
                dx = dxp
            elif pad_mode == "circular":
                dx = dxp[:, p:p + H, p:p + W, :].copy()
                # wrap the padded borders back onto the interior
                dx[:, :p, :, :] += dxp[:, p + H:, p:p + W, :]
                dx[:, H - p:, :, :] += dxp[:, :p, p:p + W, :]
                dx[:, :, :p, :] += dxp[:, p:p + H, p + W:, :]
                dx[:, :, W - p:, :] += dxp[:, p:p + H, :p, :]
                dx[:, :p, :p, :] += dxp[:, p + H:, p + W:, :]
                dx[:, :p, W - p:, :] += dxp[:, p + H:, :p, :]
                dx[:, H - p:, :p, :] += dxp[:, :p, p + W:, :]
                dx[:, H - p:, W - p:, :] += dxp[:, :p, :p, :]
            else:
                dx = dxp[:, p:p + H, p:p + W, :]
            grads.append((x, dx))
        return tuple(grads)

    parents = (x, w) if bt is None else (x, w, bt)
    return _make(out, parents, backward, f"conv2d_{pad_mode}")


def conv2d_circular(x, w, b=None) -> Tensor:
    """Stride-1 convolution with wrap-around padding (output size == input size)."""
    return _conv2d(x, w, b, "circular")


def conv2d_zero(x, w, b=None) -> Tensor:
    """Stride-1 convolution with zero padding (output size == input size)."""
    return _conv2d(x, w, b, "zero")


def avg_pool2(x) -> Tensor:
    """2x2 average pooling with stride 2."""
    x = _wrap(x)
    B, H, W, C = x.shape
    if H % 2 or W % 2:
        raise ShapeError(f"avg_pool2 needs even spatial dims, got {x.shape}")
    data = x.data.reshape(B, H // 2, 2, W // 2, 2, C).mean(axis=(2, 4))

    def backward(g):
        gx = np.broadcast_to(g[:, :, None, :, None, :] * 0.25,
                             (B, H // 2, 2, W // 2, 2, C))
        return ((x, gx.reshape(B, H, W, C).copy()),)

    return _make(data, (x,), backward, "avg_pool2")


def nearest_upsample2(x) -> Tensor:
    """2x nearest-neighbour upsampling."""
    x = _wrap(x)
    B, H, W, C = x.shape
    data = np.repeat(np.repeat(x.data, 2, axis=1), 2, axis=2)

    def backward(g):
        gx = g.reshape(B, H, 2, W, 2, C).sum(axis=(2, 4))
        return ((x, gx),)

    return _make(data, (x,), backward, "nearest_upsample2")


def group_norm(x, gamma, beta, groups: int = 4, eps: float = 1e-5) -> Tensor:
    """Group normalization over (H, W, channels-per-group)."""
    x, gamma, beta = _wrap(x), _wrap(gamma), _wrap(beta)
    B, H, W, C = x.shape
    if C % groups:
        raise ShapeError(f"channels {C} not divisible by groups {groups}")
    axes = (1, 2, 4)
    xg = x.data.reshape(B, H, W, groups, C // groups)
    mu = xg.mean(axis=axes, keepdims=True)
    centered = xg - mu
    var = (centered * centered).mean(axis=axes, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (centered * inv).reshape(B, H, W, C)
    data = xhat * gamma.data + beta.data

    def backward(g):
        grads = []
        if gamma.requires_grad:
            grads.append((gamma, (g * xhat).sum(axis=(0, 1, 2))))
        if beta.requires_grad:
            grads.append((beta, g.sum(axis=(0, 1, 2))))
        if x.requires_grad:
            dxhat = (g * gamma.data).reshape(B, H, W, groups, C // groups)
            xh = xhat.reshape(B, H, W, groups, C // groups)
            m1 = dxhat.mean(axis=axes, keepdims=True)
            m2 = (dxhat * xh).mean(axis=axes, keepdims=True)
            dx = (dxhat - m1 - xh * m2) * inv
            grads.append((x, dx.reshape(B, H, W, C)))
        return tuple(grads)

    return _make(data, (x, gamma, beta), backward, "group_norm")
