"""Reverse-mode automatic differentiation over float64 numpy buffers.

A ``Tensor`` wraps a C-contiguous float64 array. Differentiable operations
record their parents and a backward closure on the result, so the graph is a
DAG hanging off the output node. ``Tensor.backward`` topologically sorts that
DAG and fires each closure exactly once, accumulating ``dL/dx`` into ``grad``
buffers. Gradients accumulate across repeated backward calls until cleared,
which is what a training loop wants when it sums losses over a batch.

Every operation validates that its output is finite; NaN or Inf anywhere
raises ``NumericError`` at the op that produced it rather than ten layers
downstream. The check can be disabled for throughput via ``set_finite_checks``.
"""

from __future__ import annotations

import numpy as np
from scipy.special import erf

from ..errors import NumericError, ShapeError

_FINITE_CHECKS = True

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)


def set_finite_checks(enabled):
    """Toggle the NaN/Inf guard on op outputs and gradients. Returns the old value."""
    global _FINITE_CHECKS
    old = _FINITE_CHECKS
    _FINITE_CHECKS = bool(enabled)
    return old


def _check_finite(arr, what):
    if _FINITE_CHECKS and not np.isfinite(arr).all():
        raise NumericError(f"non-finite values in {what}")


class Tensor:
    """A float64 array plus the bookkeeping needed for reverse-mode autodiff."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn", "op")

    def __init__(self, data, requires_grad=False, _parents=(), _op="leaf", _backward=None):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1)
        self.data = np.ascontiguousarray(arr)
        _check_finite(self.data, f"op '{_op}'")
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = _parents
        self._backward_fn = _backward
        self.op = _op

    # -- basic introspection ------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, op={self.op!r}{flag})"

    def numpy(self):
        """A copy of the values, detached from the graph."""
        return self.data.copy()

    def item(self):
        if self.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self):
        return Tensor(self.data.copy())

    def zero_grad(self):
        self.grad = None

    # -- autodiff machinery -------------------------------------------------

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self):
        """Propagate d(self)/dx to every requires-grad ancestor.

        The root must be a scalar. Each graph node's closure fires exactly
        once, in reverse topological order. Leaf gradients add onto whatever
        is already in ``grad``; call ``zero_grad`` between optimizer steps.
        """
        if self.size != 1:
            raise ShapeError(f"backward() needs a scalar root, got shape {self.shape}")
        order = topo_order(self)
        self._accumulate(np.ones_like(self.data))
        for node in reversed(order):
            if node._backward_fn is None or node.grad is None:
                continue
            node._backward_fn(node.grad)
            if _FINITE_CHECKS:
                for p in node._parents:
                    if p.requires_grad and p.grad is not None:
                        _check_finite(p.grad, f"gradient through op '{node.op}'")

    # -- operator sugar -----------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self):
        return transpose(self)

    def softmax(self, axis=-1):
        return softmax(self, axis=axis)

    def gelu(self):
        return gelu(self)

    def abs(self):
        return absolute(self)

    def sin(self):
        return tsin(self)

    def cos(self):
        return tcos(self)

    def sqrt(self):
        return tsqrt(self)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data, parents, op, backward):
    req = any(p.requires_grad for p in parents)
    if not req:
        # constant subgraphs carry no tape: cheap ground-truth math
        return Tensor(data, _op=op)
    return Tensor(data, requires_grad=True, _parents=tuple(parents), _op=op, _backward=backward)


def topo_order(root):
    """Graph nodes reachable from ``root`` through recorded parents.

    Parents come before children, so the list ends at ``root``. Iterative to
    keep deep chains away from the recursion limit, and deterministic because
    parent tuples are walked in creation order.
    """
    order = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in reversed(node._parents):
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def graph_leaves(root):
    """The requires-grad leaf tensors (parameters) feeding ``root``."""
    return [n for n in topo_order(root) if n.requires_grad and not n._parents]


def _unbroadcast(g, shape):
    """Sum ``g`` down to ``shape``, undoing numpy broadcasting."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# -- elementwise arithmetic -------------------------------------------------


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data + b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    return _result(out_data, (a, b), "add", backward)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data - b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g, b.shape))

    return _result(out_data, (a, b), "sub", backward)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data * b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    return _result(out_data, (a, b), "mul", backward)


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data / b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g / b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return _result(out_data, (a, b), "div", backward)


def neg(a):
    a = as_tensor(a)

    def backward(g):
        a._accumulate(-g)

    return _result(-a.data, (a,), "neg", backward)


# -- shape manipulation -----------------------------------------------------


def reshape(a, shape):
    a = as_tensor(a)
    shape = tuple(int(s) for s in shape)
    out_data = a.data.reshape(shape)

    def backward(g):
        a._accumulate(g.reshape(a.shape))

    return _result(out_data, (a,), "reshape", backward)


def transpose(a):
    """Swap the last two axes."""
    a = as_tensor(a)
    if a.ndim < 2:
        raise ShapeError(f"transpose needs at least 2 axes, got shape {a.shape}")
    out_data = np.swapaxes(a.data, -1, -2)

    def backward(g):
        a._accumulate(np.swapaxes(g, -1, -2))

    return _result(out_data, (a,), "transpose", backward)


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat needs at least one tensor")
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, start, stop in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                index = [slice(None)] * g.ndim
                index[axis] = slice(start, stop)
                t._accumulate(g[tuple(index)])

    return _result(out_data, tuple(tensors), "concat", backward)


def narrow(a, axis, start, length):
    """Contiguous slice of ``length`` entries along ``axis`` starting at ``start``."""
    a = as_tensor(a)
    axis = int(axis)
    if not (0 <= start and start + length <= a.shape[axis]):
        raise ShapeError(
            f"narrow [{start}:{start + length}] out of range for axis {axis} of shape {a.shape}"
        )
    index = [slice(None)] * a.ndim
    index[axis] = slice(start, start + length)
    index = tuple(index)
    out_data = a.data[index]

    def backward(g):
        full = np.zeros_like(a.data)
        full[index] = g
        a._accumulate(full)

    return _result(out_data, (a,), "narrow", backward)


def take_rows(a, indices):
    """Gather rows along axis 0 by integer index (repeats allowed)."""
    a = as_tensor(a)
    idx = np.asarray(indices, dtype=np.int64)
    out_data = a.data[idx]

    def backward(g):
        full = np.zeros_like(a.data)
        np.add.at(full, idx, g)
        a._accumulate(full)

    return _result(out_data, (a,), "take_rows", backward)


# -- reductions -------------------------------------------------------------


def tsum(a, axis=None, keepdims=False):
    a = as_tensor(a)
    out_data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is None:
            a._accumulate(np.full(a.shape, g.reshape(-1)[0]))
        else:
            gg = g if keepdims else np.expand_dims(g, axis)
            a._accumulate(np.broadcast_to(gg, a.shape).copy())

    return _result(out_data, (a,), "sum", backward)


def tmean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    if axis is None:
        n = a.size
    elif isinstance(axis, tuple):
        n = int(np.prod([a.shape[ax] for ax in axis]))
    else:
        n = a.shape[axis]
    return tsum(a, axis=axis, keepdims=keepdims) * (1.0 / n)


# -- linear algebra ---------------------------------------------------------


def matmul(a, b):
    """Matrix product; leading batch axes broadcast the numpy way."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs 2D or batched operands, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner extents differ: {a.shape} @ {b.shape}")
    out_data = np.matmul(a.data, b.data)

    def backward(g):
        if a.requires_grad:
            ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
            a._accumulate(_unbroadcast(ga, a.shape))
        if b.requires_grad:
            gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
            b._accumulate(_unbroadcast(gb, b.shape))

    return _result(out_data, (a, b), "matmul", backward)


# -- nonlinear elementwise --------------------------------------------------


def softmax(a, axis=-1):
    """Numerically safe softmax: shifts by the axis max before exponentiating."""
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    ex = np.exp(shifted)
    out_data = ex / ex.sum(axis=axis, keepdims=True)

    def backward(g):
        inner = (g * out_data).sum(axis=axis, keepdims=True)
        a._accumulate(out_data * (g - inner))

    return _result(out_data, (a,), "softmax", backward)


def gelu(a):
    """Gaussian error linear unit, exact erf form."""
    a = as_tensor(a)
    x = a.data
    cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    out_data = x * cdf

    def backward(g):
        pdf = _INV_SQRT2PI * np.exp(-0.5 * x * x)
        a._accumulate(g * (cdf + x * pdf))

    return _result(out_data, (a,), "gelu", backward)


def absolute(a):
    """Elementwise magnitude; the subgradient at zero is taken as zero."""
    a = as_tensor(a)

    def backward(g):
        a._accumulate(g * np.sign(a.data))

    return _result(np.abs(a.data), (a,), "abs", backward)


def tsin(a):
    a = as_tensor(a)

    def backward(g):
        a._accumulate(g * np.cos(a.data))

    return _result(np.sin(a.data), (a,), "sin", backward)


def tcos(a):
    a = as_tensor(a)

    def backward(g):
        a._accumulate(-g * np.sin(a.data))

    return _result(np.cos(a.data), (a,), "cos", backward)


def tsqrt(a):
    a = as_tensor(a)
    out_data = np.sqrt(a.data)

    def backward(g):
        a._accumulate(g * 0.5 / out_data)

    return _result(out_data, (a,), "sqrt", backward)


# -- structured ops ---------------------------------------------------------


def conv2d(x, w, b=None, stride=1, padding=0):
    """2D convolution on a channel-last single image.

    x: (H, W, Cin); w: (kh, kw, Cin, Cout); b: (Cout,) or None. Output is
    (Ho, Wo, Cout) with Ho = (H + 2p - kh)//stride + 1. Implemented as an
    im2col matmul so forward and backward stay vectorized.
    """
    x, w = as_tensor(x), as_tensor(w)
    if x.ndim != 3 or w.ndim != 4:
        raise ShapeError(f"conv2d expects image (H,W,Cin) and kernel (kh,kw,Cin,Cout), got {x.shape}, {w.shape}")
    kh, kw, cin, cout = w.shape
    if x.shape[2] != cin:
        raise ShapeError(f"conv2d channel mismatch: image {x.shape} vs kernel {w.shape}")
    stride = int(stride)
    padding = int(padding)
    xp = np.pad(x.data, ((padding, padding), (padding, padding), (0, 0))) if padding else x.data
    hp, wp = xp.shape[0], xp.shape[1]
    ho = (hp - kh) // stride + 1
    wo = (wp - kw) // stride + 1
    if ho <= 0 or wo <= 0:
        raise ShapeError(f"conv2d output would be empty for image {x.shape} and kernel {w.shape}")
    windows = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(0, 1))
    windows = windows[::stride, ::stride]            # (ho, wo, cin, kh, kw)
    cols = windows.transpose(0, 1, 3, 4, 2).reshape(ho * wo, kh * kw * cin)
    wmat = w.data.reshape(kh * kw * cin, cout)
    out = cols @ wmat
    if b is not None:
        b = as_tensor(b)
        out = out + b.data
    out_data = out.reshape(ho, wo, cout)

    parents = (x, w) if b is None else (x, w, b)

    def backward(g):
        gmat = g.reshape(ho * wo, cout)
        if w.requires_grad:
            w._accumulate((cols.T @ gmat).reshape(w.shape))
        if b is not None and b.requires_grad:
            b._accumulate(gmat.sum(axis=0))
        if x.requires_grad:
            gcols = (gmat @ wmat.T).reshape(ho, wo, kh, kw, cin)
            gx = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    gx[i:i + ho * stride:stride, j:j + wo * stride:stride] += gcols[:, :, i, j, :]
            if padding:
                gx = gx[padding:-padding, padding:-padding]
            x._accumulate(gx)

    return _result(out_data, parents, "conv2d", backward)


def bilinear_sample(fmap, coords):
    """Sample a (h, w, C) map at continuous (x, y) points, bilinearly.

    coords: (n, 2) columns (x, y) in map pixel units, cell centers at the
    integers. Points are clamped to the map rectangle; coordinate gradients
    vanish in the clamped directions, matching the flat extension. Returns
    (n, C).
    """
    fmap, coords = as_tensor(fmap), as_tensor(coords)
    if fmap.ndim != 3 or coords.ndim != 2 or coords.shape[1] != 2:
        raise ShapeError(f"bilinear_sample expects (h,w,C) map and (n,2) coords, got {fmap.shape}, {coords.shape}")
    h, w, c = fmap.shape
    xs = np.clip(coords.data[:, 0], 0.0, w - 1.0)
    ys = np.clip(coords.data[:, 1], 0.0, h - 1.0)
    inside_x = (coords.data[:, 0] > 0.0) & (coords.data[:, 0] < w - 1.0)
    inside_y = (coords.data[:, 1] > 0.0) & (coords.data[:, 1] < h - 1.0)
    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.minimum(x0, w - 2) if w > 1 else x0
    y0 = np.minimum(y0, h - 2) if h > 1 else y0
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (xs - x0)[:, None]
    fy = (ys - y0)[:, None]
    f = fmap.data
    c00 = f[y0, x0]
    c01 = f[y0, x1]
    c10 = f[y1, x0]
    c11 = f[y1, x1]
    top = c00 * (1.0 - fx) + c01 * fx
    bot = c10 * (1.0 - fx) + c11 * fx
    out_data = top * (1.0 - fy) + bot * fy

    def backward(g):
        if fmap.requires_grad:
            gf = np.zeros_like(f)
            np.add.at(gf, (y0, x0), g * (1.0 - fx) * (1.0 - fy))
            np.add.at(gf, (y0, x1), g * fx * (1.0 - fy))
            np.add.at(gf, (y1, x0), g * (1.0 - fx) * fy)
            np.add.at(gf, (y1, x1), g * fx * fy)
            fmap._accumulate(gf)
        if coords.requires_grad:
            dx = ((c01 - c00) * (1.0 - fy) + (c11 - c10) * fy)
            dy = ((c10 - c00) * (1.0 - fx) + (c11 - c01) * fx)
            gc = np.zeros_like(coords.data)
            gc[:, 0] = (g * dx).sum(axis=1) * inside_x
            gc[:, 1] = (g * dy).sum(axis=1) * inside_y
            coords._accumulate(gc)

    return _result(out_data, (fmap, coords), "bilinear_sample", backward)


def zeros(shape, requires_grad=False):
    return Tensor(np.zeros(shape), requires_grad=requires_grad)


def zero_grads(params):
    """Clear gradients on an iterable or name->Tensor mapping of parameters."""
    values = params.values() if hasattr(params, "values") else params
    for p in values:
        p.zero_grad()
