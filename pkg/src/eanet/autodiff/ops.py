"""Composite neural-network operations assembled from tensor primitives.

Everything here is a pure function of tensors, so gradients come from the
primitives underneath and the finite-difference checker can probe any of
these without special cases.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError
from .tensor import (
    Tensor,
    as_tensor,
    bilinear_sample,
    concat,
    matmul,
    reshape,
    softmax,
    tmean,
    transpose,
)


def linear(x, w, b=None):
    """Row-wise affine map: x @ w + b for x with trailing extent w.shape[0]."""
    x, w = as_tensor(x), as_tensor(w)
    if x.shape[-1] != w.shape[0]:
        raise ShapeError(f"linear: input trailing extent {x.shape} does not match weight {w.shape}")
    squeeze = False
    if x.ndim == 1:
        x = reshape(x, (1, x.shape[0]))
        squeeze = True
    y = matmul(x, w)
    if b is not None:
        y = y + as_tensor(b)
    if squeeze:
        y = reshape(y, (y.shape[-1],))
    return y


def residual_mlp(x, w1, b1, w2, b2, activation=None):
    """x + W2 a(W1 x + b1) + b2, the transformer feed-forward with skip.

    ``activation`` defaults to GELU.
    """
    h = linear(x, w1, b1)
    h = h.gelu() if activation is None else activation(h)
    return x + linear(h, w2, b2)


def attention_weights(q, k):
    """Scaled dot-product attention matrix: softmax(q k^T / sqrt(d_k)), rows sum to 1."""
    q, k = as_tensor(q), as_tensor(k)
    if q.shape[-1] != k.shape[-1]:
        raise ShapeError(f"attention: query/key channel mismatch {q.shape} vs {k.shape}")
    scores = matmul(q, transpose(k)) * (1.0 / np.sqrt(k.shape[-1]))
    return softmax(scores, axis=-1)


def attention(q, k, v):
    """Scaled dot-product attention output: attention_weights(q, k) @ v."""
    k, v = as_tensor(k), as_tensor(v)
    if v.shape[-2] != k.shape[-2]:
        raise ShapeError(f"attention: key/value row mismatch {k.shape} vs {v.shape}")
    return matmul(attention_weights(q, k), v)


def conv1x1(x, w, b=None):
    """Pointwise channel map on a (h, w, cin) feature map, via reshape + linear."""
    x, w = as_tensor(x), as_tensor(w)
    if x.ndim != 3:
        raise ShapeError(f"conv1x1 expects (h,w,cin), got {x.shape}")
    h, wid, cin = x.shape
    rows = reshape(x, (h * wid, cin))
    out = linear(rows, w, b)
    return reshape(out, (h, wid, out.shape[-1]))


_GRID_CACHE = {}


def _coordinate_grid(h, w, d):
    """(3, h*w*d) rows x, y, z for the row-major flattening of (h, w, d)."""
    key = (h, w, d)
    grid = _GRID_CACHE.get(key)
    if grid is None:
        ys, xs, zs = np.meshgrid(np.arange(h), np.arange(w), np.arange(d), indexing="ij")
        grid = np.stack([xs.ravel(), ys.ravel(), zs.ravel()]).astype(np.float64)
        _GRID_CACHE[key] = grid
    return grid


def soft_argmax_2_5d(logits):
    """Differentiable expectation of per-joint heatmap coordinates.

    logits: (h, w, d, J) volume of unnormalized scores. Each joint's volume
    is softmaxed over all h*w*d cells and the expected (x, y, z) index is
    returned as a (J, 3) tensor. Outputs therefore live inside the box
    [0, w-1] x [0, h-1] x [0, d-1].
    """
    logits = as_tensor(logits)
    if logits.ndim != 4:
        raise ShapeError(f"soft_argmax_2_5d expects (h,w,d,J), got {logits.shape}")
    h, w, d, j = logits.shape
    flat = reshape(logits, (h * w * d, j))
    probs = softmax(flat, axis=0)
    grid = Tensor(_coordinate_grid(h, w, d))
    coords = matmul(grid, probs)          # (3, J)
    return transpose(coords)              # (J, 3)


def global_average_pool(x):
    """Mean over both spatial axes of a (h, w, c) map, returning (c,)."""
    x = as_tensor(x)
    if x.ndim != 3:
        raise ShapeError(f"global_average_pool expects (h,w,c), got {x.shape}")
    h, w, c = x.shape
    rows = reshape(x, (h * w, c))
    pooled = tmean(rows, axis=0)
    return reshape(pooled, (c,))


def l1_loss(pred, target):
    """Mean absolute difference over corresponding entries, a scalar tensor."""
    pred, target = as_tensor(pred), as_tensor(target)
    if pred.shape != target.shape:
        raise ShapeError(f"l1_loss shape mismatch: {pred.shape} vs {target.shape}")
    return (pred - target).abs().mean()


def sample_at_joints(fmap, coords_xy):
    """Bilinear feature lookup of a (h, w, c) map at (J, 2) joint (x, y) coords."""
    return bilinear_sample(fmap, coords_xy)


def attention_block(tokens, weights, prefix):
    """One self-attention transformer block: residual attention then residual MLP.

    tokens: (n, c). ``weights[prefix + '.q']`` etc. hold the projections as
    created by the parameter initializers in the network package. Returns
    (output tokens (n, c), attention matrix (n, n)).
    """
    q = linear(tokens, weights[prefix + ".q.w"], weights[prefix + ".q.b"])
    k = linear(tokens, weights[prefix + ".k.w"], weights[prefix + ".k.b"])
    v = linear(tokens, weights[prefix + ".v.w"], weights[prefix + ".v.b"])
    attn = attention_weights(q, k)
    r = tokens + matmul(attn, v)
    out = residual_mlp(
        r,
        weights[prefix + ".mlp1.w"], weights[prefix + ".mlp1.b"],
        weights[prefix + ".mlp2.w"], weights[prefix + ".mlp2.b"],
    )
    return out, attn


def cross_attention_block(q_tokens, kv_tokens, weights, prefix):
    """Cross-attention with the residual taken from the raw query tokens.

    q_tokens: (a, c) queries before projection; kv_tokens: (b, c). The
    residual adds q_tokens themselves, then a residual MLP finishes the
    block. Returns (output (a, c), attention matrix (a, b)).
    """
    q = linear(q_tokens, weights[prefix + ".q.w"], weights[prefix + ".q.b"])
    k = linear(kv_tokens, weights[prefix + ".k.w"], weights[prefix + ".k.b"])
    v = linear(kv_tokens, weights[prefix + ".v.w"], weights[prefix + ".v.b"])
    attn = attention_weights(q, k)
    r = matmul(attn, v) + q_tokens
    out = residual_mlp(
        r,
        weights[prefix + ".mlp1.w"], weights[prefix + ".mlp1.b"],
        weights[prefix + ".mlp2.w"], weights[prefix + ".mlp2.b"],
    )
    return out, attn
