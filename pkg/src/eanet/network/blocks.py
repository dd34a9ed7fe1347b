"""Token fusion blocks for two-hand feature interaction.

The default block runs in two stages. An extraction stage fuses both hands'
feature rows through two token routes: a concatenated row sequence with a
learned class row (processed by self-attention), and a per-cell channel
join collapsed back to one row per grid cell by a single FC. Cross
attention then queries one route against the other. An adaptation stage
re-fuses each hand's own rows with the extracted tokens, per hand with its
own weights, and a shared FC reduces the result to a quarter width which is
appended to the raw rows.

Baseline blocks (self-attention only, cross-attention only) are budget
matched to the default block by widening their MLP hidden layer, so
comparisons measure structure rather than capacity.
"""

from __future__ import annotations

import numpy as np

from ..autodiff import (
    Tensor,
    attention_block,
    concat,
    cross_attention_block,
    linear,
    narrow,
    reshape,
)
from ..errors import ConfigError, ShapeError
from .config import ModelConfig


# -- parameter helpers -------------------------------------------------------


def init_linear(params, name, d_in, d_out, rng, scale=0.02):
    params[name + ".w"] = Tensor(rng.normal(0.0, scale, size=(d_in, d_out)), requires_grad=True)
    params[name + ".b"] = Tensor(np.zeros(d_out), requires_grad=True)


def init_attention(params, prefix, c, hidden, rng):
    for proj in ("q", "k", "v"):
        init_linear(params, f"{prefix}.{proj}", c, c, rng)
    init_linear(params, prefix + ".mlp1", c, hidden, rng)
    init_linear(params, prefix + ".mlp2", hidden, c, rng)


def _linear_params(d_in, d_out):
    return d_in * d_out + d_out


def _attention_params(c, hidden):
    return 3 * _linear_params(c, c) + _linear_params(c, hidden) + _linear_params(hidden, c)


def fusion_param_count(c, hidden):
    """Parameters in one fusion stage: class row, join FC, two attention blocks."""
    return c + _linear_params(2 * c, c) + 2 * _attention_params(c, hidden)


def block_param_count(c, mlp_ratio):
    """Parameters in the full default block (three fusion stages plus reduce FC)."""
    return 3 * fusion_param_count(c, mlp_ratio * c) + _linear_params(c, c // 4)


def matched_hidden(c, mlp_ratio):
    """MLP hidden width that brings a single-attention baseline to the same budget.

    A baseline block spends 3c(c+1) on projections, c on the MLP output
    bias, and the reduce FC; every remaining parameter sits in the hidden
    layer at a rate of 2c + 1 per unit of width.
    """
    target = block_param_count(c, mlp_ratio)
    fixed = 3 * _linear_params(c, c) + c + _linear_params(c, c // 4)
    hidden = int(round((target - fixed) / (2 * c + 1)))
    return max(hidden, 1)


def baseline_param_count(c, hidden):
    return _attention_params(c, hidden) + _linear_params(c, c // 4)


# -- fusion stage ------------------------------------------------------------


def init_fusion(params, prefix, c, hidden, rng):
    params[prefix + ".cls"] = Tensor(rng.normal(0.0, 0.02, size=(1, c)), requires_grad=True)
    init_linear(params, prefix + ".join", 2 * c, c, rng)
    init_attention(params, prefix + ".sa", c, hidden, rng)
    init_attention(params, prefix + ".ca", c, hidden, rng)


def _fold_halves(tokens, rows):
    """Average the two non-class halves of a (2*rows + 1, c) sequence."""
    a = narrow(tokens, 0, 1, rows)
    b = narrow(tokens, 0, 1 + rows, rows)
    return (a + b) * Tensor(np.array(0.5))


def fusion_forward(params, prefix, rows_a, rows_b, ca_variant):
    """Fuse two row sets of shape (n, c) into one, returning (fused, diagnostics).

    ca_variant picks which token route feeds the cross-attention queries and
    which feeds keys and values; "none" skips cross attention entirely and
    the joined route is the output.
    """
    if rows_a.shape != rows_b.shape:
        raise ShapeError(f"fusion wants matching row sets, got {rows_a.shape} and {rows_b.shape}")
    n = rows_a.shape[0]
    seq = concat([params[prefix + ".cls"], rows_a, rows_b], axis=0)
    sim, sa_attn = attention_block(seq, params, prefix + ".sa")
    joined = linear(
        concat([rows_a, rows_b], axis=1),
        params[prefix + ".join.w"], params[prefix + ".join.b"],
    )

    ca_attn = None
    if ca_variant == "none":
        fused = joined
    elif ca_variant == "tj_ts":
        fused, ca_attn = cross_attention_block(joined, sim, params, prefix + ".ca")
    elif ca_variant == "tj_tj":
        fused, ca_attn = cross_attention_block(joined, joined, params, prefix + ".ca")
    elif ca_variant == "tj_feats":
        raw = concat([rows_a, rows_b], axis=0)
        fused, ca_attn = cross_attention_block(joined, raw, params, prefix + ".ca")
    elif ca_variant == "ts_ts":
        out, ca_attn = cross_attention_block(sim, sim, params, prefix + ".ca")
        fused = _fold_halves(out, n)
    elif ca_variant == "ts_tj":
        out, ca_attn = cross_attention_block(sim, joined, params, prefix + ".ca")
        fused = _fold_halves(out, n)
    else:
        raise ConfigError(f"unknown ca_variant {ca_variant!r}")

    diag = {
        "sequence": sim,
        "sim_left": narrow(sim, 0, 1, n),
        "sim_right": narrow(sim, 0, 1 + n, n),
        "join": joined,
        "fused": fused,
        "sa_attn": sa_attn,
        "ca_attn": ca_attn,
    }
    return fused, diag


# -- full blocks -------------------------------------------------------------


def init_block(params, prefix, config: ModelConfig, rng):
    c = config.hand_channels
    if config.block_kind == "fuseformer":
        hidden = config.mlp_ratio * c
        init_fusion(params, prefix + ".extract", c, hidden, rng)
        init_fusion(params, prefix + ".adapt_left", c, hidden, rng)
        init_fusion(params, prefix + ".adapt_right", c, hidden, rng)
    elif config.block_kind == "sa_only":
        init_attention(params, prefix + ".sa", c, matched_hidden(c, config.mlp_ratio), rng)
    else:
        init_attention(params, prefix + ".ca", c, matched_hidden(c, config.mlp_ratio), rng)
    init_linear(params, prefix + ".reduce", c, c // 4, rng)


def _append_reduced(params, prefix, rows, reduced_src, h, w, c):
    reduced = linear(reduced_src, params[prefix + ".reduce.w"], params[prefix + ".reduce.b"])
    return reshape(concat([rows, reduced], axis=1), (h, w, c + c // 4))


def block_forward(params, prefix, f_left, f_right, config: ModelConfig):
    """Run the configured block on two (h, w, c) maps.

    Returns (out_left, out_right, diagnostics) where the outputs carry
    c + c // 4 channels and diagnostics holds the extraction-stage token
    routes (None for baseline kinds).
    """
    if f_left.shape != f_right.shape or len(f_left.shape) != 3:
        raise ShapeError(f"block wants two equal (h, w, c) maps, got {f_left.shape} and {f_right.shape}")
    h, w, c = f_left.shape
    rows_l = reshape(f_left, (h * w, c))
    rows_r = reshape(f_right, (h * w, c))

    if config.block_kind == "fuseformer":
        extracted, diag = fusion_forward(params, prefix + ".extract", rows_l, rows_r, config.ca_variant)
        a_l = a_r = extracted
        for _ in range(config.adaptation_stages):
            a_l, _ = fusion_forward(params, prefix + ".adapt_left", rows_l, a_l, config.ca_variant)
            a_r, _ = fusion_forward(params, prefix + ".adapt_right", rows_r, a_r, config.ca_variant)
    elif config.block_kind == "sa_only":
        seq, attn = attention_block(concat([rows_l, rows_r], axis=0), params, prefix + ".sa")
        a_l = narrow(seq, 0, 0, h * w)
        a_r = narrow(seq, 0, h * w, h * w)
        diag = {"sa_attn": attn}
    else:
        a_l, attn_l = cross_attention_block(rows_l, rows_r, params, prefix + ".ca")
        a_r, attn_r = cross_attention_block(rows_r, rows_l, params, prefix + ".ca")
        diag = {"ca_attn": (attn_l, attn_r)}

    out_l = _append_reduced(params, prefix, rows_l, a_l, h, w, c)
    out_r = _append_reduced(params, prefix, rows_r, a_r, h, w, c)
    diag["raw_left"] = rows_l
    diag["raw_right"] = rows_r
    return out_l, out_r, diag
