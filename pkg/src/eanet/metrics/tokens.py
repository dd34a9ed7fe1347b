"""Similarity statistics over token sets.

The homogeneity ratio compares how far two token sets sit from each other
relative to their internal spread. Pair means run over all ordered pairs,
self-pairs included, so two identical sets come out at a ratio of exactly
one and values below one mean the sets are closer together than their own
members are.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ShapeError


@dataclass
class TokenStats:
    intra_a: float
    intra_b: float
    inter: float
    ratio: float

    def to_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def _pair_mean(a, b):
    d = a[:, None, :] - b[None, :, :]
    return float(np.sqrt((d ** 2).sum(axis=2)).mean())


def token_homogeneity(set_a, set_b):
    """TokenStats for two (n, c) token sets.

    Needs at least two rows per set (a lone token has no internal spread)
    and a nonzero mean internal spread to normalize by.
    """
    a = np.asarray(set_a, dtype=np.float64)
    b = np.asarray(set_b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ShapeError(f"token sets want matching (n, c) shapes, got {a.shape} and {b.shape}")
    if a.shape[0] < 2 or b.shape[0] < 2:
        raise ValueError("token homogeneity needs at least two tokens per set")
    intra_a = _pair_mean(a, a)
    intra_b = _pair_mean(b, b)
    inter = _pair_mean(a, b)
    denom = (intra_a + intra_b) / 2.0
    if denom == 0.0:
        raise ValueError("token sets have zero internal spread")
    return TokenStats(intra_a=intra_a, intra_b=intra_b, inter=inter, ratio=inter / denom)
