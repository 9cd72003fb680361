"""Global attention on the sphere.

The direct path evaluates the quadrature-weighted softmax

    out(x_i) = sum_j exp(q_i . k_j / sqrt(d)) w_j v_j
               / sum_l exp(q_i . k_l / sqrt(d)) w_l

with two-pass max-subtraction stabilization.  A second, independent path
folds log(w_j) into the logits as an additive mask and runs a standard
softmax; for strictly positive weights the two are mathematically
identical, which makes the pair a useful cross-check.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import backends
from ._threads import get_num_threads
from .field import Field, require_same_grid
from .grid import zero_weight_rows


@dataclass(frozen=True)
class AttentionConfig:
    """Head count and per-head dimension; the logit scale is 1/sqrt(d)."""

    head_dim: int
    heads: int = 1
    theta_cutoff: float | None = None

    def __post_init__(self):
        if self.head_dim < 1:
            raise ValueError("head_dim must be >= 1")
        if self.heads < 1:
            raise ValueError("heads must be >= 1")
        if self.theta_cutoff is not None and self.theta_cutoff <= 0:
            raise ValueError("theta_cutoff must be positive")

    @property
    def scale(self) -> float:
        return 1.0 / math.sqrt(self.head_dim)


class ZeroWeightRowsExcluded(UserWarning):
    """Signals latitude rows dropped from the key set by the log-mask path."""


def attention_dense_sequence(q, k, v):
    """Standard sequence attention softmax(q k^T / sqrt(d)) v.

    Token arrays q, k of shape (N, d) and v of shape (N, e).  This is the
    unweighted special case of the spherical formula (all weights one).
    """
    q = np.asarray(q, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if q.ndim != 2 or k.ndim != 2 or v.ndim != 2:
        raise ValueError("q, k, v must be 2-D token arrays")
    if q.shape[1] != k.shape[1]:
        raise ValueError("q and k must share the feature dimension")
    if not (q.shape[0] == k.shape[0] == v.shape[0]):
        raise ValueError("q, k, v must have the same number of tokens")
    scores = (q @ k.T) / math.sqrt(q.shape[1])
    scores -= scores.max(axis=1, keepdims=True)
    p = np.exp(scores)
    return (p @ v) / p.sum(axis=1, keepdims=True)


def split_heads(field: Field, heads: int) -> np.ndarray:
    """(B, heads*dim, H, W) field values to a (B*heads, H, W, dim) array."""
    b, c, h, w = field.values.shape
    if c % heads != 0:
        raise ValueError(f"{c} channels not divisible by {heads} heads")
    dim = c // heads
    arr = field.values.reshape(b, heads, dim, h, w).transpose(0, 1, 3, 4, 2)
    return np.ascontiguousarray(arr.reshape(b * heads, h, w, dim))


def merge_heads(arr: np.ndarray, batch: int, grid) -> Field:
    """Inverse of :func:`split_heads`."""
    g, h, w, dim = arr.shape
    heads = g // batch
    values = arr.reshape(batch, heads, h, w, dim).transpose(0, 1, 4, 2, 3)
    return Field(np.ascontiguousarray(values.reshape(batch, heads * dim, h, w)),
                 grid)


def _check_qkv(q: Field, k: Field, v: Field, config: AttentionConfig):
    grid = require_same_grid(q, k, v)
    if q.channels != k.channels:
        raise ValueError("q and k must have the same channel count")
    if q.channels != config.heads * config.head_dim:
        raise ValueError(
            f"q has {q.channels} channels, expected "
            f"heads*head_dim = {config.heads * config.head_dim}")
    if v.channels % config.heads != 0:
        raise ValueError("v channels must be divisible by the head count")
    if q.batch != k.batch or q.batch != v.batch:
        raise ValueError("q, k, v must share the batch size")
    if np.any(grid.row_weights < 0):
        raise ValueError("quadrature weights must be non-negative")
    return grid


def s2_attention_forward(q: Field, k: Field, v: Field,
                         config: AttentionConfig) -> Field:
    """Discrete global spherical attention (direct quadrature-weighted path)."""
    grid = _check_qkv(q, k, v, config)
    qa = split_heads(q, config.heads)
    ka = split_heads(k, config.heads)
    va = split_heads(v, config.heads)
    out = backends.active().global_forward(
        qa, ka, va, grid.row_weights, config.scale, get_num_threads())
    return merge_heads(out, q.batch, grid)


def s2_attention_forward_logmask(q: Field, k: Field, v: Field,
                                 config: AttentionConfig) -> Field:
    """Global spherical attention via an additive log-weight mask.

    Runs a standard softmax over logits ``q.k/sqrt(d) + log(w_j)``.  Keys on
    zero-weight rows (the equiangular pole row) have no valid log weight and
    are excluded; they contribute exactly zero in the direct path, so both
    paths agree identically.  Exclusions are signalled with a
    :class:`ZeroWeightRowsExcluded` warning.
    """
    grid = _check_qkv(q, k, v, config)
    excluded = zero_weight_rows(grid)
    if excluded.size:
        warnings.warn(
            f"log-mask path excluded zero-weight latitude rows "
            f"{excluded.tolist()} from the key set", ZeroWeightRowsExcluded,
            stacklevel=2)
    keep = grid.row_weights > 0

    qa = split_heads(q, config.heads)
    ka = split_heads(k, config.heads)
    va = split_heads(v, config.heads)
    gg, h, w, d = qa.shape
    e = va.shape[3]
    n = h * w

    qf = qa.reshape(gg, n, d)
    kf = ka[:, keep].reshape(gg, -1, d)
    vf = va[:, keep].reshape(gg, -1, e)
    logw = np.log(np.repeat(grid.row_weights[keep], w))

    scores = np.matmul(qf, kf.transpose(0, 2, 1)) * config.scale + logw
    scores -= scores.max(axis=2, keepdims=True)
    p = np.exp(scores)
    out = np.matmul(p, vf) / p.sum(axis=2, keepdims=True)
    return merge_heads(np.ascontiguousarray(out.reshape(gg, h, w, e)),
                       q.batch, grid)
