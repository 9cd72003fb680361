"""Independent brute-force references for testing.

Repository rule: nothing here may import from or share code with the
attention implementations it is used to check.  The reference below is the
literal weighted-softmax formula as nested Python loops, and the gradient
checker is plain central differences.
"""

from __future__ import annotations

import math

import numpy as np


def dense_reference_attention(q, k, v, weights, mask=None, scale=None):
    """Literal triple-loop weighted attention over flat token lists.

    q: (N, d), k: (N, d), v: (N, e), weights: (N,), optional boolean
    mask (N, N) restricting which keys each query sees (True = visible).
    Intended for small instances; exponentials are evaluated directly, so
    logits are assumed to be of moderate size.
    """
    q = np.asarray(q, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    n, d = q.shape
    e = v.shape[1]
    if scale is None:
        scale = 1.0 / math.sqrt(d)
    out = np.zeros((n, e))
    for i in range(n):
        numer = np.zeros(e)
        denom = 0.0
        for j in range(n):
            if mask is not None and not mask[i, j]:
                continue
            logit = 0.0
            for l in range(d):
                logit += q[i, l] * k[j, l]
            a = math.exp(logit * scale) * weights[j]
            denom += a
            for c in range(e):
                numer[c] += a * v[j, c]
        if denom > 0.0:
            out[i] = numer / denom
    return out


def finite_difference_grad(f, x, step=1e-5):
    """Central-difference gradient of a scalar function of an array.

    Perturbs every coordinate of ``x`` by +/- step and applies
    ``(f(x+h e) - f(x-h e)) / (2 h)``.  Deterministic float64 throughout.
    """
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        xp = x.copy()
        xp[idx] += step
        xm = x.copy()
        xm[idx] -= step
        grad[idx] = (f(xp) - f(xm)) / (2.0 * step)
    return grad
