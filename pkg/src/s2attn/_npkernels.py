"""Pure-NumPy attention kernels; fallback backend when the extension is absent.

All kernels share the compiled backend's calling convention: inputs are
C-contiguous float64 arrays of shape (G, H, W, dim) with G the flattened
batch*heads axis, plus the per-row quadrature weights.  The ``nthreads``
argument is accepted for signature parity and ignored; NumPy reductions do
not depend on the package's worker-pool setting, so results are trivially
identical across thread counts.
"""

from __future__ import annotations

import numpy as np

NAME = "numpy"

# cap on the scores buffer for the blocked global pass, in elements
_BLOCK_ELEMENTS = 1 << 22


def global_forward(q, k, v, wlat, scale, nthreads=1):
    """Discrete global attention with quadrature-weighted normalization."""
    G, H, W, d = q.shape
    e = v.shape[3]
    n = H * W
    qf = q.reshape(G, n, d)
    kf = k.reshape(G, n, d)
    vf = v.reshape(G, n, e)
    wflat = np.repeat(wlat, W)
    out = np.empty((G, n, e))
    chunk = max(1, _BLOCK_ELEMENTS // max(n, 1))
    for c0 in range(0, n, chunk):
        c1 = min(c0 + chunk, n)
        scores = np.matmul(qf[:, c0:c1], kf.transpose(0, 2, 1)) * scale
        scores -= scores.max(axis=2, keepdims=True)
        p = np.exp(scores) * wflat
        z = p.sum(axis=2)
        out[:, c0:c1] = np.matmul(p, vf) / z[:, :, None]
    return out.reshape(G, H, W, e)


def _gather_columns(x, rows, cols):
    # x: (G, H, W, dim); rows: (L,), cols: (L, W) -> (G, L, W, dim)
    return x[:, rows[:, None], cols, :]


def nbr_forward(q, k, v, wlat, row_ptr, nbr_h, nbr_dw, scale, nthreads=1):
    """Neighborhood attention restricted to the map's geodesic disks."""
    G, H, W, d = q.shape
    e = v.shape[3]
    out = np.zeros((G, H, W, e))
    wcols = np.arange(W)
    for h in range(H):
        t0, t1 = row_ptr[h], row_ptr[h + 1]
        if t1 == t0:
            continue
        rows = nbr_h[t0:t1]
        cols = (nbr_dw[t0:t1][:, None] + wcols[None, :]) % W
        k_sel = _gather_columns(k, rows, cols)
        v_sel = _gather_columns(v, rows, cols)
        scores = np.einsum("gwd,glwd->glw", q[:, h], k_sel) * scale
        scores -= scores.max(axis=1, keepdims=True)
        p = np.exp(scores) * wlat[rows][None, :, None]
        z = p.sum(axis=1)
        attn = np.divide(p, z[:, None, :], out=np.zeros_like(p),
                         where=z[:, None, :] > 0)
        out[:, h] = np.einsum("glw,glwe->gwe", attn, v_sel)
    return out


def nbr_backward(q, k, v, dy, wlat, row_ptr, nbr_h, nbr_dw,
                 rev_ptr, rev_h, rev_dw, scale, nthreads=1):
    """Gradients of the neighborhood forward w.r.t. q, k, and v.

    The per-query softmax statistics are recomputed on the fly rather than
    stored per edge; dk/dv are accumulated source-side through the reverse
    map so every output element has a single owner and a fixed summation
    order.
    """
    G, H, W, d = q.shape
    e = v.shape[3]
    wcols = np.arange(W)

    dq = np.zeros_like(q)
    dk = np.zeros_like(k)
    dv = np.zeros_like(v)
    logit_max = np.zeros((G, H, W))
    denom = np.zeros((G, H, W))
    dy_dot_out = np.zeros((G, H, W))

    # query-side pass: softmax stats, dq, and dy . out per query
    for h in range(H):
        t0, t1 = row_ptr[h], row_ptr[h + 1]
        if t1 == t0:
            continue
        rows = nbr_h[t0:t1]
        cols = (nbr_dw[t0:t1][:, None] + wcols[None, :]) % W
        k_sel = _gather_columns(k, rows, cols)
        v_sel = _gather_columns(v, rows, cols)
        scores = np.einsum("gwd,glwd->glw", q[:, h], k_sel) * scale
        m = scores.max(axis=1)
        p = np.exp(scores - m[:, None, :]) * wlat[rows][None, :, None]
        z = p.sum(axis=1)
        attn = np.divide(p, z[:, None, :], out=np.zeros_like(p),
                         where=z[:, None, :] > 0)
        out_h = np.einsum("glw,glwe->gwe", attn, v_sel)
        dyo = np.einsum("gwe,gwe->gw", dy[:, h], out_h)
        ev = np.einsum("gwe,glwe->glw", dy[:, h], v_sel)
        ae = attn * ev
        t_sum = ae.sum(axis=1)
        t_vec = np.einsum("glw,glwd->gwd", ae, k_sel)
        kbar = np.einsum("glw,glwd->gwd", attn, k_sel)
        dq[:, h] = scale * (t_vec - t_sum[:, :, None] * kbar)
        logit_max[:, h] = m
        denom[:, h] = z
        dy_dot_out[:, h] = dyo

    # source-side pass: dk and dv via the reverse map
    for h2 in range(H):
        t0, t1 = rev_ptr[h2], rev_ptr[h2 + 1]
        if t1 == t0:
            continue
        rows = rev_h[t0:t1]
        cols = (wcols[None, :] - rev_dw[t0:t1][:, None]) % W
        q_sel = _gather_columns(q, rows, cols)
        dy_sel = _gather_columns(dy, rows, cols)
        m_sel = logit_max[:, rows[:, None], cols]
        z_sel = denom[:, rows[:, None], cols]
        dyo_sel = dy_dot_out[:, rows[:, None], cols]
        scores = np.einsum("glwd,gwd->glw", q_sel, k[:, h2]) * scale
        p = np.exp(scores - m_sel) * wlat[h2]
        attn = np.divide(p, z_sel, out=np.zeros_like(p), where=z_sel > 0)
        ev = np.einsum("glwe,gwe->glw", dy_sel, v[:, h2])
        dv[:, h2] = np.einsum("glw,glwe->gwe", attn, dy_sel)
        dk[:, h2] = scale * np.einsum("glw,glwd->gwd",
                                      attn * (ev - dyo_sel), q_sel)
    return dq, dk, dv
