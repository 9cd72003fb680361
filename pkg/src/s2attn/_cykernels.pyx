# cython: boundscheck=False, wraparound=False, cdivision=True
# cython: initializedcheck=False, language_level=3
"""Compiled attention kernels.

Parallelism is over independent output items (queries for the forward and
dq passes, source points for dk/dv) with a fixed sequential reduction order
inside each item, so results are bitwise identical for any thread count.
The softmax is evaluated in two steps per item: the running logit maximum
first, then the exponential sum relative to it.
"""

import numpy as np

cimport cython
from cython.parallel cimport prange, threadid
from libc.math cimport exp

NAME = "cython"


cdef inline double _dot(const double* a, const double* b, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i
    cdef double s = 0.0
    for i in range(n):
        s += a[i] * b[i]
    return s


def global_forward(const double[:, :, :, ::1] q,
                   const double[:, :, :, ::1] k,
                   const double[:, :, :, ::1] v,
                   const double[::1] wlat,
                   double scale,
                   int nthreads):
    cdef Py_ssize_t G = q.shape[0], H = q.shape[1], W = q.shape[2]
    cdef Py_ssize_t d = q.shape[3], e = v.shape[3]
    cdef Py_ssize_t n = H * W

    out_arr = np.empty((G, H, W, e), dtype=np.float64)
    sbuf_arr = np.empty((nthreads, n), dtype=np.float64)
    abuf_arr = np.empty((nthreads, e), dtype=np.float64)
    cdef double[:, :, :, ::1] out = out_arr
    cdef double[:, ::1] sbuf = sbuf_arr
    cdef double[:, ::1] abuf = abuf_arr

    cdef Py_ssize_t idx, g, hi, wi, h2, w2, c, t, tid
    cdef double m, s, z, weight
    cdef const double* qi

    for idx in prange(G * n, num_threads=nthreads, schedule='static',
                      nogil=True):
        tid = threadid()
        g = idx // n
        hi = (idx - g * n) // W
        wi = idx - g * n - hi * W
        qi = &q[g, hi, wi, 0]

        # pass 1: logits and their maximum
        m = -1e308
        t = 0
        for h2 in range(H):
            for w2 in range(W):
                s = _dot(qi, &k[g, h2, w2, 0], d) * scale
                sbuf[tid, t] = s
                if s > m:
                    m = s
                t = t + 1

        # pass 2: weighted exponential sum and value accumulation
        z = 0.0
        for c in range(e):
            abuf[tid, c] = 0.0
        t = 0
        for h2 in range(H):
            weight = wlat[h2]
            if weight == 0.0:
                t = t + W
                continue
            for w2 in range(W):
                s = exp(sbuf[tid, t] - m) * weight
                z = z + s
                for c in range(e):
                    abuf[tid, c] += s * v[g, h2, w2, c]
                t = t + 1
        for c in range(e):
            out[g, hi, wi, c] = abuf[tid, c] / z
    return out_arr


def nbr_forward(const double[:, :, :, ::1] q,
                const double[:, :, :, ::1] k,
                const double[:, :, :, ::1] v,
                const double[::1] wlat,
                const long long[::1] row_ptr,
                const int[::1] nbr_h,
                const int[::1] nbr_dw,
                double scale,
                int nthreads):
    cdef Py_ssize_t G = q.shape[0], H = q.shape[1], W = q.shape[2]
    cdef Py_ssize_t d = q.shape[3], e = v.shape[3]
    cdef Py_ssize_t n = H * W

    cdef Py_ssize_t max_count = 0, h
    for h in range(H):
        if row_ptr[h + 1] - row_ptr[h] > max_count:
            max_count = row_ptr[h + 1] - row_ptr[h]

    out_arr = np.zeros((G, H, W, e), dtype=np.float64)
    sbuf_arr = np.empty((nthreads, max(max_count, 1)), dtype=np.float64)
    cdef double[:, :, :, ::1] out = out_arr
    cdef double[:, ::1] sbuf = sbuf_arr

    cdef Py_ssize_t idx, g, hi, wi, h2, w2, c, t, t0, t1, tid
    cdef double m, s, z, a
    cdef const double* qi

    for idx in prange(G * n, num_threads=nthreads, schedule='static',
                      nogil=True):
        tid = threadid()
        g = idx // n
        hi = (idx - g * n) // W
        wi = idx - g * n - hi * W
        qi = &q[g, hi, wi, 0]
        t0 = row_ptr[hi]
        t1 = row_ptr[hi + 1]
        if t1 == t0:
            continue

        m = -1e308
        for t in range(t0, t1):
            h2 = nbr_h[t]
            w2 = wi + nbr_dw[t]
            if w2 >= W:
                w2 = w2 - W
            s = _dot(qi, &k[g, h2, w2, 0], d) * scale
            sbuf[tid, t - t0] = s
            if s > m:
                m = s

        z = 0.0
        for t in range(t0, t1):
            s = exp(sbuf[tid, t - t0] - m) * wlat[nbr_h[t]]
            sbuf[tid, t - t0] = s
            z = z + s
        if z <= 0.0:
            continue  # disk with no quadrature mass: output stays zero

        for t in range(t0, t1):
            a = sbuf[tid, t - t0] / z
            h2 = nbr_h[t]
            w2 = wi + nbr_dw[t]
            if w2 >= W:
                w2 = w2 - W
            for c in range(e):
                out[g, hi, wi, c] += a * v[g, h2, w2, c]
    return out_arr


def nbr_backward(const double[:, :, :, ::1] q,
                 const double[:, :, :, ::1] k,
                 const double[:, :, :, ::1] v,
                 const double[:, :, :, ::1] dy,
                 const double[::1] wlat,
                 const long long[::1] row_ptr,
                 const int[::1] nbr_h,
                 const int[::1] nbr_dw,
                 const long long[::1] rev_ptr,
                 const int[::1] rev_h,
                 const int[::1] rev_dw,
                 double scale,
                 int nthreads):
    cdef Py_ssize_t G = q.shape[0], H = q.shape[1], W = q.shape[2]
    cdef Py_ssize_t d = q.shape[3], e = v.shape[3]
    cdef Py_ssize_t n = H * W

    cdef Py_ssize_t max_count = 0, h
    for h in range(H):
        if row_ptr[h + 1] - row_ptr[h] > max_count:
            max_count = row_ptr[h + 1] - row_ptr[h]

    dq_arr = np.zeros((G, H, W, d), dtype=np.float64)
    dk_arr = np.zeros((G, H, W, d), dtype=np.float64)
    dv_arr = np.zeros((G, H, W, e), dtype=np.float64)
    mstat_arr = np.zeros((G, H, W), dtype=np.float64)
    zstat_arr = np.zeros((G, H, W), dtype=np.float64)
    dyo_arr = np.zeros((G, H, W), dtype=np.float64)
    sbuf_arr = np.empty((nthreads, max(max_count, 1)), dtype=np.float64)
    accbuf_arr = np.empty((nthreads, e + 2 * d), dtype=np.float64)

    cdef double[:, :, :, ::1] dq = dq_arr
    cdef double[:, :, :, ::1] dk = dk_arr
    cdef double[:, :, :, ::1] dv = dv_arr
    cdef double[:, :, ::1] mstat = mstat_arr
    cdef double[:, :, ::1] zstat = zstat_arr
    cdef double[:, :, ::1] dyo = dyo_arr
    cdef double[:, ::1] sbuf = sbuf_arr
    cdef double[:, ::1] accbuf = accbuf_arr

    cdef Py_ssize_t idx, g, hi, wi, h2, w2, c, t, t0, t1, tid
    cdef double m, s, z, a, ev, tsum, coef
    cdef const double* qi
    cdef const double* dyi
    cdef const double* kj
    cdef const double* vj

    # query-side pass: softmax stats, dq, and dy . out
    for idx in prange(G * n, num_threads=nthreads, schedule='static',
                      nogil=True):
        tid = threadid()
        g = idx // n
        hi = (idx - g * n) // W
        wi = idx - g * n - hi * W
        qi = &q[g, hi, wi, 0]
        dyi = &dy[g, hi, wi, 0]
        t0 = row_ptr[hi]
        t1 = row_ptr[hi + 1]
        if t1 == t0:
            continue

        m = -1e308
        for t in range(t0, t1):
            h2 = nbr_h[t]
            w2 = wi + nbr_dw[t]
            if w2 >= W:
                w2 = w2 - W
            s = _dot(qi, &k[g, h2, w2, 0], d) * scale
            sbuf[tid, t - t0] = s
            if s > m:
                m = s

        z = 0.0
        for t in range(t0, t1):
            s = exp(sbuf[tid, t - t0] - m) * wlat[nbr_h[t]]
            sbuf[tid, t - t0] = s
            z = z + s
        mstat[g, hi, wi] = m
        zstat[g, hi, wi] = z
        if z <= 0.0:
            continue

        # accbuf layout per thread: [out_e | t_vec_d | kbar_d]
        for c in range(e + 2 * d):
            accbuf[tid, c] = 0.0
        tsum = 0.0
        for t in range(t0, t1):
            a = sbuf[tid, t - t0] / z
            h2 = nbr_h[t]
            w2 = wi + nbr_dw[t]
            if w2 >= W:
                w2 = w2 - W
            kj = &k[g, h2, w2, 0]
            vj = &v[g, h2, w2, 0]
            ev = _dot(dyi, vj, e)
            tsum = tsum + a * ev
            for c in range(e):
                accbuf[tid, c] += a * vj[c]
            for c in range(d):
                accbuf[tid, e + c] += a * ev * kj[c]
                accbuf[tid, e + d + c] += a * kj[c]
        dyo[g, hi, wi] = _dot(dyi, &accbuf[tid, 0], e)
        for c in range(d):
            dq[g, hi, wi, c] = scale * (accbuf[tid, e + c]
                                        - tsum * accbuf[tid, e + d + c])

    # source-side pass: dk and dv through the reverse map
    for idx in prange(G * n, num_threads=nthreads, schedule='static',
                      nogil=True):
        g = idx // n
        h2 = (idx - g * n) // W
        w2 = idx - g * n - h2 * W
        t0 = rev_ptr[h2]
        t1 = rev_ptr[h2 + 1]
        if t1 == t0 or wlat[h2] == 0.0:
            continue
        kj = &k[g, h2, w2, 0]
        vj = &v[g, h2, w2, 0]
        for t in range(t0, t1):
            hi = rev_h[t]
            wi = w2 - rev_dw[t]
            if wi < 0:
                wi = wi + W
            z = zstat[g, hi, wi]
            if z <= 0.0:
                continue
            qi = &q[g, hi, wi, 0]
            dyi = &dy[g, hi, wi, 0]
            s = _dot(qi, kj, d) * scale
            a = exp(s - mstat[g, hi, wi]) * wlat[h2] / z
            ev = _dot(dyi, vj, e)
            for c in range(e):
                dv[g, h2, w2, c] += a * dyi[c]
            coef = scale * a * (ev - dyo[g, hi, wi])
            for c in range(d):
                dk[g, h2, w2, c] += coef * qi[c]
    return dq_arr, dk_arr, dv_arr
