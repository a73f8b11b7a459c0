# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled versions of the bilinear tap gather/scatter kernels.

All three kernels run in two passes: first the four corner indices and
bilinear weights are resolved once per tap into flat (4, T*L) buffers, then
the channel loop runs outermost so each (H, W) channel plane stays resident
in cache while its taps are read or accumulated.
"""

import numpy as np

cimport cython
from libc.math cimport floor

ctypedef fused real:
    float
    double

BACKEND = "cython"


cdef inline void _resolve_corners(real[:, ::1] py, real[:, ::1] px,
                                  Py_ssize_t H, Py_ssize_t W,
                                  Py_ssize_t[:, ::1] idx, real[:, ::1] wgt) nogil:
    """Flat corner indices (-1 if off-image) and bilinear weights, (4, T*L)."""
    cdef Py_ssize_t T = py.shape[0], L = py.shape[1]
    cdef Py_ssize_t t, l, n, r0, c0, dr, dc, rr, cc, k
    cdef real r, c, wr, wc
    for t in range(T):
        for l in range(L):
            n = t * L + l
            r = py[t, l]
            c = px[t, l]
            r0 = <Py_ssize_t>floor(r)
            c0 = <Py_ssize_t>floor(c)
            wr = r - r0
            wc = c - c0
            for dr in range(2):
                for dc in range(2):
                    k = dr * 2 + dc
                    rr = r0 + dr
                    cc = c0 + dc
                    if rr < 0 or rr >= H or cc < 0 or cc >= W:
                        idx[k, n] = -1
                        wgt[k, n] = 0
                    else:
                        idx[k, n] = rr * W + cc
                        wgt[k, n] = (wr if dr else 1 - wr) * (wc if dc else 1 - wc)


def bilinear_gather(real[:, :, ::1] x, real[:, ::1] py, real[:, ::1] px):
    cdef Py_ssize_t C = x.shape[0], H = x.shape[1], W = x.shape[2]
    cdef Py_ssize_t T = py.shape[0], L = py.shape[1], N = T * L
    dtype = np.float32 if real is float else np.float64
    out_arr = np.zeros((C, T, L), dtype=dtype)
    cdef real[:, :, ::1] out = out_arr
    idx_arr = np.empty((4, N), dtype=np.intp)
    wgt_arr = np.empty((4, N), dtype=dtype)
    cdef Py_ssize_t[:, ::1] idx = idx_arr
    cdef real[:, ::1] wgt = wgt_arr
    cdef Py_ssize_t ch, n, k, j
    cdef real acc
    cdef real *xr
    cdef real *orow
    with nogil:
        _resolve_corners(py, px, H, W, idx, wgt)
        for ch in range(C):
            xr = &x[ch, 0, 0]
            orow = &out[ch, 0, 0]
            for n in range(N):
                acc = 0
                for k in range(4):
                    j = idx[k, n]
                    if j >= 0:
                        acc += wgt[k, n] * xr[j]
                orow[n] = acc
    return out_arr


def bilinear_scatter(real[:, :, ::1] gpatches, real[:, ::1] py, real[:, ::1] px,
                     Py_ssize_t H, Py_ssize_t W):
    cdef Py_ssize_t C = gpatches.shape[0]
    cdef Py_ssize_t T = py.shape[0], L = py.shape[1], N = T * L
    dtype = np.float32 if real is float else np.float64
    gx_arr = np.zeros((C, H, W), dtype=dtype)
    cdef real[:, :, ::1] gx = gx_arr
    idx_arr = np.empty((4, N), dtype=np.intp)
    wgt_arr = np.empty((4, N), dtype=dtype)
    cdef Py_ssize_t[:, ::1] idx = idx_arr
    cdef real[:, ::1] wgt = wgt_arr
    cdef Py_ssize_t ch, n, k, j
    cdef real g
    cdef real *gr
    cdef real *grow
    with nogil:
        _resolve_corners(py, px, H, W, idx, wgt)
        for ch in range(C):
            gr = &gx[ch, 0, 0]
            grow = &gpatches[ch, 0, 0]
            for n in range(N):
                g = grow[n]
                for k in range(4):
                    j = idx[k, n]
                    if j >= 0:
                        gr[j] += wgt[k, n] * g
    return gx_arr


def conv_shift_add(real[:, :, :, :, ::1] z, real[:, :, ::1] out):
    """Accumulate z[o,k,l,i+k-P,j+l-P] into out[o,i,j] (same padding)."""
    cdef Py_ssize_t O = z.shape[0], K = z.shape[1], H = z.shape[3], W = z.shape[4]
    cdef Py_ssize_t P = K // 2
    cdef Py_ssize_t o, k, l, i, j, dr, dc, a0, a1, b0, b1
    with nogil:
        for o in range(O):
            for k in range(K):
                dr = k - P
                a0 = 0 if dr > 0 else -dr
                a1 = H if dr < 0 else H - dr
                for l in range(K):
                    dc = l - P
                    b0 = 0 if dc > 0 else -dc
                    b1 = W if dc < 0 else W - dc
                    for i in range(a0, a1):
                        for j in range(b0, b1):
                            out[o, i, j] += z[o, k, l, i + dr, j + dc]


def conv_shift_gather(real[:, :, ::1] g, real[:, :, :, :, ::1] gz):
    """Adjoint of conv_shift_add: gz[o,k,l,m,n] = g[o,m-k+P,n-l+P] or 0."""
    cdef Py_ssize_t O = gz.shape[0], K = gz.shape[1], H = gz.shape[3], W = gz.shape[4]
    cdef Py_ssize_t P = K // 2
    cdef Py_ssize_t o, k, l, m, n, dr, dc, m0, m1, n0, n1
    with nogil:
        for o in range(O):
            for k in range(K):
                dr = k - P
                m0 = dr if dr > 0 else 0
                m1 = H + dr if dr < 0 else H
                for l in range(K):
                    dc = l - P
                    n0 = dc if dc > 0 else 0
                    n1 = W + dc if dc < 0 else W
                    for m in range(H):
                        if m < m0 or m >= m1:
                            for n in range(W):
                                gz[o, k, l, m, n] = 0
                            continue
                        for n in range(n0):
                            gz[o, k, l, m, n] = 0
                        for n in range(n0, n1):
                            gz[o, k, l, m, n] = g[o, m - dr, n - dc]
                        for n in range(n1, W):
                            gz[o, k, l, m, n] = 0


def bilinear_backward(real[:, :, ::1] x, real[:, ::1] py, real[:, ::1] px,
                      real[:, :, ::1] gpatches):
    """Combined backward: image scatter plus coordinate gradients.

    Shares one corner resolution and one channel sweep between the two
    gradient outputs, so the tap weights and indices are computed once.
    """
    cdef Py_ssize_t C = x.shape[0], H = x.shape[1], W = x.shape[2]
    cdef Py_ssize_t T = py.shape[0], L = py.shape[1], N = T * L
    dtype = np.float32 if real is float else np.float64
    gx_arr = np.zeros((C, H, W), dtype=dtype)
    gpy_arr = np.zeros((T, L), dtype=dtype)
    gpx_arr = np.zeros((T, L), dtype=dtype)
    cdef real[:, :, ::1] gx = gx_arr
    cdef real[:, ::1] gpy = gpy_arr
    cdef real[:, ::1] gpx = gpx_arr
    idx_arr = np.empty((4, N), dtype=np.intp)
    wgt_arr = np.empty((4, N), dtype=dtype)
    xs_arr = np.zeros((4, N), dtype=dtype)
    cdef Py_ssize_t[:, ::1] idx = idx_arr
    cdef real[:, ::1] wgt = wgt_arr
    cdef real[:, ::1] xs = xs_arr
    cdef Py_ssize_t ch, t, l, n, k, j, dr, dc
    cdef real g, r, c, wr, wc, dwr, dwc
    cdef real *xr
    cdef real *gr
    cdef real *grow
    with nogil:
        _resolve_corners(py, px, H, W, idx, wgt)
        for ch in range(C):
            xr = &x[ch, 0, 0]
            gr = &gx[ch, 0, 0]
            grow = &gpatches[ch, 0, 0]
            for n in range(N):
                g = grow[n]
                for k in range(4):
                    j = idx[k, n]
                    if j >= 0:
                        gr[j] += wgt[k, n] * g
                        xs[k, n] += xr[j] * g
        for t in range(T):
            for l in range(L):
                n = t * L + l
                r = py[t, l]
                c = px[t, l]
                wr = r - floor(r)
                wc = c - floor(c)
                for dr in range(2):
                    for dc in range(2):
                        k = dr * 2 + dc
                        dwr = (1 if dr else -1) * (wc if dc else 1 - wc)
                        dwc = (1 if dc else -1) * (wr if dr else 1 - wr)
                        gpy[t, l] += xs[k, n] * dwr
                        gpx[t, l] += xs[k, n] * dwc
    return gx_arr, gpy_arr, gpx_arr


def bilinear_coord_grad(real[:, :, ::1] x, real[:, ::1] py, real[:, ::1] px,
                        real[:, :, ::1] gpatches):
    cdef Py_ssize_t C = x.shape[0], H = x.shape[1], W = x.shape[2]
    cdef Py_ssize_t T = py.shape[0], L = py.shape[1], N = T * L
    dtype = np.float32 if real is float else np.float64
    gpy_arr = np.zeros((T, L), dtype=dtype)
    gpx_arr = np.zeros((T, L), dtype=dtype)
    cdef real[:, ::1] gpy = gpy_arr
    cdef real[:, ::1] gpx = gpx_arr
    idx_arr = np.empty((4, N), dtype=np.intp)
    cdef Py_ssize_t[:, ::1] idx = idx_arr
    # per-corner channel-summed x * g, accumulated channel-outer
    xs_arr = np.zeros((4, N), dtype=dtype)
    cdef real[:, ::1] xs = xs_arr
    cdef Py_ssize_t ch, t, l, n, k, j, r0, c0, dr, dc, rr, cc
    cdef real r, c, wr, wc, g, dwr, dwc
    cdef real *xr
    cdef real *grow
    with nogil:
        for t in range(T):
            for l in range(L):
                n = t * L + l
                r0 = <Py_ssize_t>floor(py[t, l])
                c0 = <Py_ssize_t>floor(px[t, l])
                for dr in range(2):
                    for dc in range(2):
                        rr = r0 + dr
                        cc = c0 + dc
                        if rr < 0 or rr >= H or cc < 0 or cc >= W:
                            idx[dr * 2 + dc, n] = -1
                        else:
                            idx[dr * 2 + dc, n] = rr * W + cc
        for ch in range(C):
            xr = &x[ch, 0, 0]
            grow = &gpatches[ch, 0, 0]
            for n in range(N):
                g = grow[n]
                for k in range(4):
                    j = idx[k, n]
                    if j >= 0:
                        xs[k, n] += xr[j] * g
        for t in range(T):
            for l in range(L):
                n = t * L + l
                r = py[t, l]
                c = px[t, l]
                wr = r - floor(r)
                wc = c - floor(c)
                for dr in range(2):
                    for dc in range(2):
                        k = dr * 2 + dc
                        dwr = (1 if dr else -1) * (wc if dc else 1 - wc)
                        dwc = (1 if dc else -1) * (wr if dr else 1 - wr)
                        gpy[t, l] += xs[k, n] * dwr
                        gpx[t, l] += xs[k, n] * dwc
    return gpy_arr, gpx_arr
