"""Pure-numpy implementations of the hot sampling kernels.

Shapes: x is (C, H, W); tap coordinates py/px are (T, L) absolute positions
(fractional, row/col); patches are (C, T, L). Taps falling outside the image
read as zero and receive no scattered gradient.
"""

from __future__ import annotations

import numpy as np

BACKEND = "numpy"


def _corners(py, px, H, W):
    r0 = np.floor(py).astype(np.int64)
    c0 = np.floor(px).astype(np.int64)
    wr = py - r0
    wc = px - c0
    out = []
    for dr, dc, w in (
        (0, 0, (1 - wr) * (1 - wc)),
        (0, 1, (1 - wr) * wc),
        (1, 0, wr * (1 - wc)),
        (1, 1, wr * wc),
    ):
        r = r0 + dr
        c = c0 + dc
        valid = (r >= 0) & (r < H) & (c >= 0) & (c < W)
        out.append((r, c, w, valid))
    return out


def bilinear_gather(x, py, px):
    C, H, W = x.shape
    xf = x.reshape(C, H * W)
    patches = np.zeros((C,) + py.shape, dtype=x.dtype)
    for r, c, w, valid in _corners(py, px, H, W):
        idx = np.where(valid, r * W + c, 0)
        patches += xf[:, idx] * (w * valid)
    return patches


def bilinear_scatter(gpatches, py, px, H, W):
    C = gpatches.shape[0]
    gx = np.zeros((C, H * W), dtype=gpatches.dtype)
    for r, c, w, valid in _corners(py, px, H, W):
        v = valid.reshape(-1)
        if not v.any():
            continue
        idx = (r.reshape(-1) * W + c.reshape(-1))[v]
        wv = (w * valid).reshape(-1)[v]
        gflat = gpatches.reshape(C, -1)[:, v]
        for ch in range(C):
            gx[ch] += np.bincount(idx, weights=gflat[ch] * wv, minlength=H * W)
    return gx.reshape(C, H, W)


def conv_shift_add(z, out):
    """Accumulate z[o,k,l,i+k-P,j+l-P] into out[o,i,j] (same padding)."""
    O, K, _, H, W = z.shape
    P = K // 2
    for k in range(K):
        for l in range(K):
            dr, dc = k - P, l - P
            a0, a1 = max(0, -dr), min(H, H - dr)
            b0, b1 = max(0, -dc), min(W, W - dc)
            out[:, a0:a1, b0:b1] += z[:, k, l, a0 + dr:a1 + dr, b0 + dc:b1 + dc]


def conv_shift_gather(g, gz):
    """Adjoint of conv_shift_add: gz[o,k,l,m,n] = g[o,m-k+P,n-l+P] or 0."""
    O, K, _, H, W = gz.shape
    P = K // 2
    gz[:] = 0
    for k in range(K):
        for l in range(K):
            dr, dc = k - P, l - P
            a0, a1 = max(0, dr), min(H, H + dr)
            b0, b1 = max(0, dc), min(W, W + dc)
            gz[:, k, l, a0:a1, b0:b1] = g[:, a0 - dr:a1 - dr, b0 - dc:b1 - dc]


def bilinear_backward(x, py, px, gpatches):
    """Image scatter plus coordinate gradients in one call."""
    C, H, W = x.shape
    gx = bilinear_scatter(gpatches, py, px, H, W)
    gpy, gpx = bilinear_coord_grad(x, py, px, gpatches)
    return gx, gpy, gpx


def bilinear_coord_grad(x, py, px, gpatches):
    """Gradients of gather output w.r.t. the tap coordinates."""
    C, H, W = x.shape
    xf = x.reshape(C, H * W)
    r0 = np.floor(py).astype(np.int64)
    c0 = np.floor(px).astype(np.int64)
    wr = py - r0
    wc = px - c0
    gpy = np.zeros_like(py)
    gpx = np.zeros_like(px)
    # d(weight)/d(row) and d(weight)/d(col) per corner
    for dr, dc, dwr, dwc in (
        (0, 0, -(1 - wc), -(1 - wr)),
        (0, 1, -wc, (1 - wr)),
        (1, 0, (1 - wc), -wr),
        (1, 1, wc, wr),
    ):
        r = r0 + dr
        c = c0 + dc
        valid = (r >= 0) & (r < H) & (c >= 0) & (c < W)
        idx = np.where(valid, r * W + c, 0)
        xsum = (xf[:, idx] * gpatches).sum(axis=0) * valid
        gpy += xsum * dwr
        gpx += xsum * dwc
    return gpy, gpx
