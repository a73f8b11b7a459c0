"""Differentiable neural-net ops built on the tensor engine.

Convolution is one (O*K*K, C) matmul followed by a shifted accumulation; the
shift passes and the fractional-tap gather used by pixel-dependent filtering
dispatch to the kernels backend (compiled or numpy).
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import kernels
from .autograd import Tensor, make_op
from .errors import ConfigError, SamplingIndexError, ShapeError
from .flops import counter


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """Same-padded 2-D cross-correlation: (C,H,W) * (O,C,K,K) -> (O,H,W)."""
    C, H, W = x.shape
    O, Cw, K, K2 = w.shape
    if K != K2 or K % 2 == 0:
        raise ConfigError(f"kernel must be square with odd size, got {K}x{K2}")
    if Cw != C:
        raise ShapeError(f"conv2d input channels {C} != weight channels {Cw}")
    counter.add("conv", 2 * O * C * K * K * H * W)
    # one (O*K*K, C) matmul, then shifted accumulation: avoids im2col copies
    wbig = np.ascontiguousarray(w.data.transpose(0, 2, 3, 1)).reshape(O * K * K, C)
    x2 = x.data.reshape(C, H * W)
    z = (wbig @ x2).reshape(O, K, K, H, W)
    data = np.zeros((O, H, W), dtype=x.data.dtype)
    kernels.conv_shift_add(z, data)
    if b is not None:
        data = data + b.data[:, None, None]

    def vjp(g):
        counter.add("conv", 2 * 2 * O * C * K * K * H * W)
        gz = np.empty((O, K, K, H, W), dtype=g.dtype)
        kernels.conv_shift_gather(np.ascontiguousarray(g), gz)
        gz2 = gz.reshape(O * K * K, H * W)
        gwbig = gz2 @ x2.T
        gw = gwbig.reshape(O, K, K, C).transpose(0, 3, 1, 2)
        gx = (wbig.T @ gz2).reshape(C, H, W)
        if b is not None:
            return gx, gw, g.sum(axis=(1, 2))
        return gx, gw

    parents = (x, w) if b is None else (x, w, b)
    return make_op(data, parents, vjp, "conv2d")


def conv1x1_flat(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """1x1 convolution over an already-flattened (C,L) feature tensor.

    Fused w @ x + b so the whole affine map is a single graph node.
    """
    from .autograd import matmul

    if b is None:
        return matmul(w, x)
    O, L = w.shape[0], x.shape[1]
    counter.add("matmul", 2 * O * w.shape[1] * L)
    data = w.data @ x.data + b.data[:, None]

    def vjp(g):
        counter.add("matmul", 4 * O * w.shape[1] * L)
        return w.data.T @ g, g @ x.data.T, g.sum(axis=1)

    return make_op(data, (x, w, b), vjp, "conv1x1_flat")


def _check_coords(rows, cols, H, W):
    bad = np.where((rows < 0) | (rows >= H) | (cols < 0) | (cols >= W))[0]
    if bad.size:
        l = int(bad[0])
        raise SamplingIndexError(
            f"coordinate {l} = ({rows[l]}, {cols[l]}) outside {H}x{W} grid"
        )


def gather_pixels(x: Tensor, rows: np.ndarray, cols: np.ndarray) -> Tensor:
    """Exact integer gather: (C,H,W) -> (C,L); backward scatter-adds."""
    C, H, W = x.shape
    _check_coords(rows, cols, H, W)
    flat = rows * W + cols
    data = x.data.reshape(C, H * W)[:, flat]

    def vjp(g):
        # plan coordinates are distinct, so direct assignment is a scatter-add
        gx = np.zeros((C, H * W), dtype=g.dtype)
        gx[:, flat] = g
        return (gx.reshape(C, H, W),)

    return make_op(data, (x,), vjp, "gather_pixels")


def scatter_pixels(y: Tensor, rows: np.ndarray, cols: np.ndarray, skip: Tensor) -> Tensor:
    """Inverse sampling: sampled positions take y, the rest take skip."""
    C, H, W = skip.shape
    if y.shape[0] != C or y.shape[1] != rows.size:
        raise ShapeError(f"scatter shapes disagree: y {y.shape}, skip {skip.shape}, L={rows.size}")
    _check_coords(rows, cols, H, W)
    flat = rows * W + cols
    data = skip.data.reshape(C, H * W).copy()
    data[:, flat] = y.data
    data = data.reshape(C, H, W)

    def vjp(g):
        gf = g.reshape(C, H * W)
        gy = gf[:, flat].copy()
        gskip = gf.copy()
        gskip[:, flat] = 0
        return gy, gskip.reshape(C, H, W)

    return make_op(data, (y, skip), vjp, "scatter_pixels")


def deformable_patches(x: Tensor, offsets: Tensor, base_py: np.ndarray,
                       base_px: np.ndarray) -> Tensor:
    """Gather K^2 bilinear taps around each sampled pixel.

    `base_py`/`base_px` hold the (T, L) undisplaced tap positions; `offsets`
    is a (2, T, L) tensor of learnable displacements (row, col). Output is
    (C, T, L). Taps outside the grid read zero.
    """
    C, H, W = x.shape
    T, L = base_py.shape
    if offsets.shape != (2, T, L):
        raise ShapeError(f"offsets shape {offsets.shape} != (2, {T}, {L})")
    dt = x.dtype
    py = np.ascontiguousarray(base_py + offsets.data[0], dtype=dt)
    px = np.ascontiguousarray(base_px + offsets.data[1], dtype=dt)
    counter.add("gather", 8 * C * T * L)
    xc = np.ascontiguousarray(x.data)
    data = kernels.bilinear_gather(xc, py, px)

    def vjp(g):
        counter.add("gather", 16 * C * T * L)
        g = np.ascontiguousarray(g)
        gx, gpy, gpx = kernels.bilinear_backward(xc, py, px, g)
        return gx, np.stack([gpy, gpx])

    return make_op(data, (x, offsets), vjp, "deformable_patches")


def pdf_combine(patches: Tensor, v: Tensor, w: Tensor) -> Tensor:
    """Weighted tap reduction: Y[o,l] = sum_{c,t} W[o,c,t] V[t,l] P[c,t,l].

    `patches` is (C, K^2, L), `v` the per-pixel kernel values (K^2, L) shared
    across channels, `w` the fixed weights (O, C, K, K).
    """
    C, T, L = patches.shape
    O = w.shape[0]
    w2 = w.data.reshape(O, C * T)
    counter.add("pdf", 2 * O * C * T * L + 2 * C * T * L)
    vp = (v.data[None] * patches.data).reshape(C * T, L)
    data = w2 @ vp

    def vjp(g):
        counter.add("pdf", 3 * 2 * O * C * T * L)
        gw2 = (w2.T @ g).reshape(C, T, L)  # grad reaching V*P
        gp = gw2 * v.data[None]
        gv = (gw2 * patches.data).sum(axis=0)
        gw = (g @ vp.T).reshape(w.shape)
        return gp, gv, gw

    return make_op(data, (patches, v, w), vjp, "pdf_combine")
