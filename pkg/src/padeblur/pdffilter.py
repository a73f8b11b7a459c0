"""Pixel-dependent filtering: per-pixel kernel values and clamped offsets.

Each sampled pixel gathers a K x K tap neighborhood from the full-resolution
input at positions displaced by learnable offsets (bilinear at fractional
positions, zero outside the image), scales the taps by a per-pixel kernel V
shared across channels, and reduces with fixed weights W. With V == 1 and
zero offsets this is exactly a standard same-padded convolution.
"""

from __future__ import annotations

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .errors import ConfigError
from .nnops import conv1x1_flat, deformable_patches, pdf_combine
from .sampler import SamplingPlan, sample, uniform_plan


class PixelFilterParams:
    def __init__(self, channels: int, K: int, delta_max: float,
                 rng: np.random.Generator):
        if K % 2 == 0:
            raise ConfigError(f"kernel size must be odd, got {K}")
        self.channels = channels
        self.K = K
        self.delta_max = delta_max
        scale = 1.0 / np.sqrt(channels)
        self.w_ker = Tensor(rng.normal(0, scale, (K * K, channels)).astype(np.float32),
                            requires_grad=True)
        self.b_ker = Tensor(np.zeros(K * K, np.float32), requires_grad=True)
        self.w_off = Tensor(rng.normal(0, 0.01, (2 * K * K, channels)).astype(np.float32),
                            requires_grad=True)
        self.b_off = Tensor(np.zeros(2 * K * K, np.float32), requires_grad=True)
        self.w_fix = Tensor(
            rng.normal(0, 1.0 / np.sqrt(channels * K * K),
                       (channels, channels, K, K)).astype(np.float32),
            requires_grad=True)

    def parameters(self, prefix: str = "pdf") -> dict[str, Tensor]:
        return {f"{prefix}.{k}": getattr(self, k)
                for k in ("w_ker", "b_ker", "w_off", "b_off", "w_fix")}


def _tap_grid(plan: SamplingPlan, K: int, dtype=np.float32):
    """Undisplaced tap positions (K^2, L) for rows and cols, cached per plan."""
    key = (K, np.dtype(dtype).str)
    cache = getattr(plan, "_tap_cache", None)
    if cache is None:
        cache = plan._tap_cache = {}
    if key not in cache:
        half = (K - 1) // 2
        dk = np.arange(-half, half + 1, dtype=dtype)
        dkr = np.repeat(dk, K)
        dkc = np.tile(dk, K)
        base_py = plan.rows.astype(dtype)[None, :] + dkr[:, None]
        base_px = plan.cols.astype(dtype)[None, :] + dkc[:, None]
        cache[key] = (base_py, base_px)
    return cache[key]


def kernel_values(x_nu: Tensor, params: PixelFilterParams) -> Tensor:
    """Per-pixel kernel V (K^2, L), shared across channels.

    Parameterized as 1 + tanh(f_ker(x)) so V stays bounded (features stay
    linear in the input) and zero weights give exactly the standard-conv
    special case V == 1.
    """
    raw = conv1x1_flat(x_nu, params.w_ker, params.b_ker)
    th = np.tanh(raw.data)
    return ag.make_op(1.0 + th, (raw,), lambda g: (g * (1.0 - th * th),),
                      "one_plus_tanh")


def offsets(x_nu: Tensor, params: PixelFilterParams) -> Tensor:
    """Clamped per-pixel tap displacements (2, K^2, L) in pixels.

    Soft clamp delta_max * tanh(raw) keeps |offset| <= delta_max while
    leaving a usable gradient inside the linear region.
    """
    raw = conv1x1_flat(x_nu, params.w_off, params.b_off)
    clamped = ag.tanh(raw) * params.delta_max
    return clamped.reshape((2, params.K * params.K, x_nu.shape[1]))


def pdf_apply_nonuniform(x: Tensor, plan: SamplingPlan,
                         params: PixelFilterParams,
                         v: Tensor | None = None,
                         delta: Tensor | None = None) -> Tensor:
    """Adaptive filtering of the planned pixels: (C,H,W) -> (C,L).

    Neighborhood taps come from the full-resolution input around each
    sampled pixel's original coordinates. `v`/`delta` override the generated
    kernels and offsets (used by tests and the degeneracy checks).
    """
    x_nu = sample(x, plan)
    if v is None:
        v = kernel_values(x_nu, params)
    if delta is None:
        delta = offsets(x_nu, params)
    base_py, base_px = _tap_grid(plan, params.K, x.dtype)
    patches = deformable_patches(x, delta, base_py, base_px)
    return pdf_combine(patches, v, params.w_fix)


def pdf_apply_uniform(x: Tensor, params: PixelFilterParams,
                      v: Tensor | None = None,
                      delta: Tensor | None = None) -> Tensor:
    """Dense variant over the full grid: (C,H,W) -> (C,H,W)."""
    C, H, W = x.shape
    plan = uniform_plan(H, W, 1)
    y = pdf_apply_nonuniform(x, plan, params, v=v, delta=delta)
    return y.reshape((C, H, W))


def _fill_nearest(grid: np.ndarray, filled: np.ndarray,
                  rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Fill unsampled positions with the value of the nearest sampled pixel."""
    H, W = grid.shape
    hr, hc = np.where(~filled)
    if hr.size == 0:
        return grid
    d2 = (hr[:, None] - rows[None, :]) ** 2 + (hc[:, None] - cols[None, :]) ** 2
    nearest = d2.argmin(axis=1)
    out = grid.copy()
    out[hr, hc] = grid[rows[nearest], cols[nearest]]
    return out


def generate_filter_diagnostics(params: PixelFilterParams, x: Tensor,
                                plan: SamplingPlan | None = None) -> dict:
    """Per-pixel kernel variance and mean horizontal offset as H x W maps."""
    C, H, W = x.shape
    if plan is None:
        plan = uniform_plan(H, W, 1)
    x_nu = sample(x, plan)
    v = kernel_values(x_nu, params).data
    d = offsets(x_nu, params).data
    var = v.var(axis=0)
    mean_dx = d[1].mean(axis=0)

    vmap = np.zeros((H, W), dtype=var.dtype)
    omap = np.zeros((H, W), dtype=mean_dx.dtype)
    filled = np.zeros((H, W), dtype=bool)
    vmap[plan.rows, plan.cols] = var
    omap[plan.rows, plan.cols] = mean_dx
    filled[plan.rows, plan.cols] = True
    return {
        "V_variance_map": _fill_nearest(vmap, filled, plan.rows, plan.cols),
        "offset_map": _fill_nearest(omap, filled, plan.rows, plan.cols),
    }
