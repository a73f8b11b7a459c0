"""Restoration quality metrics: PSNR, SSIM, and a rank-correlation helper."""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import stats

from .errors import ShapeError

LUMA = np.array([0.299, 0.587, 0.114])
SSIM_WINDOW = 8
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB for [0,1] images, capped at 100."""
    if a.shape != b.shape:
        raise ShapeError(f"psnr shapes differ: {a.shape} vs {b.shape}")
    mse = float(np.mean((a.astype(np.float64) - b.astype(np.float64)) ** 2))
    if mse < 1e-10:
        return 100.0
    return min(100.0, 10.0 * np.log10(1.0 / mse))


def to_luma(img: np.ndarray) -> np.ndarray:
    """(3,H,W) or (H,W) -> grayscale (H,W)."""
    if img.ndim == 2:
        return img.astype(np.float64)
    if img.ndim == 3 and img.shape[0] == 3:
        return np.tensordot(LUMA, img.astype(np.float64), axes=1)
    raise ShapeError(f"expected (3,H,W) or (H,W) image, got {img.shape}")


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean local SSIM over 8x8 windows, stride 1, on the luma channel."""
    if a.shape != b.shape:
        raise ShapeError(f"ssim shapes differ: {a.shape} vs {b.shape}")
    x = to_luma(a)
    y = to_luma(b)
    w = SSIM_WINDOW
    if x.shape[0] < w or x.shape[1] < w:
        raise ShapeError(f"image {x.shape} smaller than {w}x{w} SSIM window")
    xw = sliding_window_view(x, (w, w)).reshape(-1, w * w)
    yw = sliding_window_view(y, (w, w)).reshape(-1, w * w)
    mx = xw.mean(axis=1)
    my = yw.mean(axis=1)
    vx = xw.var(axis=1)
    vy = yw.var(axis=1)
    cov = (xw * yw).mean(axis=1) - mx * my
    s = ((2 * mx * my + SSIM_C1) * (2 * cov + SSIM_C2)) / (
        (mx ** 2 + my ** 2 + SSIM_C1) * (vx + vy + SSIM_C2))
    return float(s.mean())


def spearman(a: np.ndarray, b: np.ndarray) -> float:
    """Spearman rank correlation between two flattened arrays."""
    r, _ = stats.spearmanr(np.ravel(a), np.ravel(b))
    return float(r)
