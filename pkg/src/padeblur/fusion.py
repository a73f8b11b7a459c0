"""Attentive fusion of the attention and filtering branches."""

from __future__ import annotations

import numpy as np

from . import autograd as ag
from .autograd import Tensor, make_op
from .errors import ShapeError
from .nnops import conv1x1_flat


class FusionParams:
    """Single 1x1 conv producing the one-channel fusion mask."""

    def __init__(self, channels: int, rng: np.random.Generator):
        self.w = Tensor(rng.normal(0, 1.0 / np.sqrt(channels),
                                   (1, channels)).astype(np.float32),
                        requires_grad=True)
        self.b = Tensor(np.zeros(1, np.float32), requires_grad=True)

    def parameters(self, prefix: str = "fus") -> dict[str, Tensor]:
        return {f"{prefix}.w": self.w, f"{prefix}.b": self.b}


def fusion_mask(x_in: Tensor, params: FusionParams) -> Tensor:
    """M_fus in (0,1), one value per pixel, from the block input."""
    return ag.sigmoid(conv1x1_flat(x_in, params.w, params.b))


def fuse(x_in: Tensor, y_att: Tensor, y_dyn: Tensor, params: FusionParams) -> Tensor:
    """Convex per-pixel blend: M * y_att + (1 - M) * y_dyn.

    All inputs are (C, L) flattened features; the mask broadcasts over
    channels.
    """
    if y_att.shape != y_dyn.shape:
        raise ShapeError(f"branch shapes differ: {y_att.shape} vs {y_dyn.shape}")
    if x_in.shape[1] != y_att.shape[1]:
        raise ShapeError(f"mask input has {x_in.shape[1]} pixels, branches {y_att.shape[1]}")
    m = fusion_mask(x_in, params)
    # single fused node: y_dyn + m * (y_att - y_dyn)
    diff = y_att.data - y_dyn.data
    data = y_dyn.data + m.data * diff

    def vjp(g):
        return g * m.data, g * (1.0 - m.data), (g * diff).sum(axis=0, keepdims=True)

    return make_op(data, (y_att, y_dyn, m), vjp, "fuse_blend")
