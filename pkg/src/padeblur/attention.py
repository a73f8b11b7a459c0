"""Linearized global attention and the quadratic reference.

The efficient path extracts a cluster of pooled global features with spatial
softmax maps, then redistributes them per pixel with channel softmax maps;
two sigmoid masks gate the spatial and channel dimensions. The naive
softmax(A B^T / sqrt(d_a)) C reference is test/bench-only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .autograd import Tensor, matmul, softmax_axis
from .flops import counter
from .nnops import conv1x1_flat


def _mat(rng, fan_in, shape):
    return Tensor(rng.normal(0, 1.0 / np.sqrt(fan_in), shape).astype(np.float32),
                  requires_grad=True)


class AttentionParams:
    """Weights of one linear-attention block.

    f_q / f_p are single 1x1 convolutions producing the C2 map channels; the
    spatial mask M_S is a 1-channel 1x1 conv + sigmoid, and the channel mask
    M_C is global-average-pool + 1x1 conv + sigmoid.
    """

    def __init__(self, channels: int, maps: int, rng: np.random.Generator):
        self.channels = channels
        self.maps = maps
        self.w_q = _mat(rng, channels, (maps, channels))
        self.b_q = Tensor(np.zeros(maps, np.float32), requires_grad=True)
        self.w_p = _mat(rng, channels, (maps, channels))
        self.b_p = Tensor(np.zeros(maps, np.float32), requires_grad=True)
        self.w_ms = _mat(rng, channels, (1, channels))
        self.b_ms = Tensor(np.zeros(1, np.float32), requires_grad=True)
        self.w_mc = _mat(rng, channels, (channels, channels))
        self.b_mc = Tensor(np.zeros(channels, np.float32), requires_grad=True)

    def parameters(self, prefix: str = "att") -> dict[str, Tensor]:
        return {f"{prefix}.{k}": getattr(self, k)
                for k in ("w_q", "b_q", "w_p", "b_p", "w_ms", "b_ms", "w_mc", "b_mc")}


@dataclass
class AttentionDiagnostics:
    q_maps: np.ndarray  # (C2, Lu) spatial attention maps, each sums to 1
    p_maps: np.ndarray  # (C2, L) pixelwise maps, each column sums to 1


def spatial_maps(x_u: Tensor, params: AttentionParams) -> Tensor:
    """Q: C2 spatial-softmax attention maps over the uniform feature."""
    return softmax_axis(conv1x1_flat(x_u, params.w_q, params.b_q), axis=1)


def pixel_maps(x_q: Tensor, params: AttentionParams) -> Tensor:
    """P: per-pixel channel-softmax over the C2 global features."""
    return softmax_axis(conv1x1_flat(x_q, params.w_p, params.b_p), axis=0)


def spatial_mask(x_u: Tensor, params: AttentionParams) -> Tensor:
    return ag.sigmoid(conv1x1_flat(x_u, params.w_ms, params.b_ms))


def channel_mask(x_u: Tensor, params: AttentionParams) -> Tensor:
    pooled = x_u.mean(axis=1, keepdims=True)
    return ag.sigmoid(matmul(params.w_mc, pooled) + params.b_mc.reshape(-1, 1))


def global_feature_extract(x_u: Tensor, params: AttentionParams,
                           masked: bool = True) -> Tensor:
    """Step 1: pool C2 masked global features, (C, Lu) -> (C, C2)."""
    q = spatial_maps(x_u, params)
    content = spatial_mask(x_u, params) * x_u if masked else x_u
    with counter.scope("attn_core"):
        return matmul(content, q.T)


def global_feature_distribute(xbar_u: Tensor, x_q: Tensor,
                              params: AttentionParams,
                              masked: bool = True, mask_input: Tensor | None = None) -> Tensor:
    """Step 2: per-pixel mix of the global features, (C, C2) x (C, L) -> (C, L)."""
    p = pixel_maps(x_q, params)
    with counter.scope("attn_core"):
        y = matmul(xbar_u, p)
    if masked:
        y = channel_mask(mask_input if mask_input is not None else x_q, params) * y
    return y


def linear_attention(x_u: Tensor, x_q: Tensor, params: AttentionParams,
                     masked: bool = True,
                     collect: bool = False):
    """Full two-step attention; x_q is the (possibly non-uniform) query feature."""
    xbar = global_feature_extract(x_u, params, masked=masked)
    y = global_feature_distribute(xbar, x_q, params, masked=masked, mask_input=x_u)
    if collect:
        diag = AttentionDiagnostics(spatial_maps(x_u, params).data.copy(),
                                    pixel_maps(x_q, params).data.copy())
        return y, diag
    return y


def cross_attention(source: Tensor, controller: Tensor,
                    params: AttentionParams, masked: bool = True) -> Tensor:
    """Attend content from `source` with maps and masks from `controller`."""
    q = spatial_maps(controller, params)
    content = spatial_mask(controller, params) * source if masked else source
    with counter.scope("attn_core"):
        xbar = matmul(content, q.T)
    p = pixel_maps(controller, params)
    with counter.scope("attn_core"):
        y = matmul(xbar, p)
    if masked:
        y = channel_mask(controller, params) * y
    return y


class NaiveAttentionParams:
    """Projection matrices of the quadratic reference (query/key/value)."""

    def __init__(self, channels: int, d_a: int, d_c: int, rng: np.random.Generator):
        self.d_a = d_a
        self.d_c = d_c
        self.w_a = _mat(rng, channels, (channels, d_a))
        self.w_b = _mat(rng, channels, (channels, d_a))
        self.w_c = _mat(rng, channels, (channels, d_c))


def naive_self_attention(z: Tensor, params: NaiveAttentionParams) -> Tensor:
    """O = softmax(A B^T / sqrt(d_a)) C with an explicit (HW, HW) intermediate."""
    a = matmul(z, params.w_a)
    b = matmul(z, params.w_b)
    c = matmul(z, params.w_c)
    with counter.scope("attn_core"):
        scores = matmul(a, b.T) * (1.0 / np.sqrt(params.d_a))
        weights = softmax_axis(scores, axis=1)
        return matmul(weights, c)


def attention_flops(H: int, W: int, r: int, C: int, C2: int,
                    d_a: int, d_c: int) -> dict[str, int]:
    """Analytic multiply-add counts at the block's operating resolution."""
    hw = (H // r) * (W // r)
    return {
        "naive": 2 * d_a * hw * hw + 2 * d_c * hw * hw,
        "linear": 2 * C * C2 * hw + 2 * C * C2 * hw,
    }
