"""Linear attention: loop oracles, reordering equivalence, masks, FLOPs."""

import numpy as np
import pytest

from padeblur.attention import (AttentionParams, NaiveAttentionParams,
                                attention_flops, channel_mask, cross_attention,
                                global_feature_distribute,
                                global_feature_extract, linear_attention,
                                naive_self_attention, pixel_maps, spatial_maps,
                                spatial_mask)
from padeblur.autograd import Tensor, finite_difference_check


def make_params(rng, C=6, C2=4, f64=True):
    p = AttentionParams(C, C2, rng)
    if f64:
        for t in vars(p).values():
            if isinstance(t, Tensor):
                t.data = t.data.astype(np.float64)
    return p


def feat(rng, C=6, L=20):
    return Tensor(rng.standard_normal((C, L)))


class TestMaps:
    def test_spatial_maps_sum_to_one_over_pixels(self):
        rng = np.random.default_rng(0)
        q = spatial_maps(feat(rng), make_params(rng))
        np.testing.assert_allclose(q.data.sum(axis=1), np.ones(4), atol=1e-12)

    def test_pixel_maps_sum_to_one_over_clusters(self):
        rng = np.random.default_rng(1)
        p = pixel_maps(feat(rng), make_params(rng))
        np.testing.assert_allclose(p.data.sum(axis=0), np.ones(20), atol=1e-12)

    def test_masks_in_unit_interval(self):
        rng = np.random.default_rng(2)
        params = make_params(rng)
        x = feat(rng)
        ms = spatial_mask(x, params).data
        mc = channel_mask(x, params).data
        assert ms.shape == (1, 20) and mc.shape == (6, 1)
        assert np.all((ms > 0) & (ms < 1)) and np.all((mc > 0) & (mc < 1))


class TestLoopOracles:
    def test_extract_matches_per_map_loop(self):
        """Each pooled feature is the map-weighted sum over masked pixels."""
        rng = np.random.default_rng(3)
        params = make_params(rng)
        x = feat(rng)
        xbar = global_feature_extract(x, params).data
        q = spatial_maps(x, params).data
        ms = spatial_mask(x, params).data
        expect = np.zeros_like(xbar)
        for k in range(4):
            for j in range(20):
                expect[:, k] += q[k, j] * ms[0, j] * x.data[:, j]
        np.testing.assert_allclose(xbar, expect, atol=1e-12)

    def test_distribute_matches_per_pixel_loop(self):
        """Each output pixel mixes the C2 global features by its channel softmax."""
        rng = np.random.default_rng(4)
        params = make_params(rng)
        x = feat(rng)
        xbar = global_feature_extract(x, params)
        y = global_feature_distribute(xbar, x, params, mask_input=x).data
        p = pixel_maps(x, params).data
        mc = channel_mask(x, params).data
        expect = np.zeros_like(y)
        for j in range(20):
            for k in range(4):
                expect[:, j] += p[k, j] * xbar.data[:, k]
            expect[:, j] *= mc[:, 0]
        np.testing.assert_allclose(y, expect, atol=1e-12)

    def test_naive_matches_per_row_softmax_loop(self):
        rng = np.random.default_rng(5)
        params = NaiveAttentionParams(6, 5, 4, rng)
        for t in (params.w_a, params.w_b, params.w_c):
            t.data = t.data.astype(np.float64)
        z = Tensor(rng.standard_normal((12, 6)))
        out = naive_self_attention(z, params).data
        a = z.data @ params.w_a.data
        b = z.data @ params.w_b.data
        c = z.data @ params.w_c.data
        s = a @ b.T / np.sqrt(5)
        w = np.exp(s - s.max(axis=1, keepdims=True))
        w /= w.sum(axis=1, keepdims=True)
        np.testing.assert_allclose(out, w @ c, atol=1e-12)


class TestReordering:
    @pytest.mark.parametrize("seed", range(4))
    def test_two_step_equals_reordered_product(self, seed):
        """Unmasked: (X Qᵀ) P == X (Qᵀ P), associativity of the linear path."""
        rng = np.random.default_rng(seed)
        params = make_params(rng)
        x = feat(rng)
        two_step = linear_attention(x, x, params, masked=False).data
        q = spatial_maps(x, params).data
        p = pixel_maps(x, params).data
        reordered = x.data @ (q.T @ p)
        np.testing.assert_allclose(two_step, reordered, atol=1e-10)

    def test_masked_differs_from_unmasked(self):
        rng = np.random.default_rng(11)
        params = make_params(rng)
        x = feat(rng)
        a = linear_attention(x, x, params, masked=True).data
        b = linear_attention(x, x, params, masked=False).data
        assert np.abs(a - b).max() > 1e-6


class TestCrossAttention:
    def test_controller_supplies_maps(self):
        """Replacing the source content changes the output linearly; the
        maps/masks stay pinned to the controller."""
        rng = np.random.default_rng(12)
        params = make_params(rng)
        ctrl = feat(rng)
        s1, s2 = feat(rng), feat(rng)
        y1 = cross_attention(s1, ctrl, params).data
        y2 = cross_attention(s2, ctrl, params).data
        y12 = cross_attention(Tensor(s1.data + s2.data), ctrl, params).data
        np.testing.assert_allclose(y12, y1 + y2, atol=1e-10)

    def test_self_case_matches_linear_attention(self):
        rng = np.random.default_rng(13)
        params = make_params(rng)
        x = feat(rng)
        np.testing.assert_allclose(cross_attention(x, x, params).data,
                                   linear_attention(x, x, params).data,
                                   atol=1e-12)


class TestGradients:
    def test_linear_attention_fd(self):
        rng = np.random.default_rng(14)
        params = make_params(rng, C=4, C2=3)
        x = Tensor(rng.standard_normal((4, 10)), requires_grad=True)
        for t in vars(params).values():
            if isinstance(t, Tensor):
                t.requires_grad = True
        tensors = [x] + [t for t in vars(params).values() if isinstance(t, Tensor)]
        err = finite_difference_check(
            lambda x, *ps: linear_attention(x, x, params), tensors, rng=rng)
        assert err < 1e-5

    def test_naive_attention_fd(self):
        rng = np.random.default_rng(15)
        params = NaiveAttentionParams(4, 3, 3, rng)
        for t in (params.w_a, params.w_b, params.w_c):
            t.data = t.data.astype(np.float64)
            t.requires_grad = True
        z = Tensor(rng.standard_normal((8, 4)), requires_grad=True)
        err = finite_difference_check(
            lambda z, *ps: naive_self_attention(z, params),
            [z, params.w_a, params.w_b, params.w_c], rng=rng)
        assert err < 1e-5


class TestFlops:
    def test_analytic_ratio(self):
        """naive/linear == (d_a+d_c)·HW / (2·C·C2) exactly."""
        for side in (16, 32, 64):
            f = attention_flops(side, side, 1, 16, 16, 16, 16)
            hw = side * side
            assert f["naive"] * 2 * 16 * 16 == f["linear"] * (16 + 16) * hw

    def test_reference_point(self):
        f = attention_flops(64, 64, 1, 16, 16, 16, 16)
        assert f["naive"] // f["linear"] == 256
