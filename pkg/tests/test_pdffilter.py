"""Pixel-dependent filtering: degeneracy, oracles, clamps, sharing."""

import numpy as np
import pytest

from padeblur.autograd import Tensor, finite_difference_check
from padeblur.nnops import conv2d
from padeblur.pdffilter import (PixelFilterParams, generate_filter_diagnostics,
                                kernel_values, offsets, pdf_apply_nonuniform,
                                pdf_apply_uniform)
from padeblur.sampler import uniform_plan


def make_params(rng, C=3, K=3, f64=True):
    p = PixelFilterParams(C, K, 4.0, rng)
    if f64:
        for name in ("w_ker", "b_ker", "w_off", "b_off", "w_fix"):
            t = getattr(p, name)
            t.data = t.data.astype(np.float64)
    return p


def identity_overrides(K, L, dtype=np.float64):
    v = Tensor(np.ones((K * K, L), dtype))
    d = Tensor(np.zeros((2, K * K, L), dtype))
    return v, d


class TestDegeneracy:
    @pytest.mark.parametrize("K", [3, 5])
    def test_equals_standard_conv_f64(self, K):
        """V==1, zero offsets: identical to conv2d in the interior, and equal
        up to padding convention only at the border (both read zeros)."""
        rng = np.random.default_rng(K)
        p = make_params(rng, K=K)
        x = Tensor(rng.standard_normal((3, 12, 13)))
        v, d = identity_overrides(K, 12 * 13)
        y = pdf_apply_uniform(x, p, v=v, delta=d)
        ref = conv2d(x, Tensor(p.w_fix.data))
        np.testing.assert_allclose(y.data, ref.data, atol=1e-12)

    def test_equals_standard_conv_f32(self):
        rng = np.random.default_rng(5)
        p = PixelFilterParams(3, 5, 4.0, rng)
        x = Tensor(rng.standard_normal((3, 16, 16)).astype(np.float32))
        v, d = identity_overrides(5, 256, np.float32)
        y = pdf_apply_uniform(x, p, v=v, delta=d)
        ref = conv2d(x, Tensor(p.w_fix.data))
        assert np.abs(y.data - ref.data).max() < 1e-5

    def test_zero_weights_give_v_one(self):
        """The learned V parameterization hits the degenerate case exactly
        when its conv weights are zero."""
        rng = np.random.default_rng(6)
        p = make_params(rng)
        p.w_ker.data[:] = 0
        p.b_ker.data[:] = 0
        v = kernel_values(Tensor(rng.standard_normal((3, 9))), p)
        np.testing.assert_array_equal(v.data, np.ones((9, 9)))


class TestLoopOracle:
    def test_random_v_delta_fractional(self):
        """Full per-pixel loop: gather K^2 bilinear taps, scale by V, reduce
        with W — against the factored implementation."""
        rng = np.random.default_rng(7)
        K, C, H, W = 3, 2, 9, 10
        p = make_params(rng, C=C, K=K)
        x = rng.standard_normal((C, H, W))
        plan = uniform_plan(H, W, 1)
        L = H * W
        v = rng.standard_normal((K * K, L))
        d = rng.uniform(-1.5, 1.5, (2, K * K, L))
        y = pdf_apply_nonuniform(Tensor(x), plan, p, v=Tensor(v), delta=Tensor(d))

        def tap(ch, r, c):
            r0, c0 = int(np.floor(r)), int(np.floor(c))
            out = 0.0
            for dr in (0, 1):
                for dc in (0, 1):
                    rr, cc = r0 + dr, c0 + dc
                    if 0 <= rr < H and 0 <= cc < W:
                        wgt = ((r - r0) if dr else (1 - (r - r0))) * \
                              ((c - c0) if dc else (1 - (c - c0)))
                        out += wgt * x[ch, rr, cc]
            return out

        half = K // 2
        w2 = p.w_fix.data.reshape(C, C, K * K)
        expect = np.zeros((C, L))
        for l in range(L):
            pr, pc = plan.rows[l], plan.cols[l]
            for t in range(K * K):
                ty = pr + (t // K - half) + d[0, t, l]
                tx = pc + (t % K - half) + d[1, t, l]
                for o in range(C):
                    for c in range(C):
                        expect[o, l] += w2[o, c, t] * v[t, l] * tap(c, ty, tx)
        np.testing.assert_allclose(y.data, expect, atol=1e-10)

    def test_integer_shift_property(self):
        """A uniform +1 column offset reproduces the conv of the shifted
        image (interior pixels)."""
        rng = np.random.default_rng(8)
        K, H, W = 3, 10, 10
        p = make_params(rng, K=K)
        x = rng.standard_normal((3, H, W))
        L = H * W
        v = Tensor(np.ones((K * K, L)))
        d = np.zeros((2, K * K, L))
        d[1] = 1.0
        y = pdf_apply_uniform(Tensor(x), p, v=v, delta=Tensor(d))
        shifted = np.zeros_like(x)
        shifted[:, :, :-1] = x[:, :, 1:]
        ref = conv2d(Tensor(shifted), Tensor(p.w_fix.data))
        np.testing.assert_allclose(y.data[:, 2:-2, 2:-3], ref.data[:, 2:-2, 2:-3],
                                   atol=1e-10)


class TestPredictions:
    def test_offsets_respect_clamp(self):
        rng = np.random.default_rng(9)
        p = make_params(rng)
        p.w_off.data = rng.standard_normal(p.w_off.data.shape) * 50  # saturate
        x = Tensor(rng.standard_normal((3, 40)))
        d = offsets(x, p)
        assert d.shape == (2, 9, 40)
        assert np.abs(d.data).max() <= 4.0

    def test_kernel_values_bounded_and_shared(self):
        """V lies in (0, 2) and is one (K^2, L) map shared by all channels."""
        rng = np.random.default_rng(10)
        p = make_params(rng)
        v = kernel_values(Tensor(rng.standard_normal((3, 25))), p)
        assert v.shape == (9, 25)
        assert np.all((v.data > 0) & (v.data < 2))


class TestGradients:
    def test_full_path_fd(self):
        rng = np.random.default_rng(11)
        p = make_params(rng, C=2, K=3)
        x = Tensor(rng.standard_normal((2, 7, 7)), requires_grad=True)
        names = ("w_ker", "b_ker", "w_off", "b_off", "w_fix")
        for n in names:
            getattr(p, n).requires_grad = True
        plan = uniform_plan(7, 7, 2)
        tensors = [x] + [getattr(p, n) for n in names]
        err = finite_difference_check(
            lambda x, *ps: pdf_apply_nonuniform(x, plan, p), tensors, rng=rng)
        assert err < 1e-4


class TestDiagnostics:
    def test_maps_cover_grid(self):
        rng = np.random.default_rng(12)
        p = make_params(rng, f64=False)
        x = Tensor(rng.standard_normal((3, 8, 8)).astype(np.float32))
        plan = uniform_plan(8, 8, 2)
        maps = generate_filter_diagnostics(p, x, plan)
        assert maps["V_variance_map"].shape == (8, 8)
        assert maps["offset_map"].shape == (8, 8)
        assert np.all(np.isfinite(maps["V_variance_map"]))
