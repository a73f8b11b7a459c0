"""Synthetic motion blur: kernels, regional blending, dataset round trip."""

import numpy as np
import pytest

from padeblur.errors import BlurSpecError, DataError
from padeblur.synth import (PATTERN_KINDS, BlurFieldSpec, BlurRegion,
                            degradation_map, format_spec, generate_dataset,
                            generate_pattern, load_dataset, make_linear_kernel,
                            parse_spec, random_spec, synthesize)


class TestKernels:
    def test_unit_length_is_identity(self):
        np.testing.assert_array_equal(make_linear_kernel(0.7, 1.0),
                                      np.ones((1, 1)))

    @pytest.mark.parametrize("angle", [0.0, 0.4, np.pi / 2, 2.1])
    @pytest.mark.parametrize("length", [2.0, 5.0, 7.5, 12.0])
    def test_normalized(self, angle, length):
        k = make_linear_kernel(angle, length)
        assert k.sum() == pytest.approx(1.0, abs=1e-12)
        assert k.shape[0] % 2 == 1 and k.shape[0] == k.shape[1]
        assert np.all(k >= 0)

    def test_horizontal_kernel_is_a_row(self):
        """angle=0 puts all mass on the central row, spread over ~length
        columns."""
        k = make_linear_kernel(0.0, 7.0)
        c = k.shape[0] // 2
        assert k[c].sum() == pytest.approx(1.0, abs=1e-12)
        assert np.count_nonzero(k[c]) == 7

    def test_angle_symmetry(self):
        """Rotating by pi flips the streak; the kernel mass is unchanged."""
        a = make_linear_kernel(0.3, 6.0)
        b = make_linear_kernel(0.3 + np.pi, 6.0)
        np.testing.assert_allclose(a, b[::-1, ::-1], atol=1e-10)

    def test_rejects_sub_unit_length(self):
        with pytest.raises(BlurSpecError):
            make_linear_kernel(0.0, 0.5)


class TestSynthesize:
    def test_identity_spec_returns_input(self):
        rng = np.random.default_rng(0)
        sharp = rng.random((3, 32, 32))
        out = synthesize(sharp, BlurFieldSpec([]))
        np.testing.assert_allclose(out.blurred, sharp, atol=1e-12)

    def test_constant_image_invariant(self):
        """Normalized kernels with edge-extension padding preserve flats."""
        sharp = np.full((3, 40, 40), 0.6)
        spec = BlurFieldSpec([BlurRegion((5, 5, 25, 25), 0.8, 9.0)],
                             bg_angle=0.2, bg_length=4.0)
        out = synthesize(sharp, spec)
        np.testing.assert_allclose(out.blurred, 0.6, atol=1e-10)

    def test_region_blur_is_local(self):
        """Pixels far from the blurred region are untouched."""
        rng = np.random.default_rng(1)
        sharp = rng.random((3, 48, 48))
        spec = BlurFieldSpec([BlurRegion((4, 4, 20, 20), 0.0, 9.0)])
        out = synthesize(sharp, spec)
        np.testing.assert_allclose(out.blurred[:, 30:, 30:],
                                   np.clip(sharp, 0, 1)[:, 30:, 30:],
                                   atol=1e-12)
        assert np.abs(out.blurred[:, 8:16, 8:16] - sharp[:, 8:16, 8:16]).max() > 0.05

    def test_blur_reduces_variance_inside_region(self):
        sharp = generate_pattern("checker", 64, 0)
        spec = BlurFieldSpec([BlurRegion((8, 8, 40, 40), 0.5, 11.0)])
        out = synthesize(sharp, spec)
        inner = (slice(None), slice(16, 32), slice(16, 32))
        assert out.blurred[inner].var() < 0.5 * sharp[inner].var()

    def test_overlap_rejected(self):
        spec = BlurFieldSpec([BlurRegion((0, 0, 10, 10), 0, 3),
                              BlurRegion((5, 5, 15, 15), 0, 3)])
        with pytest.raises(BlurSpecError):
            synthesize(np.zeros((3, 32, 32)), spec)

    def test_out_of_bounds_rejected(self):
        spec = BlurFieldSpec([BlurRegion((0, 0, 40, 10), 0, 3)])
        with pytest.raises(BlurSpecError):
            synthesize(np.zeros((3, 32, 32)), spec)


class TestDegradationMap:
    def test_values_and_crossfade(self):
        spec = BlurFieldSpec([BlurRegion((10, 10, 30, 30), 0.0, 9.0)],
                             bg_length=1.0)
        m = degradation_map(spec, (48, 48))
        assert m[20, 20] == pytest.approx(9.0)      # deep inside
        assert m[0, 0] == pytest.approx(1.0)        # background
        assert 1.0 < m[11, 20] < 9.0                # on the ramp
        assert m.shape == (48, 48)

    def test_matches_spec_lengths_everywhere(self):
        rng = np.random.default_rng(2)
        spec = random_spec(64, 64, rng)
        m = degradation_map(spec, (64, 64))
        lengths = [r.length for r in spec.regions] + [spec.bg_length]
        assert m.min() >= min(lengths) - 1e-9
        assert m.max() <= max(lengths) + 1e-9


class TestPatterns:
    @pytest.mark.parametrize("kind", PATTERN_KINDS)
    def test_shape_range_determinism(self, kind):
        a = generate_pattern(kind, 64, 7)
        b = generate_pattern(kind, 64, 7)
        assert a.shape == (3, 64, 64)
        assert a.min() >= 0 and a.max() <= 1
        np.testing.assert_array_equal(a, b)
        assert a.std() > 0.01  # actually textured

    def test_unknown_kind(self):
        with pytest.raises(DataError):
            generate_pattern("noise", 32, 0)


class TestSpecSerialization:
    @pytest.mark.parametrize("seed", range(5))
    def test_roundtrip(self, seed):
        rng = np.random.default_rng(seed)
        spec = random_spec(64, 64, rng)
        back = parse_spec(format_spec(spec))
        assert back.bg_angle == pytest.approx(spec.bg_angle, rel=1e-7)
        assert back.bg_length == pytest.approx(spec.bg_length, rel=1e-7)
        assert len(back.regions) == len(spec.regions)
        for a, b in zip(spec.regions, back.regions):
            assert tuple(b.box) == tuple(a.box)
            assert b.length == pytest.approx(a.length, rel=1e-7)

    def test_malformed_rejected(self):
        with pytest.raises(DataError):
            parse_spec("bg=1,2\nregions=one\n")
        with pytest.raises(DataError):
            parse_spec("no equals sign here")


class TestDataset:
    def test_generate_and_load_roundtrip(self, tmp_path):
        generate_dataset(tmp_path, 4, seed=3, size=32)
        data = load_dataset(tmp_path)
        assert len(data) == 4
        for s in data:
            assert s["sharp"].shape == (3, 32, 32)
            assert s["blur"].shape == (3, 32, 32)
            assert s["length_map"].shape == (32, 32)
            # the stored map agrees with one recomputed from the stored spec
            np.testing.assert_allclose(
                s["length_map"],
                degradation_map(s["spec"], (32, 32)).astype(np.float32),
                atol=1e-6)

    def test_deterministic_generation(self, tmp_path):
        generate_dataset(tmp_path / "a", 2, seed=9, size=32)
        generate_dataset(tmp_path / "b", 2, seed=9, size=32)
        a = load_dataset(tmp_path / "a")
        b = load_dataset(tmp_path / "b")
        for sa, sb in zip(a, b):
            np.testing.assert_array_equal(sa["blur"], sb["blur"])

    def test_heterogeneous_specs_have_strong_region(self):
        rng = np.random.default_rng(10)
        for _ in range(5):
            spec = random_spec(64, 64, rng, heterogeneous=True)
            assert len(spec.regions) == 1
            assert spec.regions[0].length >= 9
            assert spec.bg_length == 1.0

    def test_missing_dir_rejected(self, tmp_path):
        with pytest.raises(DataError):
            load_dataset(tmp_path)
