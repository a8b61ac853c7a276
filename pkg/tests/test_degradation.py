import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from faceqa.degradation import (
    IDENTITY_KERNEL,
    IDENTITY_PARAMS,
    DegradationParams,
    DegradationRanges,
    Kernel,
    degrade,
    gaussian_kernel,
    motion_kernel,
    per_image_seed,
    sample_params,
)
from faceqa.errors import DomainError, ParameterError
from faceqa.facedata import DOMAIN_BYTE, DOMAIN_UNIT, ROLE_HQ, ROLE_LQ, ImageBuffer


def _img(arr):
    return ImageBuffer(arr, DOMAIN_BYTE, ROLE_HQ)


def _random_face_like(seed, res=64):
    rng = np.random.default_rng(seed)
    return _img(rng.integers(0, 256, (res, res, 3), dtype=np.uint8))


class TestKernelType:
    def test_identity_kernel(self):
        assert IDENTITY_KERNEL.size == 1
        assert IDENTITY_KERNEL.is_identity
        assert IDENTITY_KERNEL.weights[0, 0] == 1.0

    def test_rejects_even_size(self):
        with pytest.raises(ParameterError):
            Kernel(np.full((2, 2), 0.25))

    def test_rejects_negative_weights(self):
        w = np.full((3, 3), 1 / 9.0)
        w[0, 0] = -w[0, 0]
        w[1, 1] += 2 / 9.0
        with pytest.raises(ParameterError):
            Kernel(w)

    def test_rejects_bad_mass(self):
        with pytest.raises(ParameterError):
            Kernel(np.full((3, 3), 0.2))


class TestGaussianKernel:
    def test_single_tap(self):
        k = gaussian_kernel(1, 3.7)
        assert np.array_equal(k.weights, [[1.0]])

    def test_symmetry_and_center_max(self):
        w = gaussian_kernel(3, 0.5).weights
        assert np.allclose(w, w.T)
        assert np.allclose(w, w[::-1, ::-1])
        assert w[1, 1] == w.max()

    def test_3x3_sigma_half_frozen_values(self):
        # closed form: w(d) = exp(-d^2 / (2 * 0.25)) on offsets {-1,0,1},
        # normalized.  Exact values frozen below.
        e2, e4 = math.exp(-2.0), math.exp(-4.0)
        s = 1.0 + 4.0 * e2 + 4.0 * e4
        expected = np.array([
            [e4, e2, e4],
            [e2, 1.0, e2],
            [e4, e2, e4],
        ]) / s
        got = gaussian_kernel(3, 0.5).weights
        assert np.allclose(got, expected, rtol=0, atol=1e-15)
        assert got[1, 1] == pytest.approx(0.6193470305571773, abs=1e-15)
        assert got[0, 1] == pytest.approx(0.0838195058022106, abs=1e-15)
        assert got[0, 0] == pytest.approx(0.011343736558495071, abs=1e-15)

    def test_rejects_bad_args(self):
        with pytest.raises(ParameterError):
            gaussian_kernel(4, 1.0)
        with pytest.raises(ParameterError):
            gaussian_kernel(3, 0.0)


class TestMotionKernel:
    def test_length_one_is_identity(self):
        assert motion_kernel(1, 37.0).is_identity

    def test_horizontal_line_on_center_row(self):
        w = motion_kernel(5, 0.0).weights
        nz_rows = np.flatnonzero(w.sum(axis=1))
        assert nz_rows.tolist() == [2]
        assert np.count_nonzero(w[2]) == 5

    def test_vertical_is_transpose_of_horizontal(self):
        h = motion_kernel(5, 0.0).weights
        v = motion_kernel(5, 90.0).weights
        assert np.array_equal(v, h.T)

    def test_rejects_zero_length(self):
        with pytest.raises(ParameterError):
            motion_kernel(0, 0.0)

    def test_even_length_pads_to_odd(self):
        assert motion_kernel(6, 30.0).size == 7


@given(
    size=st.sampled_from([1, 3, 5, 7, 13]),
    sigma=st.floats(min_value=0.2, max_value=8.0),
)
@settings(max_examples=40, deadline=None)
def test_gaussian_kernel_mass(size, sigma):
    w = gaussian_kernel(size, sigma).weights
    assert abs(float(w.sum()) - 1.0) <= 1e-9
    assert float(w.min()) >= 0.0


@given(
    length=st.integers(min_value=1, max_value=15),
    angle=st.floats(min_value=0.0, max_value=180.0),
)
@settings(max_examples=40, deadline=None)
def test_motion_kernel_mass(length, angle):
    w = motion_kernel(length, angle).weights
    assert abs(float(w.sum()) - 1.0) <= 1e-9
    assert float(w.min()) >= 0.0


class TestParams:
    def test_validation(self):
        with pytest.raises(ParameterError):
            DegradationParams(IDENTITY_KERNEL, 0.0, 0.0, None, 0)
        with pytest.raises(ParameterError):
            DegradationParams(IDENTITY_KERNEL, 0.5, -1.0, None, 0)
        with pytest.raises(ParameterError):
            DegradationParams(IDENTITY_KERNEL, 0.5, 0.0, 0, 0)

    def test_json_roundtrip(self, rng):
        p = sample_params(rng)
        d = json.loads(json.dumps(p.to_json_dict()))
        q = DegradationParams.from_json_dict(d)
        assert np.array_equal(q.kernel.weights, p.kernel.weights)
        assert (q.scale_r, q.noise_sigma, q.jpeg_q, q.seed) == (
            p.scale_r, p.noise_sigma, p.jpeg_q, p.seed)


class TestSampleParams:
    def test_ranges_respected(self):
        rng = np.random.default_rng(11)
        ranges = DegradationRanges()
        for _ in range(500):
            p = sample_params(rng, ranges)
            assert 0.4 <= p.scale_r < 0.9
            assert 50.0 <= p.noise_sigma < 250.0
            assert 5 <= p.jpeg_q < 50
            assert p.kernel.size in (13,) or 5 <= p.kernel.size <= 15 + 1

    def test_both_kernel_families_appear(self):
        rng = np.random.default_rng(2)
        sizes = {sample_params(rng).kernel.size for _ in range(60)}
        assert 13 in sizes          # gaussian taps
        assert any(s != 13 for s in sizes)  # motion lengths

    def test_deterministic_sequence(self):
        a = [sample_params(np.random.default_rng(5)).to_json_dict() for _ in range(1)]
        b = [sample_params(np.random.default_rng(5)).to_json_dict() for _ in range(1)]
        assert a == b

    def test_no_jpeg_flag(self):
        rng = np.random.default_rng(0)
        p = sample_params(rng, DegradationRanges(use_jpeg=False))
        assert p.jpeg_q is None

    def test_explicit_seed_passthrough(self, rng):
        assert sample_params(rng, seed=123).seed == 123


class TestDegrade:
    def test_identity_params_are_identity(self):
        img = _random_face_like(0)
        out = degrade(img, IDENTITY_PARAMS)
        assert np.array_equal(out.data, img.data)
        assert out.role == ROLE_LQ

    def test_deterministic(self, rng):
        img = _random_face_like(1)
        p = sample_params(rng)
        a = degrade(img, p)
        b = degrade(img, p)
        assert np.array_equal(a.data, b.data)

    def test_seed_changes_noise(self):
        img = _random_face_like(2)
        base = dict(kernel=IDENTITY_KERNEL, scale_r=1.0, noise_sigma=30.0, jpeg_q=None)
        a = degrade(img, DegradationParams(seed=1, **base))
        b = degrade(img, DegradationParams(seed=2, **base))
        assert not np.array_equal(a.data, b.data)

    def test_shape_and_domain_preserved(self, rng):
        img = _random_face_like(3, res=32)
        out = degrade(img, sample_params(rng))
        assert out.data.shape == img.data.shape
        assert out.domain == DOMAIN_BYTE

    def test_wrong_domain_rejected(self):
        unit = ImageBuffer(np.zeros((8, 8, 3), np.float32), DOMAIN_UNIT, ROLE_HQ)
        with pytest.raises(DomainError):
            degrade(unit, IDENTITY_PARAMS)

    def test_noise_variance_monte_carlo(self):
        # constant-128 input, sigma=25: clipping is negligible, so the
        # per-pixel MSE against the source should track sigma^2
        img = _img(np.full((32, 32, 3), 128, dtype=np.uint8))
        sigma = 25.0
        se_sum = count = 0
        for seed in range(100):
            p = DegradationParams(IDENTITY_KERNEL, 1.0, sigma, None, seed)
            out = degrade(img, p).data.astype(np.float64)
            se_sum += float(((out - 128.0) ** 2).sum())
            count += out.size
        mse = se_sum / count
        assert abs(mse - sigma ** 2) <= 0.15 * sigma ** 2

    def test_jpeg_stage_changes_pixels(self):
        img = _random_face_like(4)
        p = DegradationParams(IDENTITY_KERNEL, 1.0, 0.0, 5, 0)
        out = degrade(img, p)
        assert not np.array_equal(out.data, img.data)

    def test_blur_reduces_variance(self):
        img = _random_face_like(5)
        p = DegradationParams(gaussian_kernel(13, 3.0), 1.0, 0.0, None, 0)
        out = degrade(img, p)
        assert out.data.astype(np.float64).var() < img.data.astype(np.float64).var()


class TestPerImageSeed:
    def test_distinct_indices_distinct_seeds(self):
        seeds = {per_image_seed(42, i) for i in range(1000)}
        assert len(seeds) == 1000

    def test_range(self):
        for i in (0, 7, 10 ** 6):
            s = per_image_seed(2 ** 62 + 11, i)
            assert 0 <= s < 2 ** 63

    def test_index_zero_is_master(self):
        assert per_image_seed(99, 0) == 99
