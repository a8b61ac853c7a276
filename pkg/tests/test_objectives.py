import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from faceqa.errors import ParameterError, ShapeError, UnsupportedHeadError
from faceqa.networks import HEAD_PER_PIXEL, HEAD_SINGLE_OUTPUT
from faceqa.objectives import (
    LossWeights,
    adv_d_loss,
    adv_g_loss,
    perceptual_loss,
    pixel_loss,
    realness_loss,
    total_g_loss,
)

TOL = 1e-6


def _const(value, shape=(2, 1, 4, 4)):
    return torch.full(shape, float(value))


class TestAdvG:
    def test_perfect_fool_is_zero(self):
        assert float(adv_g_loss(_const(1.0))) == pytest.approx(0.0, abs=TOL)

    def test_fully_detected_is_one(self):
        assert float(adv_g_loss(_const(0.0))) == pytest.approx(1.0, abs=TOL)

    def test_halfway(self):
        assert float(adv_g_loss(_const(0.5))) == pytest.approx(0.25, abs=TOL)

    def test_empty_rejected(self):
        with pytest.raises(ParameterError):
            adv_g_loss(torch.zeros(0, 1, 4, 4))

    @given(st.floats(min_value=0.0, max_value=1.0))
    @settings(max_examples=30, deadline=None)
    def test_constant_map_closed_form(self, v):
        d = torch.full((2, 1, 4, 4), v, dtype=torch.float64)
        assert float(adv_g_loss(d)) == pytest.approx((v - 1.0) ** 2, abs=1e-12)


class TestPixel:
    def test_identical_images_zero(self):
        x = torch.randn(2, 3, 8, 8)
        assert float(pixel_loss(x, x)) == pytest.approx(0.0, abs=TOL)

    def test_constant_offset(self):
        x = torch.zeros(2, 3, 8, 8)
        assert float(pixel_loss(x + 0.5, x)) == pytest.approx(0.25, abs=TOL)

    def test_unsquared_is_per_image_norm(self):
        a = torch.zeros(2, 3, 4, 4)
        b = a.clone()
        b[0] += 1.0  # image 0 differs by 1 everywhere: norm sqrt(48)
        got = float(pixel_loss(b, a, squared=False))
        assert got == pytest.approx(np.sqrt(48.0) / 2.0, abs=TOL)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            pixel_loss(torch.zeros(1, 3, 4, 4), torch.zeros(1, 3, 8, 8))

    @given(st.floats(min_value=-2.0, max_value=2.0))
    @settings(max_examples=30, deadline=None)
    def test_offset_closed_form(self, c):
        x = torch.zeros(1, 3, 4, 4, dtype=torch.float64)
        assert float(pixel_loss(x + c, x)) == pytest.approx(c * c, abs=1e-12)


class _FakeFeat:
    """Stand-in feature extractor: identity and a 2x copy."""

    def __call__(self, x):
        return [x, 2.0 * x]


class TestPerceptual:
    def test_identical_zero(self):
        x = torch.randn(2, 3, 8, 8)
        assert float(perceptual_loss(x, x, _FakeFeat())) == pytest.approx(0.0, abs=TOL)

    def test_stage_sum(self):
        a = torch.zeros(1, 3, 4, 4)
        b = a + 1.0
        # stage 1 mean |diff| = 1, stage 2 mean |2 diff| = 2
        assert float(perceptual_loss(b, a, _FakeFeat())) == pytest.approx(3.0, abs=TOL)

    def test_symmetry(self):
        a = torch.randn(1, 3, 8, 8)
        b = torch.randn(1, 3, 8, 8)
        f = _FakeFeat()
        assert float(perceptual_loss(a, b, f)) == pytest.approx(
            float(perceptual_loss(b, a, f)), abs=1e-12)

    def test_real_extractor_zero_on_same_input(self):
        from faceqa.networks import NetConfig, build_feature_extractor

        cfg = NetConfig(resolution=32, base_width=8, depth_down=3, depth_up=4,
                        disc_base_width=16, disc_depth=3, feat_width=8)
        feat = build_feature_extractor(cfg)
        x = torch.randn(1, 3, 32, 32)
        assert float(perceptual_loss(x, x, feat)) == pytest.approx(0.0, abs=TOL)

    def test_empty_stage_list_rejected(self):
        with pytest.raises(ParameterError):
            perceptual_loss(torch.zeros(1, 3, 4, 4), torch.zeros(1, 3, 4, 4),
                            lambda t: [])


class TestAdvD:
    def test_perfect_discrimination_zero(self):
        target = torch.ones(2, 1, 4, 4)
        got = adv_d_loss(target.clone(), target, _const(0.0))
        assert float(got) == pytest.approx(0.0, abs=TOL)

    def test_masked_target_residual(self):
        # D says 1 everywhere but target is 1 only on a half mask: the
        # real term contributes the off-mask fraction
        target = torch.zeros(1, 1, 4, 4)
        target[..., :2, :] = 1.0
        got = adv_d_loss(_const(1.0, (1, 1, 4, 4)), target, _const(0.0))
        assert float(got) == pytest.approx(0.5, abs=TOL)

    def test_fake_fooling_costs_quarter(self):
        target = torch.ones(1, 1, 4, 4)
        got = adv_d_loss(target.clone(), target, _const(0.5, (1, 1, 4, 4)))
        assert float(got) == pytest.approx(0.25, abs=TOL)

    def test_nonbinary_target_rejected(self):
        with pytest.raises(ParameterError):
            adv_d_loss(_const(0.5), _const(0.5), _const(0.5))

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ShapeError):
            adv_d_loss(_const(1.0), torch.ones(2, 1, 8, 8), _const(0.0))

    def test_empty_pool_rejected(self):
        with pytest.raises(ParameterError):
            adv_d_loss(torch.ones(0, 1, 4, 4), torch.ones(0, 1, 4, 4),
                       _const(0.0))


class TestTotal:
    def test_zero_components(self):
        assert float(total_g_loss(torch.tensor(0.0), torch.tensor(0.0),
                                  torch.tensor(0.0))) == 0.0

    def test_unit_components_default_weights(self):
        got = total_g_loss(torch.tensor(1.0), torch.tensor(1.0), torch.tensor(1.0))
        assert float(got) == 56.0

    def test_weight_override(self):
        w = LossWeights(lambda_pix=0.0, lambda_vgg_style=0.0)
        got = total_g_loss(torch.tensor(0.3, dtype=torch.float64),
                           torch.tensor(9.0, dtype=torch.float64),
                           torch.tensor(9.0, dtype=torch.float64), w)
        assert float(got) == pytest.approx(0.3, abs=1e-12)

    def test_negative_weight_rejected(self):
        with pytest.raises(ParameterError):
            LossWeights(lambda_pix=-1.0)

    @given(
        adv=st.floats(min_value=0.0, max_value=4.0),
        pix=st.floats(min_value=0.0, max_value=4.0),
        perc=st.floats(min_value=0.0, max_value=4.0),
    )
    @settings(max_examples=30, deadline=None)
    def test_linearity(self, adv, pix, perc):
        got = float(total_g_loss(torch.tensor(adv, dtype=torch.float64),
                                 torch.tensor(pix, dtype=torch.float64),
                                 torch.tensor(perc, dtype=torch.float64)))
        assert got == pytest.approx(adv + 50.0 * pix + 5.0 * perc, abs=1e-9)


class _StubDisc:
    def __init__(self, head, value):
        self.head = head
        self.value = value

    def __call__(self, images):
        return torch.full((images.shape[0], 1, images.shape[2], images.shape[3]),
                          self.value)


class TestRealnessLoss:
    def test_equals_adv_g(self):
        imgs = torch.zeros(2, 3, 8, 8)
        disc = _StubDisc(HEAD_PER_PIXEL, 0.25)
        got = float(realness_loss(imgs, disc))
        assert got == pytest.approx(float(adv_g_loss(disc(imgs))), abs=1e-12)
        assert got == pytest.approx(0.5625, abs=TOL)

    def test_perfect_images_zero(self):
        disc = _StubDisc(HEAD_PER_PIXEL, 1.0)
        assert float(realness_loss(torch.zeros(1, 3, 4, 4), disc)) == pytest.approx(
            0.0, abs=TOL)

    def test_scalar_head_refused(self):
        disc = _StubDisc(HEAD_SINGLE_OUTPUT, 0.5)
        with pytest.raises(UnsupportedHeadError):
            realness_loss(torch.zeros(1, 3, 4, 4), disc)

    def test_headless_object_refused(self):
        with pytest.raises(UnsupportedHeadError):
            realness_loss(torch.zeros(1, 3, 4, 4), lambda x: x)


def test_losses_keep_grad():
    x = torch.randn(1, 3, 4, 4, requires_grad=True)
    y = torch.randn(1, 3, 4, 4)
    loss = total_g_loss(adv_g_loss(torch.sigmoid(x[:, :1])),
                        pixel_loss(x, y),
                        perceptual_loss(x, y, _FakeFeat()))
    loss.backward()
    assert x.grad is not None
    assert torch.isfinite(x.grad).all()
