"""Training losses: least-squares adversarial terms, pixel and feature fidelity.

Reductions accumulate in float64 regardless of input dtype so loss
values are reproducible to the last bit within a build.  The generator
total is ``adv + 50 * pixel + 5 * perceptual`` by default.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .errors import ParameterError, ShapeError, UnsupportedHeadError
from .networks import HEAD_PER_PIXEL


@dataclass(frozen=True)
class LossWeights:
    """Coefficients of the generator total; defaults 50 and 5."""

    lambda_pix: float = 50.0
    lambda_vgg_style: float = 5.0

    def __post_init__(self):
        if self.lambda_pix < 0 or self.lambda_vgg_style < 0:
            raise ParameterError("loss weights must be >= 0")


def _as_double(t: torch.Tensor) -> torch.Tensor:
    return t if t.dtype == torch.float64 else t.double()


def adv_g_loss(d_map: torch.Tensor) -> torch.Tensor:
    """Least-squares generator term: mean of (d - 1)^2 over everything."""
    if d_map.numel() == 0:
        raise ParameterError("adv_g_loss on an empty batch")
    d = _as_double(d_map)
    return ((d - 1.0) ** 2).mean()


def pixel_loss(rf: torch.Tensor, hq: torch.Tensor,
               squared: bool = True) -> torch.Tensor:
    """Restoration fidelity in pixel space.

    Default is elementwise mean squared error.  With ``squared=False``
    the per-image Euclidean norm of the difference is averaged over the
    batch instead (the unsquared norm reading).
    """
    if rf.shape != hq.shape:
        raise ShapeError(f"shape mismatch {tuple(rf.shape)} vs {tuple(hq.shape)}")
    diff = _as_double(rf) - _as_double(hq)
    if squared:
        return (diff ** 2).mean()
    flat = diff.reshape(diff.shape[0], -1)
    return torch.linalg.vector_norm(flat, dim=1).mean()


def perceptual_loss(rf: torch.Tensor, hq: torch.Tensor, feat) -> torch.Tensor:
    """Sum over feature stages of the mean absolute feature difference.

    ``feat`` is any callable mapping a batch to a sequence of feature
    tensors; each stage is normalized per element so the total does not
    scale with resolution or width.
    """
    if rf.shape != hq.shape:
        raise ShapeError(f"shape mismatch {tuple(rf.shape)} vs {tuple(hq.shape)}")
    feats_rf = feat(rf)
    feats_hq = feat(hq)
    total = None
    for fr, fh in zip(feats_rf, feats_hq):
        stage = (_as_double(fr) - _as_double(fh)).abs().mean()
        total = stage if total is None else total + stage
    if total is None:
        raise ParameterError("feature extractor produced no stages")
    return total


def _check_binary(target: torch.Tensor) -> None:
    ok = ((target == 0) | (target == 1)).all()
    if not bool(ok):
        raise ParameterError("real_target must be strictly binary")


def adv_d_loss(d_real_map: torch.Tensor, real_target: torch.Tensor,
               d_fake_map: torch.Tensor) -> torch.Tensor:
    """Least-squares discriminator term.

    Mean of (d_real - target)^2 over the real pool plus mean of d_fake^2
    over the fake pool.  Spliced images enter through the same signature
    with their binary supervision maps as targets.
    """
    if d_real_map.shape != real_target.shape:
        raise ShapeError(
            f"real map {tuple(d_real_map.shape)} vs target "
            f"{tuple(real_target.shape)}")
    if d_real_map.numel() == 0 or d_fake_map.numel() == 0:
        raise ParameterError("adv_d_loss needs non-empty real and fake pools")
    _check_binary(real_target)
    real = ((_as_double(d_real_map) - _as_double(real_target)) ** 2).mean()
    fake = (_as_double(d_fake_map) ** 2).mean()
    return real + fake


def total_g_loss(adv, pix, perc, w: LossWeights = LossWeights()):
    """Weighted generator total: adv + lambda_pix*pix + lambda_vgg_style*perc."""
    return adv + w.lambda_pix * pix + w.lambda_vgg_style * perc


def realness_loss(images: torch.Tensor, discriminator) -> torch.Tensor:
    """Mean of (D(images) - 1)^2, packaged for third-party training loops.

    Drops into any restoration objective as a quality term: lower means
    the per-pixel scorer rates the images closer to clean face content.
    Requires a per-pixel head; the scalar-head ablation model carries no
    spatial evidence and is refused.
    """
    head = getattr(discriminator, "head", None)
    if head != HEAD_PER_PIXEL:
        raise UnsupportedHeadError(
            f"realness_loss needs a per-pixel discriminator, got head {head!r}")
    return adv_g_loss(discriminator(images))
