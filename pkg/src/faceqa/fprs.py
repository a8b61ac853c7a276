"""Region-swap augmentation and per-pixel real/fake supervision targets.

A clean face and a damaged counterpart of the same frame are spliced
along the union of randomly selected primary-region boxes (eyes, nose,
mouth).  Each spliced image gets a binary target map that marks "real"
exactly where its pixels came from the clean image AND lie on the face.
A rectangular CutMix splice is provided as the ablation baseline.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, ShapeError
from .facedata import (
    ImageBuffer,
    MaskMap,
    REGION_NAMES,
    RegionBoxSet,
    ROLE_HQ,
    ROLE_LQ,
    ROLE_MIXED,
    ROLE_RF,
    ScoreMap,
    box_to_pixels,
)


@dataclass(frozen=True)
class SwapSpec:
    """Which primary regions to splice; drawn once per training sample."""

    selected_regions: frozenset
    seed: int = 0

    def __post_init__(self):
        regions = frozenset(self.selected_regions)
        object.__setattr__(self, "selected_regions", regions)
        if not regions:
            raise ParameterError("SwapSpec needs at least one region")
        unknown = regions - set(REGION_NAMES)
        if unknown:
            raise ParameterError(f"unknown regions {sorted(unknown)}")


def random_swap_spec(rng: np.random.Generator, seed: int = 0) -> SwapSpec:
    """Uniform draw over the 15 non-empty subsets of the four regions."""
    idx = int(rng.integers(1, 2 ** len(REGION_NAMES)))
    chosen = frozenset(
        name for bit, name in enumerate(REGION_NAMES) if idx >> bit & 1)
    return SwapSpec(selected_regions=chosen, seed=seed)


@dataclass(frozen=True)
class SupervisedPair:
    """A spliced image with its binary realness target."""

    image: ImageBuffer
    target: ScoreMap

    def __post_init__(self):
        if self.target.shape != (self.image.height, self.image.width):
            raise ShapeError(
                f"target shape {self.target.shape} != image "
                f"{(self.image.height, self.image.width)}")
        t = self.target.data
        if t.size and not bool(np.isin(t, (0.0, 1.0)).all()):
            raise ParameterError("supervision target must be binary")


def region_mask(regions: RegionBoxSet, spec: SwapSpec, shape: tuple) -> MaskMap:
    """Rasterize the union of the selected region boxes to a binary mask."""
    h, w = shape
    m = np.zeros((h, w), np.uint8)
    for name in sorted(spec.selected_regions):
        x0, y0, x1, y1 = box_to_pixels(regions.box(name), h, w)
        m[y0:y1, x0:x1] = 1
    return MaskMap(m)


def fprs_swap(hq: ImageBuffer, other: ImageBuffer, mask: MaskMap):
    """Splice two aligned images along a binary mask, both ways.

    Returns ``(M*hq + (1-M)*other, M*other + (1-M)*hq)``, both tagged
    mixed.  Selection uses ``np.where`` so the outputs' pixelwise sum
    equals ``hq + other`` bit-exactly in either value domain.
    """
    if hq.role != ROLE_HQ:
        raise ParameterError(f"first image must have role hq, got {hq.role!r}")
    if other.role not in (ROLE_LQ, ROLE_RF):
        raise ParameterError(f"second image must be lq or rf, got {other.role!r}")
    if hq.domain != other.domain:
        raise ParameterError(f"domain mismatch: {hq.domain} vs {other.domain}")
    shape = (hq.height, hq.width)
    if (other.height, other.width) != shape or mask.shape != shape:
        raise ShapeError(
            f"shape mismatch: hq {shape}, other {(other.height, other.width)}, "
            f"mask {mask.shape}")
    m3 = mask.data[:, :, None] == 1
    hq_in = np.where(m3, hq.data, other.data)
    hq_out = np.where(m3, other.data, hq.data)
    return (ImageBuffer(hq_in, hq.domain, ROLE_MIXED),
            ImageBuffer(hq_out, hq.domain, ROLE_MIXED))


def supervision_target(mask_fprs: MaskMap, face_mask: MaskMap,
                       hq_inside_mask: bool) -> ScoreMap:
    """Binary realness target for a spliced image.

    A pixel is real (1) iff its source is the clean image and it lies on
    the face; with ``hq_inside_mask`` that is ``face & mask``, otherwise
    ``face & ~mask``.
    """
    if mask_fprs.shape != face_mask.shape:
        raise ShapeError(
            f"mask shape {mask_fprs.shape} != face mask {face_mask.shape}")
    if hq_inside_mask:
        target = face_mask.data & mask_fprs.data
    else:
        target = face_mask.data & (1 - mask_fprs.data)
    return ScoreMap(target.astype(np.float32))


def pure_target(face_mask: MaskMap, real: bool) -> ScoreMap:
    """Target for an unspliced image: face mask if clean, zero otherwise."""
    if real:
        return ScoreMap(face_mask.data.astype(np.float32))
    return ScoreMap(np.zeros(face_mask.shape, np.float32))


def crop_region_roialign(img: ImageBuffer, box, out_size: int) -> np.ndarray:
    """Bilinear crop of a normalized box at out_size x out_size sub-pixel points.

    Sampling follows the pixel-centers-at-half-integers convention: the
    j-th of n points along a span [a, b) sits at ``a + (j + 0.5)*(b-a)/n``
    in continuous coordinates, with no rounding anywhere.  Border samples
    clamp to the edge pixels.
    """
    x0, y0, x1, y1 = (float(v) for v in box)
    if not (x1 > x0 and y1 > y0):
        raise ParameterError(f"degenerate box {box}")
    if out_size < 1:
        raise ParameterError(f"out_size must be >= 1, got {out_size}")
    h, w = img.height, img.width
    data = img.data.astype(np.float64)

    def axis_points(a: float, b: float, extent: int, n: int) -> np.ndarray:
        span = (b - a) * extent
        return a * extent + (np.arange(n) + 0.5) * (span / n)

    xs = axis_points(x0, x1, w, out_size) - 0.5  # continuous -> array coords
    ys = axis_points(y0, y1, h, out_size) - 0.5
    xs0 = np.clip(np.floor(xs).astype(int), 0, w - 1)
    ys0 = np.clip(np.floor(ys).astype(int), 0, h - 1)
    xs1 = np.clip(xs0 + 1, 0, w - 1)
    ys1 = np.clip(ys0 + 1, 0, h - 1)
    fx = np.clip(xs - xs0, 0.0, 1.0)
    fy = np.clip(ys - ys0, 0.0, 1.0)

    tl = data[np.ix_(ys0, xs0)]
    tr = data[np.ix_(ys0, xs1)]
    bl = data[np.ix_(ys1, xs0)]
    br = data[np.ix_(ys1, xs1)]
    wx = fx[None, :, None]
    wy = fy[:, None, None]
    top = tl * (1 - wx) + tr * wx
    bot = bl * (1 - wx) + br * wx
    return top * (1 - wy) + bot * wy


def cutmix_swap(hq: ImageBuffer, other: ImageBuffer, rng: np.random.Generator):
    """One rectangular patch of random area ratio swapped into the clean image.

    The patch area ratio is lambda ~ Uniform(0, 1); side lengths are
    ``round(W*sqrt(lambda))`` x ``round(H*sqrt(lambda))`` at a uniform
    position.  Returns the mixed image and the patch mask.
    """
    shape = (hq.height, hq.width)
    if (other.height, other.width) != shape:
        raise ShapeError(f"shape mismatch: {shape} vs {(other.height, other.width)}")
    if hq.domain != other.domain:
        raise ParameterError(f"domain mismatch: {hq.domain} vs {other.domain}")
    h, w = shape
    lam = float(rng.uniform(0.0, 1.0))
    ph = int(round(h * np.sqrt(lam)))
    pw = int(round(w * np.sqrt(lam)))
    mask = np.zeros((h, w), np.uint8)
    if ph > 0 and pw > 0:
        y0 = int(rng.integers(0, h - ph + 1))
        x0 = int(rng.integers(0, w - pw + 1))
        mask[y0:y0 + ph, x0:x0 + pw] = 1
    m = MaskMap(mask)
    mixed = np.where(mask[:, :, None] == 1, other.data, hq.data)
    return ImageBuffer(mixed, hq.domain, ROLE_MIXED), m


def fprs_pair_targets(mask_fprs: MaskMap, face_mask: MaskMap):
    """Targets for the two outputs of `fprs_swap`, in the same order."""
    return (supervision_target(mask_fprs, face_mask, hq_inside_mask=True),
            supervision_target(mask_fprs, face_mask, hq_inside_mask=False))
