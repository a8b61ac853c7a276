"""Synthetic quality degradation: blur -> downsample -> noise -> JPEG.

Manufactures low-quality faces from clean ones.  Every stage is driven by
an explicit parameter record so a degraded image can be reproduced
bit-identically from (source, params) alone; the record also serializes
to JSON for manifests.

Noise sigma is read literally on the 0-255 byte scale.  The default
sampling range [50, 250) is severe by design; narrow it through
``DegradationRanges`` when gentler corruption is wanted.
"""

from __future__ import annotations

from dataclasses import dataclass

import cv2
import numpy as np

from .errors import DomainError, ParameterError
from .facedata import DOMAIN_BYTE, ImageBuffer, ROLE_LQ

_KERNEL_SUM_TOL = 1e-9


@dataclass(frozen=True)
class Kernel:
    """Square odd-sized convolution kernel with unit mass."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        object.__setattr__(self, "weights", w)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ParameterError(f"kernel must be square 2-D, got {w.shape}")
        if w.shape[0] % 2 == 0:
            raise ParameterError(f"kernel size must be odd, got {w.shape[0]}")
        if w.size and float(w.min()) < 0.0:
            raise ParameterError("kernel weights must be non-negative")
        s = float(w.sum())
        if abs(s - 1.0) > _KERNEL_SUM_TOL:
            raise ParameterError(f"kernel mass {s} not within {_KERNEL_SUM_TOL} of 1")

    @property
    def size(self) -> int:
        return self.weights.shape[0]

    @property
    def is_identity(self) -> bool:
        return self.size == 1


IDENTITY_KERNEL = Kernel(np.ones((1, 1), np.float64))


def gaussian_kernel(size: int, sigma: float) -> Kernel:
    """Isotropic 2-D Gaussian sampled at integer offsets, normalized."""
    if size < 1 or size % 2 == 0:
        raise ParameterError(f"size must be odd and >= 1, got {size}")
    if sigma <= 0:
        raise ParameterError(f"sigma must be > 0, got {sigma}")
    half = size // 2
    ax = np.arange(-half, half + 1, dtype=np.float64)
    g1 = np.exp(-(ax ** 2) / (2.0 * sigma ** 2))
    k = np.outer(g1, g1)
    return Kernel(k / k.sum())


def motion_kernel(length: int, angle_deg: float) -> Kernel:
    """Linear motion blur: an anti-aliased line through the kernel center.

    The segment is splatted with bilinear weights.  Direction components
    below 1e-12 snap to zero so 0 and 90 degrees give exact single-row and
    single-column kernels (transposes of each other).
    """
    length = int(length)
    if length < 1:
        raise ParameterError(f"length must be >= 1, got {length}")
    if length == 1:
        return IDENTITY_KERNEL
    size = length if length % 2 == 1 else length + 1
    k = np.zeros((size, size), np.float64)
    theta = np.deg2rad(angle_deg)
    dx, dy = float(np.cos(theta)), float(np.sin(theta))
    if abs(dx) < 1e-12:
        dx = 0.0
    if abs(dy) < 1e-12:
        dy = 0.0
    c = (size - 1) / 2.0
    half_span = (length - 1) / 2.0
    for t in np.linspace(-half_span, half_span, 4 * size):
        x = c + t * dx
        y = c + t * dy
        x0, y0 = int(np.floor(x)), int(np.floor(y))
        fx, fy = x - x0, y - y0
        for yy, xx, w in ((y0, x0, (1 - fx) * (1 - fy)),
                          (y0, x0 + 1, fx * (1 - fy)),
                          (y0 + 1, x0, (1 - fx) * fy),
                          (y0 + 1, x0 + 1, fx * fy)):
            if 0 <= yy < size and 0 <= xx < size and w > 0:
                k[yy, xx] += w
    return Kernel(k / k.sum())


@dataclass(frozen=True)
class DegradationRanges:
    """Half-open sampling ranges for `sample_params`."""

    scale_min: float = 0.4
    scale_max: float = 0.9
    sigma_min: float = 50.0
    sigma_max: float = 250.0
    jpeg_q_min: int = 5
    jpeg_q_max: int = 50
    gauss_size: int = 13
    gauss_sigma_min: float = 1.0
    gauss_sigma_max: float = 5.0
    motion_length_min: int = 5
    motion_length_max: int = 15
    use_jpeg: bool = True

    def __post_init__(self):
        if not (0.0 < self.scale_min < self.scale_max <= 1.0):
            raise ParameterError(f"bad scale range [{self.scale_min}, {self.scale_max})")
        if not (0.0 <= self.sigma_min < self.sigma_max):
            raise ParameterError(f"bad sigma range [{self.sigma_min}, {self.sigma_max})")
        if not (1 <= self.jpeg_q_min < self.jpeg_q_max <= 100):
            raise ParameterError(
                f"bad jpeg quality range [{self.jpeg_q_min}, {self.jpeg_q_max})")
        if self.gauss_size < 1 or self.gauss_size % 2 == 0:
            raise ParameterError(f"gauss_size must be odd, got {self.gauss_size}")
        if not (1 <= self.motion_length_min <= self.motion_length_max):
            raise ParameterError("bad motion length range")


@dataclass(frozen=True)
class DegradationParams:
    """Everything needed to reproduce one degraded image exactly."""

    kernel: Kernel
    scale_r: float
    noise_sigma: float
    jpeg_q: int | None
    seed: int

    def __post_init__(self):
        if not (0.0 < self.scale_r <= 1.0):
            raise ParameterError(f"scale_r must be in (0, 1], got {self.scale_r}")
        if self.noise_sigma < 0:
            raise ParameterError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if self.jpeg_q is not None and not (1 <= self.jpeg_q <= 100):
            raise ParameterError(f"jpeg_q must be in [1, 100], got {self.jpeg_q}")

    def to_json_dict(self) -> dict:
        return {
            "kernel": [[float(v) for v in row] for row in self.kernel.weights],
            "scale_r": self.scale_r,
            "noise_sigma": self.noise_sigma,
            "jpeg_q": self.jpeg_q,
            "seed": self.seed,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "DegradationParams":
        return cls(
            kernel=Kernel(np.array(d["kernel"], np.float64)),
            scale_r=float(d["scale_r"]),
            noise_sigma=float(d["noise_sigma"]),
            jpeg_q=None if d["jpeg_q"] is None else int(d["jpeg_q"]),
            seed=int(d["seed"]),
        )


IDENTITY_PARAMS = DegradationParams(
    kernel=IDENTITY_KERNEL, scale_r=1.0, noise_sigma=0.0, jpeg_q=None, seed=0)
"""Every stage degenerate; `degrade` must return the input pixels."""


def sample_params(rng: np.random.Generator,
                  ranges: DegradationRanges = DegradationRanges(),
                  seed: int | None = None) -> DegradationParams:
    """Draw one parameter tuple; kernel family is a fair coin flip."""
    if rng.random() < 0.5:
        kernel = gaussian_kernel(
            ranges.gauss_size,
            float(rng.uniform(ranges.gauss_sigma_min, ranges.gauss_sigma_max)))
    else:
        kernel = motion_kernel(
            int(rng.integers(ranges.motion_length_min, ranges.motion_length_max + 1)),
            float(rng.uniform(0.0, 180.0)))
    scale_r = float(rng.uniform(ranges.scale_min, ranges.scale_max))
    sigma = float(rng.uniform(ranges.sigma_min, ranges.sigma_max))
    q = int(rng.integers(ranges.jpeg_q_min, ranges.jpeg_q_max)) if ranges.use_jpeg else None
    if seed is None:
        seed = int(rng.integers(0, 2 ** 63 - 1))
    return DegradationParams(kernel=kernel, scale_r=scale_r, noise_sigma=sigma,
                             jpeg_q=q, seed=seed)


def _round_half_away(x: np.ndarray) -> np.ndarray:
    # inputs are clipped non-negative, so half-away-from-zero == floor(x + 0.5)
    return np.floor(x + 0.5)


def _jpeg_cycle(img: np.ndarray, quality: int) -> np.ndarray:
    ok, buf = cv2.imencode(".jpg", cv2.cvtColor(img, cv2.COLOR_RGB2BGR),
                           [int(cv2.IMWRITE_JPEG_QUALITY), int(quality)])
    if not ok:
        raise RuntimeError("JPEG encode failed")
    back = cv2.imdecode(buf, cv2.IMREAD_COLOR)
    return cv2.cvtColor(back, cv2.COLOR_BGR2RGB)


def degrade(image: ImageBuffer, params: DegradationParams) -> ImageBuffer:
    """Blur -> downsample -> additive noise, clip -> JPEG -> upsample back.

    Deterministic in (image, params): the noise stream is re-seeded from
    ``params.seed``.  Degenerate stages (1-tap kernel, scale 1, sigma 0,
    jpeg off) are skipped outright, so ``IDENTITY_PARAMS`` is pixel-exact.
    """
    if image.domain != DOMAIN_BYTE:
        raise DomainError("degrade operates on byte255 images")
    src = image.data
    h, w = src.shape[:2]

    work = src.astype(np.float64)
    if not params.kernel.is_identity:
        # filter2D computes correlation; flip for true convolution
        flipped = params.kernel.weights[::-1, ::-1].copy()
        work = cv2.filter2D(work, -1, flipped, borderType=cv2.BORDER_REFLECT)

    new_h = int(round(params.scale_r * h))
    new_w = int(round(params.scale_r * w))
    if (new_h, new_w) != (h, w):
        work = cv2.resize(work, (new_w, new_h), interpolation=cv2.INTER_CUBIC)

    if params.noise_sigma > 0:
        noise_rng = np.random.default_rng(params.seed)
        work = work + noise_rng.normal(0.0, params.noise_sigma, size=work.shape)
    small_u8 = _round_half_away(np.clip(work, 0.0, 255.0)).astype(np.uint8)

    if params.jpeg_q is not None:
        small_u8 = _jpeg_cycle(small_u8, params.jpeg_q)

    if small_u8.shape[:2] != (h, w):
        back = cv2.resize(small_u8.astype(np.float64), (w, h),
                          interpolation=cv2.INTER_CUBIC)
        out_u8 = _round_half_away(np.clip(back, 0.0, 255.0)).astype(np.uint8)
    else:
        out_u8 = small_u8

    return ImageBuffer(out_u8, DOMAIN_BYTE, ROLE_LQ)


def per_image_seed(master_seed: int, index: int) -> int:
    """Seed for the index-th image of a batch job: master xor index."""
    return (int(master_seed) ^ int(index)) & (2 ** 63 - 1)
