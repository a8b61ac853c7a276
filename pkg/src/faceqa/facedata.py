"""Raster types, dataset IO, and a procedural synthetic-face corpus.

Images live in one of two value domains: ``byte255`` (uint8, the codec
side) and ``signed_unit`` (float32 in [-1, 1], the network side).  The
byte -> unit -> byte round trip is exact for every uint8 value.

On-disk layout for a corpus root::

    <root>/<id>.png            8-bit RGB image
    <root>/<id>.regions.json   {"left_eye": [x0,y0,x1,y1], ...} normalized
    <root>/<id>.mask.png       8-bit grayscale, 0=background, 255=face
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import cv2
import numpy as np

from .errors import (
    ConfigError,
    DatasetError,
    DomainError,
    ParameterError,
    ShapeError,
)

DOMAIN_BYTE = "byte255"
DOMAIN_UNIT = "signed_unit"
_DOMAINS = frozenset((DOMAIN_BYTE, DOMAIN_UNIT))

ROLE_HQ = "hq"
ROLE_LQ = "lq"
ROLE_RF = "rf"
ROLE_MIXED = "mixed"
_ROLES = frozenset((ROLE_HQ, ROLE_LQ, ROLE_RF, ROLE_MIXED))

REGION_NAMES = ("left_eye", "right_eye", "nose", "mouth")
SUPPORTED_RESOLUTIONS = (32, 64, 128, 256)


@dataclass(frozen=True)
class ImageBuffer:
    """A square H=W RGB raster with a declared value domain and role tag."""

    data: np.ndarray
    domain: str
    role: str

    def __post_init__(self):
        if self.domain not in _DOMAINS:
            raise DomainError(f"unknown domain {self.domain!r}")
        if self.role not in _ROLES:
            raise ParameterError(f"unknown role {self.role!r}")
        d = self.data
        if d.ndim != 3 or d.shape[2] != 3 or d.shape[0] != d.shape[1]:
            raise ShapeError(f"expected square HxWx3 array, got {d.shape}")
        if self.domain == DOMAIN_BYTE:
            if d.dtype != np.uint8:
                raise DomainError(f"byte255 images must be uint8, got {d.dtype}")
        else:
            if not np.issubdtype(d.dtype, np.floating):
                raise DomainError(f"signed_unit images must be float, got {d.dtype}")
            if d.size and (float(d.min()) < -1.0 or float(d.max()) > 1.0):
                raise DomainError("signed_unit values outside [-1, 1]")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def with_role(self, role: str) -> "ImageBuffer":
        return ImageBuffer(self.data, self.domain, role)


@dataclass(frozen=True)
class MaskMap:
    """Binary H x W map stored as uint8 {0, 1}."""

    data: np.ndarray

    def __post_init__(self):
        d = self.data
        if d.ndim != 2:
            raise ShapeError(f"mask must be 2-D, got shape {d.shape}")
        if d.dtype != np.uint8:
            raise ParameterError(f"mask dtype must be uint8, got {d.dtype}")
        bad = (d != 0) & (d != 1)
        if bool(bad.any()):
            raise ParameterError("mask values must be strictly 0 or 1")

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def area_fraction(self) -> float:
        return float(self.data.mean())


@dataclass(frozen=True)
class ScoreMap:
    """Per-pixel realness scores, H x W floats in [0, 1]."""

    data: np.ndarray

    def __post_init__(self):
        d = self.data
        if d.ndim != 2:
            raise ShapeError(f"score map must be 2-D, got shape {d.shape}")
        if not np.issubdtype(d.dtype, np.floating):
            raise ParameterError(f"score map dtype must be float, got {d.dtype}")
        if d.size and (float(d.min()) < 0.0 or float(d.max()) > 1.0):
            raise ParameterError("score map values outside [0, 1]")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple:
        return self.data.shape


Box = tuple  # (x0, y0, x1, y1), normalized to [0, 1]


def _check_box(name: str, box) -> tuple:
    x0, y0, x1, y1 = (float(v) for v in box)
    if not (0.0 <= x0 < x1 <= 1.0 and 0.0 <= y0 < y1 <= 1.0):
        raise ParameterError(f"region {name!r}: invalid box {box}")
    return (x0, y0, x1, y1)


@dataclass(frozen=True)
class RegionBoxSet:
    """The four facial primary-region boxes in normalized image coordinates."""

    left_eye: Box
    right_eye: Box
    nose: Box
    mouth: Box

    def __post_init__(self):
        for name in REGION_NAMES:
            object.__setattr__(self, name, _check_box(name, getattr(self, name)))

    def box(self, name: str) -> Box:
        if name not in REGION_NAMES:
            raise ParameterError(f"unknown region {name!r}")
        return getattr(self, name)

    def items(self):
        return [(name, getattr(self, name)) for name in REGION_NAMES]

    def to_dict(self) -> dict:
        return {name: list(getattr(self, name)) for name in REGION_NAMES}

    @classmethod
    def from_dict(cls, d: dict) -> "RegionBoxSet":
        missing = [n for n in REGION_NAMES if n not in d]
        if missing:
            raise ParameterError(f"region json missing keys: {missing}")
        return cls(**{n: tuple(d[n]) for n in REGION_NAMES})


def box_to_pixels(box: Box, height: int, width: int) -> tuple:
    """Convert a normalized box to half-open pixel bounds (x0, y0, x1, y1)."""
    x0, y0, x1, y1 = box
    px0 = int(np.floor(x0 * width + 0.5))
    py0 = int(np.floor(y0 * height + 0.5))
    px1 = int(np.floor(x1 * width + 0.5))
    py1 = int(np.floor(y1 * height + 0.5))
    return px0, py0, px1, py1


def landmarks_to_box(points: np.ndarray, height: int, width: int,
                     dilate: float = 0.10) -> Box:
    """Bounding box of a landmark cluster, dilated per side, normalized.

    For ingesting real detector output; the synthetic corpus builds its
    boxes directly from geometry.
    """
    pts = np.asarray(points, dtype=np.float64)
    x0, y0 = pts.min(axis=0)
    x1, y1 = pts.max(axis=0)
    dx = (x1 - x0) * dilate
    dy = (y1 - y0) * dilate
    return (
        max(0.0, (x0 - dx) / width),
        max(0.0, (y0 - dy) / height),
        min(1.0, (x1 + dx) / width),
        min(1.0, (y1 + dy) / height),
    )


@dataclass(frozen=True)
class FaceSample:
    """One HQ face image with its region boxes and binary face mask."""

    id: str
    image: ImageBuffer
    regions: RegionBoxSet
    face_mask: MaskMap

    def __post_init__(self):
        h, w = self.image.height, self.image.width
        if self.face_mask.shape != (h, w):
            raise ShapeError(
                f"{self.id}: mask shape {self.face_mask.shape} != image {(h, w)}")
        frac = self.face_mask.area_fraction
        if not (0.0 < frac < 1.0):
            raise ParameterError(f"{self.id}: face-mask area fraction {frac} not in (0,1)")
        m = self.face_mask.data
        for name, box in self.regions.items():
            x0, y0, x1, y1 = box_to_pixels(box, h, w)
            if not bool(m[y0:y1, x0:x1].any()):
                raise ParameterError(f"{self.id}: region {name!r} does not meet the face mask")


# ---------------------------------------------------------------------------
# value-domain conversions


def to_signed_unit(img: ImageBuffer) -> ImageBuffer:
    """Affine map byte [0, 255] -> float32 [-1, 1]."""
    if img.domain != DOMAIN_BYTE:
        raise DomainError(f"to_signed_unit expects {DOMAIN_BYTE}, got {img.domain}")
    data = img.data.astype(np.float32) * np.float32(2.0 / 255.0) - np.float32(1.0)
    return ImageBuffer(data, DOMAIN_UNIT, img.role)


def from_signed_unit(img: ImageBuffer) -> ImageBuffer:
    """Inverse map; rounds half away from zero so from(to(x)) == x on bytes."""
    if img.domain != DOMAIN_UNIT:
        raise DomainError(f"from_signed_unit expects {DOMAIN_UNIT}, got {img.domain}")
    scaled = (img.data.astype(np.float64) + 1.0) * (255.0 / 2.0)
    data = np.clip(np.floor(scaled + 0.5), 0, 255).astype(np.uint8)
    return ImageBuffer(data, DOMAIN_BYTE, img.role)


# ---------------------------------------------------------------------------
# resizing


def resize_image(data: np.ndarray, resolution: int) -> np.ndarray:
    """Bicubic resize of an HxWx3 uint8 array to resolution x resolution."""
    if data.shape[0] == resolution and data.shape[1] == resolution:
        return data
    out = cv2.resize(data, (resolution, resolution), interpolation=cv2.INTER_CUBIC)
    return out


def resize_mask(mask: MaskMap, resolution: int) -> MaskMap:
    """Bicubic resize then re-binarize at threshold 0.5."""
    if mask.shape == (resolution, resolution):
        return mask
    soft = cv2.resize(mask.data.astype(np.float32), (resolution, resolution),
                      interpolation=cv2.INTER_CUBIC)
    return MaskMap((soft >= 0.5).astype(np.uint8))


# ---------------------------------------------------------------------------
# procedural synthetic faces


def _ellipse_mask(res: int, cx: float, cy: float, ax: float, ay: float) -> np.ndarray:
    m = np.zeros((res, res), np.uint8)
    cv2.ellipse(m, (int(round(cx * res)), int(round(cy * res))),
                (int(round(ax * res)), int(round(ay * res))), 0, 0, 360, 1, -1)
    return m


def _pix(v: float, res: int) -> int:
    return int(round(v * res))


def _one_face(rng: np.random.Generator, res: int, sample_id: str) -> FaceSample:
    # background: muted base color with a coarse texture
    base = rng.uniform(60, 190, size=3)
    coarse = rng.uniform(-25, 25, size=(max(2, res // 8), max(2, res // 8), 3))
    texture = cv2.resize(coarse, (res, res), interpolation=cv2.INTER_CUBIC)
    img = np.clip(base[None, None, :] + texture, 0, 255)

    # head ellipse geometry (fractions of the frame)
    cx = 0.5 + rng.uniform(-0.03, 0.03)
    cy = 0.52 + rng.uniform(-0.03, 0.03)
    ax = rng.uniform(0.26, 0.32)
    ay = rng.uniform(0.36, 0.44)
    mask = _ellipse_mask(res, cx, cy, ax, ay)

    r = rng.uniform(150, 230)
    skin = np.array([r, r - rng.uniform(10, 40), r - rng.uniform(40, 80)])
    grain = rng.uniform(-8, 8, size=(res, res, 1))
    face_px = np.clip(skin[None, None, :] + grain, 0, 255)
    img = np.where(mask[:, :, None] == 1, face_px, img)
    img = img.astype(np.uint8).copy()

    # eyes: dark iris on a light sclera disk
    eye_dx = rng.uniform(0.10, 0.14)
    eye_dy = rng.uniform(0.10, 0.15)
    eye_r = rng.uniform(0.032, 0.045)
    eye_color = tuple(int(v) for v in rng.uniform(20, 90, size=3))
    for side in (-1, 1):
        ex, ey = cx + side * eye_dx, cy - eye_dy
        cv2.circle(img, (_pix(ex, res), _pix(ey, res)), max(1, _pix(eye_r, res)),
                   (235, 235, 235), -1)
        cv2.circle(img, (_pix(ex, res), _pix(ey, res)), max(1, _pix(eye_r * 0.55, res)),
                   eye_color, -1)

    # nose: darker wedge from the bridge down to the nostril line
    nose_hw = rng.uniform(0.030, 0.050)
    nose_h = rng.uniform(0.08, 0.12)
    nose_tip_y = cy + nose_h * 0.5
    nose_color = tuple(int(max(0, v - 35)) for v in skin)
    pts = np.array([
        [_pix(cx, res), _pix(cy - nose_h * 0.5, res)],
        [_pix(cx - nose_hw, res), _pix(nose_tip_y, res)],
        [_pix(cx + nose_hw, res), _pix(nose_tip_y, res)],
    ], np.int32)
    cv2.fillPoly(img, [pts], nose_color)

    # mouth: dark red bar
    mouth_dy = rng.uniform(0.16, 0.22)
    mouth_hw = rng.uniform(0.06, 0.10)
    mouth_hh = rng.uniform(0.016, 0.030)
    mouth_color = (int(rng.uniform(120, 180)), int(rng.uniform(20, 60)),
                   int(rng.uniform(30, 70)))
    cv2.ellipse(img, (_pix(cx, res), _pix(cy + mouth_dy, res)),
                (max(1, _pix(mouth_hw, res)), max(1, _pix(mouth_hh, res))),
                0, 0, 360, mouth_color, -1)

    pad = 0.015

    def region_box(rcx, rcy, hw, hh):
        return (max(0.0, rcx - hw - pad), max(0.0, rcy - hh - pad),
                min(1.0, rcx + hw + pad), min(1.0, rcy + hh + pad))

    regions = RegionBoxSet(
        left_eye=region_box(cx - eye_dx, cy - eye_dy, eye_r, eye_r),
        right_eye=region_box(cx + eye_dx, cy - eye_dy, eye_r, eye_r),
        nose=region_box(cx, cy, nose_hw, nose_h * 0.5),
        mouth=region_box(cx, cy + mouth_dy, mouth_hw, mouth_hh),
    )
    return FaceSample(
        id=sample_id,
        image=ImageBuffer(img, DOMAIN_BYTE, ROLE_HQ),
        regions=regions,
        face_mask=MaskMap(mask),
    )


def synth_faces(seed: int, count: int, resolution: int) -> list:
    """Generate `count` procedural face samples, bit-identical per seed.

    Each face is an elliptical head on a textured background with two eye
    disks, a nose wedge, and a mouth bar; region boxes and face masks are
    exact by construction.
    """
    if resolution not in SUPPORTED_RESOLUTIONS:
        raise ConfigError(
            f"resolution {resolution} unsupported; choose one of {SUPPORTED_RESOLUTIONS}")
    if count < 0:
        raise ParameterError(f"count must be >= 0, got {count}")
    rng = np.random.default_rng(seed)
    return [_one_face(rng, resolution, f"face_{i:05d}") for i in range(count)]


# ---------------------------------------------------------------------------
# dataset IO


@dataclass
class DatasetLoadResult:
    samples: list
    errors: list
    warnings: int

    def __iter__(self):
        return iter(self.samples)

    def __len__(self):
        return len(self.samples)


def save_sample(sample: FaceSample, root: Path) -> None:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    img = sample.image
    if img.domain != DOMAIN_BYTE:
        img = from_signed_unit(img)
    cv2.imwrite(str(root / f"{sample.id}.png"),
                cv2.cvtColor(img.data, cv2.COLOR_RGB2BGR))
    cv2.imwrite(str(root / f"{sample.id}.mask.png"), sample.face_mask.data * 255)
    (root / f"{sample.id}.regions.json").write_text(
        json.dumps(sample.regions.to_dict(), indent=2) + "\n")


def save_dataset(samples: Sequence[FaceSample], root: Path) -> None:
    for s in samples:
        save_sample(s, root)


def load_dataset(root_path: Path, resolution: int) -> DatasetLoadResult:
    """Load a corpus directory, resizing everything to `resolution`.

    Missing sidecars are reported per id in ``errors``; corrupt images are
    skipped and counted in ``warnings``.  Samples come back in
    deterministic lexicographic id order.
    """
    root = Path(root_path)
    if not root.is_dir():
        raise DatasetError(f"dataset root {root} is not a directory")
    samples, errors = [], []
    warnings = 0
    ids = sorted(p.stem for p in root.glob("*.png") if not p.name.endswith(".mask.png"))
    for sample_id in ids:
        img_path = root / f"{sample_id}.png"
        mask_path = root / f"{sample_id}.mask.png"
        regions_path = root / f"{sample_id}.regions.json"
        missing = [p.name for p in (mask_path, regions_path) if not p.exists()]
        if missing:
            errors.append(f"{sample_id}: missing sidecar(s) {missing}")
            continue
        bgr = cv2.imread(str(img_path), cv2.IMREAD_COLOR)
        if bgr is None:
            warnings += 1
            continue
        raw_mask = cv2.imread(str(mask_path), cv2.IMREAD_GRAYSCALE)
        if raw_mask is None:
            warnings += 1
            continue
        try:
            regions = RegionBoxSet.from_dict(json.loads(regions_path.read_text()))
            img = resize_image(cv2.cvtColor(bgr, cv2.COLOR_BGR2RGB), resolution)
            mask = resize_mask(MaskMap((raw_mask >= 128).astype(np.uint8)), resolution)
            samples.append(FaceSample(
                id=sample_id,
                image=ImageBuffer(np.ascontiguousarray(img), DOMAIN_BYTE, ROLE_HQ),
                regions=regions,
                face_mask=mask,
            ))
        except (ParameterError, ShapeError, ValueError, json.JSONDecodeError) as exc:
            errors.append(f"{sample_id}: {exc}")
    return DatasetLoadResult(samples=samples, errors=errors, warnings=warnings)


def split_dataset(samples: Sequence[FaceSample], val_fraction: float = 0.05,
                  seed: int = 0) -> tuple:
    """Shuffled train/validation split; default holds out 5%."""
    if not (0.0 <= val_fraction < 1.0):
        raise ParameterError(f"val_fraction must be in [0, 1), got {val_fraction}")
    order = np.random.default_rng(seed).permutation(len(samples))
    n_val = int(round(len(samples) * val_fraction))
    val_idx = set(order[:n_val].tolist())
    train = [s for i, s in enumerate(samples) if i not in val_idx]
    val = [s for i, s in enumerate(samples) if i in val_idx]
    return train, val
