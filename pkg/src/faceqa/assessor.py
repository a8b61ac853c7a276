"""Inference-time quality assessment from a trained per-pixel discriminator.

A score map is one forward pass; the image-level score is the plain mean
over every pixel, background included, which makes it face-coverage
dependent on purpose.  Maps export to 8-bit PNGs (gray or colormapped)
with the score embedded in the filename to four decimals.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np
import torch

from .errors import DomainError, ParameterError, UnsupportedHeadError
from .facedata import (
    DOMAIN_UNIT,
    ImageBuffer,
    MaskMap,
    ROLE_HQ,
    ScoreMap,
    resize_image,
    to_signed_unit,
)
from .ioutil import atomic_write_text
from .networks import HEAD_PER_PIXEL, load_networks

__all__ = [
    "ScoreMap", "QualityScore", "score_map", "quality_score",
    "masked_quality_score", "export_map", "batch_assess", "BatchResult",
]

_IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


@dataclass(frozen=True)
class QualityScore:
    """Image-level score in [0, 1] with the id it belongs to."""

    value: float
    image_id: str = ""

    def __post_init__(self):
        if not (0.0 <= self.value <= 1.0):
            raise ParameterError(f"quality score {self.value} outside [0, 1]")


def score_map(img: ImageBuffer, discriminator) -> ScoreMap:
    """One deterministic forward pass of the per-pixel scorer."""
    if img.domain != DOMAIN_UNIT:
        raise DomainError(f"score_map expects {DOMAIN_UNIT} input, got {img.domain}")
    if getattr(discriminator, "head", None) != HEAD_PER_PIXEL:
        raise UnsupportedHeadError(
            "score_map needs a per-pixel discriminator head")
    tensor = torch.from_numpy(np.ascontiguousarray(img.data)) \
        .permute(2, 0, 1).unsqueeze(0).float()
    with torch.no_grad():
        out = discriminator(tensor)
    return ScoreMap(out[0, 0].numpy().astype(np.float32))


def quality_score(smap: ScoreMap, image_id: str = "") -> QualityScore:
    """Arithmetic mean of the map over all pixels."""
    if smap.data.size == 0:
        raise ParameterError("cannot score an empty map")
    return QualityScore(value=float(smap.data.astype(np.float64).mean()),
                        image_id=image_id)


def masked_quality_score(smap: ScoreMap, mask: MaskMap) -> float:
    """Mean restricted to mask=1 pixels; a labeled extension, not the default."""
    if mask.shape != smap.shape:
        raise ParameterError(f"mask {mask.shape} vs map {smap.shape}")
    sel = smap.data.astype(np.float64)[mask.data == 1]
    if sel.size == 0:
        raise ParameterError("mask selects no pixels")
    return float(sel.mean())


def _gray_bytes(smap: ScoreMap) -> np.ndarray:
    return np.floor(255.0 * smap.data.astype(np.float64) + 0.5).astype(np.uint8)


def export_map(smap: ScoreMap, path: Path, style: str = "gray") -> Path:
    """Write the map as PNG; returns the actual path, which embeds the score.

    gray: 8-bit grayscale, pixel = round(255 * score).
    color: viridis colormap at the same 8-bit quantization.
    """
    if style not in ("gray", "color"):
        raise ParameterError(f"unknown export style {style!r}")
    path = Path(path)
    qs = quality_score(smap).value
    final = path.with_name(f"{path.stem}_{qs:.4f}{path.suffix or '.png'}")
    final.parent.mkdir(parents=True, exist_ok=True)
    if style == "gray":
        payload = _gray_bytes(smap)
    else:
        from matplotlib import colormaps
        rgb = colormaps["viridis"](smap.data.astype(np.float64))[..., :3]
        payload = cv2.cvtColor(
            np.floor(255.0 * rgb + 0.5).astype(np.uint8), cv2.COLOR_RGB2BGR)
    if not cv2.imwrite(str(final), payload):
        raise OSError(f"cannot write map to {final}")
    return final


@dataclass
class BatchResult:
    csv_path: Path
    rows: int
    errors: list


def _iter_image_files(root: Path):
    for p in sorted(Path(root).iterdir()):
        if p.suffix.lower() in _IMAGE_SUFFIXES and not p.name.endswith(".mask.png"):
            yield p


def batch_assess(image_dir: Path, checkpoint: Path, out_csv: Path,
                 maps_dir: Path | None = None, style: str = "gray") -> BatchResult:
    """Score every image in a directory against a checkpoint.

    Emits ``id,qs`` rows sorted by id under two comment headers recording
    score polarity and assessment resolution.  Unreadable files become
    per-row errors and the run continues; reruns are byte-identical.
    """
    cfg, _, disc, _, _ = load_networks(checkpoint)
    resolution = cfg.resolution
    rows, errors = [], []
    for path in _iter_image_files(image_dir):
        image_id = path.stem
        bgr = cv2.imread(str(path), cv2.IMREAD_COLOR)
        if bgr is None:
            errors.append(f"{image_id}: unreadable image")
            continue
        rgb = resize_image(cv2.cvtColor(bgr, cv2.COLOR_BGR2RGB), resolution)
        unit = to_signed_unit(ImageBuffer(np.ascontiguousarray(rgb),
                                          "byte255", ROLE_HQ))
        smap = score_map(unit, disc)
        qs = quality_score(smap, image_id)
        rows.append((image_id, qs.value))
        if maps_dir is not None:
            export_map(smap, Path(maps_dir) / f"{image_id}.png", style=style)
    lines = ["# polarity: higher", f"# resolution: {resolution}", "id,qs"]
    lines += [f"{image_id},{value:.6f}" for image_id, value in rows]
    atomic_write_text(Path(out_csv), "\n".join(lines) + "\n")
    return BatchResult(csv_path=Path(out_csv), rows=len(rows), errors=errors)
