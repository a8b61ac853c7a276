"""Restoration generator, per-pixel discriminator, and frozen feature pyramid.

All three are width/depth-parameterized so the test suite can train tiny
variants on CPU; the default ``NetConfig`` is the documented reference:
256x256 input, generator with five pooling encoder blocks (channels 64
to 1024) and six decoder blocks ending in tanh, discriminator with a
four-block encoder (128, 256, 512, 512), a skip-connected upsampling
decoder, and a sigmoid per-pixel head the same size as the input.
Every convolution is kernel 3, stride 1, padding 1.
"""

from __future__ import annotations

import os
import tempfile
from dataclasses import asdict, dataclass
from pathlib import Path

import torch
from torch import nn

from .errors import CheckpointError, ConfigError, ShapeError

HEAD_PER_PIXEL = "per_pixel"
HEAD_SINGLE_OUTPUT = "single_output"
_HEADS = (HEAD_PER_PIXEL, HEAD_SINGLE_OUTPUT)
_NORMS = ("instance", "none")

CHECKPOINT_FORMAT_VERSION = "1"

FEATURE_STAGES = 5
_FEATURE_MULT = (1, 2, 4, 8, 8)


@dataclass(frozen=True)
class NetConfig:
    """Architecture knobs shared by the three builders."""

    resolution: int = 256
    base_width: int = 64
    depth_down: int = 5
    depth_up: int = 6
    discriminator_head: str = HEAD_PER_PIXEL
    skip_connections: bool = True
    gen_norm: str = "instance"
    disc_base_width: int | None = None   # defaults to 2 * base_width
    disc_depth: int = 4
    feat_width: int = 64
    init_seed: int = 0

    def __post_init__(self):
        if self.depth_down < 1 or self.depth_up != self.depth_down + 1:
            raise ConfigError(
                f"need depth_up == depth_down + 1 >= 2, got "
                f"{self.depth_down}/{self.depth_up}")
        if self.resolution % (2 ** self.depth_down) != 0:
            raise ConfigError(
                f"resolution {self.resolution} not divisible by "
                f"2^{self.depth_down}")
        if self.resolution % (2 ** self.disc_depth) != 0:
            raise ConfigError(
                f"resolution {self.resolution} not divisible by "
                f"2^{self.disc_depth} (discriminator depth)")
        if self.discriminator_head not in _HEADS:
            raise ConfigError(f"unknown discriminator head {self.discriminator_head!r}")
        if self.gen_norm not in _NORMS:
            raise ConfigError(f"unknown generator norm {self.gen_norm!r}")
        if min(self.base_width, self.feat_width) < 1 or self.disc_depth < 1:
            raise ConfigError("widths and depths must be >= 1")

    @property
    def disc_width(self) -> int:
        return self.disc_base_width if self.disc_base_width else 2 * self.base_width


REFERENCE_CONFIG = NetConfig()


def _norm_layer(kind: str, ch: int) -> nn.Module:
    if kind == "instance":
        return nn.InstanceNorm2d(ch, affine=True)
    return nn.Identity()


class ResBlock(nn.Module):
    """conv-norm-act, conv-norm, residual add (1x1 projection), act."""

    def __init__(self, in_ch: int, out_ch: int, norm: str = "none"):
        super().__init__()
        self.conv1 = nn.Conv2d(in_ch, out_ch, 3, 1, 1)
        self.conv2 = nn.Conv2d(out_ch, out_ch, 3, 1, 1)
        self.norm1 = _norm_layer(norm, out_ch)
        self.norm2 = _norm_layer(norm, out_ch)
        self.act = nn.LeakyReLU(0.2)
        self.proj = nn.Conv2d(in_ch, out_ch, 1) if in_ch != out_ch else nn.Identity()

    def forward(self, x):
        h = self.act(self.norm1(self.conv1(x)))
        h = self.norm2(self.conv2(h))
        return self.act(h + self.proj(x))


def _decoder_plan(depth: int, enc_ch: list, tail_ch: int, use_skips: bool):
    """Shared decoder layout: which skip feeds each block, and channel sizes.

    Block j upsamples to the resolution of encoder output ``depth-2-j``
    and adopts its channel count; the last block (full resolution, where
    only the raw input would be left to skip from) gets ``tail_ch``.
    """
    plan = []
    prev = enc_ch[-1]
    for j in range(depth):
        skip = depth - 2 - j if (use_skips and j <= depth - 2) else None
        in_ch = prev + (enc_ch[skip] if skip is not None else 0)
        out_ch = enc_ch[depth - 2 - j] if j <= depth - 2 else tail_ch
        plan.append((skip, in_ch, out_ch))
        prev = out_ch
    return plan, prev


class Generator(nn.Module):
    """Encoder-decoder restorer: pool down, nearest-neighbor up, tanh out."""

    def __init__(self, cfg: NetConfig):
        super().__init__()
        self.cfg = cfg
        enc_ch = [cfg.base_width * 2 ** i for i in range(cfg.depth_down)]
        self.enc = nn.ModuleList(
            ResBlock(3 if i == 0 else enc_ch[i - 1], enc_ch[i], cfg.gen_norm)
            for i in range(cfg.depth_down))
        self.pool = nn.AvgPool2d(2)
        plan, last = _decoder_plan(cfg.depth_down, enc_ch, cfg.base_width,
                                   cfg.skip_connections)
        self.skip_sources = [p[0] for p in plan]
        self.dec = nn.ModuleList(
            ResBlock(in_ch, out_ch, cfg.gen_norm) for (_, in_ch, out_ch) in plan)
        self.up = nn.Upsample(scale_factor=2, mode="nearest")
        self.final = ResBlock(last, 3, "none")

    def forward(self, x):
        if x.shape[-1] % (2 ** self.cfg.depth_down) != 0:
            raise ShapeError(
                f"input size {x.shape[-1]} not divisible by "
                f"2^{self.cfg.depth_down}")
        skips = []
        h = x
        for block in self.enc:
            h = self.pool(block(h))
            skips.append(h)
        for block, src in zip(self.dec, self.skip_sources):
            h = self.up(h)
            if src is not None:
                h = torch.cat([h, skips[src]], dim=1)
            h = block(h)
        return torch.tanh(self.final(h))


class _EncBlock(nn.Module):
    """Two 3x3 convs with LeakyReLU, then 2x max pooling."""

    def __init__(self, in_ch: int, out_ch: int):
        super().__init__()
        self.body = nn.Sequential(
            nn.Conv2d(in_ch, out_ch, 3, 1, 1), nn.LeakyReLU(0.2),
            nn.Conv2d(out_ch, out_ch, 3, 1, 1), nn.LeakyReLU(0.2),
            nn.MaxPool2d(2))

    def forward(self, x):
        return self.body(x)


class Discriminator(nn.Module):
    """Per-pixel realness scorer; optionally a single-scalar ablation head.

    The per-pixel variant decodes back to the input resolution through
    skip-connected upsampling residual blocks and ends in a sigmoid, so
    the output is an N x 1 x H x W map in (0, 1).  The single_output
    variant replaces the decoder with global average pooling and a
    linear layer, returning N x 1 scores.
    """

    def __init__(self, cfg: NetConfig):
        super().__init__()
        self.cfg = cfg
        self.head = cfg.discriminator_head
        width = cfg.disc_width
        enc_ch = [width * min(2 ** i, 4) for i in range(cfg.disc_depth)]
        self.enc = nn.ModuleList(
            _EncBlock(3 if i == 0 else enc_ch[i - 1], enc_ch[i])
            for i in range(cfg.disc_depth))
        if self.head == HEAD_SINGLE_OUTPUT:
            self.fc = nn.Linear(enc_ch[-1], 1)
        else:
            plan, last = _decoder_plan(cfg.disc_depth, enc_ch, enc_ch[0] // 2,
                                       cfg.skip_connections)
            self.skip_sources = [p[0] for p in plan]
            self.dec = nn.ModuleList(
                ResBlock(in_ch, out_ch, "none") for (_, in_ch, out_ch) in plan)
            self.up = nn.Upsample(scale_factor=2, mode="nearest")
            self.final = nn.Conv2d(last, 1, 3, 1, 1)

    def forward(self, x):
        factor = 2 ** self.cfg.disc_depth
        if x.shape[-2] % factor or x.shape[-1] % factor:
            raise ShapeError(
                f"input size {tuple(x.shape[-2:])} not divisible by {factor}")
        skips = []
        h = x
        for block in self.enc:
            h = block(h)
            skips.append(h)
        if self.head == HEAD_SINGLE_OUTPUT:
            pooled = h.mean(dim=(2, 3))
            return torch.sigmoid(self.fc(pooled))
        for block, src in zip(self.dec, self.skip_sources):
            h = self.up(h)
            if src is not None:
                h = torch.cat([h, skips[src]], dim=1)
            h = block(h)
        return torch.sigmoid(self.final(h))


class FeaturePyramid(nn.Module):
    """Five conv stages, each ending in 2x max pooling, weights frozen.

    Pooling is skipped once a map reaches 1 pixel so tiny inputs still
    produce five stages.  Randomly initialized by default (seed recorded
    in the owning config); a state-dict file of matching shapes can be
    loaded to substitute pretrained weights.
    """

    def __init__(self, width: int):
        super().__init__()
        chans = [width * m for m in _FEATURE_MULT]
        self.stages = nn.ModuleList(
            nn.Sequential(
                nn.Conv2d(3 if i == 0 else chans[i - 1], chans[i], 3, 1, 1),
                nn.ReLU())
            for i in range(FEATURE_STAGES))
        self.pool = nn.MaxPool2d(2)

    def forward(self, x):
        feats = []
        h = x
        for stage in self.stages:
            h = stage(h)
            if min(h.shape[-2], h.shape[-1]) >= 2:
                h = self.pool(h)
            feats.append(h)
        return feats


def build_generator(cfg: NetConfig) -> Generator:
    torch.manual_seed(cfg.init_seed)
    return Generator(cfg)


def build_discriminator(cfg: NetConfig) -> Discriminator:
    torch.manual_seed(cfg.init_seed ^ 0x5EED)
    return Discriminator(cfg)


def build_feature_extractor(cfg: NetConfig,
                            weights_path: str | os.PathLike | None = None
                            ) -> FeaturePyramid:
    torch.manual_seed(cfg.init_seed ^ 0xFEA7)
    net = FeaturePyramid(cfg.feat_width)
    if weights_path is not None:
        try:
            state = torch.load(weights_path, weights_only=True)
            net.load_state_dict(state)
        except (RuntimeError, KeyError, FileNotFoundError) as exc:
            raise CheckpointError(
                f"feature weights {weights_path}: {exc}") from exc
    for p in net.parameters():
        p.requires_grad_(False)
    net.eval()
    return net


# ---------------------------------------------------------------------------
# checkpoint archive


def atomic_torch_save(payload: dict, path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            torch.save(payload, fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_networks(path: Path, cfg: NetConfig, generator: Generator,
                  discriminator: Discriminator, feature_extractor: FeaturePyramid,
                  extra: dict | None = None) -> None:
    """Write the single-archive checkpoint; `extra` rides along untouched."""
    payload = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "config": asdict(cfg),
        "init_seed": cfg.init_seed,
        "generator": generator.state_dict(),
        "discriminator": discriminator.state_dict(),
        "feature_extractor": feature_extractor.state_dict(),
    }
    if extra:
        overlap = set(extra) & set(payload)
        if overlap:
            raise CheckpointError(f"extra keys collide with archive keys: {overlap}")
        payload.update(extra)
    atomic_torch_save(payload, path)


def load_networks(path: Path):
    """Rebuild (cfg, G, D, F) from an archive; returns the raw payload too."""
    try:
        payload = torch.load(path, weights_only=True)
    except (RuntimeError, FileNotFoundError, EOFError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    version = payload.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointError(
            f"checkpoint format {version!r} unsupported "
            f"(expected {CHECKPOINT_FORMAT_VERSION!r})")
    cfg = NetConfig(**payload["config"])
    gen = build_generator(cfg)
    disc = build_discriminator(cfg)
    feat = build_feature_extractor(cfg)
    try:
        gen.load_state_dict(payload["generator"])
        disc.load_state_dict(payload["discriminator"])
        feat.load_state_dict(payload["feature_extractor"])
    except (RuntimeError, KeyError) as exc:
        raise CheckpointError(f"checkpoint {path} mismatch: {exc}") from exc
    return cfg, gen, disc, feat, payload
