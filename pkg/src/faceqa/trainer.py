"""Alternating adversarial training loop with on-the-fly degradation.

Each step degrades the batch with freshly sampled parameters, runs one
discriminator update (clean faces as real with face-mask targets,
degraded and restored images as fake, optionally spliced images with
pixel-level targets), then one generator update on the weighted total.
Everything stochastic draws from a single numpy generator held in the
state, so runs are bit-reproducible and resumable from checkpoints.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from . import degradation, fprs
from .errors import ConfigError, TrainingDiverged
from .facedata import (
    DOMAIN_UNIT,
    FaceSample,
    ImageBuffer,
    MaskMap,
    ROLE_RF,
    from_signed_unit,
    to_signed_unit,
)
from .networks import (
    HEAD_SINGLE_OUTPUT,
    NetConfig,
    build_discriminator,
    build_feature_extractor,
    build_generator,
    load_networks,
    save_networks,
)
from .objectives import (
    LossWeights,
    adv_d_loss,
    adv_g_loss,
    perceptual_loss,
    pixel_loss,
    total_g_loss,
)

AUGMENTATIONS = ("none", "cutmix", "fprs")


@dataclass(frozen=True)
class TrainConfig:
    net: NetConfig = NetConfig()
    weights: LossWeights = LossWeights()
    ranges: degradation.DegradationRanges = degradation.DegradationRanges()
    steps: int = 2000
    batch_size: int = 8
    lr_g: float = 1e-4
    lr_d: float = 1e-4
    beta1: float = 0.5
    beta2: float = 0.999
    fprs_probability: float = 0.5
    augmentation: str = "fprs"
    use_face_mask: bool = True
    seed: int = 0
    checkpoint_every: int = 500
    pixel_squared: bool = True

    def __post_init__(self):
        if self.steps < 1:
            raise ConfigError(f"steps must be >= 1, got {self.steps}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.lr_g <= 0 or self.lr_d <= 0:
            raise ConfigError("learning rates must be > 0")
        if not (0.0 <= self.fprs_probability <= 1.0):
            raise ConfigError(
                f"fprs_probability must be in [0, 1], got {self.fprs_probability}")
        if self.augmentation not in AUGMENTATIONS:
            raise ConfigError(f"unknown augmentation {self.augmentation!r}")
        if (self.net.discriminator_head == HEAD_SINGLE_OUTPUT
                and self.augmentation != "none"):
            raise ConfigError(
                "spliced-image supervision needs a per-pixel head; "
                "use augmentation='none' with single_output")


def toy_config(seed: int = 0, steps: int = 1000) -> TrainConfig:
    """Small CPU-friendly setup: 64x64 images, narrow nets.

    Degradation keeps the stock sampling ranges; at this noise level the
    damaged images are far from the clean manifold, which is exactly the
    contrast the toy separation check needs.
    """
    net = NetConfig(resolution=64, base_width=8, depth_down=3, depth_up=4,
                    disc_base_width=16, disc_depth=3, feat_width=8,
                    init_seed=seed)
    return TrainConfig(net=net, steps=steps, batch_size=8, seed=seed,
                       checkpoint_every=max(100, steps // 2))


# flat config-file mapping: one JSON object, one key per leaf field
_NET_FIELDS = tuple(NetConfig.__dataclass_fields__)
_WEIGHT_FIELDS = tuple(LossWeights.__dataclass_fields__)
_RANGE_FIELDS = tuple(degradation.DegradationRanges.__dataclass_fields__)
_OWN_FIELDS = tuple(f for f in TrainConfig.__dataclass_fields__
                    if f not in ("net", "weights", "ranges"))


def config_to_flat(cfg: TrainConfig) -> dict:
    flat = {}
    flat.update(asdict(cfg.net))
    flat.update(asdict(cfg.weights))
    flat.update(asdict(cfg.ranges))
    for name in _OWN_FIELDS:
        flat[name] = getattr(cfg, name)
    return flat


def config_from_flat(flat: dict) -> TrainConfig:
    unknown = set(flat) - set(_NET_FIELDS) - set(_WEIGHT_FIELDS) \
        - set(_RANGE_FIELDS) - set(_OWN_FIELDS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    net = NetConfig(**{k: flat[k] for k in _NET_FIELDS if k in flat})
    weights = LossWeights(**{k: flat[k] for k in _WEIGHT_FIELDS if k in flat})
    ranges = degradation.DegradationRanges(
        **{k: flat[k] for k in _RANGE_FIELDS if k in flat})
    own = {k: flat[k] for k in _OWN_FIELDS if k in flat}
    return TrainConfig(net=net, weights=weights, ranges=ranges, **own)


def load_config_file(path: Path) -> TrainConfig:
    try:
        flat = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(flat, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    return config_from_flat(flat)


@dataclass
class TrainState:
    cfg: TrainConfig
    generator: torch.nn.Module
    discriminator: torch.nn.Module
    features: torch.nn.Module
    opt_g: torch.optim.Optimizer
    opt_d: torch.optim.Optimizer
    rng: np.random.Generator
    step: int = 0


def init_state(cfg: TrainConfig) -> TrainState:
    gen = build_generator(cfg.net)
    disc = build_discriminator(cfg.net)
    feat = build_feature_extractor(cfg.net)
    opt_g = torch.optim.Adam(gen.parameters(), lr=cfg.lr_g,
                             betas=(cfg.beta1, cfg.beta2))
    opt_d = torch.optim.Adam(disc.parameters(), lr=cfg.lr_d,
                             betas=(cfg.beta1, cfg.beta2))
    return TrainState(cfg=cfg, generator=gen, discriminator=disc, features=feat,
                      opt_g=opt_g, opt_d=opt_d,
                      rng=np.random.default_rng(cfg.seed), step=0)


def _to_batch(images: Sequence[ImageBuffer]) -> torch.Tensor:
    arr = np.stack([img.data for img in images])
    return torch.from_numpy(arr).permute(0, 3, 1, 2).contiguous()


def _maps_to_target(maps: Sequence[np.ndarray]) -> torch.Tensor:
    return torch.from_numpy(np.stack(maps).astype(np.float32)).unsqueeze(1)


def _rf_to_buffer(rf_row: torch.Tensor) -> ImageBuffer:
    arr = rf_row.detach().permute(1, 2, 0).numpy()
    unit = ImageBuffer(arr, DOMAIN_UNIT, ROLE_RF)
    return from_signed_unit(unit)


def _target_mask(sample: FaceSample, use_face_mask: bool) -> MaskMap:
    if use_face_mask:
        return sample.face_mask
    return MaskMap(np.ones(sample.face_mask.shape, np.uint8))


def _spliced_real_entries(state: TrainState, samples, lq_imgs, rf_t):
    """Build (image tensor rows, target maps) for this step's splices."""
    cfg = state.cfg
    entries = []
    if cfg.augmentation == "none":
        return entries
    for i, sample in enumerate(samples):
        if float(state.rng.random()) >= cfg.fprs_probability:
            continue
        base = _target_mask(sample, cfg.use_face_mask)
        other = lq_imgs[i] if float(state.rng.random()) < 0.5 \
            else _rf_to_buffer(rf_t[i])
        if cfg.augmentation == "fprs":
            spec = fprs.random_swap_spec(state.rng)
            m = fprs.region_mask(sample.regions, spec,
                                 sample.face_mask.shape)
            hq_in, hq_out = fprs.fprs_swap(sample.image, other, m)
            t_in, t_out = fprs.fprs_pair_targets(m, base)
            entries.append((to_signed_unit(hq_in), t_in.data))
            entries.append((to_signed_unit(hq_out), t_out.data))
        else:  # cutmix: patch content comes from `other`
            mixed, patch = fprs.cutmix_swap(sample.image, other, state.rng)
            target = fprs.supervision_target(patch, base, hq_inside_mask=False)
            entries.append((to_signed_unit(mixed), target.data))
    return entries


def _discriminator_update(state: TrainState, samples, hq_t, lq_t, lq_imgs, rf_t):
    """One least-squares D step; returns (loss, real-pool mean, fake-pool mean).

    The restored images enter detached, so no gradient reaches the
    generator from here.
    """
    cfg = state.cfg
    disc = state.discriminator
    if cfg.net.discriminator_head == HEAD_SINGLE_OUTPUT:
        d_real = disc(hq_t)
        target = torch.ones_like(d_real)
        d_fake = torch.cat([disc(lq_t), disc(rf_t.detach())])
    else:
        real_rows = [hq_t]
        target_maps = [_target_mask(s, cfg.use_face_mask).data for s in samples]
        spliced = _spliced_real_entries(state, samples, lq_imgs, rf_t)
        if spliced:
            real_rows.append(_to_batch([img for img, _ in spliced]))
            target_maps.extend(t for _, t in spliced)
        d_real = disc(torch.cat(real_rows))
        target = _maps_to_target(target_maps)
        d_fake = disc(torch.cat([lq_t, rf_t.detach()]))
    loss = adv_d_loss(d_real, target, d_fake)
    state.opt_d.zero_grad(set_to_none=True)
    loss.backward()
    state.opt_d.step()
    return loss, d_real.mean(), d_fake.mean()


def train_step(batch: Sequence[FaceSample], state: TrainState) -> dict:
    """Degrade, restore, one D update, one G update; returns the metrics row."""
    cfg = state.cfg
    lq_imgs = [degradation.degrade(s.image,
                                   degradation.sample_params(state.rng, cfg.ranges))
               for s in batch]
    hq_t = _to_batch([to_signed_unit(s.image) for s in batch])
    lq_t = _to_batch([to_signed_unit(img) for img in lq_imgs])

    rf_t = state.generator(lq_t)
    d_loss, d_real_mean, d_fake_mean = _discriminator_update(
        state, batch, hq_t, lq_t, lq_imgs, rf_t)

    adv = adv_g_loss(state.discriminator(rf_t))
    pix = pixel_loss(rf_t, hq_t, squared=cfg.pixel_squared)
    perc = perceptual_loss(rf_t, hq_t, state.features)
    g_loss = total_g_loss(adv, pix, perc, cfg.weights)
    state.opt_g.zero_grad(set_to_none=True)
    g_loss.backward()
    state.opt_g.step()

    values = {
        "loss_d": float(d_loss.detach()), "loss_g_total": float(g_loss.detach()),
        "loss_g_adv": float(adv.detach()), "loss_g_pix": float(pix.detach()),
        "loss_g_perc": float(perc.detach()),
        "d_real_mean": float(d_real_mean.detach()),
        "d_fake_mean": float(d_fake_mean.detach()),
    }
    if not all(np.isfinite(v) for v in values.values()):
        raise TrainingDiverged(
            f"non-finite loss at step {state.step}: {values}",
            batch_ids=tuple(s.id for s in batch))
    state.step += 1
    return {"step": state.step, **values}


# ---------------------------------------------------------------------------
# checkpointing with optimizer and rng state


def save_train_checkpoint(state: TrainState, path: Path) -> None:
    extra = {
        "step": state.step,
        "train_config": config_to_flat(state.cfg),
        "opt_g": state.opt_g.state_dict(),
        "opt_d": state.opt_d.state_dict(),
        "np_rng_state": state.rng.bit_generator.state,
    }
    save_networks(path, state.cfg.net, state.generator, state.discriminator,
                  state.features, extra=extra)


def load_train_checkpoint(path: Path) -> TrainState:
    _, gen, disc, feat, payload = load_networks(path)
    cfg = config_from_flat(payload["train_config"])
    opt_g = torch.optim.Adam(gen.parameters(), lr=cfg.lr_g,
                             betas=(cfg.beta1, cfg.beta2))
    opt_d = torch.optim.Adam(disc.parameters(), lr=cfg.lr_d,
                             betas=(cfg.beta1, cfg.beta2))
    opt_g.load_state_dict(payload["opt_g"])
    opt_d.load_state_dict(payload["opt_d"])
    rng = np.random.default_rng()
    rng.bit_generator.state = payload["np_rng_state"]
    return TrainState(cfg=cfg, generator=gen, discriminator=disc, features=feat,
                      opt_g=opt_g, opt_d=opt_d, rng=rng,
                      step=int(payload["step"]))


def fit(cfg: TrainConfig, dataset: Sequence[FaceSample], out_dir: Path,
        resume_from: Path | None = None) -> Path:
    """Run the loop to `cfg.steps`, returning the final checkpoint path.

    Emits one JSONL metrics record per step to ``out_dir/metrics.jsonl``
    and periodic checkpoints every ``checkpoint_every`` steps.  On
    KeyboardInterrupt the current state is saved before returning, so an
    interrupted run resumes exactly where it stopped.
    """
    if len(dataset) == 0:
        raise ConfigError("training dataset is empty")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if resume_from is not None:
        state = load_train_checkpoint(resume_from)
        # the caller may extend the run; everything else must match the
        # checkpoint so optimizer moments and rng stay meaningful
        caller = config_to_flat(cfg)
        stored = config_to_flat(state.cfg)
        for key in ("steps", "checkpoint_every"):
            caller.pop(key)
            stored.pop(key)
        if caller != stored:
            drift = sorted(k for k in caller if caller[k] != stored[k])
            raise ConfigError(
                f"resume config differs from checkpoint on {drift}; only "
                "steps and checkpoint_every may change")
        state.cfg = replace(state.cfg, steps=cfg.steps,
                            checkpoint_every=cfg.checkpoint_every)
        cfg = state.cfg
    else:
        state = init_state(cfg)
    final_path = out / "ckpt_final.pt"
    metrics_path = out / "metrics.jsonl"
    mode = "a" if (resume_from is not None and metrics_path.exists()) else "w"
    n = len(dataset)
    with open(metrics_path, mode) as metrics_file:
        try:
            while state.step < cfg.steps:
                idx = state.rng.choice(n, size=cfg.batch_size,
                                       replace=n < cfg.batch_size)
                record = train_step([dataset[int(i)] for i in idx], state)
                metrics_file.write(json.dumps(record) + "\n")
                metrics_file.flush()
                if cfg.checkpoint_every and state.step % cfg.checkpoint_every == 0 \
                        and state.step < cfg.steps:
                    save_train_checkpoint(
                        state, out / f"ckpt_step_{state.step:07d}.pt")
        except KeyboardInterrupt:
            save_train_checkpoint(state, final_path)
            return final_path
    save_train_checkpoint(state, final_path)
    return final_path
