"""Command-line entry point: synth, degrade, train, assess, eval, study-serve.

Exit codes: 0 success, 1 validation problem (bad flags, bad config, bad
input data), 2 runtime failure (IO, missing checkpoint, diverged run).
``IFQA_NUM_WORKERS`` caps data-pipeline parallelism for the degrade
subcommand; everything else is flag- or config-file-driven.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import cv2
import numpy as np

from . import __version__, degradation, evalstats, trainer
from .errors import (
    ConfigError,
    DatasetError,
    DomainError,
    FaceQAError,
    ParameterError,
    ShapeError,
    UndefinedCorrelationError,
)
from .facedata import load_dataset, save_dataset, synth_faces
from .ioutil import atomic_write_text
from .networks import CHECKPOINT_FORMAT_VERSION

ENV_NUM_WORKERS = "IFQA_NUM_WORKERS"

_VALIDATION_ERRORS = (ConfigError, ParameterError, DomainError, ShapeError,
                      DatasetError, UndefinedCorrelationError)


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def num_workers() -> int:
    raw = os.environ.get(ENV_NUM_WORKERS, "").strip()
    if not raw:
        return 1
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"{ENV_NUM_WORKERS} must be an integer, got {raw!r}")
    if value < 1:
        raise ConfigError(f"{ENV_NUM_WORKERS} must be >= 1, got {value}")
    return value


# ---------------------------------------------------------------------------
# subcommands


def _cmd_synth(args) -> int:
    if args.study:
        from .studysvc import make_study_samples
        root = make_study_samples(Path(args.out), n_samples=args.count,
                                  seed=args.seed, resolution=args.resolution)
        print(f"wrote {args.count} study samples under {root}")
        return 0
    faces = synth_faces(args.seed, args.count, args.resolution)
    save_dataset(faces, Path(args.out))
    print(f"wrote {len(faces)} samples to {args.out}")
    return 0


def _degrade_one(job) -> tuple:
    in_path, out_path, params_json = job
    bgr = cv2.imread(in_path, cv2.IMREAD_COLOR)
    if bgr is None:
        return Path(in_path).stem, "unreadable image"
    from .facedata import DOMAIN_BYTE, ImageBuffer, ROLE_HQ
    img = ImageBuffer(np.ascontiguousarray(cv2.cvtColor(bgr, cv2.COLOR_BGR2RGB)),
                      DOMAIN_BYTE, ROLE_HQ)
    params = degradation.DegradationParams.from_json_dict(params_json)
    lq = degradation.degrade(img, params)
    cv2.imwrite(out_path, cv2.cvtColor(lq.data, cv2.COLOR_RGB2BGR))
    return Path(in_path).stem, None


def _cmd_degrade(args) -> int:
    in_dir, out_dir = Path(getattr(args, "in")), Path(args.out)
    ranges = degradation.DegradationRanges(
        scale_min=args.r_min, scale_max=args.r_max,
        sigma_min=args.sigma_min, sigma_max=args.sigma_max,
        jpeg_q_min=args.q_min, jpeg_q_max=args.q_max,
        use_jpeg=not args.no_jpeg)
    paths = sorted(p for p in in_dir.glob("*.png")
                   if not p.name.endswith(".mask.png"))
    if not paths:
        raise ConfigError(f"no .png images under {in_dir}")
    out_dir.mkdir(parents=True, exist_ok=True)
    jobs, manifest = [], []
    for index, path in enumerate(paths):
        rng = np.random.default_rng(degradation.per_image_seed(args.seed, index))
        params = degradation.sample_params(rng, ranges)
        jobs.append((str(path), str(out_dir / path.name), params.to_json_dict()))
        manifest.append({"id": path.stem, "params": params.to_json_dict()})
    workers = num_workers()
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_degrade_one, jobs))
    else:
        results = [_degrade_one(job) for job in jobs]
    errors = [(image_id, err) for image_id, err in results if err]
    atomic_write_text(out_dir / "manifest.jsonl",
                      "".join(json.dumps(row) + "\n" for row in manifest))
    for image_id, err in errors:
        print(f"error: {image_id}: {err}", file=sys.stderr)
    print(f"degraded {len(jobs) - len(errors)}/{len(jobs)} images into {out_dir}")
    return 0 if not errors else 2


def _dump_fprs_pairs(dataset, cfg, dump_dir: Path, count: int = 8) -> None:
    from . import fprs
    from .assessor import _gray_bytes  # same gray quantization as map export
    from .facedata import MaskMap

    dump_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(cfg.seed)
    for i, sample in enumerate(dataset[:count]):
        params = degradation.sample_params(rng, cfg.ranges)
        lq = degradation.degrade(sample.image, params)
        spec = fprs.random_swap_spec(rng)
        m = fprs.region_mask(sample.regions, spec, sample.face_mask.shape)
        base = sample.face_mask if cfg.use_face_mask else \
            MaskMap(np.ones(sample.face_mask.shape, np.uint8))
        hq_in, hq_out = fprs.fprs_swap(sample.image, lq, m)
        t_in, t_out = fprs.fprs_pair_targets(m, base)
        for tag, img, target in (("hq_in", hq_in, t_in), ("hq_out", hq_out, t_out)):
            cv2.imwrite(str(dump_dir / f"{sample.id}_{tag}.png"),
                        cv2.cvtColor(img.data, cv2.COLOR_RGB2BGR))
            cv2.imwrite(str(dump_dir / f"{sample.id}_{tag}_target.png"),
                        _gray_bytes(target))
    print(f"dumped spliced previews for {min(count, len(dataset))} samples "
          f"to {dump_dir}")


def _cmd_train(args) -> int:
    if (args.data is None) == (args.synth is None):
        raise UsageError("exactly one of --data or --synth is required")
    cfg = trainer.load_config_file(args.config) if args.config \
        else trainer.toy_config()
    if args.data:
        loaded = load_dataset(Path(args.data), cfg.net.resolution)
        for line in loaded.errors:
            print(f"dataset: {line}", file=sys.stderr)
        if loaded.warnings:
            print(f"dataset: skipped {loaded.warnings} unreadable file(s)",
                  file=sys.stderr)
        dataset = loaded.samples
        if not dataset:
            raise DatasetError(f"no usable samples under {args.data}")
    else:
        dataset = synth_faces(cfg.seed, args.synth, cfg.net.resolution)
    if args.dump_fprs:
        _dump_fprs_pairs(dataset, cfg, Path(args.dump_fprs))
    try:
        ckpt = trainer.fit(cfg, dataset, Path(args.out),
                           resume_from=Path(args.resume) if args.resume else None)
    except KeyboardInterrupt:
        print("interrupted; checkpoint saved", file=sys.stderr)
        return 0
    print(f"final checkpoint: {ckpt}")
    return 0


def _cmd_assess(args) -> int:
    from .assessor import batch_assess, masked_quality_score, score_map
    result = batch_assess(Path(getattr(args, "in")), Path(args.ckpt),
                          Path(args.csv),
                          maps_dir=Path(args.maps) if args.maps else None,
                          style=args.style)
    for line in result.errors:
        print(f"error: {line}", file=sys.stderr)
    print(f"assessed {result.rows} image(s) -> {result.csv_path}")
    if args.masks:
        from .facedata import (DOMAIN_BYTE, ImageBuffer, MaskMap, ROLE_HQ,
                               resize_image, to_signed_unit)
        from .networks import load_networks
        cfg, _, disc, _, _ = load_networks(Path(args.ckpt))
        print("face-area mean scores (supplementary, not the headline metric):")
        for mask_path in sorted(Path(args.masks).glob("*.mask.png")):
            image_id = mask_path.name[:-len(".mask.png")]
            img_path = Path(getattr(args, "in")) / f"{image_id}.png"
            bgr = cv2.imread(str(img_path), cv2.IMREAD_COLOR)
            raw_mask = cv2.imread(str(mask_path), cv2.IMREAD_GRAYSCALE)
            if bgr is None or raw_mask is None:
                continue
            rgb = resize_image(cv2.cvtColor(bgr, cv2.COLOR_BGR2RGB),
                               cfg.resolution)
            mask = (resize_image(raw_mask[..., None].repeat(3, 2),
                                 cfg.resolution)[..., 0] >= 128).astype(np.uint8)
            unit = to_signed_unit(ImageBuffer(np.ascontiguousarray(rgb),
                                              DOMAIN_BYTE, ROLE_HQ))
            value = masked_quality_score(score_map(unit, disc), MaskMap(mask))
            print(f"  {image_id}: {value:.6f}")
    return 0 if not result.errors else 2


def _cmd_eval(args) -> int:
    records, rejected = evalstats.load_responses(Path(args.human))
    for line in rejected:
        print(f"responses: {line}", file=sys.stderr)
    by_sample = {}
    for rec in records:
        by_sample.setdefault(rec.sample_id, []).append(rec)
    if not by_sample:
        raise ParameterError(f"no usable responses in {args.human}")
    human = {}
    for sid, recs in sorted(by_sample.items()):
        agg = evalstats.weighted_rank(recs)
        for rater, reason in agg.rejected:
            print(f"responses: {sid}/{rater}: {reason}", file=sys.stderr)
        human[sid] = agg.scores
    metrics = []
    for spec_arg in args.scores:
        name, _, path = spec_arg.rpartition("=")
        metrics.append(evalstats.load_metric_csv(Path(path), name=name or None))
    rows = evalstats.benchmark(human, metrics, pooled=args.pooled)
    sys.stdout.write(evalstats.render_table(rows))
    if args.csv:
        evalstats.write_table_csv(rows, Path(args.csv))
        print(f"table written to {args.csv}")
    return 0


def _cmd_study_serve(args) -> int:
    from .studysvc import Study, StudyConfig, serve
    study = Study(StudyConfig(
        samples_root=Path(args.samples), log_path=Path(args.out),
        target_raters=args.target_raters, shuffle_seed=args.shuffle_seed))
    for line in study.replay_warnings:
        print(f"log replay: {line}", file=sys.stderr)
    stats = study.stats()
    print(f"serving {stats['samples']} sample(s) on port {args.port}; "
          f"{stats['responses']} response(s) replayed from {args.out}")
    serve(study, port=args.port, host=args.host,
          ui_dir=Path(args.ui) if args.ui else None)
    return 0


# ---------------------------------------------------------------------------
# parser wiring


def build_parser() -> _Parser:
    parser = _Parser(prog="faceqa", description=__doc__)
    parser.add_argument(
        "--version", action="version",
        version=f"faceqa {__version__} "
                f"(checkpoint format {CHECKPOINT_FORMAT_VERSION})")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic face corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--resolution", type=int, default=64)
    p.add_argument("--study", action="store_true",
                   help="emit ranking-study sample directories instead of a "
                        "training corpus")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("degrade", help="corrupt a directory of images")
    p.add_argument("--in", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--r-min", type=float, default=0.4)
    p.add_argument("--r-max", type=float, default=0.9)
    p.add_argument("--sigma-min", type=float, default=50.0)
    p.add_argument("--sigma-max", type=float, default=250.0)
    p.add_argument("--q-min", type=int, default=5)
    p.add_argument("--q-max", type=int, default=50)
    p.add_argument("--no-jpeg", action="store_true")
    p.set_defaults(func=_cmd_degrade)

    p = sub.add_parser("train", help="run adversarial training")
    p.add_argument("--data", help="corpus directory")
    p.add_argument("--synth", type=int,
                   help="generate this many synthetic faces instead")
    p.add_argument("--config", help="flat JSON config file; defaults to the "
                                    "toy 64x64 setup")
    p.add_argument("--out", required=True)
    p.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument("--dump-fprs", metavar="DIR",
                   help="write spliced image/target preview PNGs, then train")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("assess", help="score images with a trained checkpoint")
    p.add_argument("--in", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--csv", required=True)
    p.add_argument("--maps", help="also export per-pixel maps to this directory")
    p.add_argument("--style", choices=("gray", "color"), default="gray")
    p.add_argument("--masks", help="directory of <id>.mask.png files; adds a "
                                   "face-area mean report (supplementary)")
    p.set_defaults(func=_cmd_assess)

    p = sub.add_parser("eval", help="correlate metric scores with human rankings")
    p.add_argument("--human", required=True, help="responses JSONL")
    p.add_argument("--scores", nargs="+", required=True,
                   metavar="[NAME=]CSV")
    p.add_argument("--csv", help="also write the table as CSV here")
    p.add_argument("--pooled", action="store_true",
                   help="pool all samples into one correlation instead of "
                        "averaging per-sample values")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("study-serve", help="run the ranking-study service")
    p.add_argument("--samples", required=True)
    p.add_argument("--out", required=True, help="response log JSONL")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--target-raters", type=int, default=30)
    p.add_argument("--shuffle-seed", type=int, default=None)
    p.add_argument("--ui", help="directory of built frontend assets to host at /")
    p.set_defaults(func=_cmd_study_serve)

    return parser


def dispatch(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:       # --help / --version
        return int(exc.code or 0)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    try:
        return int(args.func(args) or 0)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except _VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (FaceQAError, OSError) as exc:
        print(f"failed: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
