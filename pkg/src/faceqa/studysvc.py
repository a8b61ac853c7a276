"""Ranking-study backend: assignment balancing, response log, aggregation.

The study root holds one directory per sample; each directory's images
are the candidates to rank, and a file named ``reference.*`` is excluded
from presentations by default.  Responses append to a JSONL log which is
flushed and fsynced per accept; restarting the service replays the log,
so the in-memory aggregates are always reproducible from the file alone.

Writes are serialized by a lock; readers see immutable snapshots that
are swapped in whole, so no read path blocks on the writer.
"""

import json
import os
import threading
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, FaceQAError, ParameterError
from .evalstats import RankingRecord, weighted_rank

_IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")
REFERENCE_STEM = "reference"


class UnknownSampleError(FaceQAError, LookupError):
    """Requested sample id is not part of the study."""


class DuplicateResponseError(FaceQAError, RuntimeError):
    """This (rater, sample) pair already answered; first submission wins."""


class EmptyScopeError(FaceQAError, LookupError):
    """No responses exist for the requested scope."""


@dataclass(frozen=True)
class StudyConfig:
    samples_root: Path
    log_path: Path
    target_raters: int = 30
    exclude_reference: bool = True
    shuffle_seed: int | None = None

    def __post_init__(self):
        if self.target_raters < 1:
            raise ConfigError(f"target_raters must be >= 1, got {self.target_raters}")


def _discover_samples(root: Path, exclude_reference: bool) -> dict:
    """Map sample id -> {image id -> path} for every usable subdirectory."""
    root = Path(root)
    if not root.is_dir():
        raise ConfigError(f"study root {root} is not a directory")
    samples = {}
    for sub in sorted(p for p in root.iterdir() if p.is_dir()):
        images = {}
        for f in sorted(sub.iterdir()):
            if f.suffix.lower() not in _IMAGE_SUFFIXES or f.name.endswith(".mask.png"):
                continue
            if exclude_reference and f.stem == REFERENCE_STEM:
                continue
            images[f.stem] = f
        if len(images) >= 2:
            samples[sub.name] = images
    if not samples:
        raise ConfigError(f"study root {root} holds no usable samples")
    return samples


class Study:
    """All study state: samples, balanced assignment, durable responses."""

    def __init__(self, cfg: StudyConfig):
        self.cfg = cfg
        self._samples = _discover_samples(cfg.samples_root, cfg.exclude_reference)
        self._lock = threading.Lock()
        self._shuffle_rng = np.random.default_rng(cfg.shuffle_seed)
        # immutable snapshots, swapped whole under the lock
        self._responses: tuple = ()
        self._by_key: dict = {}
        self._coverage: dict = {sid: 0 for sid in self._samples}
        self.replay_warnings: list = []
        self._replay_log()
        Path(cfg.log_path).parent.mkdir(parents=True, exist_ok=True)
        self._log = open(cfg.log_path, "a")

    # -- persistence --------------------------------------------------------

    def _replay_log(self) -> None:
        path = Path(self.cfg.log_path)
        if not path.exists():
            return
        for lineno, line in enumerate(path.read_text().splitlines(), start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                rec = RankingRecord(sample_id=str(row["sample_id"]),
                                    rater_id=str(row["rater_id"]),
                                    ordering=tuple(row["ordering"]))
            except (json.JSONDecodeError, KeyError, TypeError,
                    ParameterError) as exc:
                self.replay_warnings.append(f"line {lineno}: {exc}")
                continue
            try:
                self._validate(rec.rater_id, rec.sample_id, rec.ordering)
            except (FaceQAError, ParameterError) as exc:
                self.replay_warnings.append(f"line {lineno}: {exc}")
                continue
            self._apply(rec)

    def _append_durably(self, rec: RankingRecord) -> None:
        self._log.write(json.dumps({
            "sample_id": rec.sample_id,
            "rater_id": rec.rater_id,
            "ordering": list(rec.ordering),
        }) + "\n")
        self._log.flush()
        os.fsync(self._log.fileno())

    def close(self) -> None:
        self._log.close()

    # -- state transitions --------------------------------------------------

    def _validate(self, rater: str, sample_id: str, ordering) -> None:
        if sample_id not in self._samples:
            raise UnknownSampleError(f"unknown sample {sample_id!r}")
        if not rater:
            raise ParameterError("rater token must be non-empty")
        expected = set(self._samples[sample_id])
        given = [str(v) for v in ordering]
        if len(set(given)) != len(given):
            raise ParameterError(
                f"ordering repeats an image id: {given}")
        if set(given) != expected or len(given) != len(expected):
            raise ParameterError(
                f"ordering must be a permutation of {sorted(expected)}, "
                f"got {given}")
        if (rater, sample_id) in self._by_key:
            raise DuplicateResponseError(
                f"rater {rater!r} already answered sample {sample_id!r}")

    def _apply(self, rec: RankingRecord) -> None:
        self._responses = self._responses + (rec,)
        by_key = dict(self._by_key)
        by_key[(rec.rater_id, rec.sample_id)] = rec
        self._by_key = by_key
        coverage = dict(self._coverage)
        coverage[rec.sample_id] += 1
        self._coverage = coverage

    def submit(self, rater: str, sample_id: str, ordering) -> dict:
        """Validate, log durably, then fold into the aggregates."""
        with self._lock:
            self._validate(rater, sample_id, ordering)
            rec = RankingRecord(sample_id=sample_id, rater_id=str(rater),
                                ordering=tuple(str(v) for v in ordering))
            self._append_durably(rec)
            self._apply(rec)
            coverage = self._coverage[sample_id]
        return {
            "accepted": True,
            "responses": len(self._responses),
            "sample_coverage": coverage,
            "sample_complete": coverage >= self.cfg.target_raters,
        }

    # -- queries ------------------------------------------------------------

    def next_assignment(self, rater: str) -> dict:
        """Least-covered unanswered sample, images freshly shuffled."""
        if not rater:
            raise ParameterError("rater token must be non-empty")
        by_key = self._by_key
        coverage = self._coverage
        open_samples = [sid for sid in self._samples
                        if (rater, sid) not in by_key]
        answered = len(self._samples) - len(open_samples)
        if not open_samples:
            return {"done": True, "rater": rater, "answered": answered,
                    "total": len(self._samples)}
        sid = min(open_samples, key=lambda s: (coverage[s], s))
        images = list(self._samples[sid])
        with self._lock:
            self._shuffle_rng.shuffle(images)
        return {
            "done": False,
            "sample_id": sid,
            "images": images,
            "answered": answered,
            "total": len(self._samples),
        }

    def image_path(self, sample_id: str, image_id: str) -> Path:
        if sample_id not in self._samples:
            raise UnknownSampleError(f"unknown sample {sample_id!r}")
        images = self._samples[sample_id]
        if image_id not in images:
            raise UnknownSampleError(
                f"unknown image {image_id!r} in sample {sample_id!r}")
        return images[image_id]

    def _sample_result(self, sample_id: str, records) -> dict:
        agg = weighted_rank(records)
        return {
            "sample_id": sample_id,
            "scores": agg.scores,
            "ordering": agg.ordering,
            "rater_count": agg.rater_count,
            "complete": agg.rater_count >= self.cfg.target_raters,
        }

    def results(self, sample_id: str | None = None):
        """Weighted-rank aggregation of everything accepted so far."""
        snapshot = self._responses
        if sample_id is not None:
            if sample_id not in self._samples:
                raise UnknownSampleError(f"unknown sample {sample_id!r}")
            records = [r for r in snapshot if r.sample_id == sample_id]
            if not records:
                raise EmptyScopeError(f"no responses for sample {sample_id!r}")
            return self._sample_result(sample_id, records)
        per_sample = {}
        for rec in snapshot:
            per_sample.setdefault(rec.sample_id, []).append(rec)
        if not per_sample:
            raise EmptyScopeError("no responses recorded yet")
        return [self._sample_result(sid, per_sample[sid])
                for sid in sorted(per_sample)]

    def stats(self) -> dict:
        return {
            "samples": len(self._samples),
            "responses": len(self._responses),
            "coverage": dict(sorted(self._coverage.items())),
            "target_raters": self.cfg.target_raters,
        }


# ---------------------------------------------------------------------------
# HTTP surface


def build_app(study: Study, ui_dir: Path | None = None):
    from fastapi import FastAPI, HTTPException
    from fastapi.responses import FileResponse
    from fastapi.staticfiles import StaticFiles
    from pydantic import BaseModel

    class ResponseBody(BaseModel):
        rater: str
        sample_id: str
        ordering: list

    app = FastAPI(title="ranking study service")

    @app.get("/api/health")
    def health():
        return {"status": "ok", **study.stats()}

    @app.get("/api/assignment")
    def assignment(rater: str):
        try:
            return study.next_assignment(rater)
        except ParameterError as exc:
            raise HTTPException(status_code=422, detail=str(exc))

    @app.post("/api/response")
    def response(body: ResponseBody):
        try:
            return study.submit(body.rater, body.sample_id, body.ordering)
        except DuplicateResponseError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        except UnknownSampleError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        except ParameterError as exc:
            raise HTTPException(status_code=422,
                                detail={"field": "ordering", "reason": str(exc)})

    @app.get("/api/results")
    def results(sample: str | None = None):
        try:
            return study.results(sample)
        except (UnknownSampleError, EmptyScopeError) as exc:
            raise HTTPException(status_code=404, detail=str(exc))

    @app.get("/api/image/{sample_id}/{image_id}")
    def image(sample_id: str, image_id: str):
        try:
            path = study.image_path(sample_id, image_id)
        except UnknownSampleError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        return FileResponse(path)

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app


def serve(study: Study, port: int, ui_dir: Path | None = None,
          host: str = "127.0.0.1") -> None:
    import uvicorn

    uvicorn.run(build_app(study, ui_dir=ui_dir), host=host, port=port,
                log_level="warning")


# ---------------------------------------------------------------------------
# demo corpus


def make_study_samples(out_root: Path, n_samples: int = 5, seed: int = 0,
                       resolution: int = 64, variants: int = 6) -> Path:
    """Build a ready-to-serve study corpus from the synthetic generator.

    Each sample directory gets a clean ``reference.png`` plus `variants`
    images ``v0..v{k}`` of strictly increasing degradation severity, so
    a severity-aware oracle can rank them without a trained model.
    """
    import cv2

    from . import degradation
    from .facedata import synth_faces

    out_root = Path(out_root)
    faces = synth_faces(seed, n_samples, resolution)
    rng = np.random.default_rng(seed)
    for i, sample in enumerate(faces):
        d = out_root / f"sample_{i:03d}"
        d.mkdir(parents=True, exist_ok=True)
        cv2.imwrite(str(d / "reference.png"),
                    cv2.cvtColor(sample.image.data, cv2.COLOR_RGB2BGR))
        for k in range(variants):
            t = k / max(1, variants - 1)
            params = degradation.DegradationParams(
                kernel=degradation.gaussian_kernel(13, 0.8 + 4.0 * t),
                scale_r=1.0 - 0.55 * t,
                noise_sigma=2.0 + 60.0 * t,
                jpeg_q=max(5, int(round(90 - 80 * t))),
                seed=int(rng.integers(0, 2 ** 63 - 1)))
            lq = degradation.degrade(sample.image, params)
            cv2.imwrite(str(d / f"v{k}.png"),
                        cv2.cvtColor(lq.data, cv2.COLOR_RGB2BGR))
    return out_root
