"""Patch-sampling data pipeline and the optimization loop.

All randomness comes from one seeded numpy stream consumed in a fixed order,
so runs are reproducible and a resumed run continues the exact trajectory of
an uninterrupted one. Checkpoints hold the model weights, optimizer state,
step counter, best validation PSNR, and the sampler RNG state.
"""

from __future__ import annotations

import json
import logging
import math
import queue
import threading
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
import torch

from .errors import InvalidParam, NotFound, NumericalError, SampleError
from .inference import restore_video, usable_crop
from .losses import FeatureExtractor, LossReport, LossWeights, combined_loss
from .metrics import psnr
from .model import ModelConfig, RestorationModel, forward_restore, init_parameters, \
    load_weights, save_weights
from .video_io import Clip, ClipManifest, ManifestEntry, center_crop, load_clip

logger = logging.getLogger(__name__)


@dataclass
class OptimizerConfig:
    kind: str = "adam"
    lr: float = 2e-4
    betas: tuple[float, float] = (0.9, 0.999)
    weight_decay: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in ("adam", "adamw"):
            raise InvalidParam(f"unknown optimizer kind {self.kind!r}")
        self.betas = tuple(self.betas)


@dataclass
class LrSchedule:
    kind: str = "cosine"
    warmup_steps: int = 0

    def __post_init__(self) -> None:
        if self.kind not in ("constant", "cosine"):
            raise InvalidParam(f"unknown lr schedule {self.kind!r}")

    def scale(self, step: int, total_steps: int) -> float:
        if self.warmup_steps > 0 and step < self.warmup_steps:
            return (step + 1) / self.warmup_steps
        if self.kind == "constant":
            return 1.0
        span = max(1, total_steps - self.warmup_steps)
        progress = min(1.0, (step - self.warmup_steps) / span)
        return 0.5 * (1.0 + math.cos(math.pi * progress))


@dataclass
class TrainConfig:
    crop: int = 256
    t: int = 5
    batch_size: int = 8
    steps: int = 1000
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    lr_schedule: LrSchedule = field(default_factory=LrSchedule)
    weights: LossWeights = field(default_factory=LossWeights)
    seed: int = 0
    val_every: int = 100
    val_crop: int = 512
    val_max_clips: int | None = None
    checkpoint_dir: Path | str = "checkpoints"
    prefetch: int = 0  # batches prepared ahead by a reader thread; 0 = synchronous

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise InvalidParam("batch_size must be >= 1")
        if self.steps < 0:
            raise InvalidParam("steps must be >= 0")
        self.checkpoint_dir = Path(self.checkpoint_dir)

    def to_json(self) -> dict:
        doc = asdict(self)
        doc["checkpoint_dir"] = str(self.checkpoint_dir)
        doc["optimizer"]["betas"] = list(self.optimizer.betas)
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "TrainConfig":
        doc = dict(doc)
        if "optimizer" in doc:
            doc["optimizer"] = OptimizerConfig(**doc["optimizer"])
        if "lr_schedule" in doc:
            doc["lr_schedule"] = LrSchedule(**doc["lr_schedule"])
        if "weights" in doc:
            doc["weights"] = LossWeights(**doc["weights"])
        return cls(**doc)

    @classmethod
    def from_file(cls, path: Path | str) -> "TrainConfig":
        path = Path(path)
        if not path.exists():
            raise NotFound(f"train config not found: {path}")
        return cls.from_json(json.loads(path.read_text()))


class ClipPairCache:
    """Lazy in-memory cache of (degraded, gt) compute-form clip pairs."""

    def __init__(self, manifest: ClipManifest):
        self.manifest = manifest
        self._pairs: dict[str, tuple[Clip, Clip]] = {}

    def pair(self, entry: ManifestEntry) -> tuple[Clip, Clip]:
        if entry.source_id not in self._pairs:
            clip_dir = self.manifest.clip_dir(entry)
            degraded = load_clip(clip_dir / "degraded", source_id=entry.source_id).to_compute()
            gt = load_clip(clip_dir / "gt", source_id=entry.source_id).to_compute()
            self._pairs[entry.source_id] = (degraded, gt)
        return self._pairs[entry.source_id]


def sample_patch_window(manifest: ClipManifest, t: int, crop: int,
                        rng: np.random.Generator, cache: ClipPairCache | None = None,
                        split: str = "train") -> tuple[torch.Tensor, torch.Tensor]:
    """One aligned (degraded, gt) training sample of shape (t, 3, crop, crop).

    Picks a clip, a start frame, and a single spatial offset applied to all t
    frames of both sides; fully determined by the rng state.

    Raises:
        SampleError: the chosen clip is shorter than t frames or smaller than
            the crop, with the clip named in the message.
    """
    entries = manifest.split_entries(split)
    if not entries:
        raise SampleError(f"manifest has no {split!r} clips to sample")
    cache = cache or ClipPairCache(manifest)
    entry = entries[int(rng.integers(len(entries)))]
    degraded, gt = cache.pair(entry)
    n, h, w = len(gt), gt.height, gt.width
    if n < t:
        raise SampleError(f"clip {entry.source_id!r} has {n} frames, needs >= {t}")
    if h < crop or w < crop:
        raise SampleError(
            f"clip {entry.source_id!r} is {h}x{w}, smaller than crop {crop}")
    start = int(rng.integers(n - t + 1))
    top = int(rng.integers(h - crop + 1))
    left = int(rng.integers(w - crop + 1))
    deg = degraded.data[start:start + t, top:top + crop, left:left + crop, :]
    ref = gt.data[start:start + t, top:top + crop, left:left + crop, :]
    return (torch.from_numpy(deg.transpose(0, 3, 1, 2).copy()),
            torch.from_numpy(ref.transpose(0, 3, 1, 2).copy()))


def sample_batch(manifest: ClipManifest, config: TrainConfig, rng: np.random.Generator,
                 cache: ClipPairCache | None = None) -> tuple[torch.Tensor, torch.Tensor]:
    cache = cache or ClipPairCache(manifest)
    samples = [sample_patch_window(manifest, config.t, config.crop, rng, cache=cache)
               for _ in range(config.batch_size)]
    return (torch.stack([s[0] for s in samples]),
            torch.stack([s[1] for s in samples]))


class _Prefetcher:
    """Reader thread that pre-samples batches from the single seeded stream.

    Batches are drawn in order by one thread, so prefetching changes timing
    but never the sampled sequence. Each batch carries the sampler state
    captured right after it was drawn, which is what a checkpoint taken after
    consuming that batch must store for an exact resume.
    """

    def __init__(self, manifest: ClipManifest, config: TrainConfig,
                 rng: np.random.Generator, cache: ClipPairCache, n_batches: int):
        self.queue: queue.Queue = queue.Queue(maxsize=max(1, config.prefetch))
        self._thread = threading.Thread(
            target=self._run, args=(manifest, config, rng, cache, n_batches), daemon=True)
        self._thread.start()

    def _run(self, manifest, config, rng, cache, n_batches):
        for _ in range(n_batches):
            batch = sample_batch(manifest, config, rng, cache=cache)
            self.queue.put((batch, rng.bit_generator.state))

    def next(self):
        return self.queue.get()


@dataclass
class TrainState:
    step: int
    model: RestorationModel
    optimizer: torch.optim.Optimizer
    rng: np.random.Generator
    best_val_psnr: float = -math.inf
    sampler_state: dict | None = None  # rng state as of the last consumed batch


def build_optimizer(model: RestorationModel, config: OptimizerConfig) -> torch.optim.Optimizer:
    cls = torch.optim.AdamW if config.kind == "adamw" else torch.optim.Adam
    return cls(model.parameters(), lr=config.lr, betas=config.betas,
               weight_decay=config.weight_decay)


def train_step(state: TrainState, batch: tuple[torch.Tensor, torch.Tensor],
               weights: LossWeights, extractor: FeatureExtractor | None = None
               ) -> tuple[TrainState, LossReport]:
    """One optimization update on a (degraded, gt) batch.

    Raises:
        NumericalError: the loss went non-finite (step index in the message).
    """
    degraded, gt = batch
    state.model.train()
    pred = forward_restore(state.model, degraded)
    report = combined_loss(pred, gt, weights, extractor=extractor)
    total = report.total
    if not torch.isfinite(total):
        raise NumericalError(f"non-finite loss at step {state.step}")
    state.optimizer.zero_grad(set_to_none=True)
    total.backward()
    state.optimizer.step()
    state.step += 1
    return state, report.as_floats()


def validate_psnr(model: RestorationModel, manifest: ClipManifest, crop: int,
                  max_clips: int | None = None) -> float:
    """Mean restored-vs-gt PSNR over val clips, center-cropped to the largest
    valid crop <= the requested one (the evaluation protocol scaled down)."""
    entries = manifest.split_entries("val")
    if max_clips is not None:
        entries = entries[:max_clips]
    values = []
    for entry in entries:
        clip_dir = manifest.clip_dir(entry)
        gt = load_clip(clip_dir / "gt", source_id=entry.source_id).to_compute()
        degraded = load_clip(clip_dir / "degraded", source_id=entry.source_id).to_compute()
        c = usable_crop(model.config, crop, gt.height, gt.width)
        restored = restore_video(model, center_crop(degraded, c))
        values.append(psnr(restored, center_crop(gt, c)))
    finite = [v for v in values if math.isfinite(v)]
    return float(np.mean(finite)) if finite else math.inf


def _state_path(ckpt_dir: Path, tag: str) -> tuple[Path, Path, Path]:
    return (ckpt_dir / f"{tag}_model.npz", ckpt_dir / f"{tag}_optim.pt",
            ckpt_dir / f"{tag}_state.json")


def save_checkpoint(state: TrainState, ckpt_dir: Path | str, tag: str = "latest") -> None:
    ckpt_dir = Path(ckpt_dir)
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    model_path, optim_path, state_path = _state_path(ckpt_dir, tag)
    save_weights(state.model, model_path)
    torch.save(state.optimizer.state_dict(), optim_path)
    state_path.write_text(json.dumps({
        "step": state.step,
        "best_val_psnr": state.best_val_psnr,
        "rng_state": state.sampler_state or state.rng.bit_generator.state,
    }))


def load_checkpoint(ckpt_dir: Path | str, optimizer_config: OptimizerConfig,
                    tag: str = "latest") -> TrainState:
    ckpt_dir = Path(ckpt_dir)
    model_path, optim_path, state_path = _state_path(ckpt_dir, tag)
    if not model_path.exists():
        raise NotFound(f"no {tag!r} checkpoint under {ckpt_dir}")
    model = load_weights(model_path)
    optimizer = build_optimizer(model, optimizer_config)
    optimizer.load_state_dict(torch.load(optim_path, weights_only=False))
    meta = json.loads(state_path.read_text())
    rng = np.random.default_rng()
    rng.bit_generator.state = meta["rng_state"]
    return TrainState(step=int(meta["step"]), model=model, optimizer=optimizer,
                      rng=rng, best_val_psnr=float(meta["best_val_psnr"]))


def fit(train_cfg: TrainConfig, model_cfg: ModelConfig, manifest: ClipManifest,
        extractor: FeatureExtractor | None = None, resume: bool = True) -> TrainState:
    """Run (or resume) the training loop to train_cfg.steps.

    Writes latest/best checkpoints under train_cfg.checkpoint_dir and appends
    one JSON line per step (losses, lr) and per validation (val PSNR) to
    metrics.jsonl there. On a non-finite loss the latest checkpoint is
    preserved before the error propagates.
    """
    ckpt_dir = Path(train_cfg.checkpoint_dir)
    latest_model, _, _ = _state_path(ckpt_dir, "latest")
    if resume and latest_model.exists():
        state = load_checkpoint(ckpt_dir, train_cfg.optimizer)
        logger.info("resumed from step %d", state.step)
    else:
        model = init_parameters(model_cfg, seed=train_cfg.seed)
        state = TrainState(step=0, model=model,
                           optimizer=build_optimizer(model, train_cfg.optimizer),
                           rng=np.random.default_rng(train_cfg.seed))

    if train_cfg.weights.w_perceptual > 0 and extractor is None:
        raise InvalidParam("perceptual weight > 0 requires a feature extractor")

    ckpt_dir.mkdir(parents=True, exist_ok=True)
    log_path = ckpt_dir / "metrics.jsonl"
    cache = ClipPairCache(manifest)
    remaining = train_cfg.steps - state.step
    prefetcher = None
    if train_cfg.prefetch > 0 and remaining > 0:
        prefetcher = _Prefetcher(manifest, train_cfg, state.rng, cache, remaining)

    with log_path.open("a") as log:
        while state.step < train_cfg.steps:
            lr = train_cfg.optimizer.lr * train_cfg.lr_schedule.scale(
                state.step, train_cfg.steps)
            for group in state.optimizer.param_groups:
                group["lr"] = lr
            if prefetcher is not None:
                batch, state.sampler_state = prefetcher.next()
            else:
                batch = sample_batch(manifest, train_cfg, state.rng, cache=cache)
                state.sampler_state = state.rng.bit_generator.state
            try:
                state, report = train_step(state, batch, train_cfg.weights, extractor)
            except NumericalError:
                save_checkpoint(state, ckpt_dir, tag="latest")
                raise
            log.write(json.dumps({"step": state.step, "lr": lr, **report.to_json()}) + "\n")

            if train_cfg.val_every > 0 and state.step % train_cfg.val_every == 0:
                val = validate_psnr(state.model, manifest, train_cfg.val_crop,
                                    max_clips=train_cfg.val_max_clips)
                log.write(json.dumps({"step": state.step, "val_psnr": val}) + "\n")
                logger.info("step %d val PSNR %.3f dB", state.step, val)
                if val > state.best_val_psnr:
                    state.best_val_psnr = val
                    save_checkpoint(state, ckpt_dir, tag="best")
            save_checkpoint(state, ckpt_dir, tag="latest")

    save_checkpoint(state, ckpt_dir, tag="latest")
    return state
