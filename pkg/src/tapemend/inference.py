"""Whole-video restoration via T-frame sliding windows, plus the paired
evaluation protocol (central crop, restored-vs-gt and degraded-baseline metrics).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import torch

from .errors import FrameTooSmall, NoData
from .losses import FeatureExtractor
from .metrics import MetricReport, metric_report
from .model import RestorationModel
from .video_io import Clip, ClipManifest, center_crop, load_clip, window


def _pad_to_granularity(data: np.ndarray, gh: int, gw: int) -> tuple[np.ndarray, int, int]:
    """Reflect-pad (N, H, W, 3) at the bottom/right to multiples of (gh, gw)."""
    n, h, w, _ = data.shape
    ph = (gh - h % gh) % gh
    pw = (gw - w % gw) % gw
    if ph == 0 and pw == 0:
        return data, 0, 0
    if ph > h - 1 or pw > w - 1:
        raise FrameTooSmall(
            f"frame {h}x{w} too small to reflect-pad to a {gh}x{gw} multiple")
    return np.pad(data, ((0, 0), (0, ph), (0, pw), (0, 0)), mode="reflect"), ph, pw


def restore_video(model: RestorationModel, clip: Clip,
                  progress: Callable[[float], None] | None = None) -> Clip:
    """Restore a whole clip with non-overlapping T-frame windows.

    The clip is windowed with stride == T (reflected tail frames fill the last
    window and are discarded afterwards), each window runs through the model in
    inference mode (output clamped to [0, 1]), and frames are reassembled in
    order. Spatial dims that don't meet the model granularity are reflect-padded
    and cropped back. Output is compute-form with the input's length, fps and
    source_id; deterministic for fixed weights.

    Raises:
        FrameTooSmall: frame smaller than one padded patch.
    """
    t = model.config.t
    work = clip.to_compute()
    gh, gw = model.config.granularity
    data, ph, pw = _pad_to_granularity(work.data, gh, gw)
    padded = Clip(data, fps=clip.fps, source_id=clip.source_id)

    was_training = model.training
    model.eval()
    restored_windows: list[np.ndarray] = []
    windows = window(padded, t=t, stride=t)
    with torch.no_grad():
        for i, win in enumerate(windows):
            x = torch.from_numpy(win.data.transpose(0, 3, 1, 2)).unsqueeze(0)
            y = model(x)
            restored_windows.append(y.squeeze(0).numpy().transpose(0, 2, 3, 1))
            if progress is not None:
                progress((i + 1) / len(windows))
    if was_training:
        model.train()

    stacked = np.concatenate(restored_windows, axis=0)[:len(clip)]
    if ph or pw:
        stacked = stacked[:, :clip.height, :clip.width, :]
    return Clip(np.ascontiguousarray(stacked), fps=clip.fps, source_id=clip.source_id)


@dataclass
class ClipEvaluation:
    source_id: str
    restored: MetricReport
    baseline: MetricReport

    def to_json(self) -> dict:
        return {"source_id": self.source_id,
                "restored": self.restored.to_json(),
                "baseline": self.baseline.to_json()}


@dataclass
class EvaluationReport:
    """Per-clip and aggregate metrics for restored output and the degraded baseline."""

    crop: int
    clips: list[ClipEvaluation] = field(default_factory=list)

    def _aggregate(self, which: str) -> dict:
        def mean(values):
            finite = [v for v in values if v is not None and math.isfinite(v)]
            if not finite:
                return math.inf if values and all(
                    v is not None and math.isinf(v) for v in values) else None
            return float(np.mean(finite))

        reports = [getattr(c, which) for c in self.clips]
        return {
            "psnr_db": mean([r.psnr_db for r in reports]),
            "ssim": mean([r.ssim for r in reports]),
            "lpips": mean([r.lpips for r in reports]),
        }

    @property
    def restored_mean(self) -> dict:
        return self._aggregate("restored")

    @property
    def baseline_mean(self) -> dict:
        return self._aggregate("baseline")

    def to_json(self) -> dict:
        def enc(d):
            return {k: ("inf" if isinstance(v, float) and math.isinf(v) else v)
                    for k, v in d.items()}
        return {"crop": self.crop,
                "restored_mean": enc(self.restored_mean),
                "baseline_mean": enc(self.baseline_mean),
                "clips": [c.to_json() for c in self.clips]}

    def save(self, path: Path | str) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2))


def usable_crop(model_config, crop: int, height: int, width: int) -> int:
    """Largest model-granularity multiple that is <= crop and fits the frame."""
    gh, gw = model_config.granularity
    g = max(gh, gw)
    limit = min(crop, height, width)
    usable = (limit // g) * g
    if usable <= 0:
        raise FrameTooSmall(
            f"no valid evaluation crop: granularity {g} exceeds min(crop={crop}, "
            f"frame={height}x{width})")
    return usable


def evaluate(model: RestorationModel, manifest: ClipManifest, crop: int = 512,
             split: str = "val",
             extractor: FeatureExtractor | None = None) -> EvaluationReport:
    """Run the central-crop evaluation protocol over a manifest split.

    For every clip: center-crop degraded and ground truth to the largest valid
    crop <= the requested one, restore the degraded crop, and report all
    metrics for restored-vs-gt alongside the degraded-vs-gt baseline.

    Raises:
        NoData: the split has no clips.
    """
    entries = manifest.split_entries(split)
    if not entries:
        raise NoData(f"manifest has no {split!r} clips")

    report: EvaluationReport | None = None
    for entry in entries:
        clip_dir = manifest.clip_dir(entry)
        gt = load_clip(clip_dir / "gt", source_id=entry.source_id).to_compute()
        degraded = load_clip(clip_dir / "degraded", source_id=entry.source_id).to_compute()
        eval_crop = usable_crop(model.config, crop, gt.height, gt.width)
        if report is None:
            report = EvaluationReport(crop=eval_crop)
        gt_c = center_crop(gt, eval_crop)
        degraded_c = center_crop(degraded, eval_crop)
        restored = restore_video(model, degraded_c)
        report.clips.append(ClipEvaluation(
            source_id=entry.source_id,
            restored=metric_report(restored, gt_c, extractor=extractor),
            baseline=metric_report(degraded_c, gt_c, extractor=extractor)))
    assert report is not None
    return report
