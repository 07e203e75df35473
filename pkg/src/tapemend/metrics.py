"""Full-reference quality metrics: PSNR, SSIM, LPIPS.

All metrics operate on compute-form data with dynamic range L = 1.0, so
values are independent of the storage bit depth. Clip-level values are the
arithmetic mean of per-frame values; PSNR of identical frames is +infinity
(serialized as the string "inf") and such frames are excluded from the
clip mean.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import torch
from scipy.signal import convolve2d

from .errors import ShapeError
from .losses import FeatureExtractor
from .video_io import Clip, Frame

LUMA_WEIGHTS = (0.299, 0.587, 0.114)


@dataclass
class SsimParams:
    window: int = 11
    sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    dynamic_range: float = 1.0


@dataclass
class MetricReport:
    """Clip-level metric values plus the per-frame lists they average."""

    psnr_db: float
    ssim: float
    lpips: float | None = None
    per_frame: dict[str, list[float]] = field(default_factory=dict)

    def to_json(self) -> dict:
        def enc(v):
            if v is None:
                return None
            return "inf" if math.isinf(v) else v
        doc = {"psnr_db": enc(self.psnr_db), "ssim": self.ssim, "lpips": self.lpips}
        if self.per_frame:
            doc["per_frame"] = {k: [enc(v) for v in vs] for k, vs in self.per_frame.items()}
        return doc

    def to_json_str(self) -> str:
        return json.dumps(self.to_json(), indent=2)


def _as_stack(x: Frame | Clip | np.ndarray) -> np.ndarray:
    """Normalize Frame/Clip/array input to a float64 (N, H, W, 3) stack."""
    if isinstance(x, Frame):
        data = x.data[None]
    elif isinstance(x, Clip):
        data = x.data
    else:
        data = np.asarray(x)
        if data.ndim == 3:
            data = data[None]
    if data.ndim != 4 or data.shape[3] != 3:
        raise ShapeError(f"expected (H, W, 3) or (N, H, W, 3), got {data.shape}")
    if data.dtype == np.uint8:
        data = data.astype(np.float64) / 255.0
    return data.astype(np.float64, copy=False)


def _pairs(a, b) -> tuple[np.ndarray, np.ndarray]:
    sa, sb = _as_stack(a), _as_stack(b)
    if sa.shape != sb.shape:
        raise ShapeError(f"shape mismatch: {sa.shape} vs {sb.shape}")
    return sa, sb


def psnr(a: Frame | Clip | np.ndarray, b: Frame | Clip | np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB over unit dynamic range.

    Clip inputs average per-frame PSNRs; frames with zero MSE contribute
    +infinity individually and are excluded from the clip mean (the result is
    +infinity only if every frame matches exactly).
    """
    values = psnr_per_frame(a, b)
    finite = [v for v in values if math.isfinite(v)]
    if not finite:
        return math.inf
    return float(np.mean(finite))


def psnr_per_frame(a, b) -> list[float]:
    sa, sb = _pairs(a, b)
    values = []
    for i in range(sa.shape[0]):
        mse = float(np.mean((sa[i] - sb[i]) ** 2))
        values.append(math.inf if mse == 0.0 else 10.0 * math.log10(1.0 / mse))
    return values


def _gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    ax = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(ax ** 2) / (2.0 * sigma ** 2))
    kernel = np.outer(g, g)
    return kernel / kernel.sum()


def _ssim_single(x: np.ndarray, y: np.ndarray, params: SsimParams) -> float:
    """SSIM between two single-channel images via Gaussian-weighted local
    statistics; the local map covers positions where the window fits fully."""
    if min(x.shape) < params.window:
        raise ShapeError(
            f"image {x.shape} smaller than the {params.window}x{params.window} SSIM window")
    kernel = _gaussian_kernel(params.window, params.sigma)
    c1 = (params.k1 * params.dynamic_range) ** 2
    c2 = (params.k2 * params.dynamic_range) ** 2

    mu_x = convolve2d(x, kernel, mode="valid")
    mu_y = convolve2d(y, kernel, mode="valid")
    sigma_x = convolve2d(x * x, kernel, mode="valid") - mu_x ** 2
    sigma_y = convolve2d(y * y, kernel, mode="valid") - mu_y ** 2
    sigma_xy = convolve2d(x * y, kernel, mode="valid") - mu_x * mu_y

    num = (2 * mu_x * mu_y + c1) * (2 * sigma_xy + c2)
    den = (mu_x ** 2 + mu_y ** 2 + c1) * (sigma_x + sigma_y + c2)
    return float(np.mean(num / den))


def to_luma(stack: np.ndarray) -> np.ndarray:
    w = np.asarray(LUMA_WEIGHTS, dtype=np.float64)
    return stack @ w


def ssim(a, b, params: SsimParams | None = None, channel_mode: str = "luma") -> float:
    """Structural similarity; clip inputs average per-frame values.

    channel_mode "luma" converts to grayscale with standard luma weights
    before comparison; "rgb" averages per-channel SSIMs instead.
    """
    return float(np.mean(ssim_per_frame(a, b, params=params, channel_mode=channel_mode)))


def ssim_per_frame(a, b, params: SsimParams | None = None,
                   channel_mode: str = "luma") -> list[float]:
    params = params or SsimParams()
    sa, sb = _pairs(a, b)
    if channel_mode not in ("luma", "rgb"):
        raise ShapeError(f"unknown channel_mode {channel_mode!r}")
    values = []
    for i in range(sa.shape[0]):
        if channel_mode == "luma":
            values.append(_ssim_single(to_luma(sa[i]), to_luma(sb[i]), params))
        else:
            values.append(float(np.mean(
                [_ssim_single(sa[i][..., c], sb[i][..., c], params) for c in range(3)])))
    return values


def _normalize_channels(feat: torch.Tensor, eps: float = 1e-10) -> torch.Tensor:
    norm = torch.sqrt((feat ** 2).sum(dim=1, keepdim=True))
    return feat / (norm + eps)


def lpips(a, b, extractor: FeatureExtractor,
          calibration: list[np.ndarray] | None = None) -> float:
    """Perceptual distance: per layer, channel-unit-normalize the features,
    weight the squared differences per channel, average spatially, then sum
    over layers. Clip inputs average per-frame distances.

    calibration gives one non-negative weight vector per tapped layer; None
    means unit weights (the shipped-fixture regime when reference LPIPS
    weights are not installed).
    """
    return float(np.mean(lpips_per_frame(a, b, extractor, calibration=calibration)))


def lpips_per_frame(a, b, extractor: FeatureExtractor,
                    calibration: list[np.ndarray] | None = None) -> list[float]:
    sa, sb = _pairs(a, b)
    ta = torch.from_numpy(np.ascontiguousarray(sa.transpose(0, 3, 1, 2)))
    tb = torch.from_numpy(np.ascontiguousarray(sb.transpose(0, 3, 1, 2)))
    extractor = extractor.double()
    with torch.no_grad():
        feats_a = extractor(ta)
        feats_b = extractor(tb)
    if calibration is not None and len(calibration) != len(feats_a):
        raise ShapeError(
            f"calibration gives {len(calibration)} layers, extractor taps {len(feats_a)}")
    distances = torch.zeros(sa.shape[0], dtype=torch.float64)
    for layer, (fa, fb) in enumerate(zip(feats_a, feats_b)):
        na, nb = _normalize_channels(fa), _normalize_channels(fb)
        sq = (na - nb) ** 2
        if calibration is not None:
            w = torch.from_numpy(np.asarray(calibration[layer], dtype=np.float64))
            sq = sq * w.view(1, -1, 1, 1)
        distances += sq.sum(dim=1).mean(dim=(1, 2))
    return [float(v) for v in distances]


def metric_report(a, b, extractor: FeatureExtractor | None = None) -> MetricReport:
    """All three metrics in one report; LPIPS is None without an extractor."""
    psnr_frames = psnr_per_frame(a, b)
    ssim_frames = ssim_per_frame(a, b)
    per_frame = {"psnr_db": psnr_frames, "ssim": ssim_frames}
    lpips_value = None
    if extractor is not None:
        lpips_frames = lpips_per_frame(a, b, extractor)
        per_frame["lpips"] = lpips_frames
        lpips_value = float(np.mean(lpips_frames))
    finite = [v for v in psnr_frames if math.isfinite(v)]
    psnr_value = float(np.mean(finite)) if finite else math.inf
    return MetricReport(psnr_db=psnr_value, ssim=float(np.mean(ssim_frames)),
                        lpips=lpips_value, per_frame=per_frame)
