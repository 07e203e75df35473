"""Training objective: weighted per-pixel MSE plus a deep-feature perceptual
distance under a frozen extractor.

Two extractors are provided: the VGG-19 backbone tapped at four ReLUs (weights
loaded from a local file, never downloaded here) and a tiny fixed-weight
two-layer conv stack shipped as a repo fixture so tests and offline runs never
need the big weights.
"""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn

from .errors import ExtractorUnavailable, InvalidParam, ShapeError

VGG19_TAPS = {"relu1_2": 3, "relu2_2": 8, "relu3_4": 17, "relu4_4": 26}
IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


@dataclass(frozen=True)
class LossWeights:
    w_pixel: float = 1.0
    w_perceptual: float = 1.0

    def __post_init__(self) -> None:
        if self.w_pixel < 0 or self.w_perceptual < 0:
            raise InvalidParam("loss weights must be non-negative")
        if self.w_pixel == 0 and self.w_perceptual == 0:
            raise InvalidParam("at least one loss weight must be positive")


@dataclass
class LossReport:
    """Weighted objective and its components; tensors during training so the
    total stays differentiable, plain floats after .as_floats()."""

    total: torch.Tensor | float
    pixel: torch.Tensor | float
    perceptual: torch.Tensor | float

    def as_floats(self) -> "LossReport":
        def f(v):
            return float(v.detach()) if isinstance(v, torch.Tensor) else float(v)
        return LossReport(total=f(self.total), pixel=f(self.pixel),
                          perceptual=f(self.perceptual))

    def to_json(self) -> dict:
        r = self.as_floats()
        return {"total": r.total, "pixel": r.pixel, "perceptual": r.perceptual}


class FeatureExtractor(nn.Module):
    """Frozen conv stack whose tapped activations define a feature space.

    Inputs are (N, 3, H, W) in [0, 1]; they are normalized per channel before
    the backbone runs. All parameters are non-trainable, so the extractor is a
    fixed deterministic function.
    """

    def __init__(self, backbone: nn.Sequential, tap_indices: list[int],
                 mean: tuple[float, float, float], std: tuple[float, float, float],
                 name: str = "custom"):
        super().__init__()
        self.backbone = backbone
        self.tap_indices = sorted(tap_indices)
        self.name = name
        self.register_buffer("mean", torch.tensor(mean).view(1, 3, 1, 1))
        self.register_buffer("std", torch.tensor(std).view(1, 3, 1, 1))
        for p in self.parameters():
            p.requires_grad_(False)
        self.eval()

    def train(self, mode: bool = True) -> "FeatureExtractor":
        # extractor weights are immutable; stay in eval regardless
        return super().train(False)

    def forward(self, x: torch.Tensor) -> list[torch.Tensor]:
        if x.ndim != 4 or x.shape[1] != 3:
            raise ShapeError(f"extractor expects (N, 3, H, W), got {tuple(x.shape)}")
        x = (x - self.mean.to(x.dtype)) / self.std.to(x.dtype)
        taps = []
        for i, layer in enumerate(self.backbone):
            x = layer(x)
            if i in self.tap_indices:
                taps.append(x)
        return taps


def fixture_extractor(dtype: torch.dtype = torch.float32) -> FeatureExtractor:
    """The shipped two-layer test extractor; loads its fixed weights from the
    packaged .npz so everything runs offline."""
    resource = importlib.resources.files("tapemend") / "fixtures" / "tiny_extractor.npz"
    with importlib.resources.as_file(resource) as path:
        arrays = np.load(path)
        conv1 = nn.Conv2d(3, 4, kernel_size=3, padding=1)
        conv2 = nn.Conv2d(4, 8, kernel_size=3, padding=1)
        with torch.no_grad():
            conv1.weight.copy_(torch.from_numpy(arrays["conv1_weight"]))
            conv1.bias.copy_(torch.from_numpy(arrays["conv1_bias"]))
            conv2.weight.copy_(torch.from_numpy(arrays["conv2_weight"]))
            conv2.bias.copy_(torch.from_numpy(arrays["conv2_bias"]))
        mean = tuple(float(v) for v in arrays["mean"])
        std = tuple(float(v) for v in arrays["std"])
    backbone = nn.Sequential(conv1, nn.ReLU(), conv2, nn.ReLU())
    extractor = FeatureExtractor(backbone, tap_indices=[1, 3], mean=mean, std=std,
                                 name="fixture")
    return extractor.to(dtype)


def vgg19_extractor(weights_path: Path | str,
                    taps: tuple[str, ...] = ("relu1_2", "relu2_2", "relu3_4", "relu4_4")
                    ) -> FeatureExtractor:
    """VGG-19 features tapped at the named ReLUs, weights from a local file.

    Raises:
        ExtractorUnavailable: the weights file is missing or not loadable.
    """
    weights_path = Path(weights_path)
    if not weights_path.exists():
        raise ExtractorUnavailable(
            f"VGG-19 weights not found at {weights_path}; download them separately "
            "or use the fixture extractor")
    try:
        from torchvision.models import vgg19
        net = vgg19(weights=None)
        state = torch.load(weights_path, map_location="cpu", weights_only=True)
        net.load_state_dict(state)
    except Exception as exc:
        raise ExtractorUnavailable(f"cannot load VGG-19 weights: {exc}") from exc
    unknown = [t for t in taps if t not in VGG19_TAPS]
    if unknown:
        raise InvalidParam(f"unknown VGG-19 taps {unknown}; known: {sorted(VGG19_TAPS)}")
    indices = [VGG19_TAPS[t] for t in taps]
    backbone = nn.Sequential(*list(net.features)[:max(indices) + 1])
    return FeatureExtractor(backbone, tap_indices=indices,
                            mean=IMAGENET_MEAN, std=IMAGENET_STD, name="vgg19")


def _check_same_shape(pred: torch.Tensor, target: torch.Tensor) -> None:
    if pred.shape != target.shape:
        raise ShapeError(f"shape mismatch: {tuple(pred.shape)} vs {tuple(target.shape)}")


def mse_loss(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Mean over all elements of (pred - target)^2."""
    _check_same_shape(pred, target)
    return ((pred - target) ** 2).mean()


def _flatten_frames(x: torch.Tensor) -> torch.Tensor:
    """(B, T, 3, H, W) -> (B*T, 3, H, W); 4D inputs pass through."""
    if x.ndim == 5:
        return x.reshape(-1, *x.shape[2:])
    if x.ndim == 4:
        return x
    raise ShapeError(f"expected (B, T, 3, H, W) or (N, 3, H, W), got {tuple(x.shape)}")


def perceptual_loss(pred: torch.Tensor, target: torch.Tensor,
                    extractor: FeatureExtractor) -> torch.Tensor:
    """Mean over tapped layers of the MSE between extractor activations.

    Gradients flow to pred only; target features are computed without grad.
    """
    _check_same_shape(pred, target)
    pred_frames = _flatten_frames(pred)
    target_frames = _flatten_frames(target)
    pred_feats = extractor(pred_frames)
    with torch.no_grad():
        target_feats = extractor(target_frames)
    layer_losses = [((pf - tf) ** 2).mean() for pf, tf in zip(pred_feats, target_feats)]
    return torch.stack(layer_losses).mean()


def combined_loss(pred: torch.Tensor, target: torch.Tensor, weights: LossWeights,
                  extractor: FeatureExtractor | None = None) -> LossReport:
    """The training objective: w_pixel * MSE + w_perceptual * perceptual.

    The perceptual term is skipped (reported as 0) when its weight is zero, so
    no extractor is needed for pixel-only training.
    """
    pixel = mse_loss(pred, target)
    if weights.w_perceptual > 0:
        if extractor is None:
            raise ExtractorUnavailable(
                "perceptual weight is positive but no feature extractor was given")
        perceptual = perceptual_loss(pred, target, extractor)
    else:
        perceptual = torch.zeros((), dtype=pred.dtype, device=pred.device)
    total = weights.w_pixel * pixel + weights.w_perceptual * perceptual
    return LossReport(total=total, pixel=pixel, perceptual=perceptual)
