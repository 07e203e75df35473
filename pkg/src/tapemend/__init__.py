"""tapemend: synthesize analog-tape video damage, train a multi-frame
Swin-UNet to undo it, measure the result, and serve restoration to users."""

from .errors import TapemendError
from .video_io import Clip, ClipManifest, Frame, center_crop, load_clip, save_clip, window
from .degradation import DegradationConfig, build_dataset, degrade_clip
from .model import ModelConfig, RestorationModel, forward_restore, init_parameters, \
    load_weights, save_weights
from .losses import LossWeights, combined_loss, fixture_extractor, mse_loss, perceptual_loss
from .metrics import MetricReport, lpips, metric_report, psnr, ssim
from .training import TrainConfig, fit, sample_patch_window, train_step
from .inference import evaluate, restore_video

__version__ = "0.1.0"

__all__ = [
    "TapemendError",
    "Clip", "ClipManifest", "Frame", "center_crop", "load_clip", "save_clip", "window",
    "DegradationConfig", "build_dataset", "degrade_clip",
    "ModelConfig", "RestorationModel", "forward_restore", "init_parameters",
    "load_weights", "save_weights",
    "LossWeights", "combined_loss", "fixture_extractor", "mse_loss", "perceptual_loss",
    "MetricReport", "lpips", "metric_report", "psnr", "ssim",
    "TrainConfig", "fit", "sample_patch_window", "train_step",
    "evaluate", "restore_video",
]
