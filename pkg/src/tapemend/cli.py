"""Operator entry point: the full pipeline as subcommands.

Exit codes: 0 on success, 1 on operational failure (single-line JSON error on
stderr), 2 on usage errors. Every subcommand is a thin adapter over the
corresponding module operation.
"""

from __future__ import annotations

import functools
import json
import logging
import sys
from pathlib import Path

import click

from .degradation import DegradationConfig, build_dataset, degrade_clip
from .errors import TapemendError
from .inference import evaluate, restore_video
from .losses import fixture_extractor, vgg19_extractor
from .model import ModelConfig, load_weights
from .training import TrainConfig, fit
from .video_io import ClipManifest, load_clip, save_clip


def _fail_on_error(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except TapemendError as exc:
            sys.stderr.write(json.dumps(
                {"error": type(exc).__name__, "message": str(exc)}) + "\n")
            sys.exit(1)
    return wrapper


@click.group()
@click.option("--verbose", is_flag=True, help="Enable info-level logging.")
def main(verbose: bool) -> None:
    """Analog-video degradation synthesis, restoration training, and serving."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")


@main.command()
@click.option("--in", "in_path", required=True, type=click.Path(),
              help="Clean clip: frame directory or decodable container.")
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--config", "config_path", type=click.Path(),
              help="Degradation config JSON; defaults ship in-package.")
@click.option("--seed", type=int, default=None, help="Overrides the config seed.")
@_fail_on_error
def degrade(in_path: str, out_path: str, config_path: str | None, seed: int | None) -> None:
    """Apply the synthetic degradation pipeline to one clip."""
    config = DegradationConfig.from_file(config_path) if config_path else DegradationConfig()
    if seed is not None:
        config.seed = seed
    clip = load_clip(in_path)
    degraded, trace = degrade_clip(clip.to_compute(), config)
    out = Path(out_path)
    save_clip(degraded.to_storage(), out)
    trace.save(out / "trace.json")
    click.echo(json.dumps({"frames": len(degraded), "out": str(out)}))


@main.command("build-dataset")
@click.option("--clean", "clean_root", required=True, type=click.Path())
@click.option("--out", "out_root", required=True, type=click.Path())
@click.option("--config", "config_path", type=click.Path())
@click.option("--split", type=float, default=0.8, show_default=True,
              help="Train fraction by frame count.")
@click.option("--seed", type=int, default=None)
@_fail_on_error
def build_dataset_cmd(clean_root: str, out_root: str, config_path: str | None,
                      split: float, seed: int | None) -> None:
    """Build a paired degraded/ground-truth corpus with a train/val split."""
    config = DegradationConfig.from_file(config_path) if config_path else DegradationConfig()
    if seed is not None:
        config.seed = seed
    manifest = build_dataset(clean_root, config, out_root, split_ratio=split)
    click.echo(json.dumps({"clips": len(manifest.entries),
                           "total_frames": manifest.total_frames,
                           "manifest": str(Path(out_root) / "manifest.json")}))


def _load_json(path: str) -> dict:
    p = Path(path)
    if not p.exists():
        raise click.UsageError(f"config file not found: {path}")
    return json.loads(p.read_text())


@main.command()
@click.option("--data", "manifest_path", required=True, type=click.Path())
@click.option("--model-config", "model_config_path", type=click.Path())
@click.option("--train-config", "train_config_path", type=click.Path())
@click.option("--out", "out_dir", type=click.Path(),
              help="Checkpoint directory; overrides the train config.")
@click.option("--vgg-weights", type=click.Path(),
              help="Local VGG-19 weights for the perceptual loss; the shipped "
                   "fixture extractor is used when omitted.")
@_fail_on_error
def train(manifest_path: str, model_config_path: str | None,
          train_config_path: str | None, out_dir: str | None,
          vgg_weights: str | None) -> None:
    """Train the restoration model on a built corpus."""
    manifest = ClipManifest.load(manifest_path)
    model_cfg = (ModelConfig.from_json(_load_json(model_config_path))
                 if model_config_path else ModelConfig())
    train_cfg = (TrainConfig.from_file(train_config_path)
                 if train_config_path else TrainConfig())
    if out_dir is not None:
        train_cfg.checkpoint_dir = Path(out_dir)
    extractor = None
    if train_cfg.weights.w_perceptual > 0:
        extractor = vgg19_extractor(vgg_weights) if vgg_weights else fixture_extractor()
    state = fit(train_cfg, model_cfg, manifest, extractor=extractor)
    click.echo(json.dumps({"steps": state.step,
                           "best_val_psnr": state.best_val_psnr,
                           "checkpoints": str(train_cfg.checkpoint_dir)}))


@main.command("eval")
@click.option("--data", "manifest_path", required=True, type=click.Path())
@click.option("--weights", "weights_path", required=True, type=click.Path())
@click.option("--crop", type=int, default=512, show_default=True)
@click.option("--report", "report_path", type=click.Path())
@click.option("--vgg-weights", type=click.Path(),
              help="Local VGG-19 weights for LPIPS; fixture extractor when omitted.")
@_fail_on_error
def eval_cmd(manifest_path: str, weights_path: str, crop: int,
             report_path: str | None, vgg_weights: str | None) -> None:
    """Evaluate a checkpoint on the val split: PSNR, SSIM, LPIPS."""
    manifest = ClipManifest.load(manifest_path)
    model = load_weights(weights_path)
    extractor = vgg19_extractor(vgg_weights) if vgg_weights else fixture_extractor()
    report = evaluate(model, manifest, crop=crop, extractor=extractor)
    if report_path:
        report.save(report_path)
    click.echo(json.dumps(report.to_json()))


@main.command()
@click.option("--in", "in_path", required=True, type=click.Path())
@click.option("--weights", "weights_path", required=True, type=click.Path())
@click.option("--out", "out_path", required=True, type=click.Path())
@_fail_on_error
def restore(in_path: str, weights_path: str, out_path: str) -> None:
    """Restore a video (frame directory or container) to a frame directory."""
    model = load_weights(weights_path)
    clip = load_clip(in_path)
    restored = restore_video(model, clip)
    save_clip(restored.to_storage(), out_path)
    click.echo(json.dumps({"frames": len(restored), "out": str(out_path)}))


@main.command()
@click.option("--weights", "weights_path", required=True, type=click.Path())
@click.option("--port", type=int, default=8000, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--data-dir", "data_dir", required=True, type=click.Path())
@click.option("--examples-dir", "examples_dir", type=click.Path())
@click.option("--ui-dir", "ui_dir", type=click.Path(),
              help="Built web UI bundle to serve at /.")
@_fail_on_error
def serve(weights_path: str, port: int, host: str, data_dir: str,
          examples_dir: str | None, ui_dir: str | None) -> None:
    """Run the HTTP restoration job service."""
    import uvicorn

    from .service import ServiceSettings, create_app

    settings = ServiceSettings(
        data_dir=Path(data_dir),
        weights_path=Path(weights_path),
        examples_dir=Path(examples_dir) if examples_dir else None,
        ui_dir=Path(ui_dir) if ui_dir else None)
    uvicorn.run(create_app(settings), host=host, port=port)


if __name__ == "__main__":
    main()
