import numpy as np
import pytest
import torch

from tapemend.degradation import DegradationConfig, build_dataset
from tapemend.model import ModelConfig, init_parameters
from tapemend.video_io import Clip, save_clip


def make_storage_clip(n=5, h=32, w=32, seed=0, source_id="clip"):
    rng = np.random.default_rng(seed)
    return Clip(rng.integers(0, 256, size=(n, h, w, 3), dtype=np.uint8),
                source_id=source_id)


def make_compute_clip(n=5, h=32, w=32, seed=0, source_id="clip"):
    return make_storage_clip(n, h, w, seed, source_id).to_compute()


def structured_frames(n, h, w):
    """Smooth synthetic content (gradients + moving blob), richer than noise."""
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float32)
    frames = []
    for i in range(n):
        cx, cy = w * (0.3 + 0.4 * i / max(1, n - 1)), h * 0.5
        blob = np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * (0.15 * w) ** 2))
        r = 0.5 + 0.45 * np.sin(2 * np.pi * (xx / w + i / max(1, n)))
        g = 0.5 + 0.45 * np.cos(2 * np.pi * yy / h)
        b = 0.2 + 0.6 * blob
        frames.append(np.clip(np.stack([r, g, b], axis=-1), 0.0, 1.0).astype(np.float32))
    return np.stack(frames)


def make_structured_clip(n=5, h=64, w=64, source_id="scene"):
    return Clip(structured_frames(n, h, w), source_id=source_id)


@pytest.fixture(scope="session")
def toy_model_config():
    return ModelConfig(t=5, embed_dim=16, depths=(1, 1), window=(5, 4, 4))


@pytest.fixture(scope="session")
def toy_model(toy_model_config):
    return init_parameters(toy_model_config, seed=0)


def build_toy_corpus(tmp_path, n_clips=4, frames=8, size=64, config=None, seed=3):
    """Clean clips on disk -> paired dataset; returns the manifest."""
    clean = tmp_path / "clean"
    for i in range(n_clips):
        clip = Clip(structured_frames(frames, size, size), source_id=f"clip{i:02d}")
        # make clips distinguishable
        data = np.clip(clip.data * (0.7 + 0.3 * (i + 1) / n_clips), 0, 1)
        save_clip(Clip(data.astype(np.float32)).to_storage(), clean / f"clip{i:02d}")
    config = config or DegradationConfig(seed=seed)
    return build_dataset(clean, config, tmp_path / "data", split_ratio=0.8)


@pytest.fixture(autouse=True)
def _torch_threads():
    torch.set_num_threads(2)
