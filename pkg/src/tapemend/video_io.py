"""Frame-sequence I/O: loading, saving, cropping, and windowing clips.

Frames on disk are the canonical interchange format: one losslessly
compressed image per frame with zero-padded numeric filenames. Decoding
of video containers is delegated to an external tool (ffmpeg-compatible,
configured via the ``TAPEMEND_DECODER`` environment variable) so the
numeric core never links codec code.

Pixel data lives in one of two forms:

* storage form: ``uint8`` in [0, 255], what the image files hold;
* compute form: ``float32`` in [0.0, 1.0], what every numeric operation
  consumes (compute value = integer / 255, storage value = round(compute * 255)).
"""

from __future__ import annotations

import json
import os
import subprocess
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
from PIL import Image

from .errors import (
    CropTooLarge,
    EmptyClip,
    InvalidParam,
    IoError,
    NotFound,
    ShapeMismatch,
)

FRAME_EXTENSIONS = (".png", ".bmp", ".tif", ".tiff")
DECODER_ENV = "TAPEMEND_DECODER"
ENCODER_ENV = "TAPEMEND_ENCODER"

STORAGE = "storage"
COMPUTE = "compute"


def _form_of(data: np.ndarray) -> str:
    if data.dtype == np.uint8:
        return STORAGE
    if data.dtype in (np.float32, np.float64):
        return COMPUTE
    raise ShapeMismatch(f"unsupported pixel dtype {data.dtype}; expected uint8 or float32/64")


@dataclass(frozen=True)
class Frame:
    """A single RGB frame, either storage form (uint8) or compute form (float).

    Attributes:
        data: pixel array of shape (height, width, 3), RGB order.
    """

    data: np.ndarray

    def __post_init__(self) -> None:
        if self.data.ndim != 3 or self.data.shape[2] != 3:
            raise ShapeMismatch(f"frame must be (H, W, 3), got {self.data.shape}")
        form = _form_of(self.data)
        if form == COMPUTE and self.data.size:
            lo, hi = float(self.data.min()), float(self.data.max())
            if lo < 0.0 or hi > 1.0:
                raise ShapeMismatch(f"compute-form values outside [0, 1]: [{lo}, {hi}]")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def form(self) -> str:
        return _form_of(self.data)

    def to_compute(self) -> "Frame":
        return Frame(to_compute(self.data))

    def to_storage(self) -> "Frame":
        return Frame(to_storage(self.data))


def to_compute(data: np.ndarray) -> np.ndarray:
    """Convert pixel data to compute form (float32 in [0, 1])."""
    if _form_of(data) == COMPUTE:
        return data.astype(np.float32, copy=False)
    return data.astype(np.float32) / 255.0


def to_storage(data: np.ndarray) -> np.ndarray:
    """Convert pixel data to storage form (uint8 in [0, 255])."""
    if _form_of(data) == STORAGE:
        return data
    return np.rint(np.clip(data, 0.0, 1.0) * 255.0).astype(np.uint8)


@dataclass
class Clip:
    """An ordered sequence of same-shaped RGB frames.

    Attributes:
        data: stacked pixel array of shape (n_frames, height, width, 3);
            a single array so the shared-shape/shared-form invariants hold
            by construction.
        fps: frames per second, metadata only.
        source_id: opaque identifier carried through degradation and manifests.
    """

    data: np.ndarray
    fps: float = 25.0
    source_id: str = ""

    def __post_init__(self) -> None:
        if self.data.ndim != 4 or self.data.shape[3] != 3:
            raise ShapeMismatch(f"clip must be (N, H, W, 3), got {self.data.shape}")
        if self.data.shape[0] == 0:
            raise EmptyClip("clip must contain at least one frame")
        _form_of(self.data)

    @classmethod
    def from_frames(cls, frames: Sequence[Frame | np.ndarray], fps: float = 25.0,
                    source_id: str = "") -> "Clip":
        arrays = [f.data if isinstance(f, Frame) else f for f in frames]
        if not arrays:
            raise EmptyClip("clip must contain at least one frame")
        shapes = {a.shape for a in arrays}
        if len(shapes) != 1:
            raise ShapeMismatch(f"frames disagree on shape: {sorted(shapes)}")
        dtypes = {a.dtype for a in arrays}
        if len(dtypes) != 1:
            raise ShapeMismatch(f"frames disagree on dtype: {sorted(map(str, dtypes))}")
        return cls(np.stack(arrays), fps=fps, source_id=source_id)

    def __len__(self) -> int:
        return self.data.shape[0]

    def __getitem__(self, index: int) -> Frame:
        return Frame(self.data[index])

    def __iter__(self) -> Iterator[Frame]:
        for i in range(len(self)):
            yield self[i]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def form(self) -> str:
        return _form_of(self.data)

    def to_compute(self) -> "Clip":
        return Clip(to_compute(self.data), fps=self.fps, source_id=self.source_id)

    def to_storage(self) -> "Clip":
        return Clip(to_storage(self.data), fps=self.fps, source_id=self.source_id)


@dataclass
class ManifestEntry:
    source_id: str
    frame_count: int
    split: str  # "train" or "val"


@dataclass
class ClipManifest:
    """Index of a paired corpus: which clips exist and how they were split."""

    entries: list[ManifestEntry] = field(default_factory=list)
    root: Path | None = None  # directory the manifest was loaded from, not serialized

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for e in self.entries:
            if e.split not in ("train", "val"):
                raise InvalidParam(f"unknown split label {e.split!r}")
            if e.source_id in seen:
                raise InvalidParam(f"clip {e.source_id!r} appears in more than one entry")
            seen.add(e.source_id)

    @property
    def total_frames(self) -> int:
        return sum(e.frame_count for e in self.entries)

    def split_entries(self, split: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split == split]

    def clip_dir(self, entry: ManifestEntry) -> Path:
        if self.root is None:
            raise InvalidParam("manifest has no root directory; load it from disk first")
        return self.root / entry.split / entry.source_id

    def to_json(self) -> dict:
        return {
            "entries": [
                {"source_id": e.source_id, "frame_count": e.frame_count, "split": e.split}
                for e in self.entries
            ],
            "total_frames": self.total_frames,
        }

    def save(self, path: Path | str) -> None:
        path = Path(path)
        path.write_text(json.dumps(self.to_json(), indent=2))

    @classmethod
    def load(cls, path: Path | str) -> "ClipManifest":
        path = Path(path)
        if not path.exists():
            raise NotFound(f"manifest not found: {path}")
        doc = json.loads(path.read_text())
        entries = [ManifestEntry(e["source_id"], int(e["frame_count"]), e["split"])
                   for e in doc["entries"]]
        manifest = cls(entries=entries, root=path.parent)
        if doc.get("total_frames") is not None and doc["total_frames"] != manifest.total_frames:
            raise InvalidParam(
                f"manifest total_frames {doc['total_frames']} != sum of entries {manifest.total_frames}")
        return manifest


def _frame_files(directory: Path) -> list[Path]:
    return sorted(p for p in directory.iterdir()
                  if p.is_file() and p.suffix.lower() in FRAME_EXTENSIONS)


def _load_frame_dir(directory: Path, fps: float, source_id: str) -> Clip:
    files = _frame_files(directory)
    frames = []
    for f in files:
        with Image.open(f) as img:
            frames.append(np.asarray(img.convert("RGB"), dtype=np.uint8))
    if not frames:
        raise EmptyClip(f"no decodable frames in {directory}")
    shapes = {a.shape for a in frames}
    if len(shapes) != 1:
        raise ShapeMismatch(f"inconsistent frame dimensions in {directory}: {sorted(shapes)}")
    return Clip(np.stack(frames), fps=fps, source_id=source_id)


def load_clip(path: Path | str, fps: float = 25.0, source_id: str | None = None) -> Clip:
    """Load a storage-form clip from a frame directory or a video container.

    Directories are read as lexicographically sorted lossless image files.
    Anything else is handed to the external decoder tool named by the
    ``TAPEMEND_DECODER`` environment variable (default ``ffmpeg``), which must
    accept ``<tool> -i <input> <out>/%06d.png``-style invocation.

    Raises:
        NotFound: path does not exist.
        EmptyClip: no decodable frames.
        ShapeMismatch: frames disagree on dimensions.
        IoError: the external decoder failed or is missing.
    """
    path = Path(path)
    if not path.exists():
        raise NotFound(f"clip source not found: {path}")
    sid = source_id if source_id is not None else path.stem
    if path.is_dir():
        return _load_frame_dir(path, fps, sid)
    decoder = os.environ.get(DECODER_ENV, "ffmpeg")
    with tempfile.TemporaryDirectory(prefix="tapemend-decode-") as tmp:
        cmd = [decoder, "-hide_banner", "-loglevel", "error",
               "-i", str(path), str(Path(tmp) / "%06d.png")]
        try:
            subprocess.run(cmd, check=True, capture_output=True)
        except FileNotFoundError as exc:
            raise IoError(f"external decoder {decoder!r} not found; set {DECODER_ENV}") from exc
        except subprocess.CalledProcessError as exc:
            stderr = exc.stderr.decode(errors="replace") if exc.stderr else ""
            raise EmptyClip(f"decoder produced no frames for {path}: {stderr}") from exc
        return _load_frame_dir(Path(tmp), fps, sid)


def save_clip(clip: Clip, path: Path | str, ext: str = ".png") -> dict:
    """Write one lossless image per frame under ``path``.

    Filenames are zero-padded frame indices (``000000.png``...), so
    ``load_clip(save_clip(...))`` round-trips pixel data bit-exactly.

    Returns:
        A manifest-entry dict: ``{"source_id", "frame_count"}``.

    Raises:
        InvalidParam: clip is not storage form.
        IoError: destination is not writable.
    """
    if clip.form != STORAGE:
        raise InvalidParam("save_clip requires a storage-form clip; call .to_storage() first")
    if ext.lower() not in FRAME_EXTENSIONS:
        raise InvalidParam(f"extension {ext!r} is not a supported lossless format")
    path = Path(path)
    try:
        path.mkdir(parents=True, exist_ok=True)
        for i in range(len(clip)):
            Image.fromarray(clip.data[i], mode="RGB").save(path / f"{i:06d}{ext}")
    except OSError as exc:
        raise IoError(f"cannot write frames to {path}: {exc}") from exc
    return {"source_id": clip.source_id or path.name, "frame_count": len(clip)}


def encode_clip(clip: Clip, path: Path | str, encoder: str | None = None) -> Path:
    """Re-encode a storage-form clip into a video container via the external tool.

    Uses ``TAPEMEND_ENCODER`` (default: the decoder tool) with an
    ffmpeg-compatible image-sequence invocation.

    Raises:
        IoError: tool missing or failed.
    """
    if clip.form != STORAGE:
        raise InvalidParam("encode_clip requires a storage-form clip")
    tool = encoder or os.environ.get(ENCODER_ENV) or os.environ.get(DECODER_ENV, "ffmpeg")
    path = Path(path)
    with tempfile.TemporaryDirectory(prefix="tapemend-encode-") as tmp:
        save_clip(clip, tmp)
        cmd = [tool, "-hide_banner", "-loglevel", "error", "-y",
               "-framerate", str(clip.fps), "-i", str(Path(tmp) / "%06d.png"),
               "-pix_fmt", "yuv420p", str(path)]
        try:
            subprocess.run(cmd, check=True, capture_output=True)
        except FileNotFoundError as exc:
            raise IoError(f"external encoder {tool!r} not found; set {ENCODER_ENV}") from exc
        except subprocess.CalledProcessError as exc:
            stderr = exc.stderr.decode(errors="replace") if exc.stderr else ""
            raise IoError(f"encoding {path} failed: {stderr}") from exc
    return path


def center_crop(clip: Clip, size: int) -> Clip:
    """Spatially centered size x size crop of every frame.

    For an odd leftover margin the extra row/column goes to the bottom/right,
    i.e. the top-left offset is floor((dim - size) / 2).

    Raises:
        CropTooLarge: size exceeds a frame dimension.
    """
    if size > clip.height or size > clip.width:
        raise CropTooLarge(
            f"crop {size} exceeds frame dimensions {clip.height}x{clip.width}")
    top = (clip.height - size) // 2
    left = (clip.width - size) // 2
    return Clip(clip.data[:, top:top + size, left:left + size, :],
                fps=clip.fps, source_id=clip.source_id)


def reflect_pad_indices(n: int, total: int) -> np.ndarray:
    """Frame indices 0..total-1 into a length-n sequence, reflect-padded at the tail.

    The continuation after frame n-1 is n-2, n-3, ... (no edge repeat), except
    for single-frame clips where the only frame repeats.
    """
    if total <= n:
        return np.arange(total)
    if n == 1:
        return np.zeros(total, dtype=np.int64)
    return np.pad(np.arange(n), (0, total - n), mode="reflect")


def window(clip: Clip, t: int, stride: int) -> list[Clip]:
    """Split a clip into consecutive t-frame windows, stride frames apart.

    Windows start at 0, stride, 2*stride, ...; if the final window overruns
    the clip it is filled with reflected tail frames (..., n-2, n-1, n-2,
    n-3, ...). With stride == t every original frame index appears in exactly
    one window and there are ceil(n / t) windows.
    """
    if t < 1:
        raise InvalidParam(f"window length must be >= 1, got {t}")
    if stride < 1:
        raise InvalidParam(f"stride must be >= 1, got {stride}")
    n = len(clip)
    if n <= t:
        starts = [0]
    else:
        last_start = ((n - t + stride - 1) // stride) * stride
        starts = list(range(0, last_start + 1, stride))
    needed = starts[-1] + t
    indices = reflect_pad_indices(n, needed)
    return [Clip(clip.data[indices[s:s + t]], fps=clip.fps, source_id=clip.source_id)
            for s in starts]
