"""Synthetic analog-tape artifacts: noise, dropouts, chroma fringing, mistracking.

Every degradation is a pure, seeded function of (pixel data, config): the RNG
stream for a frame is derived by hashing (seed, source_id, frame_index,
artifact family), so frames can be generated in any order or in parallel and
still come out bit-identical. Per-frame artifact intensities follow a
temporally correlated envelope so artifacts drift over time instead of
flickering independently.

Artifact application order within a frame is fixed: mistracking -> fringe ->
dropout -> noise (geometric distortion first, additive noise last).
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .errors import InsufficientData, InvalidParam, NotFound
from .video_io import COMPUTE, Clip, ClipManifest, Frame, ManifestEntry, load_clip, save_clip

logger = logging.getLogger(__name__)

TINTS = {
    "cyan": (0.0, 1.0, 1.0),
    "magenta": (1.0, 0.0, 1.0),
    "green": (0.0, 1.0, 0.0),
}

FAMILIES = ("mistracking", "fringe", "dropout", "noise")


def _check_range(name: str, rng: tuple[float, float]) -> tuple[float, float]:
    lo, hi = float(rng[0]), float(rng[1])
    if lo > hi:
        raise InvalidParam(f"{name} range must satisfy lo <= hi, got [{lo}, {hi}]")
    return (lo, hi)


def _check_prob(name: str, p: float) -> float:
    if not 0.0 <= p <= 1.0:
        raise InvalidParam(f"{name} probability must be in [0, 1], got {p}")
    return float(p)


@dataclass
class NoiseConfig:
    prob: float = 0.8
    sigma_range: tuple[float, float] = (0.01, 0.08)

    def __post_init__(self) -> None:
        self.prob = _check_prob("noise", self.prob)
        self.sigma_range = _check_range("noise.sigma", self.sigma_range)
        if self.sigma_range[0] < 0:
            raise InvalidParam("noise sigma must be non-negative")


@dataclass
class DropoutConfig:
    prob: float = 0.5
    count_range: tuple[int, int] = (0, 4)
    length_range: tuple[float, float] = (0.05, 0.6)  # fraction of frame width
    thickness_range: tuple[int, int] = (1, 3)  # rows
    intensity_range: tuple[float, float] = (0.7, 1.0)

    def __post_init__(self) -> None:
        self.prob = _check_prob("dropout", self.prob)
        self.count_range = tuple(int(v) for v in _check_range("dropout.count", self.count_range))
        self.length_range = _check_range("dropout.length", self.length_range)
        self.thickness_range = tuple(
            int(v) for v in _check_range("dropout.thickness", self.thickness_range))
        self.intensity_range = _check_range("dropout.intensity", self.intensity_range)


@dataclass
class FringeConfig:
    prob: float = 0.4
    count_range: tuple[int, int] = (0, 3)
    thickness_range: tuple[int, int] = (1, 4)  # rows
    colors: tuple[str, ...] = ("cyan", "magenta", "green")
    strength_range: tuple[float, float] = (0.4, 1.0)

    def __post_init__(self) -> None:
        self.prob = _check_prob("fringe", self.prob)
        self.count_range = tuple(int(v) for v in _check_range("fringe.count", self.count_range))
        self.thickness_range = tuple(
            int(v) for v in _check_range("fringe.thickness", self.thickness_range))
        self.strength_range = _check_range("fringe.strength", self.strength_range)
        self.colors = tuple(self.colors)
        for c in self.colors:
            if c not in TINTS:
                raise InvalidParam(f"unknown fringe color {c!r}; expected one of {sorted(TINTS)}")
        if self.prob > 0 and not self.colors:
            raise InvalidParam("fringe.colors must be non-empty when fringe.prob > 0")


@dataclass
class MistrackingConfig:
    prob: float = 0.3
    band_height_range: tuple[int, int] = (4, 40)  # rows
    offset_range: tuple[float, float] = (-0.15, 0.15)  # signed fraction of width
    band_count_range: tuple[int, int] = (0, 2)

    def __post_init__(self) -> None:
        self.prob = _check_prob("mistracking", self.prob)
        self.band_height_range = tuple(
            int(v) for v in _check_range("mistracking.band_height", self.band_height_range))
        self.offset_range = _check_range("mistracking.offset", self.offset_range)
        self.band_count_range = tuple(
            int(v) for v in _check_range("mistracking.band_count", self.band_count_range))


@dataclass
class DegradationConfig:
    """Seedable parameters of the synthetic degradation pipeline."""

    seed: int = 0
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    dropout: DropoutConfig = field(default_factory=DropoutConfig)
    fringe: FringeConfig = field(default_factory=FringeConfig)
    mistracking: MistrackingConfig = field(default_factory=MistrackingConfig)
    envelope_correlation: float = 0.7

    def __post_init__(self) -> None:
        if not 0.0 <= self.envelope_correlation < 1.0:
            raise InvalidParam(
                f"envelope correlation must be in [0, 1), got {self.envelope_correlation}")

    @classmethod
    def null(cls, seed: int = 0) -> "DegradationConfig":
        """Config under which degrade_clip is the exact identity."""
        return cls(seed=seed,
                   noise=NoiseConfig(prob=0.0),
                   dropout=DropoutConfig(prob=0.0),
                   fringe=FringeConfig(prob=0.0),
                   mistracking=MistrackingConfig(prob=0.0))

    def to_json(self) -> dict:
        doc = asdict(self)
        doc["envelope"] = {"correlation": doc.pop("envelope_correlation")}
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "DegradationConfig":
        doc = dict(doc)
        envelope = doc.pop("envelope", {})
        kwargs: dict = {"seed": int(doc.get("seed", 0))}
        if "correlation" in envelope:
            kwargs["envelope_correlation"] = float(envelope["correlation"])
        for name, sub_cls in (("noise", NoiseConfig), ("dropout", DropoutConfig),
                              ("fringe", FringeConfig), ("mistracking", MistrackingConfig)):
            if name in doc:
                sub = dict(doc[name])
                for key, val in sub.items():
                    if isinstance(val, list) and key != "colors":
                        sub[key] = tuple(val)
                    elif key == "colors":
                        sub[key] = tuple(val)
                kwargs[name] = sub_cls(**sub)
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path: Path | str) -> "DegradationConfig":
        path = Path(path)
        if not path.exists():
            raise NotFound(f"degradation config not found: {path}")
        return cls.from_json(json.loads(path.read_text()))


@dataclass
class ArtifactEvent:
    """One applied artifact, with its sampled parameters and affected region."""

    kind: str
    params: dict
    region: tuple[int, int, int, int]  # (row0, col0, row1, col1), half-open

    def to_json(self) -> dict:
        return {"kind": self.kind, "params": self.params, "region": list(self.region)}


@dataclass
class ArtifactTrace:
    """Per-frame record of every applied artifact; a pure function of (config, clip)."""

    source_id: str
    frames: list[list[ArtifactEvent]] = field(default_factory=list)

    def to_json(self) -> dict:
        return {"source_id": self.source_id,
                "frames": [[e.to_json() for e in events] for events in self.frames]}

    def save(self, path: Path | str) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2))


def frame_rng(seed: int, source_id: str, frame_index: int, family: str) -> np.random.Generator:
    """Deterministic per-(frame, artifact-family) RNG stream.

    Derivation hashes all four identifiers, so streams are independent of the
    order frames are generated in.
    """
    key = f"{seed}:{source_id}:{frame_index}:{family}".encode()
    digest = hashlib.sha256(key).digest()
    words = np.frombuffer(digest[:16], dtype="<u4")
    return np.random.default_rng(np.random.SeedSequence([int(w) for w in words]))


def add_gaussian_noise(frame: Frame, sigma: float, rng: np.random.Generator) -> Frame:
    """i.i.d. per-pixel, per-channel Gaussian noise, clamped to [0, 1]."""
    if sigma < 0:
        raise InvalidParam(f"noise sigma must be non-negative, got {sigma}")
    if frame.form != COMPUTE:
        raise InvalidParam("add_gaussian_noise expects a compute-form frame")
    if sigma == 0:
        return frame
    noise = rng.normal(0.0, sigma, size=frame.data.shape).astype(np.float32)
    return Frame(np.clip(frame.data + noise, 0.0, 1.0))


def add_dropouts(frame: Frame, events: list[tuple[int, int, float, int, float]]) -> Frame:
    """Blend horizontal streaks toward white: out = (1-intensity)*in + intensity.

    Each event is (row, col, length_fraction_of_width, thickness, intensity);
    regions are clipped to frame bounds.
    """
    if frame.form != COMPUTE:
        raise InvalidParam("add_dropouts expects a compute-form frame")
    if not events:
        return frame
    out = frame.data.copy()
    h, w = frame.height, frame.width
    for row, col, length, thickness, intensity in events:
        r0, r1 = max(0, int(row)), min(h, int(row) + int(thickness))
        c0 = max(0, int(col))
        c1 = min(w, int(col) + max(1, int(round(length * w))))
        if r0 >= r1 or c0 >= c1:
            continue
        region = out[r0:r1, c0:c1, :]
        out[r0:r1, c0:c1, :] = (1.0 - intensity) * region + intensity * 1.0
    return Frame(out)


def add_chroma_fringe(frame: Frame, lines: list[tuple[int, int, str, float]]) -> Frame:
    """Tint horizontal lines toward cyan/magenta/green.

    Each line is (row, thickness, color, strength); out = (1-strength)*in +
    strength*tint on affected rows.
    """
    if frame.form != COMPUTE:
        raise InvalidParam("add_chroma_fringe expects a compute-form frame")
    if not lines:
        return frame
    out = frame.data.copy()
    h = frame.height
    for row, thickness, color, strength in lines:
        if color not in TINTS:
            raise InvalidParam(f"unknown fringe color {color!r}")
        r0, r1 = max(0, int(row)), min(h, int(row) + int(thickness))
        if r0 >= r1:
            continue
        tint = np.asarray(TINTS[color], dtype=np.float32)
        out[r0:r1, :, :] = (1.0 - strength) * out[r0:r1, :, :] + strength * tint
    return Frame(out)


def add_mistracking(frame: Frame, bands: list[tuple[int, int, int]]) -> Frame:
    """Circularly shift horizontal bands by a signed pixel offset (wrap-around).

    Each band is (row, band_height, offset_pixels); positive offsets shift
    rightward. Rows outside every band are untouched, and each affected row is
    a permutation of its input pixels.
    """
    if frame.form != COMPUTE:
        raise InvalidParam("add_mistracking expects a compute-form frame")
    if not bands:
        return frame
    out = frame.data.copy()
    h = frame.height
    for row, band_height, offset in bands:
        r0, r1 = max(0, int(row)), min(h, int(row) + int(band_height))
        if r0 >= r1:
            continue
        out[r0:r1, :, :] = np.roll(out[r0:r1, :, :], int(offset), axis=1)
    return Frame(out)


def _envelopes(config: DegradationConfig, source_id: str, n_frames: int) -> dict[str, np.ndarray]:
    """Per-family envelope values e_t in [0, 1] for every frame of a clip.

    e_t = c*e_{t-1} + (1-c)*u_t with u_t the frame's own uniform draw, so a
    single frame's envelope is recomputable from per-frame streams alone.
    """
    corr = config.envelope_correlation
    envelopes: dict[str, np.ndarray] = {}
    for family in FAMILIES:
        u = np.array([frame_rng(config.seed, source_id, i, family).uniform()
                      for i in range(n_frames)])
        e = np.empty(n_frames)
        e[0] = u[0]
        for t in range(1, n_frames):
            e[t] = corr * e[t - 1] + (1.0 - corr) * u[t]
        envelopes[family] = e
    return envelopes


def _lerp(rng: tuple[float, float], e: float) -> float:
    return rng[0] + e * (rng[1] - rng[0])


def degrade_frame(frame: Frame, config: DegradationConfig, source_id: str,
                  frame_index: int, envelope: dict[str, float]) -> tuple[Frame, list[ArtifactEvent]]:
    """Apply all gated artifact families to one frame; returns (frame, events).

    Draw order per family stream is fixed (envelope uniform consumed by the
    caller, then the gate, then event parameters) so outputs are reproducible.
    """
    h, w = frame.height, frame.width
    events: list[ArtifactEvent] = []
    out = frame

    rng = frame_rng(config.seed, source_id, frame_index, "mistracking")
    rng.uniform()  # envelope draw, consumed to keep stream alignment
    if rng.uniform() < config.mistracking.prob:
        count = int(rng.integers(config.mistracking.band_count_range[0],
                                 config.mistracking.band_count_range[1] + 1))
        offset = int(round(_lerp(config.mistracking.offset_range, envelope["mistracking"]) * w))
        bands = []
        for _ in range(count):
            row = int(rng.integers(0, h))
            height = int(rng.integers(config.mistracking.band_height_range[0],
                                      config.mistracking.band_height_range[1] + 1))
            bands.append((row, height, offset))
            events.append(ArtifactEvent(
                "mistracking",
                {"row": row, "band_height": height, "offset_pixels": offset},
                (row, 0, min(h, row + height), w)))
        out = add_mistracking(out, bands)

    rng = frame_rng(config.seed, source_id, frame_index, "fringe")
    rng.uniform()
    if rng.uniform() < config.fringe.prob:
        count = int(rng.integers(config.fringe.count_range[0],
                                 config.fringe.count_range[1] + 1))
        strength = _lerp(config.fringe.strength_range, envelope["fringe"])
        lines = []
        for _ in range(count):
            row = int(rng.integers(0, h))
            thickness = int(rng.integers(config.fringe.thickness_range[0],
                                         config.fringe.thickness_range[1] + 1))
            color = str(rng.choice(list(config.fringe.colors)))
            lines.append((row, thickness, color, strength))
            events.append(ArtifactEvent(
                "fringe",
                {"row": row, "thickness": thickness, "color": color, "strength": strength},
                (row, 0, min(h, row + thickness), w)))
        out = add_chroma_fringe(out, lines)

    rng = frame_rng(config.seed, source_id, frame_index, "dropout")
    rng.uniform()
    if rng.uniform() < config.dropout.prob:
        count = int(rng.integers(config.dropout.count_range[0],
                                 config.dropout.count_range[1] + 1))
        intensity = _lerp(config.dropout.intensity_range, envelope["dropout"])
        streaks = []
        for _ in range(count):
            row = int(rng.integers(0, h))
            col = int(rng.integers(0, w))
            length = float(rng.uniform(*config.dropout.length_range))
            thickness = int(rng.integers(config.dropout.thickness_range[0],
                                         config.dropout.thickness_range[1] + 1))
            streaks.append((row, col, length, thickness, intensity))
            events.append(ArtifactEvent(
                "dropout",
                {"row": row, "col": col, "length": length, "thickness": thickness,
                 "intensity": intensity},
                (row, col, min(h, row + thickness),
                 min(w, col + max(1, int(round(length * w)))))))
        out = add_dropouts(out, streaks)

    rng = frame_rng(config.seed, source_id, frame_index, "noise")
    rng.uniform()
    if rng.uniform() < config.noise.prob:
        sigma = _lerp(config.noise.sigma_range, envelope["noise"])
        out = add_gaussian_noise(out, sigma, rng)
        events.append(ArtifactEvent("noise", {"sigma": sigma}, (0, 0, h, w)))

    return out, events


def degrade_clip(clip: Clip, config: DegradationConfig) -> tuple[Clip, ArtifactTrace]:
    """Degrade every frame of a compute-form clip; bit-identical across reruns."""
    if clip.form != COMPUTE:
        raise InvalidParam("degrade_clip expects a compute-form clip")
    envelopes = _envelopes(config, clip.source_id, len(clip))
    trace = ArtifactTrace(source_id=clip.source_id)
    out_frames = np.empty_like(clip.data)
    for i in range(len(clip)):
        env_i = {family: float(envelopes[family][i]) for family in FAMILIES}
        frame, events = degrade_frame(clip[i], config, clip.source_id, i, env_i)
        out_frames[i] = frame.data
        trace.frames.append(events)
    return Clip(out_frames, fps=clip.fps, source_id=clip.source_id), trace


def _discover_clips(clean_root: Path) -> list[Path]:
    clips = sorted(p for p in clean_root.iterdir() if p.is_dir())
    if not clips:  # fall back to container files handled by load_clip
        clips = sorted(p for p in clean_root.iterdir() if p.is_file())
    return clips


def split_clips(frame_counts: dict[str, int], ratio: float,
                seed: int) -> dict[str, str]:
    """Assign whole clips to train/val, matching the ratio by frame count.

    Clips are shuffled deterministically in the seed and cut at the prefix
    closest to the ratio; a local-search pass (single moves and pair swaps,
    keeping at least one clip per side) then tightens the achieved fraction.
    """
    ids = sorted(frame_counts)
    rng = np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFF, 0x5EED5]))
    order = [ids[i] for i in rng.permutation(len(ids))]
    total = sum(frame_counts.values())
    cumulative = np.cumsum([frame_counts[cid] for cid in order])
    candidates = range(1, len(order))  # k = number of train clips
    best_k = min(candidates, key=lambda k: abs(cumulative[k - 1] / total - ratio))
    train = set(order[:best_k])

    def error(train_frames: int) -> float:
        return abs(train_frames / total - ratio)

    train_frames = sum(frame_counts[c] for c in train)
    improved = True
    while improved:
        improved = False
        best = (error(train_frames), None)
        for cid in order:  # single moves
            delta = -frame_counts[cid] if cid in train else frame_counts[cid]
            if cid in train and len(train) == 1:
                continue
            if cid not in train and len(train) == len(order) - 1:
                continue
            if error(train_frames + delta) < best[0]:
                best = (error(train_frames + delta), ("move", cid))
        for a in order:  # pair swaps
            if a not in train:
                continue
            for b in order:
                if b in train:
                    continue
                delta = frame_counts[b] - frame_counts[a]
                if error(train_frames + delta) < best[0]:
                    best = (error(train_frames + delta), ("swap", a, b))
        if best[1] is not None:
            improved = True
            if best[1][0] == "move":
                cid = best[1][1]
                if cid in train:
                    train.remove(cid)
                    train_frames -= frame_counts[cid]
                else:
                    train.add(cid)
                    train_frames += frame_counts[cid]
            else:
                _, a, b = best[1]
                train.remove(a)
                train.add(b)
                train_frames += frame_counts[b] - frame_counts[a]
    return {cid: ("train" if cid in train else "val") for cid in order}


def build_dataset(clean_root: Path | str, config: DegradationConfig,
                  out_root: Path | str, split_ratio: float = 0.8) -> ClipManifest:
    """Build a paired (degraded, ground-truth) corpus with a by-clip split.

    Layout: out_root/{train,val}/{clip_id}/{gt,degraded}/NNNNNN.png plus
    manifest.json and a per-clip trace.json.

    Raises:
        InsufficientData: fewer than 2 clips under clean_root.
    """
    clean_root = Path(clean_root)
    out_root = Path(out_root)
    if not clean_root.exists():
        raise NotFound(f"clean corpus not found: {clean_root}")
    sources = _discover_clips(clean_root)
    if len(sources) < 2:
        raise InsufficientData(
            f"need at least 2 clips to split, found {len(sources)} in {clean_root}")

    clips = {src.stem: load_clip(src, source_id=src.stem) for src in sources}
    counts = {cid: len(c) for cid, c in clips.items()}
    assignment = split_clips(counts, split_ratio, config.seed)

    entries = []
    for cid in sorted(clips):
        clip = clips[cid]
        split = assignment[cid]
        degraded, trace = degrade_clip(clip.to_compute(), config)
        clip_dir = out_root / split / cid
        save_clip(clip, clip_dir / "gt")
        save_clip(degraded.to_storage(), clip_dir / "degraded")
        trace.save(clip_dir / "trace.json")
        entries.append(ManifestEntry(source_id=cid, frame_count=len(clip), split=split))
        logger.info("degraded clip %s (%d frames) -> %s", cid, len(clip), split)

    manifest = ClipManifest(entries=entries, root=out_root)
    manifest.save(out_root / "manifest.json")
    return manifest
