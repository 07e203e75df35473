"""Multi-frame Swin-UNet that restores T frames jointly.

The network predicts a per-frame residual added back onto the degraded
input, so the all-zero output projection is exactly the identity mapping.
Layout: a 3D-conv patch embed (temporal kernel 3, spatial stride 4) feeds a
U-shaped stack of shifted-window attention stages; spatial resolution halves
(patch merging) on the way down and doubles (projection + pixel shuffle) on
the way up, with encoder skips concatenated and projected back to the stage
width; a final 4x pixel-shuffle expansion returns to pixel resolution and a
3D convolution maps to RGB. Attention windows are 3D (t_w, h_w, w_w), so
temporal mixing happens both in the patch embed and inside every window.

Tokens are carried as (B, T, H', W', C).
"""

from __future__ import annotations

import hashlib
import io
import json
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import IncompatibleCheckpoint, NotFound, NumericalError, ShapeError

WEIGHT_INIT_STD = 0.02


@dataclass(frozen=True)
class ModelConfig:
    """Hyperparameters of the restoration network.

    Attributes:
        t: frames restored jointly per window.
        in_channels: input/output image channels.
        embed_dim: token channels after patch embedding; doubles per merge.
        patch_size: spatial patch stride of the embed conv (temporal extent
            is preserved).
        window: attention window (t_w, h_w, w_w); t_w must divide t.
        depths: attention blocks per encoder stage (mirrored in the decoder);
            len(depths) - 1 patch mergings happen between stages.
        heads: attention heads per stage; None derives dim // 32 per stage.
        bottleneck_depth: blocks at the lowest resolution.
        mlp_ratio: hidden width multiplier of the per-token MLP.
    """

    t: int = 5
    in_channels: int = 3
    embed_dim: int = 96
    patch_size: int = 4
    window: tuple[int, int, int] = (5, 8, 8)
    depths: tuple[int, ...] = (2, 2, 2)
    heads: tuple[int, ...] | None = None
    bottleneck_depth: int = 2
    mlp_ratio: float = 4.0

    def __post_init__(self) -> None:
        if self.t < 1:
            raise ShapeError(f"t must be >= 1, got {self.t}")
        if len(self.window) != 3:
            raise ShapeError(f"window must be (t_w, h_w, w_w), got {self.window}")
        t_w = self.window[0]
        if t_w > self.t or self.t % t_w != 0:
            raise ShapeError(f"temporal window {t_w} must divide t={self.t}")
        if not self.depths:
            raise ShapeError("depths must name at least one stage")
        heads = self.stage_heads()
        for i, h in enumerate(heads):
            if self.stage_dim(i) % h != 0:
                raise ShapeError(
                    f"stage {i} dim {self.stage_dim(i)} not divisible by {h} heads")

    @property
    def num_stages(self) -> int:
        return len(self.depths)

    def stage_dim(self, stage: int) -> int:
        return self.embed_dim * (2 ** stage)

    def stage_heads(self) -> tuple[int, ...]:
        if self.heads is not None:
            if len(self.heads) != len(self.depths):
                raise ShapeError("heads must list one entry per stage")
            return tuple(self.heads)
        return tuple(max(1, self.stage_dim(i) // 32) for i in range(self.num_stages))

    @property
    def granularity(self) -> tuple[int, int]:
        """Smallest (H, W) unit an input must be a multiple of."""
        scale = 2 ** (self.num_stages - 1)
        return (self.patch_size * self.window[1] * scale,
                self.patch_size * self.window[2] * scale)

    def check_spatial(self, h: int, w: int) -> None:
        gh, gw = self.granularity
        if h % gh != 0 or w % gw != 0:
            raise ShapeError(
                f"input {h}x{w} must be a multiple of {gh}x{gw} "
                f"(patch {self.patch_size}, window {self.window[1]}x{self.window[2]}, "
                f"{self.num_stages} stages)")

    def to_json(self) -> dict:
        doc = asdict(self)
        doc["window"] = list(doc["window"])
        doc["depths"] = list(doc["depths"])
        doc["heads"] = list(doc["heads"]) if doc["heads"] is not None else None
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "ModelConfig":
        doc = dict(doc)
        doc["window"] = tuple(doc["window"])
        doc["depths"] = tuple(doc["depths"])
        if doc.get("heads") is not None:
            doc["heads"] = tuple(doc["heads"])
        return cls(**doc)

    def hash(self) -> str:
        payload = json.dumps(self.to_json(), sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()


def window_partition_3d(x: torch.Tensor, window: tuple[int, int, int]) -> torch.Tensor:
    """(B, T, H, W, C) -> (B * n_windows, t_w * h_w * w_w, C)."""
    b, t, h, w, c = x.shape
    tw, hw, ww = window
    x = x.view(b, t // tw, tw, h // hw, hw, w // ww, ww, c)
    x = x.permute(0, 1, 3, 5, 2, 4, 6, 7).contiguous()
    return x.view(-1, tw * hw * ww, c)


def window_reverse_3d(windows: torch.Tensor, window: tuple[int, int, int],
                      t: int, h: int, w: int) -> torch.Tensor:
    """Inverse of window_partition_3d back to (B, T, H, W, C)."""
    tw, hw, ww = window
    b = windows.shape[0] // ((t // tw) * (h // hw) * (w // ww))
    x = windows.view(b, t // tw, h // hw, w // ww, tw, hw, ww, -1)
    x = x.permute(0, 1, 4, 2, 5, 3, 6, 7).contiguous()
    return x.view(b, t, h, w, -1)


def relative_position_index_3d(window: tuple[int, int, int]) -> torch.Tensor:
    """Pairwise relative-offset index into the 3D bias table, (N, N)."""
    tw, hw, ww = window
    coords = torch.stack(torch.meshgrid(
        torch.arange(tw), torch.arange(hw), torch.arange(ww), indexing="ij"))
    flat = torch.flatten(coords, 1)  # 3, N
    rel = flat[:, :, None] - flat[:, None, :]  # 3, N, N
    rel = rel.permute(1, 2, 0).contiguous()
    rel[:, :, 0] += tw - 1
    rel[:, :, 1] += hw - 1
    rel[:, :, 2] += ww - 1
    rel[:, :, 0] *= (2 * hw - 1) * (2 * ww - 1)
    rel[:, :, 1] *= 2 * ww - 1
    return rel.sum(-1)


def shift_attention_mask(grid: tuple[int, int, int], window: tuple[int, int, int],
                         shift: tuple[int, int, int], device: torch.device) -> torch.Tensor | None:
    """Mask that blocks attention between wrapped regions of a shifted grid.

    Returns (n_windows, N, N) additive mask with 0 for allowed pairs and a
    large negative value for pairs that only became neighbors through the
    cyclic shift, or None when no axis is shifted.
    """
    if not any(shift):
        return None
    mask = torch.zeros(grid, device=device)
    cnt = 0
    axis_slices = []
    for size, win, sh in zip(grid, window, shift):
        if sh == 0:
            axis_slices.append([slice(0, size)])
        else:
            axis_slices.append([slice(0, size - win), slice(size - win, size - sh),
                                slice(size - sh, size)])
    for st in axis_slices[0]:
        for sh_ in axis_slices[1]:
            for sw in axis_slices[2]:
                mask[st, sh_, sw] = cnt
                cnt += 1
    windows = window_partition_3d(mask.unsqueeze(0).unsqueeze(-1), window).squeeze(-1)
    attn_mask = windows.unsqueeze(1) - windows.unsqueeze(2)
    return attn_mask.masked_fill(attn_mask != 0, -100.0).masked_fill(attn_mask == 0, 0.0)


class WindowAttention3D(nn.Module):
    """Multi-head self-attention within a 3D window, with learned relative bias."""

    def __init__(self, dim: int, window: tuple[int, int, int], heads: int):
        super().__init__()
        self.dim = dim
        self.window = window
        self.heads = heads
        self.scale = (dim // heads) ** -0.5
        table_size = (2 * window[0] - 1) * (2 * window[1] - 1) * (2 * window[2] - 1)
        self.relative_position_bias_table = nn.Parameter(torch.zeros(table_size, heads))
        self.register_buffer("relative_position_index",
                             relative_position_index_3d(window), persistent=False)
        self.qkv = nn.Linear(dim, dim * 3, bias=True)
        self.proj = nn.Linear(dim, dim, bias=True)

    def forward(self, x: torch.Tensor, mask: torch.Tensor | None = None) -> torch.Tensor:
        b_, n, c = x.shape
        qkv = self.qkv(x).reshape(b_, n, 3, self.heads, c // self.heads).permute(2, 0, 3, 1, 4)
        q, k, v = qkv[0], qkv[1], qkv[2]
        attn = (q * self.scale) @ k.transpose(-2, -1)
        bias = self.relative_position_bias_table[self.relative_position_index.view(-1)]
        bias = bias.view(n, n, -1).permute(2, 0, 1).contiguous()
        attn = attn + bias.unsqueeze(0)
        if mask is not None:
            nw = mask.shape[0]
            attn = attn.view(b_ // nw, nw, self.heads, n, n) + mask.unsqueeze(1).unsqueeze(0)
            attn = attn.view(-1, self.heads, n, n)
        attn = F.softmax(attn, dim=-1)
        x = (attn @ v).transpose(1, 2).reshape(b_, n, c)
        return self.proj(x)


class SwinBlock3D(nn.Module):
    """Pre-norm window attention + MLP with residuals; alternate blocks shift."""

    def __init__(self, dim: int, heads: int, window: tuple[int, int, int],
                 shifted: bool, mlp_ratio: float = 4.0):
        super().__init__()
        self.window = window
        self.shifted = shifted
        self.norm1 = nn.LayerNorm(dim)
        self.attn = WindowAttention3D(dim, window, heads)
        self.norm2 = nn.LayerNorm(dim)
        hidden = int(dim * mlp_ratio)
        self.mlp = nn.Sequential(nn.Linear(dim, hidden), nn.GELU(), nn.Linear(hidden, dim))

    def _shift_for(self, grid: tuple[int, int, int]) -> tuple[int, int, int]:
        # no shift along an axis the window fully covers
        return tuple(w // 2 if w < g else 0 for w, g in zip(self.window, grid))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, t, h, w, c = x.shape
        tw, hw, ww = self.window
        if t % tw or h % hw or w % ww:
            raise ShapeError(
                f"token grid {t}x{h}x{w} not divisible by window {self.window}")
        shortcut = x
        x = self.norm1(x)
        shift = self._shift_for((t, h, w)) if self.shifted else (0, 0, 0)
        if any(shift):
            x = torch.roll(x, shifts=tuple(-s for s in shift), dims=(1, 2, 3))
            mask = shift_attention_mask((t, h, w), self.window, shift, x.device)
        else:
            mask = None
        windows = window_partition_3d(x, self.window)
        windows = self.attn(windows, mask=mask)
        x = window_reverse_3d(windows, self.window, t, h, w)
        if any(shift):
            x = torch.roll(x, shifts=shift, dims=(1, 2, 3))
        x = shortcut + x
        return x + self.mlp(self.norm2(x))


class PatchEmbed3D(nn.Module):
    """3D conv patch partition: temporal kernel 3 (padded), spatial stride 4."""

    def __init__(self, in_channels: int, embed_dim: int, patch_size: int = 4):
        super().__init__()
        self.patch_size = patch_size
        self.proj = nn.Conv3d(in_channels, embed_dim,
                              kernel_size=(3, patch_size, patch_size),
                              stride=(1, patch_size, patch_size),
                              padding=(1, 0, 0))
        self.norm = nn.LayerNorm(embed_dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """(B, T, C, H, W) -> (B, T, H/p, W/p, embed_dim)."""
        b, t, c, h, w = x.shape
        if h % self.patch_size or w % self.patch_size:
            raise ShapeError(f"spatial dims {h}x{w} not divisible by patch {self.patch_size}")
        x = self.proj(x.permute(0, 2, 1, 3, 4))  # B, C', T, H/p, W/p
        x = x.permute(0, 2, 3, 4, 1)
        return self.norm(x)


class PatchMerging(nn.Module):
    """Concatenate each spatial 2x2 neighborhood and project 4C -> 2C."""

    def __init__(self, dim: int):
        super().__init__()
        self.norm = nn.LayerNorm(4 * dim)
        self.reduction = nn.Linear(4 * dim, 2 * dim, bias=False)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, t, h, w, c = x.shape
        if h % 2 or w % 2:
            raise ShapeError(f"patch_merge needs even spatial dims, got {h}x{w}")
        x = torch.cat([x[:, :, 0::2, 0::2], x[:, :, 1::2, 0::2],
                       x[:, :, 0::2, 1::2], x[:, :, 1::2, 1::2]], dim=-1)
        return self.reduction(self.norm(x))


def depth_to_space(x: torch.Tensor, factor: int) -> torch.Tensor:
    """Pixel shuffle on channel-last tokens: (B, T, H, W, C) -> (B, T, fH, fW, C/f^2).

    Channel index c*f^2 + (dy*f + dx) lands at spatial offset (dy, dx).
    """
    b, t, h, w, c = x.shape
    if c % (factor * factor):
        raise ShapeError(f"channels {c} not divisible by {factor}^2")
    co = c // (factor * factor)
    x = x.view(b, t, h, w, co, factor, factor)
    x = x.permute(0, 1, 2, 5, 3, 6, 4).contiguous()  # B, T, H, dy, W, dx, C/f^2
    return x.view(b, t, h * factor, w * factor, co)


class PatchExpand(nn.Module):
    """Project C -> 2C, then 2x pixel shuffle; output has C/2 channels."""

    def __init__(self, dim: int):
        super().__init__()
        if dim % 2:
            raise ShapeError(f"patch_expand needs even channels, got {dim}")
        self.norm = nn.LayerNorm(dim)
        self.expand = nn.Linear(dim, 2 * dim, bias=False)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return depth_to_space(self.expand(self.norm(x)), 2)


class FinalExpand(nn.Module):
    """Project C -> p^2*C, then p-times pixel shuffle back to pixel resolution."""

    def __init__(self, dim: int, factor: int):
        super().__init__()
        self.factor = factor
        self.norm = nn.LayerNorm(dim)
        self.expand = nn.Linear(dim, factor * factor * dim, bias=False)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return depth_to_space(self.expand(self.norm(x)), self.factor)


class RestorationModel(nn.Module):
    """The full residual Swin-UNet; forward maps (B, T, C, H, W) to itself."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        heads = config.stage_heads()
        window = tuple(config.window)
        mlp = config.mlp_ratio

        self.patch_embed = PatchEmbed3D(config.in_channels, config.embed_dim,
                                        config.patch_size)

        def stage(dim: int, depth: int, n_heads: int) -> nn.ModuleList:
            return nn.ModuleList([
                SwinBlock3D(dim, n_heads, window, shifted=(i % 2 == 1), mlp_ratio=mlp)
                for i in range(depth)])

        self.encoder_stages = nn.ModuleList()
        self.merges = nn.ModuleList()
        for i in range(config.num_stages):
            self.encoder_stages.append(stage(config.stage_dim(i), config.depths[i], heads[i]))
            if i < config.num_stages - 1:
                self.merges.append(PatchMerging(config.stage_dim(i)))

        bottom = config.stage_dim(config.num_stages - 1)
        self.bottleneck = stage(bottom, config.bottleneck_depth, heads[-1])

        self.expands = nn.ModuleList()
        self.skip_projections = nn.ModuleList()
        self.decoder_stages = nn.ModuleList()
        for i in reversed(range(config.num_stages - 1)):
            dim = config.stage_dim(i)
            self.expands.append(PatchExpand(dim * 2))
            self.skip_projections.append(nn.Linear(2 * dim, dim, bias=False))
            self.decoder_stages.append(stage(dim, config.depths[i], heads[i]))

        self.final_expand = FinalExpand(config.embed_dim, config.patch_size)
        self.head = nn.Conv3d(config.embed_dim, config.in_channels,
                              kernel_size=(3, 3, 3), padding=(1, 1, 1))

    def residual(self, x: torch.Tensor) -> torch.Tensor:
        tokens = self.patch_embed(x)
        skips: list[torch.Tensor] = []
        for i, blocks in enumerate(self.encoder_stages):
            for block in blocks:
                tokens = block(tokens)
            if i < self.config.num_stages - 1:
                skips.append(tokens)
                tokens = self.merges[i](tokens)
        for block in self.bottleneck:
            tokens = block(tokens)
        for expand, skip_proj, blocks, skip in zip(
                self.expands, self.skip_projections, self.decoder_stages, reversed(skips)):
            tokens = expand(tokens)
            tokens = skip_proj(torch.cat([tokens, skip], dim=-1))
            for block in blocks:
                tokens = block(tokens)
        tokens = self.final_expand(tokens)
        out = self.head(tokens.permute(0, 4, 1, 2, 3))  # B, C, T, H, W
        return out.permute(0, 2, 1, 3, 4)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, t, c, h, w = x.shape
        if t != self.config.t:
            raise ShapeError(f"model expects {self.config.t} frames per window, got {t}")
        if c != self.config.in_channels:
            raise ShapeError(f"model expects {self.config.in_channels} channels, got {c}")
        self.config.check_spatial(h, w)
        out = x + self.residual(x)
        if not self.training:
            out = out.clamp(0.0, 1.0)
        return out


def forward_restore(model: RestorationModel, x: torch.Tensor) -> torch.Tensor:
    """Restore a (B, T, C, H, W) batch; clamped to [0, 1] in eval mode only."""
    return model(x)


def init_parameters(config: ModelConfig, seed: int = 0) -> RestorationModel:
    """Build a model with deterministic initialization.

    Projection weights are truncated-normal (std 0.02), every bias is zero,
    norms are identity, and the output head is all-zero so the freshly built
    network is exactly the identity map.
    """
    model = RestorationModel(config)
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for name, p in model.named_parameters():
            if name.startswith("head."):
                p.zero_()
            elif name.endswith("relative_position_bias_table"):
                nn.init.trunc_normal_(p, std=WEIGHT_INIT_STD, generator=gen)
            elif p.ndim > 1:
                nn.init.trunc_normal_(p, std=WEIGHT_INIT_STD, generator=gen)
            elif "norm" in name and name.endswith("weight"):
                p.fill_(1.0)
            else:
                p.zero_()
    return model


def save_weights(model: RestorationModel, path: Path | str) -> None:
    """Write a checkpoint: one named float array per parameter plus the JSON
    config and its hash, in a plain zip-of-arrays archive readable without torch."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays = {name: p.detach().cpu().numpy() for name, p in model.named_parameters()}
    arrays["__config__"] = np.frombuffer(
        json.dumps(model.config.to_json(), sort_keys=True).encode(), dtype=np.uint8)
    arrays["__config_hash__"] = np.frombuffer(model.config.hash().encode(), dtype=np.uint8)
    buffer = io.BytesIO()
    np.savez(buffer, **arrays)
    path.write_bytes(buffer.getvalue())


def load_weights(path: Path | str) -> RestorationModel:
    """Rebuild a model from a checkpoint written by save_weights.

    Raises:
        NotFound: checkpoint file missing.
        IncompatibleCheckpoint: embedded hash does not match the stored config.
    """
    path = Path(path)
    if not path.exists():
        raise NotFound(f"checkpoint not found: {path}")
    with np.load(path) as arrays:
        config_json = bytes(arrays["__config__"]).decode()
        stored_hash = bytes(arrays["__config_hash__"]).decode()
        config = ModelConfig.from_json(json.loads(config_json))
        if config.hash() != stored_hash:
            raise IncompatibleCheckpoint(
                f"checkpoint config hash {stored_hash[:12]}... does not match "
                f"its config (expected {config.hash()[:12]}...)")
        model = RestorationModel(config)
        state = {}
        for name, p in model.named_parameters():
            if name not in arrays:
                raise IncompatibleCheckpoint(f"checkpoint missing parameter {name}")
            state[name] = torch.from_numpy(np.array(arrays[name]))
        with torch.no_grad():
            for name, p in model.named_parameters():
                if tuple(state[name].shape) != tuple(p.shape):
                    raise IncompatibleCheckpoint(
                        f"parameter {name} shape {tuple(state[name].shape)} != {tuple(p.shape)}")
                p.copy_(state[name])
    if not all(torch.isfinite(p).all() for p in model.parameters()):
        raise NumericalError(f"checkpoint {path} contains non-finite parameters")
    return model
