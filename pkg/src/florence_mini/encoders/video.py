"""2D -> 3D weight inflation and the video embedding path.

The tokenizer becomes a tube convolution (temporal kernel = stride = kt);
its 2D weights are duplicated along time and divided by kt so temporally
constant input produces the 2D response. Patch merges inflate the same way
with temporal stride 1, capping the temporal kernel at the extent still
available. Relative-position tables are duplicated per temporal slice;
attention itself stays 2D per slice (3D shifted windows are out of scope),
so all other weights are inherited byte-identically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..numerics import ops
from ..numerics.tensor import Tensor
from .config import ModelConfig
from .model import windowed_attention_block


def inflate_conv_2d_to_3d(w2d: np.ndarray, kt: int) -> np.ndarray:
    """w3d[t] = w2d / kt for each of kt temporal slices; kt=1 is a pure copy."""
    if kt < 1:
        raise ValueError("temporal kernel size must be >= 1")
    if kt == 1:
        return w2d[None].copy()
    return np.repeat(w2d[None] / kt, kt, axis=0)


def inflate_positional_table(p2d: np.ndarray, t_extent: int) -> np.ndarray:
    """Duplicate a 2D positional table so every temporal shift shares it."""
    if t_extent < 1:
        raise ValueError("temporal extent must be >= 1")
    return np.repeat(p2d[None], t_extent, axis=0)


@dataclass
class VideoTowerParams:
    config: ModelConfig
    kt: int
    frames: int
    params: dict[str, np.ndarray]

    def temporal_extents(self) -> list[int]:
        """Temporal token extent entering each stage."""
        extents = []
        t = self.frames // self.kt
        for s in range(self.config.num_stages):
            extents.append(t)
            if s + 1 < self.config.num_stages:
                t = t - min(self.kt, t) + 1
        return extents


def build_video_tower(params: dict[str, np.ndarray], config: ModelConfig, kt: int, frames: int) -> VideoTowerParams:
    """Inflate tokenizer/merge kernels and positional tables; copy the rest."""
    if kt < 1:
        raise ValueError("temporal kernel size must be >= 1")
    if kt > frames:
        raise ValueError(f"temporal kernel {kt} exceeds frame count {frames}")
    if frames % kt != 0:
        raise ValueError(f"frame count {frames} not divisible by temporal kernel {kt}")

    out: dict[str, np.ndarray] = {}
    t = frames // kt
    stage_extent = {}
    for s in range(config.num_stages):
        stage_extent[s] = t
        if s + 1 < config.num_stages:
            t = t - min(kt, t) + 1

    for name, arr in params.items():
        if name == "image.patch_embed.w":
            out[name] = inflate_conv_2d_to_3d(arr, kt)
        elif name.startswith("image.merge") and name.endswith(".w"):
            s = int(name[len("image.merge") : -2])
            out[name] = inflate_conv_2d_to_3d(arr, min(kt, stage_extent[s]))
        elif name.endswith(".rel_bias"):
            s = int(name.split(".")[1][1:])  # "image.s{S}.b{B}.attn.rel_bias"
            out[name] = inflate_positional_table(arr, stage_extent[s])
        else:
            out[name] = arr.copy()
    return VideoTowerParams(config=config, kt=kt, frames=frames, params=out)


def encode_video(tower: VideoTowerParams, clip: np.ndarray) -> Tensor:
    """Clip (B, T, H, W, C) or (T, H, W, C) -> unit-norm embedding (B, d).

    Each temporal slice runs the inherited 2D attention stages (its
    positional-table copy equals the 2D table by construction); tube
    tokenization and 3D merges do the temporal mixing.
    """
    config = tower.config
    arr = np.asarray(clip, dtype=config.dtype)
    if arr.ndim == 4:
        arr = arr[None]
    b, t, h, w, c = arr.shape
    if t != tower.frames:
        raise ValueError(f"clip has {t} frames, tower built for {tower.frames}")

    def P(name: str) -> Tensor:
        return Tensor(tower.params[name])

    # per-slice attention consumes the 2D slice of each inflated table
    slice_params = {
        name: Tensor(arr3d[0]) if name.endswith(".rel_bias") else Tensor(arr3d)
        for name, arr3d in tower.params.items()
    }

    x = ops.conv3d(
        Tensor(arr), P("image.patch_embed.w"), P("image.patch_embed.b"), (tower.kt, config.patch_kernel, config.patch_kernel)
    )
    for s, (depth, _, heads) in enumerate(
        zip(config.stage_depths, config.stage_widths, config.stage_heads)
    ):
        bb, tt, hh, ww, cc = x.shape
        x = ops.reshape(x, (bb * tt, hh, ww, cc))
        for blk in range(depth):
            x = windowed_attention_block(x, slice_params, f"image.s{s}.b{blk}", heads, config.window)
        x = ops.reshape(x, (bb, tt, hh, ww, cc))
        if s + 1 < config.num_stages:
            # temporal kernel size rides in the inflated weight; temporal stride 1
            x = ops.conv3d(x, P(f"image.merge{s}.w"), P(f"image.merge{s}.b"), (1, config.merge_kernel, config.merge_kernel))
    x = ops.layer_norm(x, P("image.ln_f.gamma"), P("image.ln_f.beta"))
    pooled = ops.mean(x, axis=(1, 2, 3))
    return ops.l2_normalize(ops.matmul(pooled, P("image.proj.w")))
