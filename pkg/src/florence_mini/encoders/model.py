"""Miniature two-tower model.

Image tower: strided-conv patch embed, stages of non-overlapping windowed
self-attention with relative position bias and conv patch merging, final
layer norm, global average pool. Text tower: token + learned position
embeddings, pre-norm transformer blocks with PAD masking, masked mean pool.
Both project into a shared space and L2-normalize.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..numerics import ops
from ..numerics.tensor import Tensor
from .config import ModelConfig, parameter_shapes
from .vocab import PAD, Vocabulary

MASK_NEG = -1e9


def init_two_tower(config: ModelConfig, vocab_size: int, seed: int) -> dict[str, Tensor]:
    """Seeded parameter initialization; every tensor keyed and named by path."""
    dtype = np.dtype(config.dtype)
    params: dict[str, Tensor] = {}
    for name, shape in parameter_shapes(config, vocab_size).items():
        rng = np.random.default_rng([seed, zlib.crc32(name.encode())])
        if name == "tau_param":
            arr = np.asarray(np.log(config.tau_init), dtype=dtype)
        elif name.endswith((".gamma",)):
            arr = np.ones(shape, dtype=dtype)
        elif name.endswith((".beta", ".b", ".b1", ".b2", ".bq", ".bk", ".bv", ".bo")):
            arr = np.zeros(shape, dtype=dtype)
        elif name.endswith(".rel_bias"):
            arr = np.zeros(shape, dtype=dtype)
        elif name == "text.pos_embed":
            arr = rng.normal(0.0, 0.01, size=shape).astype(dtype)
        else:
            arr = rng.normal(0.0, 0.02, size=shape).astype(dtype)
        params[name] = Tensor(arr, requires_grad=True, name=name)
    return params


def relative_index(window: int) -> np.ndarray:
    """(N, N) table row index for each query/key offset inside one window."""
    coords = np.stack(np.meshgrid(np.arange(window), np.arange(window), indexing="ij"), axis=-1)
    flat = coords.reshape(-1, 2)
    rel = flat[:, None, :] - flat[None, :, :]  # (N, N, 2) in [-(w-1), w-1]
    return (rel[..., 0] + window - 1) * (2 * window - 1) + (rel[..., 1] + window - 1)


def multi_head_attention(
    x: Tensor,
    p: dict[str, Tensor],
    prefix: str,
    heads: int,
    rel_bias: Tensor | None = None,
    rel_index: np.ndarray | None = None,
    mask_bias: Tensor | None = None,
) -> Tensor:
    """Self-attention over (B, N, C) token stacks."""
    bsz, n, c = x.shape
    dh = c // heads

    def project(m, b):
        h = ops.add(ops.matmul(x, p[f"{prefix}.{m}"]), p[f"{prefix}.{b}"])
        return ops.transpose(ops.reshape(h, (bsz, n, heads, dh)), (0, 2, 1, 3))

    q = project("wq", "bq")
    k = project("wk", "bk")
    v = project("wv", "bv")
    scores = ops.scale(ops.matmul(q, ops.transpose(k, (0, 1, 3, 2))), 1.0 / np.sqrt(dh))
    if rel_bias is not None:
        bias = ops.transpose(ops.embedding(rel_bias, rel_index), (2, 0, 1))  # (h, N, N)
        scores = ops.add(scores, bias)
    if mask_bias is not None:
        scores = ops.add(scores, mask_bias)
    attn = ops.softmax(scores)
    out = ops.matmul(attn, v)  # (B, h, N, dh)
    out = ops.reshape(ops.transpose(out, (0, 2, 1, 3)), (bsz, n, c))
    return ops.add(ops.matmul(out, p[f"{prefix}.wo"]), p[f"{prefix}.bo"])


def mlp_block(x: Tensor, p: dict[str, Tensor], prefix: str) -> Tensor:
    h = ops.gelu(ops.add(ops.matmul(x, p[f"{prefix}.w1"]), p[f"{prefix}.b1"]))
    return ops.add(ops.matmul(h, p[f"{prefix}.w2"]), p[f"{prefix}.b2"])


def window_partition(x: Tensor, window: int) -> Tensor:
    """(B, H, W, C) -> (B*nWin, window*window, C) for non-overlapping windows."""
    b, h, w, c = x.shape
    nh, nw = h // window, w // window
    t = ops.reshape(x, (b, nh, window, nw, window, c))
    t = ops.transpose(t, (0, 1, 3, 2, 4, 5))
    return ops.reshape(t, (b * nh * nw, window * window, c))


def window_merge(x: Tensor, window: int, b: int, h: int, w: int) -> Tensor:
    nh, nw = h // window, w // window
    c = x.shape[-1]
    t = ops.reshape(x, (b, nh, nw, window, window, c))
    t = ops.transpose(t, (0, 1, 3, 2, 4, 5))
    return ops.reshape(t, (b, h, w, c))


def windowed_attention_block(
    x: Tensor, p: dict[str, Tensor], prefix: str, heads: int, window: int
) -> Tensor:
    """Pre-norm windowed MHSA + MLP with residuals on a (B, H, W, C) map."""
    b, h, w, c = x.shape
    eff = min(window, h)
    if h % eff or w % eff:
        raise ValueError(f"spatial extent {h}x{w} not divisible by window {eff}")
    t = ops.layer_norm(x, p[f"{prefix}.ln1.gamma"], p[f"{prefix}.ln1.beta"])
    windows = window_partition(t, eff)
    attn = multi_head_attention(
        windows,
        p,
        f"{prefix}.attn",
        heads,
        rel_bias=p[f"{prefix}.attn.rel_bias"],
        rel_index=relative_index(eff),
    )
    x = ops.add(x, window_merge(attn, eff, b, h, w))
    t = ops.layer_norm(x, p[f"{prefix}.ln2.gamma"], p[f"{prefix}.ln2.beta"])
    return ops.add(x, mlp_block(t, p, f"{prefix}.mlp"))


def image_tower(
    params: dict[str, Tensor],
    config: ModelConfig,
    images: Tensor,
    block_wrapper: Callable | None = None,
) -> Tensor:
    """Images (B, H, W, C) -> unit-norm embeddings (B, d).

    ``block_wrapper(fn, x) -> Tensor`` (activation checkpointing) wraps each
    attention block when provided.
    """
    b, h, w, c = images.shape
    if h % config.patch_kernel or w % config.patch_kernel:
        raise ValueError(f"spatial extent {h}x{w} not divisible by patch kernel")
    if c != config.channels:
        raise ValueError(f"expected {config.channels} channels, got {c}")
    x = ops.conv2d(images, params["image.patch_embed.w"], params["image.patch_embed.b"], config.patch_kernel)
    for s, (depth, _, heads) in enumerate(
        zip(config.stage_depths, config.stage_widths, config.stage_heads)
    ):
        for blk in range(depth):
            prefix = f"image.s{s}.b{blk}"
            fn = lambda t, _p=prefix, _h=heads: windowed_attention_block(
                t, params, _p, _h, config.window
            )
            x = block_wrapper(fn, x) if block_wrapper is not None else fn(x)
        if s + 1 < config.num_stages:
            side = x.shape[1]
            if side % config.merge_kernel:
                raise ValueError(f"stage side {side} not divisible by merge kernel")
            x = ops.conv2d(x, params[f"image.merge{s}.w"], params[f"image.merge{s}.b"], config.merge_kernel)
    x = ops.layer_norm(x, params["image.ln_f.gamma"], params["image.ln_f.beta"])
    pooled = ops.mean(x, axis=(1, 2))
    return ops.l2_normalize(ops.matmul(pooled, params["image.proj.w"]))


def text_tower(params: dict[str, Tensor], config: ModelConfig, ids: np.ndarray) -> Tensor:
    """Token id batch (B, L) -> unit-norm embeddings (B, d); PAD is masked
    out of both attention and pooling."""
    ids = np.asarray(ids)
    if ids.ndim == 1:
        ids = ids[None, :]
    bsz, length = ids.shape
    if length > config.max_len:
        raise ValueError(f"sequence length {length} exceeds max_len {config.max_len}")
    valid = ids != PAD
    counts = valid.sum(axis=1)
    if (counts == 0).any():
        raise ValueError("all-PAD sequence cannot be pooled")
    dtype = np.dtype(config.dtype)

    x = ops.add(
        ops.embedding(params["text.tok_embed"], ids),
        ops.embedding(params["text.pos_embed"], np.arange(length)),
    )
    mask_bias = Tensor((~valid[:, None, None, :]).astype(dtype) * MASK_NEG)
    for l in range(config.text_layers):
        prefix = f"text.b{l}"
        t = ops.layer_norm(x, params[f"{prefix}.ln1.gamma"], params[f"{prefix}.ln1.beta"])
        x = ops.add(x, multi_head_attention(t, params, f"{prefix}.attn", config.text_heads, mask_bias=mask_bias))
        t = ops.layer_norm(x, params[f"{prefix}.ln2.gamma"], params[f"{prefix}.ln2.beta"])
        x = ops.add(x, mlp_block(t, params, f"{prefix}.mlp"))
    x = ops.layer_norm(x, params["text.ln_f.gamma"], params["text.ln_f.beta"])
    pooled = ops.tensor_sum(ops.mul(x, Tensor(valid[:, :, None].astype(dtype))), axis=1)
    pooled = ops.mul(pooled, Tensor((1.0 / counts)[:, None].astype(dtype)))
    return ops.l2_normalize(ops.matmul(pooled, params["text.proj.w"]))


@dataclass
class TwoTowerModel:
    """Parameter snapshot plus the config and vocabulary that shaped it."""

    config: ModelConfig
    vocab: Vocabulary
    params: dict[str, Tensor]

    @staticmethod
    def create(config: ModelConfig, vocab: Vocabulary, seed: int) -> "TwoTowerModel":
        if vocab.max_len != config.max_len:
            vocab = Vocabulary.from_list(vocab.to_list(), max_len=config.max_len)
        return TwoTowerModel(config, vocab, init_two_tower(config, len(vocab), seed))

    def encode_image(self, images, block_wrapper: Callable | None = None) -> Tensor:
        arr = images if isinstance(images, Tensor) else Tensor(np.asarray(images, dtype=self.config.dtype))
        if arr.data.ndim == 3:
            arr = Tensor(arr.data[None])
        if arr.data.dtype != np.dtype(self.config.dtype):
            arr = Tensor(arr.data.astype(self.config.dtype))
        return image_tower(self.params, self.config, arr, block_wrapper=block_wrapper)

    def encode_text(self, ids: np.ndarray) -> Tensor:
        return text_tower(self.params, self.config, ids)

    @property
    def tau_param(self) -> Tensor:
        return self.params["tau_param"]

    def param_arrays(self) -> dict[str, np.ndarray]:
        return {k: t.data for k, t in self.params.items()}

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for k, t in self.params.items():
            if k not in arrays:
                raise KeyError(f"missing parameter {k!r}")
            if arrays[k].shape != t.data.shape:
                raise ValueError(f"shape mismatch for {k!r}")
            t.data = arrays[k].astype(t.data.dtype, copy=True)
