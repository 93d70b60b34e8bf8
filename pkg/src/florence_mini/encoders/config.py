"""Two-tower model configuration and pure-arithmetic parameter accounting."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field


@dataclass(frozen=True)
class ModelConfig:
    """Desk-scale defaults: 32x32x3 inputs, two windowed-attention stages
    (widths 32 -> 64), a 2-layer text tower, shared dimension 64."""

    image_size: int = 32
    channels: int = 3
    patch_kernel: int = 4  # tokenizer conv kernel == stride
    stage_depths: tuple[int, ...] = (2, 2)
    stage_widths: tuple[int, ...] = (32, 64)
    stage_heads: tuple[int, ...] = (2, 2)
    window: int = 4
    merge_kernel: int = 2  # patch-merge conv kernel == stride
    mlp_ratio: int = 2
    shared_dim: int = 64
    text_layers: int = 2
    text_width: int = 64
    text_heads: int = 2
    max_len: int = 76
    dtype: str = "float64"
    tau_init: float = 1.0 / 0.07

    def __post_init__(self):
        if not (len(self.stage_depths) == len(self.stage_widths) == len(self.stage_heads)):
            raise ValueError("stage tuples must have equal length")
        if self.image_size % self.patch_kernel != 0:
            raise ValueError("image_size must be divisible by patch_kernel")
        for w, h in zip(self.stage_widths, self.stage_heads):
            if w % h != 0:
                raise ValueError("stage width must be divisible by its head count")
        if self.text_width % self.text_heads != 0:
            raise ValueError("text width must be divisible by text heads")
        if self.max_len < 2:
            raise ValueError("max_len must be at least 2 (BOS + EOS)")
        side = self.image_size // self.patch_kernel
        for i in range(len(self.stage_depths)):
            eff = min(self.window, side)
            if side % eff != 0:
                raise ValueError(f"stage {i} side {side} not divisible by window {eff}")
            if i + 1 < len(self.stage_depths):
                if side % self.merge_kernel != 0:
                    raise ValueError(f"stage {i} side {side} not divisible by merge kernel")
                side //= self.merge_kernel

    @property
    def num_stages(self) -> int:
        return len(self.stage_depths)

    def stage_side(self, stage: int, image_size: int | None = None) -> int:
        side = (image_size or self.image_size) // self.patch_kernel
        for _ in range(stage):
            side //= self.merge_kernel
        return side

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(d: dict) -> "ModelConfig":
        d = dict(d)
        for key in ("stage_depths", "stage_widths", "stage_heads"):
            if key in d:
                d[key] = tuple(d[key])
        known = set(ModelConfig.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown model config keys: {sorted(unknown)}")
        return ModelConfig(**d)


def parameter_shapes(config: ModelConfig, vocab_size: int) -> dict[str, tuple[int, ...]]:
    """Name -> shape map; a pure function of config, never allocating."""
    shapes: dict[str, tuple[int, ...]] = {}
    rel_rows = (2 * config.window - 1) ** 2

    w0 = config.stage_widths[0]
    shapes["image.patch_embed.w"] = (config.patch_kernel, config.patch_kernel, config.channels, w0)
    shapes["image.patch_embed.b"] = (w0,)
    for s, (depth, width, heads) in enumerate(
        zip(config.stage_depths, config.stage_widths, config.stage_heads)
    ):
        for b in range(depth):
            p = f"image.s{s}.b{b}"
            shapes[f"{p}.ln1.gamma"] = (width,)
            shapes[f"{p}.ln1.beta"] = (width,)
            for m in ("wq", "wk", "wv", "wo"):
                shapes[f"{p}.attn.{m}"] = (width, width)
            for m in ("bq", "bk", "bv", "bo"):
                shapes[f"{p}.attn.{m}"] = (width,)
            shapes[f"{p}.attn.rel_bias"] = (rel_rows, heads)
            shapes[f"{p}.ln2.gamma"] = (width,)
            shapes[f"{p}.ln2.beta"] = (width,)
            shapes[f"{p}.mlp.w1"] = (width, width * config.mlp_ratio)
            shapes[f"{p}.mlp.b1"] = (width * config.mlp_ratio,)
            shapes[f"{p}.mlp.w2"] = (width * config.mlp_ratio, width)
            shapes[f"{p}.mlp.b2"] = (width,)
        if s + 1 < config.num_stages:
            nxt = config.stage_widths[s + 1]
            shapes[f"image.merge{s}.w"] = (config.merge_kernel, config.merge_kernel, width, nxt)
            shapes[f"image.merge{s}.b"] = (nxt,)
    w_last = config.stage_widths[-1]
    shapes["image.ln_f.gamma"] = (w_last,)
    shapes["image.ln_f.beta"] = (w_last,)
    shapes["image.proj.w"] = (w_last, config.shared_dim)

    tw = config.text_width
    shapes["text.tok_embed"] = (vocab_size, tw)
    shapes["text.pos_embed"] = (config.max_len, tw)
    for l in range(config.text_layers):
        p = f"text.b{l}"
        shapes[f"{p}.ln1.gamma"] = (tw,)
        shapes[f"{p}.ln1.beta"] = (tw,)
        for m in ("wq", "wk", "wv", "wo"):
            shapes[f"{p}.attn.{m}"] = (tw, tw)
        for m in ("bq", "bk", "bv", "bo"):
            shapes[f"{p}.attn.{m}"] = (tw,)
        shapes[f"{p}.ln2.gamma"] = (tw,)
        shapes[f"{p}.ln2.beta"] = (tw,)
        shapes[f"{p}.mlp.w1"] = (tw, tw * config.mlp_ratio)
        shapes[f"{p}.mlp.b1"] = (tw * config.mlp_ratio,)
        shapes[f"{p}.mlp.w2"] = (tw * config.mlp_ratio, tw)
        shapes[f"{p}.mlp.b2"] = (tw,)
    shapes["text.ln_f.gamma"] = (tw,)
    shapes["text.ln_f.beta"] = (tw,)
    shapes["text.proj.w"] = (tw, config.shared_dim)

    shapes["tau_param"] = ()
    return shapes


def parameter_count(config: ModelConfig, vocab_size: int) -> int:
    total = 0
    for shape in parameter_shapes(config, vocab_size).values():
        n = 1
        for ext in shape:
            n *= ext
        total += n
    return total
