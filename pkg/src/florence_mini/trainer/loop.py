"""Two-stage training loop with checkpointing, resume, and metrics."""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..curation.pipeline import StageStream, make_stage_stream
from ..curation.records import Triplet, load_image
from ..encoders.config import ModelConfig
from ..encoders.model import TwoTowerModel
from ..encoders.vocab import Vocabulary, build_vocabulary, tokenize_batch
from ..imaging import resize_bilinear
from ..numerics.container import load_checkpoint, save_checkpoint
from ..numerics.optim import OptimizerState, cosine_lr, init_optimizer_state
from ..numerics.precision import EMULATED_HALF, FULL_PRECISION, precision_policy
from ..numerics.tensor import activation_meter
from .checkpointing import checkpointed
from .grad_cache import gradient_cache_gradients, monolithic_gradients
from .zero import merge_zero_states, split_zero_state, zero_shard_update


class TrainingAborted(RuntimeError):
    pass


@dataclass
class TrainConfig:
    """Declarative description of a two-stage run.

    Defaults keep the web-scale stage shape (long mixed pretrain, shorter
    clean continuation, brief high-resolution finish) at desk-size step and
    batch counts.
    """

    model: ModelConfig = field(default_factory=ModelConfig)
    stage1_steps: int = 300
    stage2_steps: int = 60
    high_res_steps: int = 0
    high_res_size: int = 64
    batch_size: int = 64
    chunk_size: int = 16
    peak_lr: float = 2e-3
    warmup_steps: int = 50
    total_steps: int | None = None
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.05
    seed: int = 0
    zero_workers: int = 1
    activation_checkpointing: bool = False
    precision: str = "full"  # "full" | "half-emulated"
    objective: str = "unicl"  # "unicl" | "infonce"
    mean_reduction: bool = False
    holdout_fraction: float = 0.2
    checkpoint_every: int = 0

    def __post_init__(self):
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")
        if self.chunk_size < 1 or self.batch_size % self.chunk_size != 0:
            raise ValueError("chunk_size must divide batch_size")
        if self.zero_workers < 1:
            raise ValueError("zero_workers must be >= 1")
        if min(self.stage1_steps, self.stage2_steps, self.high_res_steps) < 0:
            raise ValueError("stage step counts must be >= 0")
        if self.precision not in ("full", "half-emulated"):
            raise ValueError(f"unknown precision {self.precision!r}")
        if self.objective not in ("unicl", "infonce"):
            raise ValueError(f"unknown objective {self.objective!r}")

    @property
    def planned_steps(self) -> int:
        return self.stage1_steps + self.stage2_steps + self.high_res_steps

    @property
    def schedule_total(self) -> int:
        return self.total_steps if self.total_steps is not None else self.planned_steps

    def to_dict(self) -> dict:
        d = asdict(self)
        d["model"] = self.model.to_dict()
        return d

    @staticmethod
    def from_dict(d: dict) -> "TrainConfig":
        d = dict(d)
        known = set(TrainConfig.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown train config keys: {sorted(unknown)}")
        if "model" in d and isinstance(d["model"], dict):
            d["model"] = ModelConfig.from_dict(d["model"])
        return TrainConfig(**d)

    def precision_policy(self):
        return EMULATED_HALF if self.precision == "half-emulated" else FULL_PRECISION


def prepare_batch(
    batch: list[Triplet],
    vocab: Vocabulary,
    dtype: str,
    image_cache: dict | None = None,
    image_size: int | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, list[str]]:
    """Load and stack a triplet batch: images, token ids, labels, record ids."""
    images = []
    for t in batch:
        key = (t.image_path, image_size)
        if image_cache is not None and key in image_cache:
            img = image_cache[key]
        else:
            img = load_image(t.image_path)
            if image_size is not None and img.shape[0] != image_size:
                img = resize_bilinear(img, image_size, image_size)
            if image_cache is not None:
                image_cache[key] = img
        images.append(img)
    x = np.stack(images).astype(dtype)
    ids = tokenize_batch([t.text for t in batch], vocab)
    # drop all-PAD columns: the towers are PAD-invariant, and attention cost
    # is quadratic in sequence length
    from ..encoders.vocab import PAD

    used = int((ids != PAD).sum(axis=1).max())
    ids = ids[:, :used]
    labels = np.array([t.label for t in batch], dtype=np.int64)
    return x, ids, labels, [t.id for t in batch]


def effective_labels(labels: np.ndarray, objective: str) -> np.ndarray:
    """UniCL uses hash labels; the InfoNCE baseline treats every row as its
    own class (the all-distinct reduction)."""
    if objective == "infonce":
        return np.arange(labels.shape[0], dtype=np.int64)
    return labels


def compute_gradients(model: TwoTowerModel, images, ids, labels, config: TrainConfig):
    wrapper = checkpointed if config.activation_checkpointing else None
    with precision_policy(config.precision_policy()):
        if config.chunk_size < images.shape[0]:
            return gradient_cache_gradients(
                model, images, ids, labels, config.chunk_size,
                mean_reduction=config.mean_reduction, block_wrapper=wrapper,
            )
        return monolithic_gradients(
            model, images, ids, labels,
            mean_reduction=config.mean_reduction, block_wrapper=wrapper,
        )


def train_step(
    model: TwoTowerModel,
    images: np.ndarray,
    ids: np.ndarray,
    labels: np.ndarray,
    record_ids: list[str],
    opt_states,  # OptimizerState or list[OptimizerState] when sharded
    config: TrainConfig,
    lr: float,
) -> tuple[object, dict]:
    """One optimizer step; returns (new optimizer state(s), metrics record)."""
    t0 = time.perf_counter()
    activation_meter.reset()
    labels_eff = effective_labels(labels, config.objective)
    loss, grads = compute_gradients(model, images, ids, labels_eff, config)
    if not np.isfinite(loss):
        raise TrainingAborted(f"non-finite loss {loss}; batch ids: {record_ids}")
    params = model.param_arrays()
    if isinstance(opt_states, list):
        new_params, new_states = zero_shard_update(params, grads, opt_states, lr=lr)
    else:
        from ..numerics.optim import adamw_step

        new_params, new_states = adamw_step(params, grads, opt_states, lr=lr)
    model.load_arrays(new_params)
    metrics = {
        "loss": loss,
        "lr": lr,
        "tau": float(np.exp(model.tau_param.data)),
        "peak_activation_scalars": activation_meter.peak,
        "step_time_s": time.perf_counter() - t0,
    }
    return new_states, metrics


def _stage_for_step(step: int, config: TrainConfig) -> tuple[str, int]:
    if step < config.stage1_steps:
        return "stage1", step
    if step < config.stage1_steps + config.stage2_steps:
        return "stage2", step - config.stage1_steps
    return "high_res", step - config.stage1_steps - config.stage2_steps


def save_train_checkpoint(
    path, model: TwoTowerModel, opt_states, config: TrainConfig, step: int
) -> None:
    state = merge_zero_states(opt_states) if isinstance(opt_states, list) else opt_states
    tensors = dict(model.param_arrays())
    for k, m in state.m.items():
        tensors[f"__opt_m__.{k}"] = m
    for k, v in state.v.items():
        tensors[f"__opt_v__.{k}"] = v
    save_checkpoint(
        path,
        tensors,
        metadata={
            "step": step,
            "optimizer_step": state.step,
            "model_config": config.model.to_dict(),
            "train_config": config.to_dict(),
            "vocab": model.vocab.to_list(),
        },
    )


def load_train_checkpoint(path, config: TrainConfig):
    """Rebuild (model, optimizer state, step) from a checkpoint directory."""
    tensors, manifest = load_checkpoint(path)
    vocab = Vocabulary.from_list(manifest["vocab"], max_len=config.model.max_len)
    model = TwoTowerModel.create(config.model, vocab, seed=config.seed)
    params = {k: v for k, v in tensors.items() if not k.startswith("__opt_")}
    model.load_arrays(params)
    state = init_optimizer_state(
        params,
        lr=config.peak_lr,
        beta1=config.beta1,
        beta2=config.beta2,
        eps=config.eps,
        weight_decay=config.weight_decay,
    )
    state.step = manifest["optimizer_step"]
    for k in params:
        state.m[k] = tensors[f"__opt_m__.{k}"]
        state.v[k] = tensors[f"__opt_v__.{k}"]
    return model, state, manifest["step"]


def load_model_checkpoint(path) -> TwoTowerModel:
    """Parameters + embedded config/vocab, for evaluation and inflation."""
    tensors, manifest = load_checkpoint(path)
    config = ModelConfig.from_dict(manifest["model_config"])
    vocab = Vocabulary.from_list(manifest["vocab"], max_len=config.max_len)
    model = TwoTowerModel.create(config, vocab, seed=0)
    model.load_arrays({k: v for k, v in tensors.items() if not k.startswith("__opt_")})
    return model


def run_two_stage_training(
    triplets: list[Triplet],
    config: TrainConfig,
    out_dir,
    vocab: Vocabulary | None = None,
    resume_from=None,
) -> dict:
    """Stage 1 on the full stream, stage 2 with augmented records excluded,
    optional high-resolution phase; deterministic for a fixed (corpus,
    config, seed)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if vocab is None:
        vocab = build_vocabulary([t.text for t in triplets], max_len=config.model.max_len)

    if resume_from is not None:
        model, state, start_step = load_train_checkpoint(resume_from, config)
        vocab = model.vocab
    else:
        model = TwoTowerModel.create(config.model, vocab, seed=config.seed)
        state = init_optimizer_state(
            model.param_arrays(),
            lr=config.peak_lr,
            beta1=config.beta1,
            beta2=config.beta2,
            eps=config.eps,
            weight_decay=config.weight_decay,
        )
        start_step = 0

    opt_states: object = state
    if config.zero_workers > 1:
        opt_states = split_zero_state(state, model.param_arrays(), config.zero_workers)

    streams: dict[str, StageStream] = {}
    if config.stage1_steps > 0:
        streams["stage1"] = make_stage_stream(triplets, 1, config.seed, config.batch_size)
    if config.stage2_steps > 0 or config.high_res_steps > 0:
        streams["stage2"] = make_stage_stream(triplets, 2, config.seed, config.batch_size)
        streams["high_res"] = streams["stage2"]

    metrics_path = out / "metrics.jsonl"
    image_cache: dict = {}
    epoch_cache: dict = {}

    def batch_for(stage: str, local_step: int):
        stream = streams[stage]
        epoch, idx = divmod(local_step, stream.batches_per_epoch)
        key = (stage, epoch)
        if key not in epoch_cache:
            epoch_cache.clear()
            epoch_cache[key] = stream.epoch_batches(epoch)
        return epoch_cache[key][idx]

    checkpoints: dict[str, str] = {}
    mode = "a" if resume_from is not None else "w"
    with open(metrics_path, mode) as metrics_fh:
        for step in range(start_step, config.planned_steps):
            stage, local = _stage_for_step(step, config)
            batch = batch_for(stage, local)
            size = config.high_res_size if stage == "high_res" else None
            images, ids, labels, rec_ids = prepare_batch(
                batch, vocab, config.model.dtype, image_cache, image_size=size
            )
            lr = cosine_lr(step, config.schedule_total, config.warmup_steps, config.peak_lr)
            try:
                opt_states, metrics = train_step(
                    model, images, ids, labels, rec_ids, opt_states, config, lr
                )
            except TrainingAborted:
                with open(out / "abort_diagnostic.json", "w") as fh:
                    json.dump({"step": step, "stage": stage, "batch_ids": rec_ids}, fh)
                raise
            record = {"step": step, "stage": stage, **metrics}
            metrics_fh.write(json.dumps(record) + "\n")

            done = step + 1
            if config.checkpoint_every and done % config.checkpoint_every == 0:
                p = out / f"ckpt-step-{done}"
                save_train_checkpoint(p, model, opt_states, config, done)
                checkpoints[f"step-{done}"] = str(p)
            if done == config.stage1_steps and config.stage1_steps > 0:
                p = out / "ckpt-stage1"
                save_train_checkpoint(p, model, opt_states, config, done)
                checkpoints["stage1"] = str(p)
            if done == config.stage1_steps + config.stage2_steps and config.stage2_steps > 0:
                p = out / "ckpt-stage2"
                save_train_checkpoint(p, model, opt_states, config, done)
                checkpoints["stage2"] = str(p)

    final = out / "ckpt-final"
    save_train_checkpoint(final, model, opt_states, config, config.planned_steps)
    checkpoints["final"] = str(final)
    return {
        "model": model,
        "checkpoints": checkpoints,
        "metrics_path": str(metrics_path),
        "steps_run": config.planned_steps - start_step,
    }
