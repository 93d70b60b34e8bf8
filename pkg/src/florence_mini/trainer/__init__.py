"""Training loop and the memory-efficiency algorithms."""

from .checkpointing import checkpointed
from .grad_cache import gradient_cache_gradients, monolithic_gradients
from .memory import MemoryReport, activation_profile
from .loop import (
    TrainConfig,
    TrainingAborted,
    effective_labels,
    load_model_checkpoint,
    load_train_checkpoint,
    prepare_batch,
    run_two_stage_training,
    save_train_checkpoint,
    train_step,
)
from .zero import (
    ShardReport,
    init_zero_states,
    merge_zero_states,
    partition_parameters,
    shard_report,
    split_zero_state,
    zero_shard_update,
)

__all__ = [
    "MemoryReport",
    "ShardReport",
    "TrainConfig",
    "TrainingAborted",
    "activation_profile",
    "checkpointed",
    "effective_labels",
    "gradient_cache_gradients",
    "init_zero_states",
    "load_model_checkpoint",
    "load_train_checkpoint",
    "merge_zero_states",
    "monolithic_gradients",
    "partition_parameters",
    "prepare_batch",
    "run_two_stage_training",
    "save_train_checkpoint",
    "shard_report",
    "split_zero_state",
    "train_step",
    "zero_shard_update",
]
