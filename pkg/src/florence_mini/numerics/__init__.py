"""Dense tensor engine: tape autodiff, AdamW, precision emulation, containers."""

from .container import (
    TensorFormatError,
    load_checkpoint,
    read_tensor_file,
    read_tensor_header,
    save_checkpoint,
    write_tensor_file,
)
from .fdcheck import FiniteDifferenceReport, finite_difference_check
from .optim import OptimizerState, adamw_step, cosine_lr, init_optimizer_state
from .precision import (
    EMULATED_HALF,
    FULL_PRECISION,
    HalfQuantization,
    PrecisionPolicy,
    half_grid,
    precision_policy,
    quantize_to_half,
)
from .tensor import (
    ActivationMeter,
    Gradients,
    TapeNode,
    Tensor,
    activation_meter,
    backward_from,
    enable_grad,
    evaluate_and_backward,
    grad_enabled,
    no_grad,
)
from . import ops

__all__ = [
    "ActivationMeter",
    "EMULATED_HALF",
    "FULL_PRECISION",
    "FiniteDifferenceReport",
    "Gradients",
    "HalfQuantization",
    "OptimizerState",
    "PrecisionPolicy",
    "TapeNode",
    "Tensor",
    "TensorFormatError",
    "activation_meter",
    "adamw_step",
    "backward_from",
    "cosine_lr",
    "enable_grad",
    "evaluate_and_backward",
    "finite_difference_check",
    "grad_enabled",
    "half_grid",
    "init_optimizer_state",
    "load_checkpoint",
    "no_grad",
    "ops",
    "precision_policy",
    "quantize_to_half",
    "read_tensor_file",
    "read_tensor_header",
    "save_checkpoint",
    "write_tensor_file",
]
