"""AdamW with decoupled weight decay, plus the warmup-cosine schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass
class OptimizerState:
    """Per-parameter moments and the shared hyperparameters.

    Defaults for the betas, eps and decay follow common decoupled-decay
    practice; every one of them is overridable through TrainConfig.
    """

    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.05
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def init_optimizer_state(
    params: dict[str, np.ndarray],
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    weight_decay: float = 0.05,
) -> OptimizerState:
    if lr <= 0:
        raise ValueError("lr must be positive")
    return OptimizerState(
        lr=lr,
        beta1=beta1,
        beta2=beta2,
        eps=eps,
        weight_decay=weight_decay,
        m={k: np.zeros_like(p) for k, p in params.items()},
        v={k: np.zeros_like(p) for k, p in params.items()},
    )


def adamw_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: OptimizerState,
    lr: float | None = None,
) -> tuple[dict[str, np.ndarray], OptimizerState]:
    """One bias-corrected Adam update plus decoupled decay p -= lr*wd*p.

    Pure function of (params, grads, state): returns fresh arrays, leaving
    the inputs untouched, so sharded and unsharded executions can be
    compared bit-for-bit. Parameters absent from ``grads`` are carried
    through unchanged (their moments do not advance).
    """
    step_lr = state.lr if lr is None else lr
    if step_lr < 0:
        raise ValueError("lr must be non-negative")
    t = state.step + 1
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t

    new_params: dict[str, np.ndarray] = {}
    new_m = dict(state.m)
    new_v = dict(state.v)
    for name in params:
        p = params[name]
        if name not in grads:
            new_params[name] = p.copy()
            continue
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape} for {name!r}")
        if np.isnan(g).any():
            raise ValueError(f"NaN gradient for parameter {name!r}; step aborted")
        m = state.beta1 * state.m[name] + (1.0 - state.beta1) * g
        v = state.beta2 * state.v[name] + (1.0 - state.beta2) * (g * g)
        m_hat = m / bc1
        v_hat = v / bc2
        update = m_hat / (np.sqrt(v_hat) + state.eps)
        new_params[name] = p - step_lr * update - step_lr * state.weight_decay * p
        new_m[name] = m
        new_v[name] = v

    next_state = OptimizerState(
        lr=state.lr,
        beta1=state.beta1,
        beta2=state.beta2,
        eps=state.eps,
        weight_decay=state.weight_decay,
        step=t,
        m=new_m,
        v=new_v,
    )
    return new_params, next_state


def cosine_lr(step: int, total_steps: int, warmup_steps: int, peak_lr: float) -> float:
    """Linear ramp 0 -> peak over warmup, then cosine decay peak -> 0.

    Clamped at both ends, so callers may pass steps outside [0, total].
    """
    if warmup_steps >= total_steps:
        raise ValueError("warmup_steps must be smaller than total_steps")
    step = max(0, min(step, total_steps))
    if step < warmup_steps:
        return peak_lr * step / warmup_steps
    progress = (step - warmup_steps) / (total_steps - warmup_steps)
    return peak_lr * 0.5 * (1.0 + math.cos(math.pi * progress))
