"""Unified image-text contrastive objective over hash-derived labels.

Every pair sharing a label is treated as positive in both directions
(image-to-text and text-to-image); denominators run over the whole batch
including self. Temperature enters only through the similarity products and
is parametrized as tau = exp(s) so it stays positive by construction.

The loss and its gradients with respect to the embeddings and the
temperature parameter are closed-form; ``unicl_loss_op`` adapts them onto
the differentiation tape so encoder backpropagation and finite-difference
checking both see a single scalar node.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics.tensor import TapeNode, Tensor, grad_enabled

NORM_TOL = 1e-6


@dataclass
class PositiveSets:
    """Per-index equality partitions of the batch by label."""

    p: list[np.ndarray]  # image-to-text direction: P(i) = {k : y_k = y_i}
    q: list[np.ndarray]  # text-to-image direction: Q(j) = {k : y_k = y_j}


def positive_sets(y: np.ndarray) -> PositiveSets:
    y = np.asarray(y)
    if y.size < 2:
        raise ValueError("need at least two labels")
    sets = [np.flatnonzero(y == y[i]) for i in range(y.size)]
    return PositiveSets(p=sets, q=[s.copy() for s in sets])


@dataclass
class EmbeddingBatch:
    """Row-aligned unit embeddings with labels and log-temperature."""

    u: np.ndarray  # (n, d) image embeddings, unit rows
    v: np.ndarray  # (n, d) text embeddings, unit rows
    y: np.ndarray  # (n,) label ids
    tau_param: float  # s with tau = exp(s)

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=np.float64)
        self.v = np.asarray(self.v, dtype=np.float64)
        self.y = np.asarray(self.y)
        n = self.u.shape[0]
        if n < 2:
            raise ValueError("contrastive batch needs at least 2 items")
        if self.v.shape != self.u.shape or self.y.shape != (n,):
            raise ValueError("u, v, y must be row-aligned")
        for name, m in (("u", self.u), ("v", self.v)):
            norms = np.linalg.norm(m, axis=1)
            if np.abs(norms - 1.0).max() > NORM_TOL:
                raise ValueError(f"{name} rows must be unit-norm within {NORM_TOL}")

    @property
    def tau(self) -> float:
        return float(np.exp(self.tau_param))


@dataclass
class UniCLLossResult:
    loss: float
    grad_u: np.ndarray
    grad_v: np.ndarray
    grad_tau_param: float


def _label_mask(y: np.ndarray) -> np.ndarray:
    return (y[:, None] == y[None, :]).astype(np.float64)


def _log_softmax(scores: np.ndarray, axis: int) -> np.ndarray:
    m = scores.max(axis=axis, keepdims=True)
    z = scores - m
    return z - np.log(np.exp(z).sum(axis=axis, keepdims=True))


def unicl_loss(batch: EmbeddingBatch, mean_reduction: bool = False) -> UniCLLossResult:
    """Bidirectional supervised contrastive loss and its gradients.

    Reduction is the plain sum over the batch; ``mean_reduction`` divides
    loss and gradients by the batch size for schedule-friendly magnitudes
    (off by default).
    """
    return unicl_loss_arrays(batch.u, batch.v, batch.y, batch.tau_param, mean_reduction)


def unicl_loss_arrays(
    u: np.ndarray,
    v: np.ndarray,
    y: np.ndarray,
    tau_param: float,
    mean_reduction: bool = False,
) -> UniCLLossResult:
    """Core loss math on raw arrays; callers own the unit-norm contract."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    y = np.asarray(y)
    n = u.shape[0]
    if n < 2:
        raise ValueError("contrastive batch needs at least 2 items")
    tau = float(np.exp(tau_param))
    scores = tau * (u @ v.T)

    mask = _label_mask(y)
    counts = mask.sum(axis=1)  # |P(i)| row-wise == |Q(j)| col-wise (mask symmetric)

    log_p_rows = _log_softmax(scores, axis=1)
    log_p_cols = _log_softmax(scores, axis=0)
    loss_i2t = -((mask / counts[:, None]) * log_p_rows).sum()
    loss_t2i = -((mask / counts[None, :]) * log_p_cols).sum()
    loss = loss_i2t + loss_t2i

    softmax_rows = np.exp(log_p_rows)
    softmax_cols = np.exp(log_p_cols)
    d_scores = (softmax_rows - mask / counts[:, None]) + (softmax_cols - mask / counts[None, :])

    grad_u = tau * (d_scores @ v)
    grad_v = tau * (d_scores.T @ u)
    grad_tau_param = float((d_scores * scores).sum())  # d scores / d s = scores

    if mean_reduction:
        loss /= n
        grad_u = grad_u / n
        grad_v = grad_v / n
        grad_tau_param /= n
    return UniCLLossResult(float(loss), grad_u, grad_v, grad_tau_param)


OP_NORM_TOL = 1e-4  # looser than the batch contract so eps-scale FD probes pass


def unicl_loss_op(u: Tensor, v: Tensor, tau_param: Tensor, y: np.ndarray, mean_reduction: bool = False) -> Tensor:
    """Tape-integrated UniCL loss: one scalar node backed by the closed form."""
    for name, m in (("u", u.data), ("v", v.data)):
        norms = np.linalg.norm(m, axis=-1)
        if np.abs(norms - 1.0).max() > OP_NORM_TOL:
            raise ValueError(f"{name} rows must be unit-norm within {OP_NORM_TOL}")
    res = unicl_loss_arrays(u.data, v.data, y, float(tau_param.data), mean_reduction=mean_reduction)
    out = np.array(res.loss)
    if grad_enabled() and any(t.requires_grad or t.node is not None for t in (u, v, tau_param)):

        def backward(g, saved):
            gu, gv, gs = saved
            gval = float(g)
            return (
                (gval * gu).astype(u.data.dtype),
                (gval * gv).astype(v.data.dtype),
                np.asarray(gval * gs, dtype=tau_param.data.dtype).reshape(tau_param.data.shape),
            )

        node = TapeNode(
            "unicl_loss",
            (u, v, tau_param),
            (res.grad_u, res.grad_v, np.array(res.grad_tau_param)),
            backward,
        )
        return Tensor(out, node=node)
    return Tensor(out)


def infonce_reference(u: np.ndarray, v: np.ndarray, tau: float) -> float:
    """Symmetric InfoNCE oracle: each diagonal pair is the unique positive.

    Kept independent of unicl_loss so the all-distinct-labels reduction can
    be cross-checked between two separately written routes.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape[0] < 2:
        raise ValueError("need at least 2 rows")
    scores = tau * (u @ v.T)
    diag = np.arange(u.shape[0])
    row_ls = _log_softmax(scores, axis=1)
    col_ls = _log_softmax(scores, axis=0)
    return float(-(row_ls[diag, diag].sum() + col_ls[diag, diag].sum()))
