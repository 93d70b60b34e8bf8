"""Gradient cache: full-batch contrastive gradients from chunked re-forwards.

Pass 1 runs a gradient-free forward over each chunk to assemble the full
batch of embeddings; pass 2 takes the loss gradient at the embedding level;
pass 3 re-forwards each chunk with recording enabled and injects the
matching embedding-gradient rows as output gradients. Injection happens at
the post-normalization embeddings, so the recorded chunk graph includes the
normalization. Accumulated parameter gradients must equal the monolithic
full-batch backward; with a single chunk they are bit-identical.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from ..numerics.tensor import backward_from, evaluate_and_backward, no_grad
from ..unicl import unicl_loss_arrays, unicl_loss_op


def monolithic_gradients(
    model,
    images: np.ndarray,
    ids: np.ndarray,
    labels: np.ndarray,
    mean_reduction: bool = False,
    block_wrapper: Callable | None = None,
) -> tuple[float, dict[str, np.ndarray]]:
    """Single recorded forward over the whole batch, one backward sweep."""
    u = model.encode_image(images, block_wrapper=block_wrapper)
    v = model.encode_text(ids)
    loss = unicl_loss_op(u, v, model.tau_param, labels, mean_reduction=mean_reduction)
    g = evaluate_and_backward(loss)
    grads = {name: g[name] for name in model.params if name in g}
    return float(loss.data), grads


def gradient_cache_gradients(
    model,
    images: np.ndarray,
    ids: np.ndarray,
    labels: np.ndarray,
    chunk_size: int,
    mean_reduction: bool = False,
    block_wrapper: Callable | None = None,
    debug_guard: bool = True,
) -> tuple[float, dict[str, np.ndarray]]:
    batch = images.shape[0]
    if batch % chunk_size != 0:
        raise ValueError(f"chunk_size {chunk_size} must divide batch size {batch}")
    n_chunks = batch // chunk_size

    # pass 1: gradient-free chunk forwards assemble the full embedding batch
    u_parts, v_parts = [], []
    with no_grad():
        for c in range(n_chunks):
            rows = slice(c * chunk_size, (c + 1) * chunk_size)
            u_parts.append(model.encode_image(images[rows], block_wrapper=block_wrapper).data)
            v_parts.append(model.encode_text(ids[rows]).data)
    u_full = np.concatenate(u_parts, axis=0)
    v_full = np.concatenate(v_parts, axis=0)

    # pass 2: embedding-level loss gradient over the full batch
    res = unicl_loss_arrays(u_full, v_full, labels, float(model.tau_param.data), mean_reduction)

    # pass 3: recorded chunk re-forwards with injected embedding gradients
    grads: dict[str, np.ndarray] = {"tau_param": np.asarray(res.grad_tau_param)}
    for c in range(n_chunks):
        rows = slice(c * chunk_size, (c + 1) * chunk_size)
        u_c = model.encode_image(images[rows], block_wrapper=block_wrapper)
        v_c = model.encode_text(ids[rows])
        if debug_guard:
            if u_c.data.tobytes() != u_full[rows].tobytes() or v_c.data.tobytes() != v_full[rows].tobytes():
                raise RuntimeError(
                    f"embedding drift between pass 1 and pass 3 in chunk {c}; "
                    "non-deterministic encoder forward"
                )
        chunk_grads = backward_from([u_c, v_c], [res.grad_u[rows], res.grad_v[rows]])
        for name in model.params:
            g = chunk_grads.get(name)
            if g is None:
                continue
            if name in grads:
                grads[name] = grads[name] + g
            else:
                grads[name] = g
    return float(res.loss), grads
