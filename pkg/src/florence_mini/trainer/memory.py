"""Activation-scalar accounting: the desk-scale stand-in for device-memory
profiles. Counts come straight from the tape instrumentation and are exact
integers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..numerics.tensor import activation_meter
from .checkpointing import checkpointed
from .grad_cache import gradient_cache_gradients, monolithic_gradients


@dataclass
class MemoryReport:
    peak_with_checkpointing: list[int]  # per measured step
    peak_without_checkpointing: list[int]

    def reduction(self) -> float:
        """Mean fractional peak reduction from checkpointing."""
        with_c = np.array(self.peak_with_checkpointing, dtype=float)
        without = np.array(self.peak_without_checkpointing, dtype=float)
        return float((1.0 - with_c / without).mean())


def activation_profile(
    model, batches: list[tuple[np.ndarray, np.ndarray, np.ndarray]], chunk_size: int | None = None
) -> MemoryReport:
    """Peak live activation scalars per step, with and without activation
    checkpointing, over (images, ids, labels) batches."""
    with_c: list[int] = []
    without: list[int] = []
    for images, ids, labels in batches:
        for wrapper, sink in ((None, without), (checkpointed, with_c)):
            activation_meter.reset()
            if chunk_size is not None and chunk_size < images.shape[0]:
                gradient_cache_gradients(
                    model, images, ids, labels, chunk_size, block_wrapper=wrapper
                )
            else:
                monolithic_gradients(model, images, ids, labels, block_wrapper=wrapper)
            sink.append(activation_meter.peak)
    return MemoryReport(peak_with_checkpointing=with_c, peak_without_checkpointing=without)
