"""Dense tensors with a record-and-replay differentiation tape.

Every differentiable operation appends a TapeNode to the implicit tape (the
DAG hanging off each Tensor). Backward walks that DAG in reverse topological
order, accumulating gradients in a fixed, deterministic order. Values saved
for backward are tracked by a global activation meter so memory-saving
strategies (activation checkpointing, gradient caching) can be measured in
exact scalar counts instead of device bytes.

Reference mode is single-threaded; all reductions use numpy's fixed
evaluation order, so identical tapes with identical leaf values produce
bit-identical outputs and gradients.
"""

from __future__ import annotations

import contextlib
import itertools
from typing import Callable, Iterable

import numpy as np

FLOAT_DTYPES = (np.float32, np.float64)
SUPPORTED_DTYPES = (np.float32, np.float64, np.uint8)

_serial = itertools.count()


class ActivationMeter:
    """Counts scalars currently saved on the tape for backward use."""

    def __init__(self) -> None:
        self.current = 0
        self.peak = 0

    def add(self, n: int) -> None:
        self.current += n
        if self.current > self.peak:
            self.peak = self.current

    def sub(self, n: int) -> None:
        self.current -= n

    def reset(self) -> None:
        self.current = 0
        self.peak = 0


activation_meter = ActivationMeter()

_grad_enabled = True


def grad_enabled() -> bool:
    return _grad_enabled


@contextlib.contextmanager
def no_grad():
    """Disable tape recording inside the block."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


@contextlib.contextmanager
def enable_grad():
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = True
    try:
        yield
    finally:
        _grad_enabled = prev


class TapeNode:
    """One recorded operation: inputs, saved values, and a backward rule.

    ``backward_fn(grad_out, saved)`` returns one gradient array (or None)
    per input, in input order. Saved values are released once the node has
    been consumed by a backward pass.
    """

    __slots__ = ("op", "inputs", "saved", "backward_fn", "_saved_scalars")

    def __init__(
        self,
        op: str,
        inputs: tuple["Tensor", ...],
        saved: tuple[np.ndarray, ...],
        backward_fn: Callable,
    ) -> None:
        self.op = op
        self.inputs = inputs
        self.saved = saved
        self.backward_fn = backward_fn
        self._saved_scalars = int(sum(a.size for a in saved))
        activation_meter.add(self._saved_scalars)

    def release(self) -> None:
        if self.saved is not None:
            activation_meter.sub(self._saved_scalars)
            self.saved = None

    def __del__(self):
        # Tapes abandoned without a backward pass still release their count.
        try:
            self.release()
        except Exception:
            pass


class Tensor:
    """Immutable-by-convention dense array, optionally on the tape.

    ``data`` is a row-major numpy array; ``requires_grad`` marks leaves that
    should receive gradients; ``node`` links a non-leaf to the operation
    that produced it.
    """

    __slots__ = ("data", "requires_grad", "node", "name", "_uid")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        node: TapeNode | None = None,
        name: str | None = None,
    ) -> None:
        arr = np.asarray(data)
        if arr.dtype.type not in SUPPORTED_DTYPES:
            if np.issubdtype(arr.dtype, np.floating):
                arr = arr.astype(np.float64)
            elif np.issubdtype(arr.dtype, np.integer):
                raise TypeError(f"unsupported tensor dtype {arr.dtype}; use uint8 or a float type")
            else:
                arr = arr.astype(np.float64)
        if requires_grad and arr.dtype.type not in FLOAT_DTYPES:
            raise TypeError("gradient-bearing tensors must have a floating dtype")
        self.data = arr
        self.requires_grad = requires_grad
        self.node = node
        self.name = name
        self._uid = name if name is not None else f"#{next(_serial)}"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def uid(self) -> str:
        return self._uid

    def is_leaf(self) -> bool:
        return self.node is None

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}{tag})"


class Gradients:
    """Gradient map keyed by leaf tensor (or its uid string)."""

    def __init__(self) -> None:
        self._by_uid: dict[str, np.ndarray] = {}

    def _key(self, key) -> str:
        return key.uid if isinstance(key, Tensor) else key

    def __contains__(self, key) -> bool:
        return self._key(key) in self._by_uid

    def __getitem__(self, key) -> np.ndarray:
        return self._by_uid[self._key(key)]

    def get(self, key, default=None):
        return self._by_uid.get(self._key(key), default)

    def items(self):
        return self._by_uid.items()

    def __len__(self) -> int:
        return len(self._by_uid)

    def accumulate(self, key, grad: np.ndarray) -> None:
        uid = self._key(key)
        prev = self._by_uid.get(uid)
        self._by_uid[uid] = grad if prev is None else prev + grad


# Stack of Gradients collectors for backward passes currently in flight.
# A recomputing node (activation checkpoint) runs a nested backward and
# forwards gradients of leaves it did not replace into the enclosing
# collector, so parameters referenced via closures still get their grads.
_collector_stack: list[Gradients] = []


def current_collector() -> Gradients | None:
    return _collector_stack[-1] if _collector_stack else None


def _toposort(roots: Iterable[Tensor]) -> list[Tensor]:
    """Deterministic post-order over the DAG reachable from ``roots``."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(r, False) for r in reversed(list(roots))]
    while stack:
        t, expanded = stack.pop()
        if expanded:
            order.append(t)
            continue
        if id(t) in seen:
            continue
        seen.add(id(t))
        stack.append((t, True))
        if t.node is not None:
            for inp in reversed(t.node.inputs):
                if id(inp) not in seen:
                    stack.append((inp, False))
    return order


def backward_from(outputs: list[Tensor], output_grads: list[np.ndarray]) -> Gradients:
    """Reverse-mode sweep seeded with explicit output gradients.

    Supports non-scalar outputs; this is the injection point used by the
    gradient cache (embedding-level gradients pushed into a recorded chunk).
    Saved values are released as nodes are consumed, so a tape can be walked
    once; rebuild the forward to differentiate again.
    """
    if len(outputs) != len(output_grads):
        raise ValueError("outputs and output_grads must align")
    grad_table: dict[int, np.ndarray] = {}
    for out, g in zip(outputs, output_grads):
        g = np.asarray(g, dtype=out.data.dtype)
        if g.shape != out.data.shape:
            raise ValueError(f"seed gradient shape {g.shape} != output shape {out.data.shape}")
        if id(out) in grad_table:
            grad_table[id(out)] = grad_table[id(out)] + g
        else:
            grad_table[id(out)] = g.copy()

    order = _toposort(outputs)
    result = Gradients()
    _collector_stack.append(result)
    try:
        for t in reversed(order):
            g = grad_table.pop(id(t), None)
            if g is None:
                continue
            if t.node is None:
                if t.requires_grad:
                    result.accumulate(t.uid, g)
                continue
            node = t.node
            input_grads = node.backward_fn(g, node.saved)
            node.release()
            for inp, ig in zip(node.inputs, input_grads):
                if ig is None:
                    continue
                if ig.shape != inp.data.shape:
                    raise AssertionError(
                        f"backward of {node.op}: gradient shape {ig.shape} != input shape {inp.data.shape}"
                    )
                if id(inp) in grad_table:
                    grad_table[id(inp)] = grad_table[id(inp)] + ig
                else:
                    grad_table[id(inp)] = ig
    finally:
        _collector_stack.pop()
    return result


def evaluate_and_backward(root: Tensor) -> Gradients:
    """Gradients of a scalar root with respect to every requires-grad leaf."""
    if root.data.ndim != 0 and root.data.size != 1:
        raise ValueError(f"backward root must be scalar, got shape {root.data.shape}")
    seed = np.ones_like(root.data)
    return backward_from([root], [seed])
