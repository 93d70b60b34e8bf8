"""Differentiable primitives over Tensor.

Each op computes its forward value, optionally quantizes it per the active
precision policy, and (when recording) attaches a TapeNode whose backward
rule returns one gradient per input. Arrays needed by a backward rule are
passed through the node's ``saved`` tuple, never captured in closures, so
the activation meter sees every retained scalar.
"""

from __future__ import annotations

import math

import numpy as np

from .precision import apply_policy
from .tensor import FLOAT_DTYPES, TapeNode, Tensor, grad_enabled

_GELU_K0 = math.sqrt(2.0 / math.pi)
_GELU_K1 = 0.044715


def constant(data, dtype=None) -> Tensor:
    arr = np.asarray(data)
    if dtype is not None:
        arr = arr.astype(dtype)
    return Tensor(arr)


def parameter(data, name: str) -> Tensor:
    return Tensor(np.asarray(data), requires_grad=True, name=name)


def _check_float(t: Tensor, op: str) -> None:
    if t.data.dtype.type not in FLOAT_DTYPES:
        raise TypeError(f"{op} requires a floating tensor, got {t.data.dtype}")


def _check_same_dtype(a: Tensor, b: Tensor, op: str) -> None:
    if a.data.dtype != b.data.dtype:
        raise TypeError(f"dtype mismatch in {op}: {a.data.dtype} vs {b.data.dtype}")


def _result(op: str, out: np.ndarray, inputs, saved, backward_fn) -> Tensor:
    out = apply_policy(op, out)
    if grad_enabled() and any(t.requires_grad or t.node is not None for t in inputs):
        node = TapeNode(op, tuple(inputs), tuple(saved), backward_fn)
        return Tensor(out, node=node)
    return Tensor(out)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcasted gradient back down to ``shape``."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (g, s) in enumerate(zip(grad.shape, shape)) if s == 1 and g != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# ---------------------------------------------------------------------------
# elementwise
# ---------------------------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same_dtype(a, b, "add")
    sa, sb = a.shape, b.shape

    def backward(g, saved):
        return _unbroadcast(g, sa), _unbroadcast(g, sb)

    return _result("add", a.data + b.data, (a, b), (), backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_same_dtype(a, b, "sub")
    sa, sb = a.shape, b.shape

    def backward(g, saved):
        return _unbroadcast(g, sa), _unbroadcast(-g, sb)

    return _result("sub", a.data - b.data, (a, b), (), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_same_dtype(a, b, "mul")
    sa, sb = a.shape, b.shape

    def backward(g, saved):
        av, bv = saved
        return _unbroadcast(g * bv, sa), _unbroadcast(g * av, sb)

    return _result("mul", a.data * b.data, (a, b), (a.data, b.data), backward)


def div(a: Tensor, b: Tensor) -> Tensor:
    _check_same_dtype(a, b, "div")
    sa, sb = a.shape, b.shape

    def backward(g, saved):
        av, bv = saved
        return _unbroadcast(g / bv, sa), _unbroadcast(-g * av / (bv * bv), sb)

    return _result("div", a.data / b.data, (a, b), (a.data, b.data), backward)


def neg(a: Tensor) -> Tensor:
    def backward(g, saved):
        return (-g,)

    return _result("neg", -a.data, (a,), (), backward)


def scale(a: Tensor, c: float) -> Tensor:
    """Multiply by a Python scalar, preserving dtype."""
    _check_float(a, "scale")

    def backward(g, saved):
        return (g * c,)

    return _result("scale", a.data * a.data.dtype.type(c), (a,), (), backward)


def exp(a: Tensor) -> Tensor:
    _check_float(a, "exp")
    out = np.exp(a.data)

    def backward(g, saved):
        (y,) = saved
        return (g * y,)

    return _result("exp", out, (a,), (out,), backward)


def log(a: Tensor) -> Tensor:
    _check_float(a, "log")

    def backward(g, saved):
        (x,) = saved
        return (g / x,)

    return _result("log", np.log(a.data), (a,), (a.data,), backward)


def gelu(a: Tensor) -> Tensor:
    """tanh-approximated GELU (smooth, finite-difference friendly)."""
    _check_float(a, "gelu")
    x = a.data
    t = np.tanh(_GELU_K0 * (x + _GELU_K1 * (x * x * x)))
    out = 0.5 * x * (1.0 + t)

    def backward(g, saved):
        xv, tv = saved
        inner = _GELU_K0 * (1.0 + 3.0 * _GELU_K1 * xv * xv)
        return (g * (0.5 * (1.0 + tv) + 0.5 * xv * (1.0 - tv * tv) * inner),)

    return _result("gelu", out, (a,), (x, t), backward)


# ---------------------------------------------------------------------------
# shape
# ---------------------------------------------------------------------------


def reshape(a: Tensor, shape) -> Tensor:
    old = a.shape

    def backward(g, saved):
        return (g.reshape(old),)

    return _result("reshape", a.data.reshape(shape), (a,), (), backward)


def transpose(a: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))

    def backward(g, saved):
        return (g.transpose(inv),)

    return _result("transpose", a.data.transpose(axes), (a,), (), backward)


# ---------------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------------


def tensor_sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    _check_float(a, "sum")
    shape = a.shape
    norm_axis = axis if axis is None else (tuple(axis) if isinstance(axis, (tuple, list)) else (axis,))

    def backward(g, saved):
        if norm_axis is None:
            return (np.broadcast_to(g, shape).copy(),)
        gg = g
        if not keepdims:
            gg = np.expand_dims(g, norm_axis)
        return (np.broadcast_to(gg, shape).copy(),)

    return _result("sum", a.data.sum(axis=norm_axis, keepdims=keepdims), (a,), (), backward)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    shape = a.shape
    if axis is None:
        n = a.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        n = 1
        for ax in axes:
            n *= shape[ax]
    return scale(tensor_sum(a, axis=axis, keepdims=keepdims), 1.0 / n)


# ---------------------------------------------------------------------------
# linear algebra
# ---------------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product with numpy's stacked-matmul semantics (ndim >= 2)."""
    _check_same_dtype(a, b, "matmul")
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ValueError("matmul requires tensors of rank >= 2")
    sa, sb = a.shape, b.shape

    def backward(g, saved):
        av, bv = saved
        ga = _unbroadcast(np.matmul(g, bv.swapaxes(-1, -2)), sa)
        gb = _unbroadcast(np.matmul(av.swapaxes(-1, -2), g), sb)
        return ga, gb

    return _result("matmul", np.matmul(a.data, b.data), (a, b), (a.data, b.data), backward)


# ---------------------------------------------------------------------------
# normalization / softmax
# ---------------------------------------------------------------------------


def softmax(a: Tensor) -> Tensor:
    """Row-stabilized softmax over the last axis.

    The max subtraction and denominator accumulation run at the tensor's
    full storage precision; the op is a permanent member of the stable set,
    so its output is never half-quantized.
    """
    _check_float(a, "softmax")
    x = a.data
    m = x.max(axis=-1, keepdims=True)
    e = np.exp(x - m)
    out = e / e.sum(axis=-1, keepdims=True)

    def backward(g, saved):
        (y,) = saved
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return _result("softmax", out, (a,), (out,), backward)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis; affine parameters broadcast from 1-D."""
    _check_same_dtype(x, gamma, "layer_norm")
    _check_same_dtype(x, beta, "layer_norm")
    xv = x.data
    mu = xv.mean(axis=-1, keepdims=True)
    var = ((xv - mu) ** 2).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (xv - mu) * inv_std
    out = gamma.data * xhat + beta.data
    lead = tuple(range(xv.ndim - 1))

    def backward(g, saved):
        xh, istd, gam = saved
        dxhat = g * gam
        dx = istd * (
            dxhat
            - dxhat.mean(axis=-1, keepdims=True)
            - xh * (dxhat * xh).mean(axis=-1, keepdims=True)
        )
        dgamma = (g * xh).sum(axis=lead)
        dbeta = g.sum(axis=lead)
        return dx, dgamma, dbeta

    return _result("layer_norm", out, (x, gamma, beta), (xhat, inv_std, gamma.data), backward)


def l2_normalize(a: Tensor, eps: float = 1e-12) -> Tensor:
    """Scale rows (last axis) to unit Euclidean norm."""
    _check_float(a, "l2_normalize")
    x = a.data
    n = np.sqrt((x * x).sum(axis=-1, keepdims=True) + eps)
    out = x / n

    def backward(g, saved):
        y, nv = saved
        return ((g - y * (g * y).sum(axis=-1, keepdims=True)) / nv,)

    return _result("l2_normalize", out, (a,), (out, n), backward)


# ---------------------------------------------------------------------------
# gather
# ---------------------------------------------------------------------------


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    """Row gather: out[..., :] = table[ids[...]]; scatter-add backward."""
    _check_float(table, "embedding")
    ids = np.asarray(ids)
    if not np.issubdtype(ids.dtype, np.integer):
        raise TypeError("embedding ids must be integers")
    tshape = table.shape

    def backward(g, saved):
        (idx,) = saved
        gt = np.zeros(tshape, dtype=g.dtype)
        np.add.at(gt, idx.reshape(-1), g.reshape(-1, tshape[-1]))
        return (gt,)

    return _result("embedding", table.data[ids], (table,), (ids,), backward)


# ---------------------------------------------------------------------------
# convolution building blocks
# ---------------------------------------------------------------------------


def unfold2d(x: Tensor, kh: int, kw: int, sh: int, sw: int) -> Tensor:
    """Extract (kh, kw) patches from (B, H, W, C) into (B, Ho, Wo, kh*kw*C)."""
    b, h, w, c = x.shape
    ho = (h - kh) // sh + 1
    wo = (w - kw) // sw + 1
    if ho < 1 or wo < 1:
        raise ValueError(f"kernel ({kh}x{kw}) larger than input ({h}x{w})")
    cols = np.empty((b, ho, wo, kh * kw * c), dtype=x.data.dtype)
    for ki in range(kh):
        for kj in range(kw):
            slot = ki * kw + kj
            cols[..., slot * c : (slot + 1) * c] = x.data[
                :, ki : ki + sh * ho : sh, kj : kj + sw * wo : sw, :
            ]
    in_shape = x.shape

    def backward(g, saved):
        gx = np.zeros(in_shape, dtype=g.dtype)
        for ki in range(kh):
            for kj in range(kw):
                slot = ki * kw + kj
                gx[:, ki : ki + sh * ho : sh, kj : kj + sw * wo : sw, :] += g[
                    ..., slot * c : (slot + 1) * c
                ]
        return (gx,)

    return _result("unfold2d", cols, (x,), (), backward)


def unfold3d(x: Tensor, kt: int, kh: int, kw: int, st: int, sh: int, sw: int) -> Tensor:
    """3-D analogue of unfold2d over (B, T, H, W, C) tubes."""
    b, t, h, w, c = x.shape
    to = (t - kt) // st + 1
    ho = (h - kh) // sh + 1
    wo = (w - kw) // sw + 1
    if to < 1 or ho < 1 or wo < 1:
        raise ValueError(f"kernel ({kt}x{kh}x{kw}) larger than input ({t}x{h}x{w})")
    cols = np.empty((b, to, ho, wo, kt * kh * kw * c), dtype=x.data.dtype)
    for kti in range(kt):
        for ki in range(kh):
            for kj in range(kw):
                slot = (kti * kh + ki) * kw + kj
                cols[..., slot * c : (slot + 1) * c] = x.data[
                    :,
                    kti : kti + st * to : st,
                    ki : ki + sh * ho : sh,
                    kj : kj + sw * wo : sw,
                    :,
                ]
    in_shape = x.shape

    def backward(g, saved):
        gx = np.zeros(in_shape, dtype=g.dtype)
        for kti in range(kt):
            for ki in range(kh):
                for kj in range(kw):
                    slot = (kti * kh + ki) * kw + kj
                    gx[
                        :,
                        kti : kti + st * to : st,
                        ki : ki + sh * ho : sh,
                        kj : kj + sw * wo : sw,
                        :,
                    ] += g[..., slot * c : (slot + 1) * c]
        return (gx,)

    return _result("unfold3d", cols, (x,), (), backward)


def conv2d(x: Tensor, w: Tensor, b: Tensor, stride: int) -> Tensor:
    """Strided 2-D convolution; x (B,H,W,C), w (kh,kw,C,Cout), b (Cout,)."""
    kh, kw, cin, cout = w.shape
    if x.shape[-1] != cin:
        raise ValueError(f"conv2d channel mismatch: input {x.shape[-1]}, kernel {cin}")
    cols = unfold2d(x, kh, kw, stride, stride)
    bsz, ho, wo, k = cols.shape
    flat = matmul(reshape(cols, (bsz * ho * wo, k)), reshape(w, (k, cout)))
    return add(reshape(flat, (bsz, ho, wo, cout)), b)


def conv3d(x: Tensor, w: Tensor, b: Tensor, stride: tuple[int, int, int]) -> Tensor:
    """Strided 3-D convolution; x (B,T,H,W,C), w (kt,kh,kw,C,Cout), b (Cout,)."""
    kt, kh, kw, cin, cout = w.shape
    if x.shape[-1] != cin:
        raise ValueError(f"conv3d channel mismatch: input {x.shape[-1]}, kernel {cin}")
    st, sh, sw = stride
    cols = unfold3d(x, kt, kh, kw, st, sh, sw)
    bsz, to, ho, wo, k = cols.shape
    flat = matmul(reshape(cols, (bsz * to * ho * wo, k)), reshape(w, (k, cout)))
    return add(reshape(flat, (bsz, to, ho, wo, cout)), b)
