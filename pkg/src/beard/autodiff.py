"""Minimal reverse-mode automatic differentiation over numpy arrays.

The supported primitive set is fixed and covers exactly what the models
need: dense algebra, layer normalization, softmax/GELU, 1-D convolution,
row standardization, embedding/row gathers, and cross-entropy. Gradients
of every primitive are verified against central finite differences in the
test suite. Graphs built from anything else are rejected by gradient_of.

Constants (inputs, teacher activations, masks) enter as non-grad tensors;
subgraphs with no grad-requiring ancestor are pruned at construction, so
frozen-model forwards cost no graph memory.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np
from scipy.special import erf

from ._util import UnsupportedPrimitiveError, standardize_rows

SUPPORTED_PRIMITIVES = frozenset(
    {
        "leaf",
        "add",
        "sub",
        "mul",
        "div",
        "neg",
        "matmul",
        "reshape",
        "transpose",
        "sum",
        "sqrt",
        "gelu",
        "softmax",
        "layer_norm",
        "standardize",
        "conv1d",
        "embedding",
        "take_rows",
        "cross_entropy",
    }
)

_GRAD_ENABLED = True


@contextmanager
def no_grad():
    """Disable graph construction inside the block (inference mode)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "op", "parents", "_backward")

    def __init__(self, data, requires_grad=False, op="leaf", parents=(), backward=None):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.op = op
        self.parents = parents
        self._backward = backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self):
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self):
        return f"Tensor(op={self.op!r}, shape={self.shape}, requires_grad={self.requires_grad})"


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    arr = np.asarray(x, dtype=dtype)
    return Tensor(arr)


def parameter(data, dtype=np.float32) -> Tensor:
    return Tensor(np.asarray(data, dtype=dtype), requires_grad=True)


def _node(data, op, parents, backward) -> Tensor:
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        return Tensor(data, requires_grad=True, op=op, parents=tuple(parents), backward=backward)
    return Tensor(data)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to `shape`."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


# ---------------------------------------------------------------------------
# elementwise algebra


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data + b.data

    def backward(g):
        _accumulate(a, _unbroadcast(g, a.data.shape))
        _accumulate(b, _unbroadcast(g, b.data.shape))

    return _node(out, "add", (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data - b.data

    def backward(g):
        _accumulate(a, _unbroadcast(g, a.data.shape))
        _accumulate(b, _unbroadcast(-g, b.data.shape))

    return _node(out, "sub", (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data * b.data

    def backward(g):
        _accumulate(a, _unbroadcast(g * b.data, a.data.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.data.shape))

    return _node(out, "mul", (a, b), backward)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data

    def backward(g):
        _accumulate(a, _unbroadcast(g / b.data, a.data.shape))
        _accumulate(b, _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

    return _node(out, "div", (a, b), backward)


def neg(a) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        _accumulate(a, -g)

    return _node(-a.data, "neg", (a,), backward)


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    out = np.sqrt(a.data)

    def backward(g):
        _accumulate(a, g * 0.5 / out)

    return _node(out, "sqrt", (a,), backward)


# ---------------------------------------------------------------------------
# shape and reduction


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    out = a.data.reshape(shape)

    def backward(g):
        _accumulate(a, g.reshape(a.data.shape))

    return _node(out, "reshape", (a,), backward)


def transpose(a, axes) -> Tensor:
    a = as_tensor(a)
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    out = a.data.transpose(axes)

    def backward(g):
        _accumulate(a, g.transpose(inv))

    return _node(out, "transpose", (a,), backward)


def tsum(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is None:
            _accumulate(a, np.broadcast_to(g, a.data.shape).copy())
            return
        if not keepdims:
            g = np.expand_dims(g, axis)
        _accumulate(a, np.broadcast_to(g, a.data.shape).copy())

    return _node(out, "sum", (a,), backward)


def take_rows(a, idx) -> Tensor:
    """Differentiable row gather along the first axis; idx is constant."""
    a = as_tensor(a)
    idx = np.asarray(idx, dtype=np.int64)
    out = a.data[idx]

    def backward(g):
        if not a.requires_grad:
            return
        da = np.zeros_like(a.data)
        np.add.at(da, idx, g)
        _accumulate(a, da)

    return _node(out, "take_rows", (a,), backward)


def embedding(weight, idx) -> Tensor:
    """Token embedding lookup: weight[(idx)], idx any integer shape."""
    weight = as_tensor(weight)
    idx = np.asarray(idx, dtype=np.int64)
    out = weight.data[idx]

    def backward(g):
        if not weight.requires_grad:
            return
        dw = np.zeros_like(weight.data)
        np.add.at(dw, idx.reshape(-1), g.reshape(-1, weight.data.shape[-1]))
        _accumulate(weight, dw)

    return _node(out, "embedding", (weight,), backward)


# ---------------------------------------------------------------------------
# dense algebra


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError("matmul operands must be at least 2-D")
    out = a.data @ b.data

    def backward(g):
        if a.requires_grad:
            ga = g @ np.swapaxes(b.data, -1, -2)
            _accumulate(a, _unbroadcast(ga, a.data.shape))
        if b.requires_grad:
            gb = np.swapaxes(a.data, -1, -2) @ g
            _accumulate(b, _unbroadcast(gb, b.data.shape))

    return _node(out, "matmul", (a, b), backward)


# ---------------------------------------------------------------------------
# nonlinearities and normalizations


_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)


def gelu(a) -> Tensor:
    """Exact (erf-based) GELU."""
    a = as_tensor(a)
    x = a.data
    cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    out = x * cdf

    def backward(g):
        pdf = np.exp(-0.5 * x * x) * _INV_SQRT2PI
        _accumulate(a, g * (cdf + x * pdf))

    return _node(out.astype(x.dtype, copy=False), "gelu", (a,), backward)


def softmax(a, axis=-1) -> Tensor:
    a = as_tensor(a)
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        dot = (g * out).sum(axis=axis, keepdims=True)
        _accumulate(a, out * (g - dot))

    return _node(out, "softmax", (a,), backward)


def layer_norm(a, gain, bias, eps: float = 1e-5) -> Tensor:
    """Affine layer normalization over the last axis."""
    a, gain, bias = as_tensor(a), as_tensor(gain), as_tensor(bias)
    x = a.data
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = gain.data * xhat + bias.data

    def backward(g):
        n = x.shape[-1]
        if gain.requires_grad:
            _accumulate(gain, _unbroadcast(g * xhat, gain.data.shape))
        if bias.requires_grad:
            _accumulate(bias, _unbroadcast(g, bias.data.shape))
        if a.requires_grad:
            gx = g * gain.data
            da = inv / n * (n * gx - gx.sum(axis=-1, keepdims=True) - xhat * (gx * xhat).sum(axis=-1, keepdims=True))
            _accumulate(a, da)

    return _node(out, "layer_norm", (a, gain, bias), backward)


def standardize(a, eps: float = 1e-5) -> Tensor:
    """Parameter-free per-row standardization, identical in forward semantics
    to the quantizer's input normalization (std floored at eps)."""
    a = as_tensor(a)
    x = a.data
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    sd = np.sqrt((xc * xc).mean(axis=-1, keepdims=True))
    live = sd > eps
    s = np.maximum(sd, eps)
    out = xc / s

    def backward(g):
        base = g - g.mean(axis=-1, keepdims=True)
        corr = out * (g * out).mean(axis=-1, keepdims=True)
        _accumulate(a, (base - np.where(live, corr, 0.0)) / s)

    return _node(out, "standardize", (a,), backward)


# ---------------------------------------------------------------------------
# convolution


def conv1d(a, weight, bias, stride: int = 1, padding: int = 0) -> Tensor:
    """1-D convolution over time: input (B, T, Cin), weight (K, Cin, Cout).

    Output length is (T + 2*padding - K) // stride + 1.
    """
    a, weight, bias = as_tensor(a), as_tensor(weight), as_tensor(bias)
    x, w = a.data, weight.data
    if x.ndim != 3 or w.ndim != 3:
        raise ValueError("conv1d expects input (B, T, Cin) and weight (K, Cin, Cout)")
    k = w.shape[0]
    if x.shape[2] != w.shape[1]:
        raise ValueError(f"conv1d channel mismatch: input {x.shape[2]}, weight {w.shape[1]}")
    xp = np.pad(x, ((0, 0), (padding, padding), (0, 0))) if padding else x
    t_pad = xp.shape[1]
    if t_pad < k:
        raise ValueError("input (after padding) shorter than kernel")
    t_out = (t_pad - k) // stride + 1
    # windows[b, t, k, c] = xp[b, t*stride + k, c]
    windows = np.lib.stride_tricks.sliding_window_view(xp, k, axis=1)[:, ::stride]
    windows = windows.transpose(0, 1, 3, 2)
    out = np.einsum("btkc,kco->bto", windows, w, optimize=True) + bias.data

    def backward(g):
        if bias.requires_grad:
            _accumulate(bias, g.sum(axis=(0, 1)))
        if weight.requires_grad:
            _accumulate(weight, np.einsum("btkc,bto->kco", windows, g, optimize=True))
        if a.requires_grad:
            dxp = np.zeros_like(xp)
            for kk in range(k):
                # output frame t draws on padded input frame t*stride + kk
                dxp[:, kk : kk + stride * t_out : stride, :] += g @ w[kk].T
            da = dxp[:, padding : padding + x.shape[1], :] if padding else dxp
            _accumulate(a, da)

    return _node(out.astype(x.dtype, copy=False), "conv1d", (a, weight, bias), backward)


# ---------------------------------------------------------------------------
# losses


def cross_entropy_rows(logits, labels) -> Tensor:
    """Per-row softmax cross entropy in nats; labels are constant ints (N,)."""
    logits = as_tensor(logits)
    labels = np.asarray(labels, dtype=np.int64)
    x = logits.data
    if x.ndim != 2:
        raise ValueError("cross_entropy_rows expects logits of shape (N, V)")
    if labels.shape != (x.shape[0],):
        raise ValueError("labels must be 1-D and match the logits row count")
    m = x.max(axis=1, keepdims=True)
    z = x - m
    lse = np.log(np.exp(z).sum(axis=1)) + m[:, 0]
    picked = x[np.arange(x.shape[0]), labels]
    out = lse - picked

    def backward(g):
        p = np.exp(z)
        p /= p.sum(axis=1, keepdims=True)
        p[np.arange(x.shape[0]), labels] -= 1.0
        _accumulate(logits, p * g[:, None])

    return _node(out, "cross_entropy", (logits,), backward)


# ---------------------------------------------------------------------------
# backward driver


def _toposort(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen and p.requires_grad:
                stack.append((p, False))
    return order


def backward(root: Tensor) -> None:
    """Populate .grad on every grad-requiring node reachable from root."""
    if root.data.ndim != 0:
        raise ValueError("backward expects a scalar root")
    if not root.requires_grad:
        raise ValueError("root does not require grad; nothing to differentiate")
    order = _toposort(root)
    for node in order:
        if node.op not in SUPPORTED_PRIMITIVES:
            raise UnsupportedPrimitiveError(f"unsupported primitive in graph: {node.op!r}")
    root.grad = np.ones_like(root.data)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


def gradient_of(loss: Tensor, params) -> dict[str, np.ndarray]:
    """Backpropagate from a scalar loss; return gradients for named params.

    Parameters without a computational path to the loss (and frozen ones)
    come back as exact zeros. `params` is any mapping name -> Tensor.
    """
    items = list(params.items()) if hasattr(params, "items") else list(params)
    for _, t in items:
        t.grad = None
    backward(loss)
    return {
        name: (np.zeros_like(t.data) if t.grad is None else t.grad) for name, t in items
    }
