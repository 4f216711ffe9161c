# AdaRoute - Dynamic Parameter Routing Adapters at Desk Scale
# Tensor - Dense float64 tensors with reverse-mode gradients.
#
# Copyright (C) 2026  The adaroute developers
#
# This program is free software: you can redistribute it and/or modify
# it under the terms of the GNU General Public License as published by
# the Free Software Foundation, either version 3 of the License, or
# (at your option) any later version.
#
# This program is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
# GNU General Public License for more details.
#
# You should have received a copy of the GNU General Public License
# along with this program.  If not, see <https://www.gnu.org/licenses/>.

import logging
import math
import os
from typing import Callable, Iterable, List, Optional, Sequence

import numpy as np

from .errors import ConfigurationError, DimensionError, NumericalError, UsageError

_debug = os.environ.get("ADAROUTE_DEBUG", "1") != "0"

_GELU_C = math.sqrt(2.0 / math.pi)
GRADCHECK_ATOL = 1e-8


def set_debug(flag: bool) -> None:
    """Turns the NaN/Inf check at op exit on or off."""
    global _debug
    _debug = bool(flag)


def is_debug() -> bool:
    return _debug


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    """Sums a broadcast gradient back down to the operand shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    """A dense row-major array of 64-bit reals with an optional gradient.

    Tensors created by the user are leaves. Tensors returned by the ops
    in this module remember their inputs and how to push an adjoint back
    to them, as long as any input requires a gradient.

    Arguments:
        data: anything numpy can turn into a float64 array. It is copied.
        requires_grad: whether backward() should fill in .grad.
    """

    # Make numpy hand mixed expressions (ndarray * Tensor) over to us.
    __array_ufunc__ = None

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.op = "leaf"
        self._parents = ()
        self._backward = None
        _check_finite(self)

    @classmethod
    def from_op(cls, data, parents: Sequence["Tensor"], op: str,
                backward: Callable[[np.ndarray], None]) -> "Tensor":
        out = cls.__new__(cls)
        out.data = np.asarray(data, dtype=np.float64)
        out.requires_grad = any(p.requires_grad for p in parents)
        out.grad = None
        out.op = op
        out._parents = tuple(parents) if out.requires_grad else ()
        out._backward = backward if out.requires_grad else None
        _check_finite(out)
        return out

    def __repr__(self):
        return "Tensor(shape={}, op={}, requires_grad={})".format(
            self.shape, self.op, self.requires_grad)

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self.op == "leaf"

    def item(self) -> float:
        if self.data.size != 1:
            raise UsageError("item() needs a single-element tensor, got shape {}".format(self.shape))
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        """Returns a constant leaf sharing this tensor's storage."""
        out = Tensor.__new__(Tensor)
        out.data = self.data
        out.requires_grad = False
        out.grad = None
        out.op = "leaf"
        out._parents = ()
        out._backward = None
        return out

    def backward(self) -> None:
        backward(self)

    # Operators
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __pow__(self, exponent: float):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return take(self, index)

    def sum(self, axis=None, keepdims: bool = False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes)


def _check_finite(t: Tensor) -> None:
    if _debug and not np.all(np.isfinite(t.data)):
        raise NumericalError("Non-finite values at exit of op '{}', shape {}".format(t.op, t.shape))


def _as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x)


def accumulate_grad(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64)
    else:
        t.grad = t.grad + g


class Graph:
    """Topologically ordered record of the ops that produced a tensor.

    The record is built by walking input links back from the root, so
    every op that contributed is visited exactly once. Replaying it in
    reverse pushes adjoints from outputs to inputs.
    """

    def __init__(self, root: Tensor):
        self.root = root
        self.nodes: List[Tensor] = []
        visited = set()
        stack = [(root, False)]
        while stack:
            node, finished = stack.pop()
            if finished:
                self.nodes.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))

    def __len__(self):
        return len(self.nodes)

    def __iter__(self):
        return iter(self.nodes)

    def replay(self, seed: np.ndarray) -> None:
        """Propagates the seed adjoint to every reachable leaf, then drops the record."""
        accumulate_grad(self.root, seed)
        for node in reversed(self.nodes):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
        for node in self.nodes:
            if not node.is_leaf:
                node._parents = ()
                node._backward = None
                node.grad = None


def backward(loss: Tensor) -> None:
    """Fills .grad of every leaf that loss depends on with d loss / d leaf.

    Gradients accumulate: call zero_grad() on leaves between passes.
    """
    if loss.data.size != 1:
        raise UsageError("backward() needs a scalar loss, got shape {}".format(loss.shape))
    if not loss.requires_grad:
        raise UsageError("Loss does not depend on any tensor that requires a gradient.")
    Graph(loss).replay(np.ones_like(loss.data))


# Elementwise arithmetic

def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)

    def _backward(g):
        accumulate_grad(a, _unbroadcast(g, a.shape))
        accumulate_grad(b, _unbroadcast(g, b.shape))
    return Tensor.from_op(a.data + b.data, (a, b), "add", _backward)


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)

    def _backward(g):
        accumulate_grad(a, _unbroadcast(g, a.shape))
        accumulate_grad(b, _unbroadcast(-g, b.shape))
    return Tensor.from_op(a.data - b.data, (a, b), "sub", _backward)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)

    def _backward(g):
        accumulate_grad(a, _unbroadcast(g * b.data, a.shape))
        accumulate_grad(b, _unbroadcast(g * a.data, b.shape))
    return Tensor.from_op(a.data * b.data, (a, b), "mul", _backward)


def div(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)

    def _backward(g):
        accumulate_grad(a, _unbroadcast(g / b.data, a.shape))
        accumulate_grad(b, _unbroadcast(-g * a.data / (b.data * b.data), b.shape))
    return Tensor.from_op(a.data / b.data, (a, b), "div", _backward)


def power(a: Tensor, exponent: float) -> Tensor:
    exponent = float(exponent)

    def _backward(g):
        accumulate_grad(a, g * exponent * a.data ** (exponent - 1.0))
    return Tensor.from_op(a.data ** exponent, (a,), "pow", _backward)


def exp(a: Tensor) -> Tensor:
    y = np.exp(a.data)

    def _backward(g):
        accumulate_grad(a, g * y)
    return Tensor.from_op(y, (a,), "exp", _backward)


def log(a: Tensor) -> Tensor:
    def _backward(g):
        accumulate_grad(a, g / a.data)
    return Tensor.from_op(np.log(a.data), (a,), "log", _backward)


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)

    def _backward(g):
        accumulate_grad(a, g * (1.0 - y * y))
    return Tensor.from_op(y, (a,), "tanh", _backward)


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0

    def _backward(g):
        accumulate_grad(a, g * mask)
    return Tensor.from_op(a.data * mask, (a,), "relu", _backward)


def sigmoid(a: Tensor) -> Tensor:
    y = 0.5 * (1.0 + np.tanh(0.5 * a.data))

    def _backward(g):
        accumulate_grad(a, g * y * (1.0 - y))
    return Tensor.from_op(y, (a,), "sigmoid", _backward)


def gelu(a: Tensor) -> Tensor:
    """Tanh-approximation GELU."""
    x = a.data
    inner = _GELU_C * (x + 0.044715 * x ** 3)
    t = np.tanh(inner)

    def _backward(g):
        d_inner = _GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
        accumulate_grad(a, g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * d_inner))
    return Tensor.from_op(0.5 * x * (1.0 + t), (a,), "gelu", _backward)


# Shape ops and reductions

def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    def _backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        accumulate_grad(a, np.broadcast_to(g, a.shape))
    return Tensor.from_op(a.data.sum(axis=axis, keepdims=keepdims), (a,), "sum", _backward)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        count = a.data.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        count = int(np.prod([a.shape[ax] for ax in axes]))
    return tsum(a, axis=axis, keepdims=keepdims) * (1.0 / count)


def reshape(a: Tensor, shape) -> Tensor:
    try:
        y = a.data.reshape(shape)
    except ValueError:
        raise DimensionError("Cannot reshape {} into {}".format(a.shape, tuple(shape)))

    def _backward(g):
        accumulate_grad(a, g.reshape(a.shape))
    return Tensor.from_op(y, (a,), "reshape", _backward)


def transpose(a: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))

    def _backward(g):
        accumulate_grad(a, g.transpose(inverse))
    return Tensor.from_op(a.data.transpose(axes), (a,), "transpose", _backward)


def _is_basic_index(index) -> bool:
    parts = index if isinstance(index, tuple) else (index,)
    return all(isinstance(p, (int, np.integer, slice)) or p is Ellipsis or p is None for p in parts)


def take(a: Tensor, index) -> Tensor:
    y = np.array(a.data[index])
    basic = _is_basic_index(index)

    def _backward(g):
        full = np.zeros_like(a.data)
        if basic:
            full[index] += g
        else:
            np.add.at(full, index, g)
        accumulate_grad(a, full)
    return Tensor.from_op(y, (a,), "index", _backward)


def upsample2d(a: Tensor, factor: int) -> Tensor:
    """Nearest-neighbour upsampling of the last two axes."""
    if factor == 1:
        return a
    y = np.repeat(np.repeat(a.data, factor, axis=-2), factor, axis=-1)
    h, w = a.shape[-2:]

    def _backward(g):
        g = g.reshape(g.shape[:-2] + (h, factor, w, factor))
        accumulate_grad(a, g.sum(axis=(-3, -1)))
    return Tensor.from_op(y, (a,), "upsample2d", _backward)


def space_to_depth(x: Tensor, patch: int) -> Tensor:
    """Cuts (B, C, H, W) into non-overlapping patches: (B, H/p * W/p, C * p * p)."""
    b, c, h, w = x.shape
    if h % patch or w % patch:
        raise DimensionError("Spatial extent {}x{} is not divisible by patch {}".format(h, w, patch))
    y = x.reshape(b, c, h // patch, patch, w // patch, patch)
    y = y.transpose(0, 2, 4, 1, 3, 5)
    return y.reshape(b, (h // patch) * (w // patch), c * patch * patch)


# Linear algebra

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product, batched over leading axes with numpy semantics.

    Adjoints are dA = dC . B^T and dB = A^T . dC, summed over any
    broadcast batch axes.
    """
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError("matmul: shapes {} and {} do not chain".format(a.shape, b.shape))

    def _backward(g):
        accumulate_grad(a, _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape))
        accumulate_grad(b, _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape))
    return Tensor.from_op(np.matmul(a.data, b.data), (a, b), "matmul", _backward)


def affine(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """y = x W + b over the last axis of x.

    Arguments:
        x: (..., n_in)
        weight: (n_in, n_out)
        bias: (n_out,)
    """
    if weight.ndim != 2 or x.shape[-1] != weight.shape[0] or bias.shape != (weight.shape[1],):
        raise DimensionError("affine: x {} , W {} , b {} do not fit".format(x.shape, weight.shape, bias.shape))
    n_in, n_out = weight.shape

    def _backward(g):
        accumulate_grad(x, g @ weight.data.T)
        flat_x = x.data.reshape(-1, n_in)
        flat_g = g.reshape(-1, n_out)
        accumulate_grad(weight, flat_x.T @ flat_g)
        accumulate_grad(bias, flat_g.sum(axis=0))
    return Tensor.from_op(x.data @ weight.data + bias.data, (x, weight, bias), "affine", _backward)


# Vision ops

def dwconv2d(x: Tensor, kernels: Tensor) -> Tensor:
    """Depthwise cross-correlation with zero 'same' padding and stride 1.

    Arguments:
        x: (..., C, H, W)
        kernels: (C, k, k) shared by every leading index of x, or
                 (..., C, k, k) with the same leading axes as x.
    """
    k = kernels.shape[-1]
    if kernels.ndim < 3 or kernels.shape[-2] != k:
        raise DimensionError("dwconv2d: kernels must be (..., C, k, k), got {}".format(kernels.shape))
    if k % 2 == 0:
        raise ConfigurationError("dwconv2d: kernel size must be odd, got {}".format(k))
    if x.ndim < 3 or kernels.shape[-3] != x.shape[-3]:
        raise DimensionError("dwconv2d: x {} and kernels {} disagree on channels".format(x.shape, kernels.shape))
    if kernels.ndim > 3 and kernels.shape[:-3] != x.shape[:-3]:
        raise DimensionError("dwconv2d: x {} and kernels {} disagree on batch".format(x.shape, kernels.shape))

    h, w = x.shape[-2:]
    p = (k - 1) // 2
    pad = [(0, 0)] * (x.ndim - 2) + [(p, p), (p, p)]
    xp = np.pad(x.data, pad)
    kd = kernels.data
    y = np.zeros_like(x.data)
    for i in range(k):
        for j in range(k):
            y += xp[..., i:i + h, j:j + w] * kd[..., i, j][..., None, None]

    def _backward(g):
        gxp = np.zeros_like(xp)
        gk = np.zeros(x.shape[:-2] + (k, k))
        for i in range(k):
            for j in range(k):
                gxp[..., i:i + h, j:j + w] += g * kd[..., i, j][..., None, None]
                gk[..., i, j] = (g * xp[..., i:i + h, j:j + w]).sum(axis=(-2, -1))
        accumulate_grad(x, gxp[..., p:p + h, p:p + w])
        accumulate_grad(kernels, _unbroadcast(gk, kernels.shape))
    return Tensor.from_op(y, (x, kernels), "dwconv2d", _backward)


def gap2d(x: Tensor) -> Tensor:
    """Global average pooling: (..., C, H, W) -> (..., C)."""
    if x.ndim < 3:
        raise DimensionError("gap2d: expected (..., C, H, W), got {}".format(x.shape))
    h, w = x.shape[-2:]

    def _backward(g):
        accumulate_grad(x, np.broadcast_to(g[..., None, None] / (h * w), x.shape))
    return Tensor.from_op(x.data.mean(axis=(-2, -1)), (x,), "gap2d", _backward)


def softmax(v: Tensor, axis: int = -1) -> Tensor:
    shifted = v.data - v.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def _backward(g):
        accumulate_grad(v, y * (g - (g * y).sum(axis=axis, keepdims=True)))
    return Tensor.from_op(y, (v,), "softmax", _backward)


def log_softmax(v: Tensor, axis: int = -1) -> Tensor:
    shifted = v.data - v.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    y = shifted - lse

    def _backward(g):
        accumulate_grad(v, g - np.exp(y) * g.sum(axis=axis, keepdims=True))
    return Tensor.from_op(y, (v,), "log_softmax", _backward)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-6) -> Tensor:
    """Normalizes the last axis, then scales and shifts."""
    mu = mean(x, axis=-1, keepdims=True)
    centered = x - mu
    var = mean(centered * centered, axis=-1, keepdims=True)
    return centered * power(var + eps, -0.5) * gamma + beta


def cross_entropy(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Mean cross-entropy of (N, K) logits against N integer labels."""
    targets = np.asarray(targets, dtype=np.int64).reshape(-1)
    if logits.ndim != 2 or logits.shape[0] != targets.shape[0]:
        raise DimensionError("cross_entropy: logits {} vs {} targets".format(logits.shape, targets.shape))
    n, k = logits.shape
    if targets.size and (targets.min() < 0 or targets.max() >= k):
        raise DimensionError("cross_entropy: class index outside [0, {})".format(k))
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    prob = e / e.sum(axis=1, keepdims=True)
    rows = np.arange(n)
    loss = -np.log(prob[rows, targets]).mean()

    def _backward(g):
        d = prob.copy()
        d[rows, targets] -= 1.0
        accumulate_grad(logits, d * (g / n))
    return Tensor.from_op(loss, (logits,), "cross_entropy", _backward)


# Finite-difference oracle

def numerical_grad(fn: Callable[[], Tensor], t: Tensor, h: float = 1e-5) -> np.ndarray:
    """Central differences of the scalar fn() with respect to every entry of t."""
    grad = np.zeros_like(t.data)
    for index in np.ndindex(*t.shape):
        saved = t.data[index]
        t.data[index] = saved + h
        plus = float(fn().data)
        t.data[index] = saved - h
        minus = float(fn().data)
        t.data[index] = saved
        grad[index] = (plus - minus) / (2.0 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray, atol: float = GRADCHECK_ATOL) -> np.ndarray:
    """Elementwise |a - n| / max(|a|, |n|).

    Entries whose absolute difference is within atol count as exact. The
    default atol sits above the round-off of central differences at h=1e-5
    for losses of magnitude up to about 100; beyond it the error is a true
    relative error however small the gradient.
    """
    diff = np.abs(analytic - numeric)
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), np.finfo(np.float64).tiny)
    return np.where(diff <= atol, 0.0, diff / scale)


def gradcheck(fn: Callable[[], Tensor], tensors: Iterable[Tensor], h: float = 1e-5,
              atol: float = GRADCHECK_ATOL) -> float:
    """Largest elementwise relative error between backward() and central differences.

    Arguments:
        fn: builds a fresh scalar loss from the current tensor values.
        tensors: leaves to check; they must have requires_grad set.
    """
    tensors = list(tensors)
    for t in tensors:
        t.zero_grad()
    backward(fn())
    worst = 0.0
    for t in tensors:
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        numeric = numerical_grad(fn, t, h)
        err = float(relative_error(analytic, numeric, atol).max()) if t.data.size else 0.0
        logging.debug("gradcheck " + str(t.shape) + ": " + str(err))
        worst = max(worst, err)
    return worst
