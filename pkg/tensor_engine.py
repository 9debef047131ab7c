#!/usr/bin/env python3
"""
Tensor Engine

Differentiable N-dimensional arrays backed by numpy, with a recorded operation
graph and reverse-mode gradient computation. Every numeric operation used by
the transformer generator, the convolutional discriminator and the training
loop lives here:

1. Elementwise arithmetic with broadcasting (add, sub, mul, div, neg)
2. Shape plumbing (reshape, transpose, slicing, sum, mean)
3. matmul / linear
4. conv2d (cross-correlation), avg_pool2d
5. pixel_shuffle / pixel_unshuffle
6. layer_norm, softmax
7. activation: relu, leaky_relu, gelu (tanh approximation), tanh

Operations are only recorded while a Graph is active:

    graph = Graph()
    with graph.recording():
        loss = (x @ w).sum()
    backward(loss, graph)

Outside a recording block every op is a plain forward computation and its
result does not require gradients.
"""

import logging
import threading
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from errors import ContractError, DimensionError, NumericalError

logger = logging.getLogger(__name__)

DEFAULT_DTYPE = np.float32
LAYER_NORM_EPS = 1e-5
GELU_COEFF = 0.044715
SQRT_2_OVER_PI = float(np.sqrt(2.0 / np.pi))
ACTIVATIONS = ('relu', 'leaky_relu', 'gelu', 'tanh')

_state = threading.local()


class Tensor:
    """N-dimensional array with an optional gradient accumulator"""

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        array = np.asarray(data)
        if not np.issubdtype(array.dtype, np.floating):
            array = array.astype(DEFAULT_DTYPE)
        self.data = array
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.name = name

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data.item())

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad}{label})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(_as_tensor(other, self), self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_as_tensor(other, self), self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(_as_tensor(other, self), self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(_as_tensor(other, self), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return getitem(self, key)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes)

    def sum(self, axis=None, keepdims: bool = False):
        return tensor_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return mean(self, axis=axis, keepdims=keepdims)


@dataclass
class Node:
    """One recorded operation: kind, inputs, output and its backward rule"""
    kind: str
    inputs: Tuple[Tensor, ...]
    output: Tensor
    backward: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Graph:
    """Topologically ordered record of the operations of one forward pass"""

    def __init__(self):
        self.nodes: List[Node] = []

    def __len__(self) -> int:
        return len(self.nodes)

    def record(self, node: Node) -> None:
        self.nodes.append(node)

    @contextmanager
    def recording(self):
        """Record every op executed on this thread into the graph"""
        previous = getattr(_state, 'graph', None)
        _state.graph = self
        try:
            yield self
        finally:
            _state.graph = previous

    def leaves(self) -> List[Tensor]:
        """requires_grad tensors consumed by the graph but not produced by it"""
        produced = {id(node.output) for node in self.nodes}
        seen = set()
        leaves = []
        for node in self.nodes:
            for tensor in node.inputs:
                key = id(tensor)
                if tensor.requires_grad and key not in produced and key not in seen:
                    seen.add(key)
                    leaves.append(tensor)
        return leaves


def current_graph() -> Optional[Graph]:
    return getattr(_state, 'graph', None)


def _as_tensor(value, like: Optional[Tensor] = None) -> Tensor:
    if isinstance(value, Tensor):
        return value
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(value, dtype=dtype))


def _check_finite(kind: str, data: np.ndarray, inputs: Sequence[Tensor]) -> None:
    if np.all(np.isfinite(data)):
        return
    if all(np.all(np.isfinite(t.data)) for t in inputs):
        raise NumericalError(f"{kind} produced non-finite values from finite inputs")


def _apply(kind: str, inputs: Sequence[Tensor], data: np.ndarray,
           backward: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]) -> Tensor:
    out = Tensor(data)
    _check_finite(kind, out.data, inputs)
    graph = current_graph()
    if graph is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        graph.record(Node(kind, tuple(inputs), out, backward))
    return out


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to the operand's shape"""
    if grad.shape == tuple(shape):
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# Elementwise arithmetic

def add(a, b) -> Tensor:
    a = _as_tensor(a)
    b = _as_tensor(b, a)
    return _apply('add', (a, b), a.data + b.data, lambda g: (g, g))


def sub(a, b) -> Tensor:
    a = _as_tensor(a)
    b = _as_tensor(b, a)
    return _apply('sub', (a, b), a.data - b.data, lambda g: (g, -g))


def mul(a, b) -> Tensor:
    a = _as_tensor(a)
    b = _as_tensor(b, a)
    return _apply('mul', (a, b), a.data * b.data, lambda g: (g * b.data, g * a.data))


def div(a, b) -> Tensor:
    a = _as_tensor(a)
    b = _as_tensor(b, a)

    def backward(g):
        return g / b.data, -g * a.data / (b.data * b.data)

    return _apply('div', (a, b), a.data / b.data, backward)


def neg(a) -> Tensor:
    a = _as_tensor(a)
    return _apply('neg', (a,), -a.data, lambda g: (-g,))


# Shape plumbing

def reshape(x: Tensor, shape) -> Tensor:
    try:
        data = x.data.reshape(shape)
    except ValueError as e:
        raise DimensionError(f"cannot reshape {x.shape} to {shape}: {e}") from e
    return _apply('reshape', (x,), data, lambda g: (g.reshape(x.shape),))


def transpose(x: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return _apply('transpose', (x,), x.data.transpose(axes), lambda g: (g.transpose(inverse),))


def getitem(x: Tensor, key) -> Tensor:
    def backward(g):
        full = np.zeros_like(x.data)
        np.add.at(full, key, g)
        return (full,)

    return _apply('getitem', (x,), x.data[key], backward)


def tensor_sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    data = np.sum(x.data, axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _apply('sum', (x,), np.asarray(data), backward)


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        count = x.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        count = int(np.prod([x.shape[a] for a in axes]))
    return mul(tensor_sum(x, axis=axis, keepdims=keepdims), 1.0 / count)


# Linear algebra

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product over the last two axes; leading axes broadcast"""
    a = _as_tensor(a)
    b = _as_tensor(b, a)
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(f"matmul needs at least 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul inner extents differ: {a.shape} @ {b.shape}")
    try:
        data = np.matmul(a.data, b.data)
    except ValueError as e:
        raise DimensionError(f"matmul batch extents do not broadcast: {a.shape} @ {b.shape}") from e

    def backward(g):
        return (np.matmul(g, np.swapaxes(b.data, -1, -2)),
                np.matmul(np.swapaxes(a.data, -1, -2), g))

    return _apply('matmul', (a, b), data, backward)


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """x @ weight (+ bias) with weight stored as (in_features, out_features)"""
    y = matmul(x, weight)
    if bias is not None:
        y = add(y, bias)
    return y


# Convolution and pooling

def conv2d(x: Tensor, kernel: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """
    2D cross-correlation (no kernel flip)

    Args:
        x: N×C×H×W input
        kernel: O×C×kh×kw weights
        stride: step between windows
        padding: zero padding on every spatial border

    Returns:
        N×O×H'×W' tensor with H' = (H + 2·padding − kh) / stride + 1
    """
    if x.ndim != 4 or kernel.ndim != 4:
        raise DimensionError(f"conv2d expects 4-D input and kernel, got {x.shape} and {kernel.shape}")
    n, c, h, w = x.shape
    o, kc, kh, kw = kernel.shape
    if c != kc:
        raise DimensionError(f"conv2d channel mismatch: input has {c}, kernel expects {kc}")
    if stride < 1 or padding < 0:
        raise DimensionError(f"conv2d needs stride >= 1 and padding >= 0, got {stride}, {padding}")
    hp, wp = h + 2 * padding, w + 2 * padding
    if kh > hp or kw > wp:
        raise DimensionError(f"conv2d kernel {kh}x{kw} larger than padded input {hp}x{wp}")
    if (hp - kh) % stride or (wp - kw) % stride:
        raise DimensionError(
            f"conv2d output extent not integral: ({hp}-{kh})/{stride}, ({wp}-{kw})/{stride}")
    ho = (hp - kh) // stride + 1
    wo = (wp - kw) // stride + 1

    if padding:
        xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    else:
        xp = x.data
    windows = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    out = np.tensordot(windows, kernel.data, axes=([1, 4, 5], [1, 2, 3]))
    data = np.ascontiguousarray(out.transpose(0, 3, 1, 2))

    def backward(g):
        grad_kernel = np.tensordot(g, windows, axes=([0, 2, 3], [0, 2, 3]))
        grad_windows = np.tensordot(g, kernel.data, axes=([1], [0]))
        grad_padded = np.zeros_like(xp)
        h_stop = stride * (ho - 1) + 1
        w_stop = stride * (wo - 1) + 1
        for i in range(kh):
            for j in range(kw):
                grad_padded[:, :, i:i + h_stop:stride, j:j + w_stop:stride] += \
                    grad_windows[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        if padding:
            grad_padded = grad_padded[:, :, padding:padding + h, padding:padding + w]
        return grad_padded, grad_kernel

    return _apply('conv2d', (x, kernel), data, backward)


def avg_pool2d(x: Tensor, k: int) -> Tensor:
    if x.ndim != 4:
        raise DimensionError(f"avg_pool2d expects N×C×H×W, got {x.shape}")
    n, c, h, w = x.shape
    if k < 1 or h % k or w % k:
        raise DimensionError(f"avg_pool2d window {k} does not divide {h}x{w}")
    data = x.data.reshape(n, c, h // k, k, w // k, k).mean(axis=(3, 5))

    def backward(g):
        return (np.repeat(np.repeat(g, k, axis=2), k, axis=3) / (k * k),)

    return _apply('avg_pool2d', (x,), data, backward)


# Sub-pixel permutations

def pixel_shuffle(x: Tensor, r: int) -> Tensor:
    """out(n, c, r·h+i, r·w+j) = in(n, c·r²+i·r+j, h, w)"""
    if x.ndim != 4:
        raise DimensionError(f"pixel_shuffle expects N×C×H×W, got {x.shape}")
    n, c, h, w = x.shape
    if r < 1 or c % (r * r):
        raise DimensionError(f"pixel_shuffle channels {c} not divisible by {r}^2")
    co = c // (r * r)
    data = x.data.reshape(n, co, r, r, h, w).transpose(0, 1, 4, 2, 5, 3).reshape(n, co, h * r, w * r)

    def backward(g):
        return (g.reshape(n, co, h, r, w, r).transpose(0, 1, 3, 5, 2, 4).reshape(n, c, h, w),)

    return _apply('pixel_shuffle', (x,), data, backward)


def pixel_unshuffle(x: Tensor, r: int) -> Tensor:
    """Inverse permutation of pixel_shuffle"""
    if x.ndim != 4:
        raise DimensionError(f"pixel_unshuffle expects N×C×H×W, got {x.shape}")
    n, c, h, w = x.shape
    if r < 1 or h % r or w % r:
        raise DimensionError(f"pixel_unshuffle factor {r} does not divide {h}x{w}")
    ho, wo = h // r, w // r
    data = x.data.reshape(n, c, ho, r, wo, r).transpose(0, 1, 3, 5, 2, 4).reshape(n, c * r * r, ho, wo)

    def backward(g):
        return (g.reshape(n, c, r, r, ho, wo).transpose(0, 1, 4, 2, 5, 3).reshape(n, c, h, w),)

    return _apply('pixel_unshuffle', (x,), data, backward)


# Normalization

def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = LAYER_NORM_EPS) -> Tensor:
    """γ·(x − μ)/√(σ² + eps) + β over the last axis"""
    if eps <= 0:
        raise ContractError(f"layer_norm eps must be positive, got {eps}")
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise DimensionError(f"layer_norm affine shapes {gamma.shape}/{beta.shape} do not match width {d}")
    centered = x.data - x.data.mean(axis=-1, keepdims=True)
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    x_hat = centered * inv_std
    data = x_hat * gamma.data + beta.data

    def backward(g):
        g_hat = g * gamma.data
        grad_x = inv_std * (g_hat
                            - g_hat.mean(axis=-1, keepdims=True)
                            - x_hat * (g_hat * x_hat).mean(axis=-1, keepdims=True))
        return grad_x, g * x_hat, g

    return _apply('layer_norm', (x, gamma, beta), data, backward)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - np.max(x.data, axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / np.sum(e, axis=axis, keepdims=True)

    def backward(g):
        return (y * (g - np.sum(g * y, axis=axis, keepdims=True)),)

    return _apply('softmax', (x,), y, backward)


# Activations

def activation(x: Tensor, kind: str, negative_slope: float = 0.2) -> Tensor:
    """Elementwise non-linearity: relu, leaky_relu, gelu (tanh form) or tanh"""
    v = x.data
    if kind == 'relu':
        return _apply('relu', (x,), np.maximum(v, 0), lambda g: (g * (v > 0),))
    if kind == 'leaky_relu':
        slope = np.where(v > 0, 1.0, negative_slope).astype(v.dtype)
        return _apply('leaky_relu', (x,), v * slope, lambda g: (g * slope,))
    if kind == 'tanh':
        y = np.tanh(v)
        return _apply('tanh', (x,), y, lambda g: (g * (1 - y * y),))
    if kind == 'gelu':
        inner = SQRT_2_OVER_PI * (v + GELU_COEFF * v ** 3)
        t = np.tanh(inner)
        y = 0.5 * v * (1 + t)

        def backward(g):
            d_inner = SQRT_2_OVER_PI * (1 + 3 * GELU_COEFF * v * v)
            return (g * (0.5 * (1 + t) + 0.5 * v * (1 - t * t) * d_inner),)

        return _apply('gelu', (x,), y, backward)
    raise ContractError(f"unknown activation '{kind}', expected one of {ACTIVATIONS}")


def relu(x: Tensor) -> Tensor:
    return activation(x, 'relu')


def gelu(x: Tensor) -> Tensor:
    return activation(x, 'gelu')


def tanh(x: Tensor) -> Tensor:
    return activation(x, 'tanh')


# Gradients

def zero_grad(tensors: Iterable[Tensor]) -> None:
    for tensor in tensors:
        if tensor.requires_grad:
            tensor.grad = np.zeros_like(tensor.data)


def backward(loss: Tensor, graph: Graph) -> List[Tensor]:
    """
    Reverse-mode pass from a scalar loss through the recorded graph

    Grads of every leaf in the graph are zeroed first, then accumulated (+=)
    across all paths to the loss. Leaves with no path keep zero gradients.

    Args:
        loss: scalar tensor produced inside the graph
        graph: the graph that recorded the forward pass

    Returns:
        The leaf tensors whose grad fields were populated
    """
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    produced = {id(node.output) for node in graph.nodes}
    if id(loss) not in produced:
        raise ContractError("loss was not produced by the given graph")

    leaves = graph.leaves()
    zero_grad(leaves)

    pending = {id(loss): np.ones_like(loss.data)}
    for node in reversed(graph.nodes):
        upstream = pending.pop(id(node.output), None)
        if upstream is None:
            continue
        for tensor, grad in zip(node.inputs, node.backward(upstream)):
            if grad is None or not tensor.requires_grad:
                continue
            grad = _unbroadcast(np.asarray(grad), tensor.shape)
            key = id(tensor)
            if key in produced:
                pending[key] = pending[key] + grad if key in pending else grad
            else:
                tensor.grad += grad
    return leaves


def numerical_gradient(fn: Callable[[], Union[Tensor, float]], tensor: Tensor,
                       eps: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar function w.r.t. tensor.data"""
    grad = np.zeros_like(tensor.data, dtype=np.float64)
    data = tensor.data
    for idx in np.ndindex(data.shape):
        original = data[idx]
        data[idx] = original + eps
        plus = _scalar(fn())
        data[idx] = original - eps
        minus = _scalar(fn())
        data[idx] = original
        grad[idx] = (plus - minus) / (2 * eps)
    return grad


def gradient_check(fn: Callable[[], Tensor], tensors: Sequence[Tensor], eps: float = 1e-5) -> float:
    """
    Largest relative error between analytic and finite-difference gradients

    The error for each tensor is ‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖).
    """
    graph = Graph()
    with graph.recording():
        loss = fn()
    backward(loss, graph)
    analytic = [np.array(t.grad if t.grad is not None else np.zeros_like(t.data)) for t in tensors]

    worst = 0.0
    for tensor, exact in zip(tensors, analytic):
        numeric = numerical_gradient(fn, tensor, eps)
        scale = max(np.linalg.norm(exact), np.linalg.norm(numeric))
        if scale == 0:
            continue
        error = float(np.linalg.norm(exact - numeric) / scale)
        logger.debug(f"gradient check {tensor.name or tensor.shape}: relative error {error:.3e}")
        worst = max(worst, error)
    return worst


def _scalar(value) -> float:
    if isinstance(value, Tensor):
        return value.item()
    return float(value)
