"""Reverse-mode automatic differentiation over NumPy buffers.

Tensors wrap a float32/float64 ndarray plus an optional gradient slot. Ops
record their parents and a backward closure; ``backward()`` on a scalar loss
topologically sorts the recorded graph and accumulates gradients into every
``requires_grad`` leaf. Values are treated as immutable once produced by an
op; a fresh graph is built per forward pass.
"""

from __future__ import annotations

import numpy as np

from . import kernels
from .rng import counter_uniform

SUPPORTED_DTYPES = (np.float32, np.float64)


def _as_array(data, dtype=None) -> np.ndarray:
    arr = np.asarray(data)
    if dtype is not None:
        arr = arr.astype(dtype, copy=False)
    elif arr.dtype not in (np.dtype(np.float32), np.dtype(np.float64)):
        arr = arr.astype(np.float32)
    return arr


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "_op")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = _as_array(data, dtype)
        if arr.size == 0:
            raise ValueError(f"zero-sized tensor rejected, shape {arr.shape}")
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None
        self._op = "leaf"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype.name}, op={self._op})"

    def backward(self) -> None:
        """Populate grads of every requires_grad tensor reachable from here.

        Only valid on a scalar (the loss); visits each graph node once.
        """
        if self.size != 1:
            raise ValueError(f"backward requires a scalar loss, got shape {self.shape}")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None:
                node._backward()

    # operator sugar for the common binary ops
    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return sub(self, other)

    def __mul__(self, other: "Tensor") -> "Tensor":
        return mul(self, other)


def as_tensor(value, dtype=None) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value, dtype=dtype)


def zero_grads(tensors) -> None:
    values = tensors.values() if hasattr(tensors, "values") else tensors
    for t in values:
        t.grad = None


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad and t._backward is None:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _node(data: np.ndarray, parents: tuple[Tensor, ...], op: str) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.requires_grad = any(p.requires_grad for p in parents)
    out.grad = None
    out._parents = parents if out.requires_grad else ()
    out._backward = None
    out._op = op
    return out


def _check_same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ValueError(f"{op}: shape mismatch {a.shape} vs {b.shape}")
    if a.dtype != b.dtype:
        raise ValueError(f"{op}: dtype mismatch {a.dtype} vs {b.dtype}")


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "add")
    out = _node(a.data + b.data, (a, b), "add")
    if out.requires_grad:
        def _bw():
            _accumulate(a, out.grad)
            _accumulate(b, out.grad)
        out._backward = _bw
    return out


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "sub")
    out = _node(a.data - b.data, (a, b), "sub")
    if out.requires_grad:
        def _bw():
            _accumulate(a, out.grad)
            _accumulate(b, -out.grad)
        out._backward = _bw
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "mul")
    out = _node(a.data * b.data, (a, b), "mul")
    if out.requires_grad:
        def _bw():
            _accumulate(a, out.grad * b.data)
            _accumulate(b, out.grad * a.data)
        out._backward = _bw
    return out


def scale(a: Tensor, s: float) -> Tensor:
    s = float(s)
    out = _node(a.data * a.dtype.type(s), (a,), "scale")
    if out.requires_grad:
        def _bw():
            _accumulate(a, out.grad * a.dtype.type(s))
        out._backward = _bw
    return out


def relu(a: Tensor) -> Tensor:
    out = _node(np.maximum(a.data, 0), (a,), "relu")
    if out.requires_grad:
        def _bw():
            _accumulate(a, out.grad * (a.data > 0))
        out._backward = _bw
    return out


def sigmoid(a: Tensor) -> Tensor:
    # numerically symmetric form, never exponentiates a positive argument
    x = a.data
    y = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                 np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x)))).astype(x.dtype)
    out = _node(y, (a,), "sigmoid")
    if out.requires_grad:
        def _bw():
            _accumulate(a, out.grad * y * (1 - y))
        out._backward = _bw
    return out


def log(a: Tensor) -> Tensor:
    with np.errstate(divide="ignore"):  # log(0) = -inf; callers check finiteness
        data = np.log(a.data)
    out = _node(data, (a,), "log")
    if out.requires_grad:
        def _bw():
            _accumulate(a, out.grad / a.data)
        out._backward = _bw
    return out


def absolute(a: Tensor) -> Tensor:
    out = _node(np.abs(a.data), (a,), "abs")
    if out.requires_grad:
        def _bw():
            _accumulate(a, out.grad * np.sign(a.data))
        out._backward = _bw
    return out


def clamp_min(a: Tensor, floor: float) -> Tensor:
    floor = a.dtype.type(floor)
    out = _node(np.maximum(a.data, floor), (a,), "clamp_min")
    if out.requires_grad:
        def _bw():
            _accumulate(a, out.grad * (a.data > floor))
        out._backward = _bw
    return out


def softmax(a: Tensor) -> Tensor:
    """Row-wise softmax over the last axis."""
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)
    out = _node(y, (a,), "softmax")
    if out.requires_grad:
        def _bw():
            g = out.grad
            dot = (g * y).sum(axis=-1, keepdims=True)
            _accumulate(a, y * (g - dot))
        out._backward = _bw
    return out


def dropout(a: Tensor, rate: float, seed: int, training: bool) -> Tensor:
    """Inverted dropout with a counter-based mask.

    The keep/drop decision for flat element i is a pure function of
    (seed, i), so a fixed seed reproduces the mask bit-for-bit. Identity
    when not training.
    """
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return a
    keep = (counter_uniform(seed, a.size) >= rate).reshape(a.shape)
    m = (keep / (1.0 - rate)).astype(a.dtype)
    out = _node(a.data * m, (a,), "dropout")
    if out.requires_grad:
        def _bw():
            _accumulate(a, out.grad * m)
        out._backward = _bw
    return out


def tsum(a: Tensor) -> Tensor:
    out = _node(a.data.sum(), (a,), "sum")
    if out.requires_grad:
        def _bw():
            _accumulate(a, np.broadcast_to(out.grad, a.shape))
        out._backward = _bw
    return out


def mean(a: Tensor) -> Tensor:
    return scale(tsum(a), 1.0 / a.size)


def reshape(a: Tensor, shape) -> Tensor:
    out = _node(a.data.reshape(shape), (a,), "reshape")
    if out.requires_grad:
        def _bw():
            _accumulate(a, out.grad.reshape(a.shape))
        out._backward = _bw
    return out


def conv2d(x: Tensor, k: Tensor, padding: int = 0) -> Tensor:
    """Valid cross-correlation with zero padding; NCHW layout."""
    if x.data.ndim != 4 or k.data.ndim != 4:
        raise ValueError(
            f"conv2d expects 4-d input and kernel, got {x.shape} and {k.shape}"
        )
    if padding < 0:
        raise ValueError(f"conv2d padding must be non-negative, got {padding}")
    n, c, h, w = x.shape
    f, ck, kh, kw = k.shape
    if ck != c:
        raise ValueError(f"conv2d channel mismatch: input has {c}, kernel expects {ck}")
    if kh > h + 2 * padding or kw > w + 2 * padding:
        raise ValueError(
            f"conv2d kernel {kh}x{kw} larger than padded input "
            f"{h + 2 * padding}x{w + 2 * padding}"
        )
    if x.dtype != k.dtype:
        raise ValueError(f"conv2d dtype mismatch {x.dtype} vs {k.dtype}")
    out = _node(kernels.conv2d_forward(x.data, k.data, padding), (x, k), "conv2d")
    if out.requires_grad:
        def _bw():
            gx, gk = kernels.conv2d_backward(x.data, k.data, padding, out.grad)
            _accumulate(x, gx)
            _accumulate(k, gk)
        out._backward = _bw
    return out


def maxpool2d(x: Tensor) -> Tensor:
    """2x2 max pooling; the first occurrence wins ties, and backward routes
    the whole window gradient to that position."""
    if x.data.ndim != 4:
        raise ValueError(f"maxpool2d expects 4-d input, got {x.shape}")
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ValueError(f"maxpool2d requires even spatial dims, got {h}x{w}")
    pooled, idx = kernels.maxpool2d_forward(x.data)
    out = _node(pooled, (x,), "maxpool2d")
    if out.requires_grad:
        def _bw():
            _accumulate(x, kernels.maxpool2d_backward(idx, out.grad))
        out._backward = _bw
    return out


def dense(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """x @ w + b for x: [N, D], w: [D, M], b: [M]."""
    if x.data.ndim != 2 or w.data.ndim != 2 or b.data.ndim != 1:
        raise ValueError(
            f"dense expects 2-d input/weight and 1-d bias, got "
            f"{x.shape}, {w.shape}, {b.shape}"
        )
    if x.shape[1] != w.shape[0] or w.shape[1] != b.shape[0]:
        raise ValueError(
            f"dense dimension mismatch: input {x.shape}, weight {w.shape}, "
            f"bias {b.shape}"
        )
    out = _node(x.data @ w.data + b.data, (x, w, b), "dense")
    if out.requires_grad:
        def _bw():
            _accumulate(x, out.grad @ w.data.T)
            _accumulate(w, x.data.T @ out.grad)
            _accumulate(b, out.grad.sum(axis=0))
        out._backward = _bw
    return out
