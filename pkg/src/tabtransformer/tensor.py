"""Dense tensors with tape-based reverse-mode differentiation.

Every op is a plain function that computes its forward value with numpy and,
when a :class:`Tape` is active and some input requires a gradient, records a
node holding a closure that maps the output gradient to input gradients.
Nodes are appended in execution order, so the tape is topologically sorted by
construction and :meth:`Tape.gradient` is a single reverse sweep.

Usage::

    w = Tensor(np.ones((3, 2)), requires_grad=True)
    with Tape() as tape:
        loss = (x @ w).sum()
    (gw,) = tape.gradient(loss, [w])
"""

from __future__ import annotations

import contextlib
import os
from typing import Callable, Iterable, Sequence

import numpy as np

_DEFAULT_DTYPE = [np.dtype(np.float32)]
_TAPES: list["Tape"] = []
_DEBUG = [bool(os.environ.get("TABT_DEBUG"))]
_KINK_LOGS: list[list[np.ndarray]] = []


def get_default_dtype() -> np.dtype:
    return _DEFAULT_DTYPE[-1]


@contextlib.contextmanager
def default_dtype(dtype):
    """Temporarily change the dtype used for new float tensors (e.g. float64 for gradient checks)."""
    _DEFAULT_DTYPE.append(np.dtype(dtype))
    try:
        yield
    finally:
        _DEFAULT_DTYPE.pop()


def set_debug(flag: bool) -> None:
    """When on, every op asserts its forward output is finite."""
    _DEBUG[0] = bool(flag)


class Tensor:
    """A numpy array plus the flag saying whether gradients flow into it."""

    __slots__ = ("data", "requires_grad", "name")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, dtype=None, name: str | None = None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data)
        if dtype is None:
            dtype = arr.dtype if arr.dtype.kind == "f" else get_default_dtype()
        self.data = np.ascontiguousarray(arr, dtype=dtype)
        self.requires_grad = bool(requires_grad)
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data, dtype=self.data.dtype)

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{tag}, requires_grad={self.requires_grad})"

    def __len__(self) -> int:
        return self.shape[0]

    # arithmetic sugar
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

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

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
        return transpose(self, axes or None)

    @property
    def T(self):
        return transpose(self, None)


def parameter(data, name: str | None = None, dtype=None) -> Tensor:
    return Tensor(data, requires_grad=True, dtype=dtype or get_default_dtype(), name=name)


def as_tensor(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(x), dtype=dtype)


class Node:
    __slots__ = ("op", "inputs", "output", "backward")

    def __init__(self, op: str, inputs: tuple[Tensor, ...], output: Tensor, backward: Callable):
        self.op = op
        self.inputs = inputs
        self.output = output
        self.backward = backward


class Tape:
    """Ordered record of differentiable ops executed while the tape is active."""

    def __init__(self):
        self.nodes: list[Node] = []

    def __enter__(self) -> "Tape":
        _TAPES.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _TAPES.remove(self)

    def record(self, node: Node) -> None:
        self.nodes.append(node)

    def gradient(self, loss: Tensor, params: Sequence[Tensor]) -> list[np.ndarray]:
        """Reverse sweep from a scalar ``loss``; returns one array per entry of ``params``.

        Parameters the loss does not depend on receive exact zeros.
        """
        if loss.size != 1:
            raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
        produced = {id(n.output) for n in self.nodes}
        param_ids = {id(p) for p in params}
        if id(loss) not in produced and id(loss) not in param_ids:
            raise ValueError("loss was not produced on this tape")
        grads: dict[int, np.ndarray] = {id(loss): np.ones(loss.shape, dtype=loss.dtype)}
        for node in reversed(self.nodes):
            g = grads.pop(id(node.output), None)
            if g is None:
                continue
            in_grads = node.backward(g)
            for inp, ig in zip(node.inputs, in_grads):
                if ig is None or not inp.requires_grad:
                    continue
                key = id(inp)
                if key in grads:
                    grads[key] = grads[key] + ig
                else:
                    grads[key] = ig
        out = []
        for p in params:
            g = grads.get(id(p))
            out.append(np.zeros(p.shape, dtype=p.dtype) if g is None else np.asarray(g, dtype=p.dtype).reshape(p.shape))
        return out


def backward(loss: Tensor, tape: Tape, params: Sequence[Tensor]) -> list[np.ndarray]:
    return tape.gradient(loss, params)


@contextlib.contextmanager
def no_grad():
    """Suspend recording on all active tapes."""
    saved = list(_TAPES)
    _TAPES.clear()
    try:
        yield
    finally:
        _TAPES.extend(saved)


def _result(op: str, data: np.ndarray, inputs: tuple[Tensor, ...], backward: Callable) -> Tensor:
    if _DEBUG[0] and not np.all(np.isfinite(data)):
        raise FloatingPointError(f"non-finite output from {op}")
    needs = any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=needs, dtype=data.dtype)
    if needs and _TAPES:
        node = Node(op, inputs, out, backward)
        for tape in _TAPES:
            tape.record(node)
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _pair(a, b) -> tuple[Tensor, Tensor]:
    if isinstance(a, Tensor) and not isinstance(b, Tensor):
        b = as_tensor(b, like=a)
    elif isinstance(b, Tensor) and not isinstance(a, Tensor):
        a = as_tensor(a, like=b)
    return a, b


# ---------------------------------------------------------------------------
# elementwise


def add(a, b) -> Tensor:
    a, b = _pair(a, b)
    return _result("add", a.data + b.data, (a, b),
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)
    return _result("sub", a.data - b.data, (a, b),
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)
    return _result("mul", a.data * b.data, (a, b),
                   lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def div(a, b) -> Tensor:
    a, b = _pair(a, b)
    out = a.data / b.data
    return _result("div", out, (a, b),
                   lambda g: (_unbroadcast(g / b.data, a.shape), _unbroadcast(-g * out / b.data, b.shape)))


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return _result("exp", out, (x,), lambda g: (g * out,))


def log(x: Tensor) -> Tensor:
    return _result("log", np.log(x.data), (x,), lambda g: (g / x.data,))


@contextlib.contextmanager
def record_kinks():
    """Collect the sign pattern of every relu/selu input evaluated inside the block.

    Gradient checks use this to detect when a finite-difference step crosses
    a point where the derivative jumps.
    """
    log: list[np.ndarray] = []
    _KINK_LOGS.append(log)
    try:
        yield log
    finally:
        _KINK_LOGS.remove(log)


def _log_kinks(x: np.ndarray) -> np.ndarray:
    mask = x > 0
    for log in _KINK_LOGS:
        log.append(mask)
    return mask


def relu(x: Tensor) -> Tensor:
    mask = _log_kinks(x.data)
    return _result("relu", x.data * mask, (x,), lambda g: (g * mask,))


SELU_ALPHA = 1.6732632423543772848170429916717
SELU_SCALE = 1.0507009873554804934193349852946


def selu(x: Tensor) -> Tensor:
    pos = _log_kinks(x.data)
    neg_part = SELU_ALPHA * np.expm1(np.minimum(x.data, 0))
    out = (SELU_SCALE * np.where(pos, x.data, neg_part)).astype(x.dtype)
    deriv = (SELU_SCALE * np.where(pos, 1.0, neg_part + SELU_ALPHA)).astype(x.dtype)
    return _result("selu", out, (x,), lambda g: (g * deriv,))


def sigmoid(x: Tensor) -> Tensor:
    out = _sigmoid(x.data)
    return _result("sigmoid", out, (x,), lambda g: (g * out * (1 - out),))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _softplus(z: np.ndarray) -> np.ndarray:
    return np.maximum(z, 0) + np.log1p(np.exp(-np.abs(z)))


def where(mask: np.ndarray, a, b) -> Tensor:
    """Select ``a`` where ``mask`` is true, else ``b`` (numpy broadcasting)."""
    a, b = _pair(a, b)
    mask = np.asarray(mask, dtype=bool)
    out = np.where(mask, a.data, b.data).astype(a.dtype)

    def bw(g):
        return (_unbroadcast(np.where(mask, g, 0), a.shape), _unbroadcast(np.where(mask, 0, g), b.shape))

    return _result("where", out, (a, b), bw)


def dropout(x: Tensor, p: float, rng: np.random.Generator | None, training: bool) -> Tensor:
    """Inverted dropout: zero with probability ``p`` and scale survivors by 1/(1-p)."""
    if not training or p <= 0.0:
        return x
    if rng is None:
        raise ValueError("dropout in training mode needs an rng")
    keep = (rng.random(x.shape) >= p).astype(x.dtype) / x.dtype.type(1.0 - p)
    return _result("dropout", x.data * keep, (x,), lambda g: (g * keep,))


# ---------------------------------------------------------------------------
# shape ops


def reshape(x: Tensor, shape) -> Tensor:
    return _result("reshape", x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),))


def transpose(x: Tensor, axes=None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    inv = np.argsort(axes)
    return _result("transpose", np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inv),))


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = tuple(tensors)
    out = np.concatenate([t.data for t in tensors], axis=axis)
    ax = axis % out.ndim
    splits = np.cumsum([t.shape[ax] for t in tensors])[:-1]

    def bw(g):
        return tuple(np.split(g, splits, axis=ax))

    return _result("concat", out, tensors, bw)


def broadcast_to(x: Tensor, shape) -> Tensor:
    return _result("broadcast_to", np.broadcast_to(x.data, shape).copy(), (x,),
                   lambda g: (_unbroadcast(g, x.shape),))


def gather_rows(table: Tensor, index: np.ndarray) -> Tensor:
    """``table[index]`` for an integer array of any shape; result is ``index.shape + table.shape[1:]``."""
    index = np.asarray(index)
    if index.size and (index.min() < 0 or index.max() >= table.shape[0]):
        raise IndexError(f"row index out of range for table with {table.shape[0]} rows")
    out = table.data[index]

    def bw(g):
        full = np.zeros(table.shape, dtype=g.dtype)
        np.add.at(full, index.reshape(-1), g.reshape((-1,) + table.shape[1:]))
        return (full,)

    return _result("gather_rows", out, (table,), bw)


def index_select(x: Tensor, rows: np.ndarray, axis: int = 0) -> Tensor:
    """Take entries along ``axis`` with a 1-D integer index."""
    rows = np.asarray(rows)
    out = np.take(x.data, rows, axis=axis)

    def bw(g):
        full = np.zeros(x.shape, dtype=g.dtype)
        idx = [slice(None)] * x.ndim
        idx[axis] = rows
        np.add.at(full, tuple(idx), g)
        return (full,)

    return _result("index_select", out, (x,), bw)


# ---------------------------------------------------------------------------
# reductions


def tsum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = np.sum(x.data, axis=axis, keepdims=keepdims)
    out = np.asarray(out, dtype=x.dtype)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape),)

    return _result("sum", out, (x,), bw)


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        n = x.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        n = int(np.prod([x.shape[a] for a in axes]))
    return mul(tsum(x, axis=axis, keepdims=keepdims), 1.0 / n)


# ---------------------------------------------------------------------------
# linear algebra and fused ops


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product over the last two axes (leading axes broadcast)."""
    a, b = _pair(a, b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul dimension mismatch: {a.shape} @ {b.shape}")
    out = np.matmul(a.data, b.data)

    def bw(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return (_unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape))

    return _result("matmul", out, (a, b), bw)


def softmax(x: Tensor, scale: float = 1.0, axis: int = -1) -> Tensor:
    """softmax(x / scale) along ``axis`` with max subtraction."""
    if scale <= 0:
        raise ValueError("softmax scale must be positive")
    z = x.data / x.dtype.type(scale)
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        return ((out * (g - (g * out).sum(axis=axis, keepdims=True))) / x.dtype.type(scale),)

    return _result("softmax", out, (x,), bw)


def softmax_rows(x: Tensor, scale: float = 1.0) -> Tensor:
    return softmax(x, scale=scale, axis=-1)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis with population variance, then scale and shift."""
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ValueError(f"layer_norm expects gamma/beta of shape ({d},), got {gamma.shape} and {beta.shape}")
    if eps <= 0:
        raise ValueError("eps must be positive")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + x.dtype.type(eps))
    xhat = xc * inv
    out = gamma.data * xhat + beta.data
    lead = tuple(range(x.ndim - 1))

    def bw(g):
        dgamma = (g * xhat).sum(axis=lead)
        dbeta = g.sum(axis=lead)
        dxhat = g * gamma.data
        dx = inv * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                    - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
        return (dx, dgamma, dbeta)

    return _result("layer_norm", out, (x, gamma, beta), bw)


def cross_entropy(logits: Tensor, targets) -> Tensor:
    """Mean over rows of -log softmax(logits)[target] for ``logits`` of shape (b, K)."""
    targets = np.asarray(targets, dtype=np.int64)
    if logits.ndim != 2 or targets.shape != (logits.shape[0],):
        raise ValueError(f"cross_entropy expects (b, K) logits and (b,) targets, got {logits.shape}, {targets.shape}")
    b, k = logits.shape
    if targets.size and (targets.min() < 0 or targets.max() >= k):
        raise IndexError(f"target out of range [0, {k})")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - logsum
    rows = np.arange(b)
    out = np.asarray(-logp[rows, targets].mean(), dtype=logits.dtype)

    def bw(g):
        grad = np.exp(logp)
        grad[rows, targets] -= 1.0
        return (grad * (g / b),)

    return _result("cross_entropy", out, (logits,), bw)


def bce_with_logits(logits: Tensor, targets) -> Tensor:
    """Mean binary cross-entropy of sigmoid(logits) against 0/1 targets."""
    y = np.asarray(targets, dtype=logits.dtype).reshape(logits.shape)
    z = logits.data
    n = max(z.size, 1)
    out = np.asarray((_softplus(z) - y * z).sum() / n, dtype=logits.dtype)

    def bw(g):
        return ((_sigmoid(z) - y) * (g / n),)

    return _result("bce_with_logits", out, (logits,), bw)


def binary_entropy_with_logits(logits: Tensor) -> Tensor:
    """Mean entropy of the Bernoulli distributions sigmoid(logits)."""
    z = logits.data
    p = _sigmoid(z)
    n = max(z.size, 1)
    out = np.asarray((_softplus(z) - z * p).sum() / n, dtype=logits.dtype)

    def bw(g):
        return (-z * p * (1 - p) * (g / n),)

    return _result("binary_entropy", out, (logits,), bw)


def parameters_of(tensors: Iterable[Tensor]) -> list[Tensor]:
    return [t for t in tensors if t.requires_grad]
