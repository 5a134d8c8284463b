"""Reverse-mode automatic differentiation on float64 numpy arrays.

The graph is built define-by-run: every primitive returns a new ``Tensor``
holding references to its inputs and a closure that pushes the output
gradient back to them.  ``backward`` linearises the graph into a tape in
topological order and replays it in reverse.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Raised when operand extents are incompatible."""


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None
        self.op = "leaf"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op}, requires_grad={self.requires_grad})"

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g: np.ndarray):
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self):
        return tsum(self)

    def backward(self):
        backward(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def make_result(data: np.ndarray, parents: Sequence[Tensor], grad_fn, op: str) -> Tensor:
    """Create an op output; ``grad_fn(g)`` returns one gradient (or None) per parent."""
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out.op = op

        def _backward(g):
            grads = grad_fn(g)
            for p, pg in zip(parents, grads):
                if p.requires_grad and pg is not None:
                    p._accumulate(pg)

        out._backward = _backward
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# ---------------------------------------------------------------- elementwise


def _operands(a, b) -> tuple[Tensor, Tensor]:
    a, b = as_tensor(a), as_tensor(b)
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"cannot broadcast shapes {a.shape} and {b.shape}") from None
    return a, b


def add(a, b) -> Tensor:
    a, b = _operands(a, b)
    return make_result(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
        "add",
    )


def sub(a, b) -> Tensor:
    a, b = _operands(a, b)
    return make_result(
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
        "sub",
    )


def mul(a, b) -> Tensor:
    a, b = _operands(a, b)
    return make_result(
        a.data * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
        "mul",
    )


def square(x: Tensor) -> Tensor:
    return make_result(x.data * x.data, (x,), lambda g: (2.0 * x.data * g,), "square")


def exp(x: Tensor) -> Tensor:
    y = np.exp(x.data)
    return make_result(y, (x,), lambda g: (g * y,), "exp")


def tabs(x: Tensor) -> Tensor:
    return make_result(np.abs(x.data), (x,), lambda g: (g * np.sign(x.data),), "abs")


def sqrt(x: Tensor) -> Tensor:
    y = np.sqrt(x.data)
    return make_result(y, (x,), lambda g: (g * 0.5 / y,), "sqrt")


def clamp_max(x: Tensor, limit: float) -> Tensor:
    """min(x, limit); gradient is zero where the limit is active."""
    keep = x.data <= limit
    return make_result(np.where(keep, x.data, limit), (x,), lambda g: (g * keep,), "clamp_max")


def relu(x: Tensor) -> Tensor:
    pos = x.data > 0
    return make_result(x.data * pos, (x,), lambda g: (g * pos,), "relu")


# ---------------------------------------------------------------- reductions / shape


def tsum(x: Tensor, axis=None) -> Tensor:
    y = x.data.sum(axis=axis)

    def grad_fn(g):
        if axis is None:
            return (np.broadcast_to(g, x.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), x.shape).copy(),)

    return make_result(y, (x,), grad_fn, "sum")


def mean(x: Tensor) -> Tensor:
    n = x.size
    return make_result(
        x.data.mean(), (x,), lambda g: (np.full(x.shape, g / n),), "mean"
    )


def reshape(x: Tensor, shape) -> Tensor:
    return make_result(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),), "reshape")


def flatten(x: Tensor) -> Tensor:
    """Collapse all but the leading (batch) axis."""
    return reshape(x, (x.shape[0], -1))


# ---------------------------------------------------------------- layers


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape[-1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dimensions differ ({a.shape} @ {b.shape})")
    return make_result(
        a.data @ b.data, (a, b), lambda g: (g @ b.data.T, a.data.T @ g), "matmul"
    )


def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """y = x W^T + b with ``weight`` of shape [out, in]."""
    if x.data.ndim != 2 or x.shape[1] != weight.shape[1]:
        raise ShapeError(f"linear: input {x.shape} incompatible with weight {weight.shape}")
    if bias.shape != (weight.shape[0],):
        raise ShapeError(f"linear: bias {bias.shape} does not match {weight.shape[0]} outputs")
    y = x.data @ weight.data.T + bias.data
    return make_result(
        y,
        (x, weight, bias),
        lambda g: (
            g @ weight.data if x.requires_grad else None,
            g.T @ x.data if weight.requires_grad else None,
            g.sum(axis=0) if bias.requires_grad else None,
        ),
        "linear",
    )


def _im2col(xp: np.ndarray, kh: int, kw: int, h: int, w: int) -> np.ndarray:
    """[N, C, H+kh-1, W+kw-1] -> [N, C*kh*kw, h*w] patch matrix."""
    n, c = xp.shape[:2]
    cols = np.empty((n, c, kh, kw, h, w))
    for a in range(kh):
        for b in range(kw):
            cols[:, :, a, b] = xp[:, :, a:a + h, b:b + w]
    return cols.reshape(n, c * kh * kw, h * w)


def conv2d(x: Tensor, kernel: Tensor, bias: Tensor, padding: int = 0) -> Tensor:
    """Stride-1 cross-correlation with zero padding.

    x: [N, C, H, W], kernel: [K, C, kh, kw], bias: [K] -> [N, K, H', W']
    with H' = H + 2*padding - kh + 1.
    """
    if x.data.ndim != 4 or kernel.data.ndim != 4:
        raise ShapeError(f"conv2d: expected 4-d input and kernel, got {x.shape} and {kernel.shape}")
    n, c, h, w = x.shape
    k, kc, kh, kw = kernel.shape
    if kc != c:
        raise ShapeError(f"conv2d: input has {c} channels but kernel expects {kc}")
    if bias.shape != (k,):
        raise ShapeError(f"conv2d: bias {bias.shape} does not match {k} output channels")
    if kh > h + 2 * padding or kw > w + 2 * padding:
        raise ShapeError(
            f"conv2d: kernel {kh}x{kw} larger than padded input {h + 2 * padding}x{w + 2 * padding}"
        )
    p = padding
    xp = np.pad(x.data, ((0, 0), (0, 0), (p, p), (p, p))) if p else x.data
    ho, wo = h + 2 * p - kh + 1, w + 2 * p - kw + 1
    cols = _im2col(xp, kh, kw, ho, wo)
    w2 = kernel.data.reshape(k, c * kh * kw)
    out = (w2 @ cols).reshape(n, k, ho, wo) + bias.data[None, :, None, None]

    def grad_fn(g):
        g2 = g.reshape(n, k, ho * wo)
        gk = gb = gx = None
        if kernel.requires_grad:
            gk = np.einsum("nkp,nqp->kq", g2, cols, optimize=True).reshape(kernel.shape)
        if bias.requires_grad:
            gb = g2.sum(axis=(0, 2))
        if x.requires_grad:
            gcols = (w2.T @ g2).reshape(n, c, kh, kw, ho, wo)
            gxp = np.zeros_like(xp)
            for a in range(kh):
                for b in range(kw):
                    gxp[:, :, a:a + ho, b:b + wo] += gcols[:, :, a, b]
            gx = gxp[:, :, p:p + h, p:p + w] if p else gxp
        return gx, gk, gb

    return make_result(out, (x, kernel, bias), grad_fn, "conv2d")


def maxpool2(x: Tensor) -> Tensor:
    """2x2 max pooling, stride 2.  Ties route the gradient to the first maximum
    in row-major window order."""
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"maxpool2: spatial extents must be even, got {h}x{w}")
    quads = [x.data[:, :, i::2, j::2] for i in (0, 1) for j in (0, 1)]
    out = np.maximum(np.maximum(quads[0], quads[1]), np.maximum(quads[2], quads[3]))

    def grad_fn(g):
        gx = np.zeros_like(x.data)
        taken = np.zeros(out.shape, dtype=bool)
        for (i, j), q in zip(((0, 0), (0, 1), (1, 0), (1, 1)), quads):
            hit = (q == out) & ~taken
            taken |= hit
            gx[:, :, i::2, j::2] = g * hit
        return (gx,)

    return make_result(out, (x,), grad_fn, "maxpool2")


def _check_labels(labels, n, c) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.shape != (n,):
        raise ShapeError(f"cross_entropy: expected {n} labels, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        raise ValueError(f"cross_entropy: labels must lie in [0, {c}), got range "
                         f"[{labels.min()}, {labels.max()}]")
    return labels.astype(np.intp)


def cross_entropy_per_sample(logits: Tensor, labels) -> Tensor:
    """Per-sample -log softmax(logits)[label], stabilised by max subtraction."""
    if logits.data.ndim != 2:
        raise ShapeError(f"cross_entropy: logits must be [N, C], got {logits.shape}")
    n, c = logits.shape
    labels = _check_labels(labels, n, c)
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    rows = np.arange(n)
    losses = lse - z[rows, labels]

    def grad_fn(g):
        probs = np.exp(z - lse[:, None])
        probs[rows, labels] -= 1.0
        return (probs * g[:, None],)

    return make_result(losses, (logits,), grad_fn, "cross_entropy")


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Batch-mean cross entropy."""
    return mean(cross_entropy_per_sample(logits, labels))


# ---------------------------------------------------------------- backward


def build_tape(loss: Tensor) -> list[Tensor]:
    """Topologically ordered list of every node reachable from ``loss``."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(loss: Tensor):
    """Populate ``.grad`` of every requires_grad leaf reachable from ``loss``.

    Leaf gradients accumulate across calls; interior gradients are released.
    """
    if loss.data.size != 1 or loss.data.ndim > 1:
        raise ShapeError(f"backward: loss must be a scalar, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    tape = build_tape(loss)
    loss._accumulate(np.ones_like(loss.data))
    for node in reversed(tape):
        if node._backward is None or node.grad is None:
            continue
        node._backward(node.grad)
        node.grad = None


# ---------------------------------------------------------------- optimizer


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)


def adam_step(params: list[np.ndarray], grads: list[np.ndarray], state: AdamState,
              lr: float | None = None) -> None:
    """Bias-corrected Adam update, applied to ``params`` in place.

    ``lr`` overrides ``state.lr`` for this step (learning-rate schedules).
    """
    if len(params) != len(grads):
        raise ShapeError(f"adam_step: {len(params)} params but {len(grads)} grads")
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    lr = state.lr if lr is None else lr
    state.t += 1
    bc1 = 1.0 - state.beta1**state.t
    bc2 = 1.0 - state.beta2**state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape or m.shape != p.shape:
            raise ShapeError(f"adam_step: parameter {p.shape} vs gradient {g.shape}")
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
