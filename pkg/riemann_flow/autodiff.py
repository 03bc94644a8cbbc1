"""Reverse-mode automatic differentiation over dense float64 arrays.

Every primitive computes its forward value eagerly and, when any input requires a
gradient, attaches a closure that maps the upstream gradient to input gradients.
``backward`` walks the recorded graph once in reverse topological order.

Forward values are checked for NaN/Inf after every primitive; a non-finite value
raises :class:`NonFinite` instead of propagating.
"""
from __future__ import annotations

from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass
from typing import Any

import numpy as np
import scipy.sparse as sp

from . import trig
from .errors import IndexOutOfRange, NonFinite, NonScalarLoss, ShapeMismatch

BackwardFn = Callable[[np.ndarray], Sequence[np.ndarray | None]]


class Tensor:
    """A float64 array with an optional gradient history."""

    # numpy must defer to Tensor's reflected operators (ndarray * Tensor -> Tensor)
    __array_ufunc__ = None

    def __init__(self, data: Any, requires_grad: bool = False, name: str | None = None) -> None:
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.name = name
        self.grad: np.ndarray | None = None
        self.op = "leaf"
        self._parents: tuple[Tensor, ...] = ()
        self._backward: BackwardFn | None = None

    @classmethod
    def _result(cls, data: np.ndarray, op: str, parents: tuple[Tensor, ...], backward: BackwardFn) -> Tensor:
        if not np.all(np.isfinite(data)):
            raise NonFinite(f"non-finite value produced by {op}")
        out = cls.__new__(cls)
        out.data = data
        out.name = None
        out.grad = None
        out.op = op
        out.requires_grad = any(p.requires_grad for p in parents)
        out._parents = parents if out.requires_grad else ()
        out._backward = backward if out.requires_grad else None
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.data.shape)

    @property
    def ndim(self) -> int:
        return int(self.data.ndim)

    @property
    def T(self) -> Tensor:  # noqa: N802
        return transpose(self)

    def item(self) -> float:
        if self.data.size != 1:
            raise NonScalarLoss(f"expected a single element, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def detach(self) -> Tensor:
        return Tensor(self.data)

    def sum(self, axis: int | None = None, keepdims: bool = False) -> Tensor:
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis: int | None = None, keepdims: bool = False) -> Tensor:
        return mean(self, axis=axis, keepdims=keepdims)

    def __add__(self, other: Any) -> Tensor:
        return add(self, other)

    def __radd__(self, other: Any) -> Tensor:
        return add(other, self)

    def __sub__(self, other: Any) -> Tensor:
        return subtract(self, other)

    def __rsub__(self, other: Any) -> Tensor:
        return subtract(other, self)

    def __mul__(self, other: Any) -> Tensor:
        return multiply(self, other)

    def __rmul__(self, other: Any) -> Tensor:
        return multiply(other, self)

    def __truediv__(self, other: Any) -> Tensor:
        return divide(self, other)

    def __rtruediv__(self, other: Any) -> Tensor:
        return divide(other, self)

    def __neg__(self) -> Tensor:
        return negate(self)

    def __matmul__(self, other: Any) -> Tensor:
        return matmul(self, other)

    def __rmatmul__(self, other: Any) -> Tensor:
        return matmul(other, self)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, op={self.op!r}{flag})"


def as_tensor(value: Any) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_check(op: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError as exc:
        raise ShapeMismatch(f"{op}: cannot broadcast {a.shape} with {b.shape}") from exc


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a: Any, b: Any) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check("add", a, b)

    def backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return Tensor._result(a.data + b.data, "add", (a, b), backward)


def subtract(a: Any, b: Any) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check("subtract", a, b)

    def backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return Tensor._result(a.data - b.data, "subtract", (a, b), backward)


def multiply(a: Any, b: Any) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check("multiply", a, b)

    def backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return Tensor._result(a.data * b.data, "multiply", (a, b), backward)


def divide(a: Any, b: Any) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check("divide", a, b)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = a.data / b.data

    def backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return _unbroadcast(g / b.data, a.shape), _unbroadcast(-g * a.data / b.data**2, b.shape)

    return Tensor._result(out, "divide", (a, b), backward)


def negate(a: Any) -> Tensor:
    a = as_tensor(a)
    return Tensor._result(-a.data, "negate", (a,), lambda g: (-g,))


# ---------------------------------------------------------------------------
# linear algebra and shape plumbing


def matmul(a: Any, b: Any) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"matmul: {a.shape} @ {b.shape}")

    def backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return g @ b.data.T, a.data.T @ g

    return Tensor._result(a.data @ b.data, "matmul", (a, b), backward)


def sparse_matmul(matrix: sp.spmatrix | sp.sparray, x: Any) -> Tensor:
    """Constant sparse matrix times a dense tensor; only ``x`` receives gradients."""
    x = as_tensor(x)
    if x.ndim != 2 or matrix.shape[1] != x.shape[0]:
        raise ShapeMismatch(f"sparse_matmul: {matrix.shape} @ {x.shape}")
    csr = sp.csr_matrix(matrix)
    transposed = csr.T.tocsr()

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        return (np.asarray(transposed @ g),)

    return Tensor._result(np.asarray(csr @ x.data), "sparse_matmul", (x,), backward)


def transpose(a: Any) -> Tensor:
    a = as_tensor(a)
    if a.ndim != 2:
        raise ShapeMismatch(f"transpose expects a matrix, got {a.shape}")
    return Tensor._result(a.data.T.copy(), "transpose", (a,), lambda g: (g.T,))


def reshape(a: Any, shape: tuple[int, ...]) -> Tensor:
    a = as_tensor(a)
    try:
        out = a.data.reshape(shape)
    except ValueError as exc:
        raise ShapeMismatch(f"reshape: {a.shape} -> {shape}") from exc
    return Tensor._result(out.copy(), "reshape", (a,), lambda g: (g.reshape(a.shape),))


def concat(tensors: Sequence[Any], axis: int = -1) -> Tensor:
    parts = tuple(as_tensor(t) for t in tensors)
    if not parts:
        raise ShapeMismatch("concat of an empty sequence")
    try:
        out = np.concatenate([p.data for p in parts], axis=axis)
    except ValueError as exc:
        raise ShapeMismatch(f"concat: incompatible shapes {[p.shape for p in parts]}") from exc
    bounds = np.cumsum([p.shape[axis] for p in parts])[:-1]

    def backward(g: np.ndarray) -> list[np.ndarray]:
        return list(np.split(g, bounds, axis=axis))

    return Tensor._result(out, "concat", parts, backward)


def gather_rows(a: Any, index: Sequence[int] | np.ndarray) -> Tensor:
    a = as_tensor(a)
    idx = np.asarray(index, dtype=np.int64)
    if idx.size and (idx.min() < -a.shape[0] or idx.max() >= a.shape[0]):
        raise IndexOutOfRange(f"gather_rows: index outside [0, {a.shape[0]})")

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        grad = np.zeros_like(a.data)
        np.add.at(grad, idx, g)
        return (grad,)

    return Tensor._result(a.data[idx], "gather_rows", (a,), backward)


# ---------------------------------------------------------------------------
# reductions


def _expand(g: np.ndarray, shape: tuple[int, ...], axis: int | None, keepdims: bool) -> np.ndarray:
    if axis is not None and not keepdims:
        g = np.expand_dims(g, axis)
    return np.broadcast_to(g, shape).copy()


def sum_(a: Any, axis: int | None = None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out = np.asarray(a.data.sum(axis=axis, keepdims=keepdims), dtype=np.float64)
    return Tensor._result(out, "sum", (a,), lambda g: (_expand(g, a.shape, axis, keepdims),))


def mean(a: Any, axis: int | None = None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    count = a.data.size if axis is None else a.shape[axis]
    if count == 0:
        raise ShapeMismatch("mean over an empty axis")
    out = np.asarray(a.data.mean(axis=axis, keepdims=keepdims), dtype=np.float64)
    return Tensor._result(out, "mean", (a,), lambda g: (_expand(g, a.shape, axis, keepdims) / count,))


def l2_norm(a: Any, axis: int | None = -1, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    norm = np.sqrt((a.data**2).sum(axis=axis, keepdims=True))

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        g_full = _expand(g, norm.shape, axis, keepdims) if axis is not None else np.broadcast_to(g, norm.shape)
        safe = np.where(norm > 0.0, norm, 1.0)
        return (np.where(norm > 0.0, g_full * a.data / safe, 0.0),)

    out = norm if keepdims else (norm.reshape(()) if axis is None else np.squeeze(norm, axis=axis))
    return Tensor._result(np.asarray(out, dtype=np.float64), "l2_norm", (a,), backward)


# ---------------------------------------------------------------------------
# nonlinearities


def tanh_act(a: Any) -> Tensor:
    a = as_tensor(a)
    y = np.tanh(a.data)
    return Tensor._result(y, "tanh", (a,), lambda g: (g * (1.0 - y**2),))


def relu_act(a: Any) -> Tensor:
    a = as_tensor(a)
    return Tensor._result(np.maximum(a.data, 0.0), "relu", (a,), lambda g: (g * (a.data > 0.0),))


def abs_act(a: Any) -> Tensor:
    a = as_tensor(a)
    return Tensor._result(np.abs(a.data), "abs", (a,), lambda g: (g * np.sign(a.data),))


def exp(a: Any) -> Tensor:
    a = as_tensor(a)
    with np.errstate(over="ignore"):
        y = np.exp(a.data)
    return Tensor._result(y, "exp", (a,), lambda g: (g * y,))


def log(a: Any) -> Tensor:
    a = as_tensor(a)
    with np.errstate(divide="ignore", invalid="ignore"):
        y = np.log(a.data)
    return Tensor._result(y, "log", (a,), lambda g: (g / a.data,))


def sqrt(a: Any) -> Tensor:
    a = as_tensor(a)
    with np.errstate(invalid="ignore"):
        y = np.sqrt(a.data)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        with np.errstate(divide="ignore"):
            return (g / (2.0 * y),)

    return Tensor._result(y, "sqrt", (a,), backward)


def clamp_min(a: Any, floor: float) -> Tensor:
    a = as_tensor(a)
    return Tensor._result(np.maximum(a.data, floor), "clamp_min", (a,), lambda g: (g * (a.data > floor),))


def softmax(a: Any, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return Tensor._result(y, "softmax", (a,), backward)


def log_softmax(a: Any, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    y = shifted - lse
    probs = np.exp(y)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        return (g - probs * g.sum(axis=axis, keepdims=True),)

    return Tensor._result(y, "log_softmax", (a,), backward)


# ---------------------------------------------------------------------------
# manifold helpers


def tan_c_ratio(sq_norm: Any, c: float) -> Tensor:
    """tan_c(n)/n evaluated from the squared norm n**2."""
    s = as_tensor(sq_norm)
    return Tensor._result(
        trig.tan_ratio_sq(s.data, c), "tan_c_ratio", (s,), lambda g: (g * trig.tan_ratio_sq_grad(s.data, c),)
    )


def artan_c_ratio(sq_norm: Any, c: float) -> Tensor:
    """artan_c(n)/n evaluated from the squared norm n**2."""
    s = as_tensor(sq_norm)
    with np.errstate(divide="ignore", invalid="ignore"):
        value = trig.artan_ratio_sq(s.data, c)
    return Tensor._result(
        value, "artan_c_ratio", (s,), lambda g: (g * trig.artan_ratio_sq_grad(s.data, c),)
    )


def clip_rows(a: Any, max_norm: float) -> Tensor:
    """Scale rows (last axis) whose Euclidean norm exceeds ``max_norm`` back onto it."""
    a = as_tensor(a)
    norm = np.sqrt((a.data**2).sum(axis=-1, keepdims=True))
    clipped = norm > max_norm
    safe = np.where(clipped, norm, 1.0)
    scale = np.where(clipped, max_norm / safe, 1.0)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        unit = a.data / safe
        radial = (g * unit).sum(axis=-1, keepdims=True) * unit
        return (np.where(clipped, scale * (g - radial), g),)

    return Tensor._result(a.data * scale, "clip_rows", (a,), backward)


# ---------------------------------------------------------------------------
# tape and backward pass


@dataclass(frozen=True)
class TapeNode:
    op: str
    output: Tensor
    inputs: tuple[Tensor, ...]


class Tape:
    """Nodes of one computation in topological order (inputs before outputs)."""

    def __init__(self, nodes: list[TapeNode]) -> None:
        self.nodes = nodes

    @classmethod
    def record(cls, root: Tensor) -> Tape:
        nodes: list[TapeNode] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(root, False)]
        while stack:
            tensor, expanded = stack.pop()
            if expanded:
                nodes.append(TapeNode(tensor.op, tensor, tensor._parents))
                continue
            if id(tensor) in visited:
                continue
            visited.add(id(tensor))
            stack.append((tensor, True))
            for parent in tensor._parents:
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))
        return cls(nodes)

    def __len__(self) -> int:
        return len(self.nodes)


def backward(loss: Tensor, wrt: Iterable[Tensor] | None = None) -> dict[Tensor, np.ndarray]:
    """Accumulate d(loss)/d(leaf) for every leaf that requires a gradient.

    Leaves listed in ``wrt`` that the loss does not depend on receive zeros.
    The gradients are also stored on ``tensor.grad``.
    """
    if loss.data.size != 1:
        raise NonScalarLoss(f"backward needs a scalar loss, got shape {loss.shape}")
    grads: dict[int, np.ndarray] = {}
    leaves: dict[int, Tensor] = {}
    if loss.requires_grad:
        tape = Tape.record(loss)
        grads[id(loss)] = np.ones_like(loss.data)
        for node in reversed(tape.nodes):
            tensor = node.output
            upstream = grads.get(id(tensor))
            if upstream is None:
                continue
            if tensor._backward is None:
                leaves[id(tensor)] = tensor
                continue
            for parent, grad in zip(node.inputs, tensor._backward(upstream), strict=True):
                if grad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = grads[key] + grad if key in grads else np.array(grad, dtype=np.float64)

    result: dict[Tensor, np.ndarray] = {}
    for tensor in leaves.values():
        tensor.grad = grads[id(tensor)]
        result[tensor] = tensor.grad
    for tensor in wrt or ():
        if tensor not in result:
            tensor.grad = grads.get(id(tensor), np.zeros_like(tensor.data))
            result[tensor] = tensor.grad
    return result


__all__ = [
    "Tape",
    "TapeNode",
    "Tensor",
    "abs_act",
    "add",
    "artan_c_ratio",
    "as_tensor",
    "backward",
    "clamp_min",
    "clip_rows",
    "concat",
    "divide",
    "exp",
    "gather_rows",
    "l2_norm",
    "log",
    "log_softmax",
    "matmul",
    "mean",
    "multiply",
    "negate",
    "relu_act",
    "reshape",
    "softmax",
    "sparse_matmul",
    "sqrt",
    "subtract",
    "sum_",
    "tan_c_ratio",
    "tanh_act",
    "transpose",
]
