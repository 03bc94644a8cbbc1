"""Parameter containers, the time-conditioned vector field, Adam and checkpoints."""
from __future__ import annotations

import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .errors import DomainViolation, ParseError, ShapeMismatch
from .manifold import ManifoldPoint, TangentVector, check_domain

CHECKPOINT_MAGIC = "riemann-flow-checkpoint 1"


def _uniform(rng: np.random.Generator, fan_out: int, fan_in: int) -> np.ndarray:
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=(fan_out, fan_in))


@dataclass(frozen=True)
class VectorFieldParams:
    """MLP v_theta(z, t): input [z, t] of width d + 1, tanh hidden layers, output d."""

    weights: tuple[ad.Tensor, ...]
    biases: tuple[ad.Tensor, ...]

    def __post_init__(self) -> None:
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ShapeMismatch("vector field needs matching, non-empty weight and bias lists")
        if self.weights[0].shape[1] != self.weights[-1].shape[0] + 1:
            raise ShapeMismatch("vector field input width must equal output dimension + 1")

    @classmethod
    def init(
        cls, dim: int, hidden: Sequence[int] = (128, 128, 128), seed: int = 0, zero: bool = False
    ) -> VectorFieldParams:
        rng = np.random.default_rng(seed)
        widths = [dim + 1, *hidden, dim]
        weights, biases = [], []
        for fan_in, fan_out in zip(widths[:-1], widths[1:], strict=True):
            w = np.zeros((fan_out, fan_in)) if zero else _uniform(rng, fan_out, fan_in)
            b = np.zeros(fan_out) if zero else rng.uniform(-1.0 / math.sqrt(fan_in), 1.0 / math.sqrt(fan_in), fan_out)
            weights.append(ad.Tensor(w, requires_grad=True))
            biases.append(ad.Tensor(b, requires_grad=True))
        return cls(tuple(weights), tuple(biases))

    @property
    def dim(self) -> int:
        return self.weights[-1].shape[0]

    def parameters(self, prefix: str = "field") -> dict[str, ad.Tensor]:
        params: dict[str, ad.Tensor] = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases, strict=True)):
            params[f"{prefix}.weight.{i}"] = w
            params[f"{prefix}.bias.{i}"] = b
        return params

    @classmethod
    def from_parameters(cls, params: Mapping[str, ad.Tensor | np.ndarray], prefix: str = "field") -> VectorFieldParams:
        count = sum(1 for name in params if name.startswith(f"{prefix}.weight."))
        weights = tuple(_leaf(params[f"{prefix}.weight.{i}"]) for i in range(count))
        biases = tuple(_leaf(params[f"{prefix}.bias.{i}"]) for i in range(count))
        return cls(weights, biases)


@dataclass(frozen=True)
class ClassifierParams:
    weight: ad.Tensor  # K x d
    bias: ad.Tensor  # K

    def __post_init__(self) -> None:
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise ShapeMismatch(f"classifier weight {self.weight.shape} / bias {self.bias.shape}")

    @classmethod
    def init(cls, dim: int, n_classes: int, seed: int = 0) -> ClassifierParams:
        rng = np.random.default_rng(seed)
        bound = 1.0 / math.sqrt(dim)
        return cls(
            ad.Tensor(rng.uniform(-bound, bound, size=(n_classes, dim)), requires_grad=True),
            ad.Tensor(np.zeros(n_classes), requires_grad=True),
        )

    @property
    def n_classes(self) -> int:
        return self.weight.shape[0]

    def logits(self, tangents: ad.Tensor | np.ndarray, with_bias: bool = True) -> ad.Tensor:
        out = ad.matmul(ad.as_tensor(tangents), ad.transpose(self.weight))
        return out + self.bias if with_bias else out

    def parameters(self, prefix: str = "classifier") -> dict[str, ad.Tensor]:
        return {f"{prefix}.weight": self.weight, f"{prefix}.bias": self.bias}

    @classmethod
    def from_parameters(
        cls, params: Mapping[str, ad.Tensor | np.ndarray], prefix: str = "classifier"
    ) -> ClassifierParams:
        return cls(_leaf(params[f"{prefix}.weight"]), _leaf(params[f"{prefix}.bias"]))


def _leaf(value: ad.Tensor | np.ndarray) -> ad.Tensor:
    data = value.data if isinstance(value, ad.Tensor) else value
    return ad.Tensor(data, requires_grad=True)


def vector_field_forward(params: VectorFieldParams, z: ad.Tensor | np.ndarray, t: ad.Tensor | np.ndarray) -> ad.Tensor:
    """Batched v_theta: z is (B, d), t is (B,) or (B, 1); returns (B, d) tangent coefficients."""
    z = ad.as_tensor(z)
    t_col = ad.as_tensor(t)
    if t_col.ndim == 1:
        t_col = ad.reshape(t_col, (t_col.shape[0], 1))
    if z.ndim != 2 or z.shape[1] != params.dim or t_col.shape != (z.shape[0], 1):
        raise ShapeMismatch(f"vector field got z {z.shape} and t {t_col.shape} for dim {params.dim}")
    h = ad.concat([z, t_col], axis=1)
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases, strict=True)):
        h = ad.matmul(h, ad.transpose(w)) + b
        if i < last:
            h = ad.tanh_act(h)
    return h


def vector_field_eval(params: VectorFieldParams, z_t: ManifoldPoint, t: float) -> TangentVector:
    check_domain(z_t)
    if not 0.0 <= t <= 1.0:
        raise DomainViolation(f"time must lie in [0, 1], got {t}")
    out = vector_field_forward(params, z_t.coords[None, :], np.array([t]))
    return TangentVector(z_t, out.data[0])


# ---------------------------------------------------------------------------
# optimisation


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(
    params: Mapping[str, ad.Tensor], grads: Mapping[str, np.ndarray], state: AdamState, lr: float
) -> dict[str, ad.Tensor]:
    """One bias-corrected Adam update; returns fresh leaf tensors and advances ``state``."""
    for name, grad in grads.items():
        if name in params and np.shape(grad) != params[name].shape:
            raise ShapeMismatch(f"gradient for {name}: {np.shape(grad)} vs {params[name].shape}")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    correction1 = 1.0 - b1**state.step
    correction2 = 1.0 - b2**state.step
    updated: dict[str, ad.Tensor] = {}
    for name, param in params.items():
        g = np.asarray(grads.get(name, np.zeros_like(param.data)), dtype=np.float64)
        if state.weight_decay:
            g = g + state.weight_decay * param.data
        m = b1 * state.m.get(name, np.zeros_like(g)) + (1.0 - b1) * g
        v = b2 * state.v.get(name, np.zeros_like(g)) + (1.0 - b2) * g * g
        state.m[name], state.v[name] = m, v
        step = lr * (m / correction1) / (np.sqrt(v / correction2) + state.eps)
        updated[name] = ad.Tensor(param.data - step, requires_grad=True)
    return updated


def global_grad_norm(grads: Mapping[str, np.ndarray]) -> float:
    return math.sqrt(sum(float(np.sum(np.square(g))) for g in grads.values()))


def flatten_parameters(
    params: Mapping[str, ad.Tensor | np.ndarray],
) -> tuple[np.ndarray, list[tuple[str, tuple[int, ...]]]]:
    layout = []
    chunks = []
    for name in sorted(params):
        value = params[name]
        data = value.data if isinstance(value, ad.Tensor) else np.asarray(value, dtype=np.float64)
        layout.append((name, tuple(data.shape)))
        chunks.append(data.reshape(-1))
    return np.concatenate(chunks) if chunks else np.zeros(0), layout


def unflatten_parameters(vector: np.ndarray, layout: Sequence[tuple[str, tuple[int, ...]]]) -> dict[str, ad.Tensor]:
    params: dict[str, ad.Tensor] = {}
    offset = 0
    for name, shape in layout:
        size = int(np.prod(shape)) if shape else 1
        params[name] = ad.Tensor(vector[offset : offset + size].reshape(shape), requires_grad=True)
        offset += size
    if offset != vector.size:
        raise ShapeMismatch(f"flat vector of length {vector.size} does not match layout of {offset}")
    return params


# ---------------------------------------------------------------------------
# checkpoints: text header of names and shapes, then little-endian float64 payload


def save_checkpoint(path: str | Path, tensors: Mapping[str, ad.Tensor | np.ndarray]) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    header = [CHECKPOINT_MAGIC, f"tensors {len(tensors)}"]
    payload = []
    for name, value in tensors.items():
        if not name or any(ch.isspace() for ch in name):
            raise ValueError(f"tensor names may not contain whitespace: {name!r}")
        data = value.data if isinstance(value, ad.Tensor) else np.asarray(value, dtype=np.float64)
        header.append(" ".join([name, *(str(dim) for dim in data.shape)]))
        payload.append(np.ascontiguousarray(data, dtype="<f8").tobytes())
    with target.open("wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        for chunk in payload:
            fh.write(chunk)
    return target


def load_checkpoint(path: str | Path) -> dict[str, np.ndarray]:
    raw = Path(path).read_bytes()
    cursor = 0

    def next_line(number: int) -> str:
        nonlocal cursor
        end = raw.find(b"\n", cursor)
        if end < 0:
            raise ParseError("truncated checkpoint header", number)
        line = raw[cursor:end].decode("ascii")
        cursor = end + 1
        return line

    if next_line(1) != CHECKPOINT_MAGIC:
        raise ParseError("not a riemann-flow checkpoint", 1)
    count_line = next_line(2).split()
    if len(count_line) != 2 or count_line[0] != "tensors":
        raise ParseError("expected 'tensors <count>'", 2)
    entries = []
    for i in range(int(count_line[1])):
        parts = next_line(3 + i).split()
        if not parts:
            raise ParseError("empty tensor entry", 3 + i)
        entries.append((parts[0], tuple(int(p) for p in parts[1:])))
    tensors: dict[str, np.ndarray] = {}
    for name, shape in entries:
        size = int(np.prod(shape)) if shape else 1
        nbytes = size * 8
        if cursor + nbytes > len(raw):
            raise ParseError(f"payload for {name} is truncated", 3 + len(entries))
        tensors[name] = np.frombuffer(raw, dtype="<f8", count=size, offset=cursor).astype(np.float64).reshape(shape)
        cursor += nbytes
    return tensors


__all__ = [
    "AdamState",
    "ClassifierParams",
    "VectorFieldParams",
    "adam_step",
    "flatten_parameters",
    "global_grad_norm",
    "load_checkpoint",
    "save_checkpoint",
    "unflatten_parameters",
    "vector_field_eval",
    "vector_field_forward",
]
