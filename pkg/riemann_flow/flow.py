"""Geodesic conditional flow matching on the curvature-c manifold.

Source embeddings are paired with target embeddings by class-conditional nearest
neighbours under the geodesic distance. For a pair (z_S, z_T) the interpolant is
z_t = Exp_{z_S}(t Log_{z_S}(z_T)) and the regression target is the initial
velocity transported to z_t. The learned field is fitted under the metric norm
at z_t and integrated with manifold Euler steps at inference.
"""
from __future__ import annotations

import csv
import logging
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import kernels
from .errors import DomainViolation, EmptyBatch, ShapeMismatch
from .manifold import CurvatureLike, ManifoldPoint, TangentVector, as_curvature, check_domain
from .nn import AdamState, VectorFieldParams, adam_step, vector_field_forward
from .schemas import CouplingPlan

LOGGER = logging.getLogger(__name__)

FieldFn = Callable[[np.ndarray, float], np.ndarray]


def _rows(x: np.ndarray | Sequence[Sequence[float]]) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeMismatch(f"expected a (batch, dim) array, got shape {arr.shape}")
    return arr


def pairwise_distances(a: np.ndarray, b: np.ndarray, c: float) -> np.ndarray:
    return np.asarray(kernels.distance(_rows(a)[:, None, :], _rows(b)[None, :, :], c))


def couple(
    source: np.ndarray,
    source_labels: Sequence[int],
    target: np.ndarray,
    target_labels: Sequence[int],
    c: CurvatureLike,
    target_mask: Sequence[bool] | None = None,
) -> CouplingPlan:
    """Pair each source with the geodesically nearest target of the same (pseudo-)class.

    Only targets with a true ``target_mask`` entry are class candidates. A source
    whose class has no candidate falls back to the global nearest neighbour and
    is flagged.
    """
    src, tgt = _rows(source), _rows(target)
    if src.shape[0] == 0 or tgt.shape[0] == 0:
        raise EmptyBatch("coupling needs non-empty source and target batches")
    y_src = np.asarray(source_labels, dtype=np.int64)
    y_tgt = np.asarray(target_labels, dtype=np.int64)
    if y_src.shape[0] != src.shape[0] or y_tgt.shape[0] != tgt.shape[0]:
        raise ShapeMismatch("one label per embedding is required")
    gated = np.ones(tgt.shape[0], dtype=bool) if target_mask is None else np.asarray(target_mask, dtype=bool)
    dist = pairwise_distances(src, tgt, as_curvature(c).c)

    pairs: list[tuple[int, int]] = []
    fallback: list[bool] = []
    for i in range(src.shape[0]):
        candidates = np.flatnonzero(gated & (y_tgt == y_src[i]))
        if candidates.size:
            j = int(candidates[np.argmin(dist[i, candidates])])
            fallback.append(False)
        else:
            j = int(np.argmin(dist[i]))
            fallback.append(True)
        pairs.append((i, j))
    if any(fallback):
        LOGGER.debug("coupling: %d of %d sources fell back to global nearest neighbour", sum(fallback), len(pairs))
    return CouplingPlan(pairs=pairs, strategy="class_nearest_neighbor", fallback=fallback)


def geodesic_interpolant(z_s: ManifoldPoint, z_t: ManifoldPoint, t: float) -> ManifoldPoint:
    _check_pair(z_s, z_t, t)
    if t == 0.0:
        return z_s
    coords = kernels.geodesic(z_s.coords, z_t.coords, t, z_s.c)
    return ManifoldPoint(np.asarray(coords), z_s.curvature)


def target_field(z_s: ManifoldPoint, z_t: ManifoldPoint, t: float) -> TangentVector:
    """u_t = P_{z_S -> z_t}(Log_{z_S}(z_T)) based at the interpolant."""
    _check_pair(z_s, z_t, t)
    c = z_s.c
    v0 = kernels.logmap(z_s.coords, z_t.coords, c)
    point = geodesic_interpolant(z_s, z_t, t)
    return TangentVector(point, np.asarray(kernels.transport(z_s.coords, point.coords, v0, c)))


def _check_pair(z_s: ManifoldPoint, z_t: ManifoldPoint, t: float) -> None:
    if z_s.curvature != z_t.curvature:
        raise DomainViolation("source and target embeddings live on different curvatures")
    if not 0.0 <= t <= 1.0:
        raise DomainViolation(f"time must lie in [0, 1], got {t}")
    check_domain(z_s)
    check_domain(z_t)


@dataclass(frozen=True)
class FlowSample:
    z_s: ManifoldPoint
    z_t_end: ManifoldPoint
    t: float
    z_t: ManifoldPoint
    u_t: TangentVector


@dataclass(frozen=True)
class FlowBatch:
    """Row-stacked flow samples: interpolants z_t and transported targets u_t."""

    source: np.ndarray
    target: np.ndarray
    t: np.ndarray
    points: np.ndarray
    velocities: np.ndarray
    c: float

    def __len__(self) -> int:
        return int(self.t.shape[0])

    def sample(self, index: int) -> FlowSample:
        point = ManifoldPoint(self.points[index], self.c)
        return FlowSample(
            z_s=ManifoldPoint(self.source[index], self.c),
            z_t_end=ManifoldPoint(self.target[index], self.c),
            t=float(self.t[index]),
            z_t=point,
            u_t=TangentVector(point, self.velocities[index]),
        )


def make_flow_batch(source: np.ndarray, target: np.ndarray, t: np.ndarray | Sequence[float], c: float) -> FlowBatch:
    src, tgt = _rows(source), _rows(target)
    times = np.asarray(t, dtype=np.float64).reshape(-1)
    if src.shape != tgt.shape or times.shape[0] != src.shape[0]:
        raise ShapeMismatch(f"flow batch shapes: source {src.shape}, target {tgt.shape}, t {times.shape}")
    if times.size == 0:
        raise EmptyBatch("flow batch needs at least one pair")
    if (times < 0).any() or (times > 1).any():
        raise DomainViolation("flow times must lie in [0, 1]")
    v0 = np.asarray(kernels.logmap(src, tgt, c))
    points = np.asarray(kernels.expmap(src, times[:, None] * v0, c))
    points = np.where(times[:, None] == 0.0, src, points)
    velocities = np.asarray(kernels.transport(src, points, v0, c))
    return FlowBatch(src, tgt, times, points, velocities, c)


def sample_flow_batch(
    source: np.ndarray, target: np.ndarray, plan: CouplingPlan, rng: np.random.Generator, c: float
) -> FlowBatch:
    """One uniform t per coupled pair."""
    src, tgt = _rows(source), _rows(target)
    times = rng.uniform(0.0, 1.0, size=len(plan.pairs))
    return make_flow_batch(src[plan.sources], tgt[plan.targets], times, c)


def flow_matching_objective(
    params: VectorFieldParams,
    source: ad.Tensor | np.ndarray,
    target: ad.Tensor | np.ndarray,
    t: np.ndarray,
    c: float,
) -> ad.Tensor:
    """Mean of lambda_{z_t}^2 |v_theta(z_t, t) - u_t|^2 built from differentiable inputs.

    Gradients reach ``source``/``target`` when they are tensors requiring grad,
    which is how the encoder is trained through this term.
    """
    times = np.asarray(t, dtype=np.float64).reshape(-1, 1)
    if times.shape[0] == 0:
        raise EmptyBatch("flow matching over an empty batch")
    v0 = kernels.logmap(source, target, c)
    points = kernels.expmap(source, times * v0, c)
    velocities = kernels.transport(source, points, v0, c)
    residual = vector_field_forward(params, points, times) - velocities
    lam = kernels.conformal_factor(points, c)
    return ad.mean(lam * lam * kernels.rowsum(residual * residual))


def fm_loss_tensor(params: VectorFieldParams, samples: FlowBatch) -> ad.Tensor:
    if len(samples) == 0:
        raise EmptyBatch("flow matching over an empty batch")
    residual = vector_field_forward(params, samples.points, samples.t) - samples.velocities
    lam = np.asarray(kernels.conformal_factor(samples.points, samples.c))
    return ad.mean(lam * lam * kernels.rowsum(residual * residual))


def fm_loss(params: VectorFieldParams, samples: FlowBatch) -> float:
    return fm_loss_tensor(params, samples).item()


@dataclass(frozen=True)
class FieldFit:
    params: VectorFieldParams
    loss: float
    steps: int
    converged: bool


def fit_vector_field(
    params: VectorFieldParams,
    source: np.ndarray,
    target: np.ndarray,
    c: float,
    *,
    grid: int = 16,
    lr: float = 3e-3,
    final_lr: float = 3e-5,
    tolerance: float = 2e-4,
    max_steps: int = 20000,
) -> FieldFit:
    """Full-batch Adam on fixed pairs over a uniform time grid until fm_loss < ``tolerance``.

    Pair i is source[i] -> target[i]. The step size decays geometrically from
    ``lr`` to ``final_lr`` over ``max_steps``.
    """
    if grid < 2 or max_steps < 1 or tolerance <= 0:
        raise ValueError("grid must be >= 2, max_steps >= 1 and tolerance positive")
    src, tgt = _rows(source), _rows(target)
    if src.shape != tgt.shape:
        raise ShapeMismatch(f"pair shapes differ: {src.shape} vs {tgt.shape}")
    times = np.tile(np.linspace(0.0, 1.0, grid), src.shape[0])
    batch = make_flow_batch(np.repeat(src, grid, axis=0), np.repeat(tgt, grid, axis=0), times, c)
    decay = (final_lr / lr) ** (1.0 / max_steps)
    state = AdamState()
    tensors = params.parameters()
    loss = float("inf")
    for step in range(max_steps):
        current = VectorFieldParams.from_parameters(tensors)
        leaves = current.parameters()
        objective = fm_loss_tensor(current, batch)
        loss = objective.item()
        if loss < tolerance:
            LOGGER.debug("fit_vector_field: converged after %d steps, loss=%.3g", step, loss)
            return FieldFit(current, loss, step, True)
        grads = ad.backward(objective, wrt=leaves.values())
        tensors = adam_step(leaves, {name: grads[t] for name, t in leaves.items()}, state, lr * decay**step)
    fitted = VectorFieldParams.from_parameters(tensors)
    loss = fm_loss(fitted, batch)
    LOGGER.warning("fit_vector_field: loss %.3g after %d steps, tolerance %.3g", loss, max_steps, tolerance)
    return FieldFit(fitted, loss, max_steps, loss < tolerance)


# ---------------------------------------------------------------------------
# inference-time transport


@dataclass(frozen=True)
class Trajectory:
    points: np.ndarray  # (steps + 1, batch, dim)
    times: np.ndarray  # (steps + 1,)

    @property
    def endpoints(self) -> np.ndarray:
        return self.points[-1]


def conditional_field(target: np.ndarray, c: float) -> FieldFn:
    """Log_z(z_T) / (1 - t): equals the transported velocity on the geodesic to z_T."""
    goal = _rows(np.atleast_2d(target))

    def field(z: np.ndarray, t: float) -> np.ndarray:
        if t >= 1.0:
            return np.zeros_like(z)
        return np.asarray(kernels.logmap(z, goal, c)) / (1.0 - t)

    return field


def learned_field(params: VectorFieldParams) -> FieldFn:
    def field(z: np.ndarray, t: float) -> np.ndarray:
        return vector_field_forward(params, z, np.full(z.shape[0], t)).data

    return field


def transport_integrate(
    field: VectorFieldParams | FieldFn,
    start: np.ndarray | ManifoldPoint,
    steps: int,
    c: float | None = None,
) -> Trajectory:
    """Manifold Euler: z_{k+1} = Exp_{z_k}(v(z_k, t_k) / N) on t in [0, 1]."""
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    if isinstance(start, ManifoldPoint):
        check_domain(start)
        c = start.c if c is None else c
        z = start.coords[None, :].copy()
    else:
        z = _rows(np.atleast_2d(start)).copy()
    if c is None:
        raise ValueError("curvature is required when starting from raw coordinates")
    fn = learned_field(field) if isinstance(field, VectorFieldParams) else field
    h = 1.0 / steps
    times = np.linspace(0.0, 1.0, steps + 1)
    points = [z]
    for k in range(steps):
        with np.errstate(all="ignore"):
            z = np.asarray(kernels.expmap(z, h * fn(z, float(times[k])), c))
        if not np.all(np.isfinite(z)) or (c < 0 and (-c * np.sum(z * z, axis=1) >= 1.0).any()):
            raise DomainViolation(
                f"trajectory left the manifold at step {k + 1}",
                partial=Trajectory(np.stack(points), times[: len(points)]),
            )
        points.append(z)
    return Trajectory(np.stack(points), times)


def write_trajectory_csv(path: str | Path, trajectory: Trajectory, sample: int = 0) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    dim = trajectory.points.shape[2]
    with target.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "t", *(f"coord_{i}" for i in range(dim))])
        for step, (t, point) in enumerate(zip(trajectory.times, trajectory.points[:, sample], strict=True)):
            writer.writerow([step, repr(float(t)), *(repr(float(x)) for x in point)])
    return target


__all__ = [
    "FieldFit",
    "FlowBatch",
    "FlowSample",
    "Trajectory",
    "conditional_field",
    "couple",
    "fit_vector_field",
    "flow_matching_objective",
    "fm_loss",
    "fm_loss_tensor",
    "geodesic_interpolant",
    "learned_field",
    "make_flow_batch",
    "pairwise_distances",
    "sample_flow_batch",
    "target_field",
    "transport_integrate",
    "write_trajectory_csv",
]
