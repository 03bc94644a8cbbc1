"""Stability lab: minimax Jacobian spectra, Euler flow simulation and Lyapunov monitoring.

The adversarial side is a bilinear game L(theta, phi) = theta^T K phi whose
Jacobian at equilibrium is [[eps H_theta, K], [-K^T, eps H_phi]]. With eps = 0
the spectrum is purely imaginary (plus/minus i times the singular values of K).
The cooperative side is plain gradient flow on the flow-matching regression
loss, for which the loss is a Lyapunov function.
"""
from __future__ import annotations

import csv
import logging
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import hessenberg

from . import autodiff as ad
from .errors import ConvergenceFailure, DomainViolation, EmptyLog, NonFinite, ShapeMismatch
from .flow import FlowBatch, fm_loss_tensor, make_flow_batch
from .nn import VectorFieldParams, flatten_parameters, unflatten_parameters
from .schemas import GradNormStats, LyapunovReport, SpectrumReport

LOGGER = logging.getLogger(__name__)

MAX_EIGEN_DIM = 64
MAX_QR_ITERATIONS = 10_000
EXCEPTIONAL_SHIFT_EVERY = 11
MAX_JACOBI_SWEEPS = 60

# x -> (velocity, loss)
ParameterField = Callable[[np.ndarray], tuple[np.ndarray, float]]


@dataclass(frozen=True)
class GameState:
    theta: np.ndarray
    phi: np.ndarray
    interaction: np.ndarray  # K: (len(theta), len(phi))

    def __post_init__(self) -> None:
        theta = np.asarray(self.theta, dtype=np.float64).reshape(-1)
        phi = np.asarray(self.phi, dtype=np.float64).reshape(-1)
        k = np.atleast_2d(np.asarray(self.interaction, dtype=np.float64))
        if k.shape != (theta.size, phi.size):
            raise ShapeMismatch(f"interaction {k.shape} does not match theta {theta.size} x phi {phi.size}")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "interaction", k)

    @classmethod
    def at_equilibrium(cls, interaction: np.ndarray) -> GameState:
        k = np.atleast_2d(np.asarray(interaction, dtype=np.float64))
        return cls(np.zeros(k.shape[0]), np.zeros(k.shape[1]), k)

    @property
    def omega(self) -> np.ndarray:
        return np.concatenate([self.theta, self.phi])


def minimax_jacobian(
    state: GameState,
    self_curvature_scale: float = 0.0,
    h_theta: np.ndarray | None = None,
    h_phi: np.ndarray | None = None,
) -> np.ndarray:
    """J = [[eps H_theta, K], [-K^T, eps H_phi]]; the self blocks default to identity."""
    n, m = state.interaction.shape
    h_t = np.eye(n) if h_theta is None else np.asarray(h_theta, dtype=np.float64)
    h_p = np.eye(m) if h_phi is None else np.asarray(h_phi, dtype=np.float64)
    if h_t.shape != (n, n) or h_p.shape != (m, m):
        raise ShapeMismatch(f"self-interaction blocks {h_t.shape}/{h_p.shape} for a {n}x{m} game")
    eps = float(self_curvature_scale)
    return np.block([[eps * h_t, state.interaction], [-state.interaction.T, eps * h_p]])


# ---------------------------------------------------------------------------
# eigenvalues: Hessenberg reduction, then complex single-shift QR with Givens rotations


def _wilkinson_shift(block: np.ndarray) -> complex:
    a, b, c, d = block[-2, -2], block[-2, -1], block[-1, -2], block[-1, -1]
    half_trace = 0.5 * (a + d)
    disc = np.sqrt(np.complex128(half_trace * half_trace - (a * d - b * c)))
    mu1, mu2 = half_trace + disc, half_trace - disc
    return complex(mu1 if abs(mu1 - d) <= abs(mu2 - d) else mu2)


def _qr_sweep(block: np.ndarray, shift: complex) -> None:
    """One shifted QR step R Q + mu I on an unreduced Hessenberg block, in place."""
    size = block.shape[0]
    block[np.diag_indices(size)] -= shift
    rotations = []
    for k in range(size - 1):
        x, y = block[k, k], block[k + 1, k]
        r = math.hypot(abs(x), abs(y))
        cos, sin = (1.0 + 0j, 0j) if r == 0.0 else (x / r, y / r)
        g = np.array([[np.conj(cos), np.conj(sin)], [-sin, cos]])
        block[k : k + 2, k:] = g @ block[k : k + 2, k:]
        rotations.append(g)
    for k, g in enumerate(rotations):
        rows = min(k + 3, size)
        block[:rows, k : k + 2] = block[:rows, k : k + 2] @ g.conj().T
    block[np.diag_indices(size)] += shift


def _pair_conjugates(values: np.ndarray, tol: float) -> np.ndarray:
    out = values.copy()
    near_real = np.abs(out.imag) <= tol
    out[near_real] = out[near_real].real
    upper = [i for i in np.argsort(-out.imag) if out[i].imag > tol]
    lower = {i for i in range(out.size) if out[i].imag < -tol}
    for i in upper:
        if not lower:
            break
        j = min(lower, key=lambda k: abs(out[k] - np.conj(out[i])))
        lower.discard(j)
        re = 0.5 * (out[i].real + out[j].real)
        im = 0.5 * (out[i].imag - out[j].imag)
        out[i], out[j] = complex(re, im), complex(re, -im)
    return out


def eigenvalues(matrix: np.ndarray) -> np.ndarray:
    a = np.asarray(matrix, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeMismatch(f"eigenvalues need a square matrix, got {a.shape}")
    n = a.shape[0]
    if n > MAX_EIGEN_DIM:
        raise ShapeMismatch(f"eigen solver is limited to n <= {MAX_EIGEN_DIM}, got {n}")
    if not np.all(np.isfinite(a)):
        raise NonFinite("matrix has non-finite entries")
    if n == 0:
        return np.zeros(0, dtype=np.complex128)

    h = hessenberg(a).astype(np.complex128)
    anorm = float(np.abs(a).sum()) or 1.0
    eps = np.finfo(np.float64).eps
    found: list[complex] = []
    hi = n - 1
    total = 0
    since_deflation = 0
    while hi >= 0:
        lo = hi
        while lo > 0:
            scale = abs(h[lo, lo]) + abs(h[lo - 1, lo - 1]) or anorm
            if abs(h[lo, lo - 1]) <= eps * scale:
                h[lo, lo - 1] = 0.0
                break
            lo -= 1
        if lo == hi:
            found.append(complex(h[hi, hi]))
            hi -= 1
            since_deflation = 0
            continue
        total += 1
        if total > MAX_QR_ITERATIONS:
            raise ConvergenceFailure(f"QR iteration did not converge in {MAX_QR_ITERATIONS} steps ({len(found)}/{n})")
        block = h[lo : hi + 1, lo : hi + 1]
        since_deflation += 1
        if since_deflation % EXCEPTIONAL_SHIFT_EVERY == 0:
            shift = complex(block[-1, -1]) + 0.75 * abs(block[-1, -2]) * (1.0 + 1.0j)
        else:
            shift = _wilkinson_shift(block)
        _qr_sweep(block, shift)
    values = np.array(found, dtype=np.complex128)
    return _pair_conjugates(values, tol=1e-10 * max(1.0, anorm))


def eigen_spectrum(matrix: np.ndarray) -> SpectrumReport:
    values = sorted(eigenvalues(matrix), key=lambda z: (z.real, z.imag))
    real = [float(z.real) for z in values]
    imag = [float(z.imag) for z in values]
    return SpectrumReport(
        real=real,
        imag=imag,
        max_abs_real_part=max((abs(x) for x in real), default=0.0),
        any_nonzero_imag=any(x != 0.0 for x in imag),
    )


def singular_values_jacobi(matrix: np.ndarray, tol: float = 1e-13) -> np.ndarray:
    """One-sided Jacobi (Hestenes) SVD; singular values in descending order."""
    a = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
    work = (a if a.shape[0] >= a.shape[1] else a.T).copy()
    cols = work.shape[1]
    for _ in range(MAX_JACOBI_SWEEPS):
        off = 0.0
        for p in range(cols - 1):
            for q in range(p + 1, cols):
                alpha = float(work[:, p] @ work[:, p])
                beta = float(work[:, q] @ work[:, q])
                gamma = float(work[:, p] @ work[:, q])
                if alpha == 0.0 or beta == 0.0:
                    continue
                coupling = abs(gamma) / math.sqrt(alpha * beta)
                if coupling <= tol:
                    continue
                off = max(off, coupling)
                zeta = (beta - alpha) / (2.0 * gamma)
                t = math.copysign(1.0, zeta) / (abs(zeta) + math.sqrt(1.0 + zeta * zeta))
                cos = 1.0 / math.sqrt(1.0 + t * t)
                sin = cos * t
                col_p = work[:, p].copy()
                work[:, p] = cos * col_p - sin * work[:, q]
                work[:, q] = sin * col_p + cos * work[:, q]
        if off <= tol:
            return np.sort(np.linalg.norm(work, axis=0))[::-1]
    raise ConvergenceFailure(f"Jacobi SVD did not converge in {MAX_JACOBI_SWEEPS} sweeps")


# ---------------------------------------------------------------------------
# flow simulation


@dataclass(frozen=True)
class FlowSimulation:
    states: np.ndarray  # (steps + 1, dim)
    losses: np.ndarray  # (steps + 1,)
    field_norms: np.ndarray  # (steps + 1,)
    dt: float

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.losses.size)


def simulate_flow(field: ParameterField, x0: np.ndarray | Sequence[float], dt: float, steps: int) -> FlowSimulation:
    """Explicit Euler x_{k+1} = x_k + dt f(x_k), recording L and |f| at every visited state."""
    if dt <= 0:
        raise DomainViolation(f"dt must be positive, got {dt}")
    if steps < 0:
        raise DomainViolation(f"steps must be non-negative, got {steps}")
    x = np.asarray(x0, dtype=np.float64).reshape(-1).copy()
    states, losses, norms = [], [], []
    for k in range(steps + 1):
        velocity, loss = field(x)
        velocity = np.asarray(velocity, dtype=np.float64)
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(velocity)) and math.isfinite(loss)):
            partial = FlowSimulation(np.array(states), np.array(losses), np.array(norms), dt)
            raise NonFinite(f"flow simulation became non-finite at step {k}", partial=partial)
        states.append(x)
        losses.append(float(loss))
        norms.append(float(np.linalg.norm(velocity)))
        if k < steps:
            x = x + dt * velocity
    return FlowSimulation(np.array(states), np.array(losses), np.array(norms), dt)


def quadratic_bowl_field() -> ParameterField:
    """Gradient flow on L = |x|^2 / 2."""

    def field(x: np.ndarray) -> tuple[np.ndarray, float]:
        return -x, 0.5 * float(x @ x)

    return field


def bilinear_game_field(interaction: np.ndarray | None = None, timescale: float = 1.0) -> ParameterField:
    """Simultaneous gradient descent-ascent on L = theta^T K phi.

    The state is [theta, phi]; theta descends and phi ascends ``timescale``
    times faster. K defaults to [[1]].
    """
    k = np.eye(1) if interaction is None else np.atleast_2d(np.asarray(interaction, dtype=np.float64))
    n = k.shape[0]

    def field(x: np.ndarray) -> tuple[np.ndarray, float]:
        if x.size != n + k.shape[1]:
            raise ShapeMismatch(f"state of size {x.size} for a {k.shape} game")
        theta, phi = x[:n], x[n:]
        return np.concatenate([-(k @ phi), timescale * (k.T @ theta)]), float(theta @ k @ phi)

    return field


@dataclass(frozen=True)
class RegressionProblem:
    field: ParameterField
    x0: np.ndarray
    layout: list[tuple[str, tuple[int, ...]]]
    samples: FlowBatch


def fm_regression_problem(
    dim: int = 2, n_pairs: int = 32, hidden: Sequence[int] = (16,), c: float = -1.0, seed: int = 0
) -> RegressionProblem:
    """Gradient flow of the flow-matching loss over the flattened vector-field weights, on fixed samples."""
    rng = np.random.default_rng(seed)

    def points() -> np.ndarray:
        direction = rng.normal(size=(n_pairs, dim))
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        return direction * rng.uniform(0.05, 0.5, size=(n_pairs, 1))

    samples = make_flow_batch(points(), points(), rng.uniform(0.0, 1.0, size=n_pairs), c)
    params = VectorFieldParams.init(dim, hidden=hidden, seed=seed)
    x0, layout = flatten_parameters(params.parameters())

    def field(x: np.ndarray) -> tuple[np.ndarray, float]:
        current = VectorFieldParams.from_parameters(unflatten_parameters(x, layout))
        named = current.parameters()
        loss = fm_loss_tensor(current, samples)
        grads = ad.backward(loss, wrt=named.values())
        flat, _ = flatten_parameters({name: grads[tensor] for name, tensor in named.items()})
        return -flat, loss.item()

    return RegressionProblem(field, x0, layout, samples)


def field_jacobian(field: ParameterField, x: np.ndarray, step: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian of the velocity at ``x``."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    columns = []
    for i in range(x.size):
        offset = np.zeros_like(x)
        offset[i] = step
        columns.append((field(x + offset)[0] - field(x - offset)[0]) / (2.0 * step))
    return np.stack(columns, axis=1)


# ---------------------------------------------------------------------------
# monitors


def detect_oscillation(losses: Sequence[float] | np.ndarray, min_sign_changes: int = 2) -> bool:
    """True when the loss increments change sign at least ``min_sign_changes`` times."""
    values = np.asarray(losses, dtype=np.float64)
    if values.size < 3:
        return False
    diffs = np.diff(values)
    atol = 1e-12 * max(1.0, float(np.max(np.abs(values))))
    signs = np.sign(diffs[np.abs(diffs) > atol])
    return int(np.count_nonzero(signs[1:] != signs[:-1])) >= min_sign_changes


def lyapunov_monitor(
    losses: Sequence[float] | np.ndarray,
    grad_norms: Sequence[float] | np.ndarray,
    dt: float,
    lipschitz: float = 1.0,
) -> LyapunovReport:
    """Flag loss increases above 10 dt^2 max|grad L| lipschitz and report dL/dt + |grad L|^2."""
    values = np.asarray(losses, dtype=np.float64)
    norms = np.asarray(grad_norms, dtype=np.float64)
    if values.size < 2:
        return LyapunovReport(monotone=True)
    if norms.size < values.size - 1:
        raise ShapeMismatch(f"{norms.size} gradient norms for {values.size} losses")
    increments = np.diff(values)
    tolerance = 10.0 * dt * dt * float(np.max(norms)) * lipschitz
    residuals = increments / dt + norms[: increments.size] ** 2
    violations = [int(k) for k in np.flatnonzero(increments > tolerance)]
    return LyapunovReport(
        monotone=not violations,
        violations=violations,
        residuals=residuals.tolist(),
        max_residual=float(np.max(np.abs(residuals))),
        tolerance=tolerance,
        oscillating=detect_oscillation(values),
    )


def grad_norm_stats(norms: Sequence[float] | np.ndarray) -> GradNormStats:
    values = np.asarray(norms, dtype=np.float64).reshape(-1)
    if values.size == 0:
        raise EmptyLog("gradient-norm statistics over an empty log")
    return GradNormStats(mean=float(values.mean()), variance=float(values.var()), count=int(values.size))


def compare_gradient_variance(
    seed: int = 0, steps: int = 4000, dt: float = 0.005, timescale: float = 4.0
) -> tuple[GradNormStats, GradNormStats]:
    """Gradient-norm statistics of a flow-matching run and a matched adversarial run.

    The adversarial start is scaled so both runs begin with the same field norm.
    """
    problem = fm_regression_problem(seed=seed)
    fm_run = simulate_flow(problem.field, problem.x0, dt, steps)
    game = bilinear_game_field(timescale=timescale)
    unit = np.array([1.0, 0.0])
    start = unit * fm_run.field_norms[0] / np.linalg.norm(game(unit)[0])
    adv_run = simulate_flow(game, start, dt, steps)
    fm_stats, adv_stats = grad_norm_stats(fm_run.field_norms), grad_norm_stats(adv_run.field_norms)
    LOGGER.info("gradient-norm variance: flow-matching=%.4g adversarial=%.4g", fm_stats.variance, adv_stats.variance)
    return fm_stats, adv_stats


# ---------------------------------------------------------------------------
# reports


def write_spectrum_csv(path: str | Path, report: SpectrumReport) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    with target.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "real", "imag"])
        for i, (re, im) in enumerate(zip(report.real, report.imag, strict=True)):
            writer.writerow([i, repr(re), repr(im)])
    return target


def write_trajectory_csv(path: str | Path, run: FlowSimulation) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    dim = run.states.shape[1] if run.states.ndim == 2 else 0
    with target.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "t", "loss", "field_norm", *(f"x_{i}" for i in range(dim))])
        for step, (t, loss, norm, state) in enumerate(
            zip(run.times, run.losses, run.field_norms, run.states, strict=True)
        ):
            values = [float(t), float(loss), float(norm), *(float(v) for v in state)]
            writer.writerow([step, *(repr(v) for v in values)])
    return target


__all__ = [
    "FlowSimulation",
    "GameState",
    "RegressionProblem",
    "bilinear_game_field",
    "compare_gradient_variance",
    "detect_oscillation",
    "eigen_spectrum",
    "eigenvalues",
    "field_jacobian",
    "fm_regression_problem",
    "grad_norm_stats",
    "lyapunov_monitor",
    "minimax_jacobian",
    "quadratic_bowl_field",
    "simulate_flow",
    "singular_values_jacobi",
    "write_spectrum_csv",
    "write_trajectory_csv",
]
