"""Seeded invariant suites behind ``riemann-flow geom-check``.

Each suite draws its own cases from a seeded generator, measures the worst
error against the stated tolerance and returns one :class:`GeomCheckRow`.
"""
from __future__ import annotations

import csv
import logging
import math
from collections.abc import Callable, Sequence
from pathlib import Path

import numpy as np

from . import kernels, polar
from .dynamics import GameState, eigen_spectrum, minimax_jacobian, singular_values_jacobi
from .schemas import GeomCheckRow, VolumeRow

LOGGER = logging.getLogger(__name__)

DEFAULT_CASES = 1000
EUCLIDEAN_LIMIT = 1e-6
DEFAULT_RADII = (0.5, 1.0, 2.0, 4.0, 6.0, 8.0)


def _directions(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    raw = rng.normal(size=(n, d))
    return raw / np.linalg.norm(raw, axis=1, keepdims=True)


def sample_points(rng: np.random.Generator, n: int, d: int, c: float) -> np.ndarray:
    """Points well inside the chart: 80% of the ball radius for c < 0, half the unit scale otherwise."""
    if c < 0:
        reach = 0.8 / math.sqrt(-c)
    elif c > EUCLIDEAN_LIMIT:
        reach = 0.5 / math.sqrt(c)
    else:
        reach = 1.0
    return _directions(rng, n, d) * (reach * rng.uniform(0.0, 1.0, size=(n, 1)))


def _tangents(rng: np.random.Generator, n: int, d: int, max_norm: float) -> np.ndarray:
    return _directions(rng, n, d) * rng.uniform(0.0, max_norm, size=(n, 1))


def _row(suite: str, c: float, cases: int, error: float, tolerance: float) -> GeomCheckRow:
    return GeomCheckRow(
        suite=suite, curvature=c, cases=cases, max_error=error, tolerance=tolerance, passed=bool(error <= tolerance)
    )


def origin_roundtrip(c: float, d: int, cases: int = DEFAULT_CASES, seed: int = 0) -> GeomCheckRow:
    rng = np.random.default_rng(seed)
    cap = 2.0 if c <= 0 else min(2.0, 0.95 * math.pi / (2.0 * math.sqrt(c)))
    v = _tangents(rng, cases, d, cap)
    back = np.asarray(kernels.logmap0(kernels.expmap0(v, c), c))
    return _row("exp_log_origin", c, cases, float(np.max(np.abs(back - v))), 1e-8)


def point_roundtrip(c: float, d: int, cases: int = DEFAULT_CASES, seed: int = 0) -> GeomCheckRow:
    rng = np.random.default_rng(seed)
    x, y = sample_points(rng, cases, d, c), sample_points(rng, cases, d, c)
    back = np.asarray(kernels.expmap(x, kernels.logmap(x, y, c), c))
    return _row("exp_log_at", c, cases, float(np.max(np.abs(back - y))), 1e-8)


def geodesic_proportionality(c: float, d: int, cases: int = DEFAULT_CASES, seed: int = 0) -> GeomCheckRow:
    rng = np.random.default_rng(seed)
    x, y = sample_points(rng, cases, d, c), sample_points(rng, cases, d, c)
    full = np.asarray(kernels.distance(x, y, c))
    worst = 0.0
    for t in (0.25, 0.5, 0.75):
        partial = np.asarray(kernels.distance(x, np.asarray(kernels.geodesic(x, y, t, c)), c))
        worst = max(worst, float(np.max(np.abs(partial - t * full))))
    return _row("geodesic_proportionality", c, cases, worst, 1e-7)


def transport_isometry(c: float, d: int, cases: int = DEFAULT_CASES, seed: int = 0) -> GeomCheckRow:
    rng = np.random.default_rng(seed)
    x, y = sample_points(rng, cases, d, c), sample_points(rng, cases, d, c)
    v = rng.normal(size=(cases, d))
    moved = np.asarray(kernels.transport(x, y, v, c))
    before = np.asarray(kernels.conformal_factor(x, c))[:, 0] * np.linalg.norm(v, axis=1)
    after = np.asarray(kernels.conformal_factor(y, c))[:, 0] * np.linalg.norm(moved, axis=1)
    error = float(np.max(np.abs(after - before) / np.maximum(1.0, before)))
    return _row("transport_isometry", c, cases, error, 1e-9)


def triangle_inequality(c: float, d: int, cases: int = DEFAULT_CASES, seed: int = 0) -> GeomCheckRow:
    rng = np.random.default_rng(seed)
    x, y, z = (sample_points(rng, cases, d, c) for _ in range(3))
    excess = kernels.distance(x, z, c) - kernels.distance(x, y, c) - kernels.distance(y, z, c)
    return _row("triangle_inequality", c, cases, float(max(0.0, np.max(excess))), 1e-9)


def euclidean_limit(c: float, d: int, cases: int = DEFAULT_CASES, seed: int = 0) -> GeomCheckRow:
    """Against x + v, y - x, x + y and 2|x - y|; meaningful only for |c| <= 1e-6."""
    rng = np.random.default_rng(seed)
    x, y = sample_points(rng, cases, d, c), sample_points(rng, cases, d, c)

    def rel(got: np.ndarray, want: np.ndarray) -> float:
        scale = np.maximum(np.linalg.norm(want, axis=-1), 1e-3)
        return float(np.max(np.linalg.norm(got - want, axis=-1) / scale))

    errors = [
        rel(np.asarray(kernels.expmap(x, y, c)), x + y),
        rel(np.asarray(kernels.logmap(x, y, c)), y - x),
        rel(np.asarray(kernels.mobius_add(x, y, c)), x + y),
        rel(np.asarray(kernels.distance(x, y, c))[:, None], 2.0 * np.linalg.norm(x - y, axis=1, keepdims=True)),
    ]
    return _row("euclidean_limit", c, cases, max(errors), 1e-5)


def polar_orthogonality(c: float, d: int, cases: int = 500, seed: int = 0) -> GeomCheckRow:
    rng = np.random.default_rng(seed)
    reach = 3.0 if c <= 0 else min(3.0, 0.5 * math.pi / math.sqrt(c))
    worst = 0.0
    for v, grad in zip(_tangents(rng, cases, d, reach) + 1e-3, rng.normal(size=(cases, d)), strict=True):
        point = polar.polar_decompose(v)
        radial, angular = polar.metric_gradient_split(point, grad, c)
        worst = max(worst, abs(polar.polar_metric_inner(point, radial * point.direction, angular, c)))
    return _row("polar_orthogonality", c, cases, worst, 1e-10)


def capacity_scaling(c: float, d: int, cases: int = 200, seed: int = 0) -> GeomCheckRow:
    """angular_capacity equals sinh^(d-1)(sqrt|c| r) and increases with r (c < 0 only)."""
    rng = np.random.default_rng(seed)
    radii = np.sort(rng.uniform(0.0, 5.0, size=cases))
    values = np.array([polar.angular_capacity(float(r), c, d) for r in radii])
    exact = np.sinh(math.sqrt(-c) * radii) ** (d - 1)
    error = float(np.max(np.abs(values - exact) / np.maximum(1.0, exact)))
    increasing = bool(np.all(np.diff(values) > 0))
    return _row("capacity_scaling", c, cases, error if increasing else math.inf, 1e-10)


def volume_growth(c: float, d: int) -> GeomCheckRow:
    """Exponential, polynomial or bounded growth of ball volume depending on the sign of c."""
    if c < -EUCLIDEAN_LIMIT:
        ratios = [polar.ball_volume(r, c, d) / polar.growth_normalizer(r, c, d) for r in (6.0, 7.0, 8.0)]
        error = max(abs(b / a - 1.0) for a, b in zip(ratios[:-1], ratios[1:], strict=True))
        return _row("volume_growth_exponential", c, 2, error, 0.02)
    if c > EUCLIDEAN_LIMIT:
        total = polar.sphere_total_volume(c, d)
        radii = np.linspace(0.0, math.pi / math.sqrt(c), 9)
        excess = max(polar.ball_volume(float(r), c, d) - total for r in radii)
        return _row("volume_growth_bounded", c, radii.size, max(0.0, excess / total), 1e-8)
    radii = np.array([1.0, 100.0])
    volumes = np.array([polar.ball_volume(float(r), c, d) for r in radii])
    slope = float(np.diff(np.log(volumes))[0] / np.diff(np.log(radii))[0])
    return _row("volume_growth_polynomial", c, radii.size, abs(slope - d), 0.01)


def spectral_imaginary(cases: int = 100, max_size: int = 8, seed: int = 0) -> list[GeomCheckRow]:
    """Bilinear-game Jacobians at eps = 0: |Re| < 1e-8 and |Im| equal to the singular values of K.

    K is n x m with n, m <= ``max_size``; the |n - m| surplus eigenvalues are zero.
    """
    rng = np.random.default_rng(seed)
    worst_real = 0.0
    worst_imag = 0.0
    for _ in range(cases):
        n, m = (int(v) for v in rng.integers(1, max_size + 1, size=2))
        k = rng.normal(size=(n, m))
        report = eigen_spectrum(minimax_jacobian(GameState.at_equilibrium(k), 0.0))
        worst_real = max(worst_real, report.max_abs_real_part)
        imag = np.sort(np.abs(report.imag))[::-1]
        sigma = np.concatenate([np.repeat(singular_values_jacobi(k), 2), np.zeros(abs(n - m))])
        worst_imag = max(worst_imag, float(np.max(np.abs(imag - sigma))))
    return [
        _row("spectral_real_part", 0.0, cases, worst_real, 1e-8),
        _row("spectral_singular_values", 0.0, cases, worst_imag, 1e-6),
    ]


Suite = Callable[[float, int], GeomCheckRow]


def run_checks(c: float, d: int, cases: int = DEFAULT_CASES, seed: int = 0) -> list[GeomCheckRow]:
    suites: list[Suite] = [
        lambda k, n: origin_roundtrip(k, n, cases, seed),
        lambda k, n: point_roundtrip(k, n, cases, seed),
        lambda k, n: geodesic_proportionality(k, n, cases, seed),
        lambda k, n: transport_isometry(k, n, cases, seed),
        lambda k, n: triangle_inequality(k, n, cases, seed),
    ]
    if abs(c) <= EUCLIDEAN_LIMIT:
        suites.append(lambda k, n: euclidean_limit(k, n, cases, seed))
    if d >= 2:
        suites.append(lambda k, n: polar_orthogonality(k, n, seed=seed))
    if c < 0 and d >= 2:
        suites.append(lambda k, n: capacity_scaling(k, n, seed=seed))
    if d >= 2:
        suites.append(volume_growth)
    rows = [suite(c, d) for suite in suites]
    rows.extend(spectral_imaginary(seed=seed))
    for row in rows:
        LOGGER.log(
            logging.INFO if row.passed else logging.ERROR,
            "geom-check: %s c=%g cases=%d max_error=%.3g tol=%.1g",
            row.suite,
            row.curvature,
            row.cases,
            row.max_error,
            row.tolerance,
        )
    return rows


def write_check_csv(path: str | Path, rows: Sequence[GeomCheckRow]) -> Path:
    return _write_models(path, rows, list(GeomCheckRow.model_fields))


def write_volume_csv(path: str | Path, rows: Sequence[VolumeRow]) -> Path:
    return _write_models(path, rows, list(VolumeRow.model_fields))


def _write_models(path: str | Path, rows: Sequence[GeomCheckRow] | Sequence[VolumeRow], columns: list[str]) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    with target.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            values = row.model_dump()
            writer.writerow([repr(values[k]) if isinstance(values[k], float) else values[k] for k in columns])
    return target


__all__ = [
    "DEFAULT_RADII",
    "capacity_scaling",
    "euclidean_limit",
    "geodesic_proportionality",
    "origin_roundtrip",
    "point_roundtrip",
    "polar_orthogonality",
    "run_checks",
    "sample_points",
    "spectral_imaginary",
    "transport_isometry",
    "triangle_inequality",
    "volume_growth",
    "write_check_csv",
    "write_volume_csv",
]
