"""Polar split of origin tangents into structural radius and semantic direction.

Also hosts the capacity and volume-growth quantities used by ``geom-check``:
ball volumes by quadrature of the warped shell area, the hyperbolic growth
constant, and the Riemannian gradient in the polar frame.
"""
from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.special import gamma

from . import trig
from .errors import DegenerateRadius, DomainViolation, InvalidCurvature, ShapeMismatch
from .manifold import CurvatureLike, as_curvature
from .schemas import VolumeRow

QUAD_RTOL = 1e-8
QUAD_LIMIT = 1 << 20
MIN_RADIUS = 1e-9


@dataclass(frozen=True, eq=False)
class PolarCoords:
    radius: float
    direction: np.ndarray
    degenerate: bool = False

    @property
    def dim(self) -> int:
        return int(self.direction.shape[0])

    def reconstruct(self) -> np.ndarray:
        return self.radius * self.direction


def polar_decompose(v: np.ndarray) -> PolarCoords:
    vec = np.asarray(v, dtype=np.float64)
    if vec.ndim != 1 or vec.size == 0:
        raise ShapeMismatch(f"expected a non-empty vector, got shape {vec.shape}")
    radius = float(np.linalg.norm(vec))
    if radius == 0.0:
        direction = np.zeros_like(vec)
        direction[0] = 1.0
        return PolarCoords(0.0, direction, degenerate=True)
    return PolarCoords(radius, vec / radius)


def radial_weight(v: np.ndarray) -> float:
    """alpha = exp(-|v|): large-radius, sample-specific embeddings count less."""
    return math.exp(-float(np.linalg.norm(np.asarray(v, dtype=np.float64))))


def sphere_area(d: int) -> float:
    """Omega_{d-1}: area of the unit (d-1)-sphere in R^d."""
    return 2.0 * math.pi ** (d / 2.0) / gamma(d / 2.0)


def warp(r: float, c: CurvatureLike) -> float:
    return float(trig.warp(r, as_curvature(c).c))


def angular_capacity(r: float, c: CurvatureLike, d: int) -> float:
    k = as_curvature(c).c
    if k >= 0:
        raise InvalidCurvature(f"angular capacity needs c < 0, got {k}")
    if d < 2:
        raise ShapeMismatch(f"angular capacity needs d >= 2, got {d}")
    if r < 0:
        raise DomainViolation(f"radius must be non-negative, got {r}")
    return math.sinh(math.sqrt(-k) * r) ** (d - 1)


def shell_area(r: float, c: CurvatureLike, d: int) -> float:
    """Omega_{d-1} S_c(r)^(d-1), the derivative of :func:`ball_volume` in R."""
    return sphere_area(d) * warp(r, c) ** (d - 1)


def ball_volume(radius: float, c: CurvatureLike, d: int) -> float:
    k = as_curvature(c).c
    if radius < 0:
        raise DomainViolation(f"radius must be non-negative, got {radius}")
    if k > 0 and radius > math.pi / math.sqrt(k) * (1 + 1e-12):
        raise DomainViolation(f"R={radius} exceeds the diameter pi/sqrt(c) of the sphere")
    if radius == 0.0:
        return 0.0
    if abs(k) < 1e-12:
        return sphere_area(d) * radius**d / d
    value, _ = integrate.quad(
        lambda r: float(trig.warp(r, k)) ** (d - 1), 0.0, radius, epsrel=QUAD_RTOL, epsabs=0.0, limit=QUAD_LIMIT
    )
    return sphere_area(d) * value


def sphere_total_volume(c: CurvatureLike, d: int) -> float:
    """Omega_d / c^(d/2): volume of the whole curvature-c d-sphere."""
    k = as_curvature(c).c
    if k <= 0:
        raise InvalidCurvature(f"total volume is finite only for c > 0, got {k}")
    omega_d = 2.0 * math.pi ** ((d + 1) / 2.0) / gamma((d + 1) / 2.0)
    return omega_d / k ** (d / 2.0)


def hyperbolic_volume_constant(c: CurvatureLike, d: int) -> float:
    """Limit of Vol(B(R)) / exp((d-1) sqrt|c| R) as R grows."""
    k = as_curvature(c).c
    if k >= 0:
        raise InvalidCurvature(f"growth constant needs c < 0, got {k}")
    if d < 2:
        raise ShapeMismatch(f"growth constant needs d >= 2, got {d}")
    return sphere_area(d) / ((d - 1) * abs(k) ** (d / 2.0) * 2.0 ** (d - 1))


def growth_normalizer(radius: float, c: CurvatureLike, d: int) -> float:
    """Reference growth law per curvature class: exponential, polynomial or total volume."""
    k = as_curvature(c).c
    if k < -1e-12:
        return math.exp((d - 1) * math.sqrt(-k) * radius)
    if k > 1e-12:
        return sphere_total_volume(k, d)
    return radius**d


def volume_growth_table(c: CurvatureLike, d: int, radii: Sequence[float]) -> list[VolumeRow]:
    k = as_curvature(c).c
    rows = []
    for radius in radii:
        volume = ball_volume(radius, k, d)
        norm = growth_normalizer(radius, k, d)
        ratio = volume / norm if norm else 0.0
        rows.append(VolumeRow(curvature=k, dim=d, radius=radius, volume=volume, normalized=ratio))
    return rows


def warped_metric(point: PolarCoords, c: CurvatureLike) -> np.ndarray:
    """Polar-frame metric u u^T + S_c(r)^2 (I - u u^T) in ambient coordinates."""
    u = point.direction
    s = warp(point.radius, c)
    radial = np.outer(u, u)
    return radial + s**2 * (np.eye(point.dim) - radial)


def polar_metric_inner(point: PolarCoords, a: np.ndarray, b: np.ndarray, c: CurvatureLike) -> float:
    return float(np.asarray(a) @ warped_metric(point, c) @ np.asarray(b))


def metric_gradient_split(
    x_polar: PolarCoords, euclidean_grad: np.ndarray, c: CurvatureLike
) -> tuple[float, np.ndarray]:
    """Riemannian gradient in the polar frame.

    ``euclidean_grad`` is the differential in the orthonormal polar chart: its
    component along the direction is dL/dr, the orthogonal remainder is the
    angular differential. The inverse warped metric leaves the radial part as is
    and divides the angular part by S_c(r)^2.
    """
    if x_polar.degenerate or x_polar.radius < MIN_RADIUS:
        raise DegenerateRadius(f"radius {x_polar.radius:.3g} too small for a polar frame")
    grad = np.asarray(euclidean_grad, dtype=np.float64)
    if grad.shape != x_polar.direction.shape:
        raise ShapeMismatch(f"gradient shape {grad.shape} vs direction {x_polar.direction.shape}")
    u = x_polar.direction
    radial = float(grad @ u)
    angular = (grad - radial * u) / warp(x_polar.radius, c) ** 2
    return radial, angular


__all__ = [
    "PolarCoords",
    "angular_capacity",
    "ball_volume",
    "growth_normalizer",
    "hyperbolic_volume_constant",
    "metric_gradient_split",
    "polar_decompose",
    "polar_metric_inner",
    "radial_weight",
    "shell_area",
    "sphere_area",
    "sphere_total_volume",
    "volume_growth_table",
    "warp",
    "warped_metric",
]
