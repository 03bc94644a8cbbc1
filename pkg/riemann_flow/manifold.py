"""Constant-curvature stereographic manifold with validated point/tangent types.

The heavy lifting lives in :mod:`riemann_flow.kernels`; this module wraps it with
domain checks so misuse surfaces as :class:`DomainViolation` or
:class:`BaseMismatch` rather than a silent NaN.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from . import kernels, trig
from .errors import BaseMismatch, DomainViolation, InvalidCurvature, ShapeMismatch

EUCLIDEAN_TOLERANCE = 1e-12

SignClass = Literal["hyperbolic", "euclidean", "spherical"]


@dataclass(frozen=True)
class Curvature:
    c: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.c):
            raise InvalidCurvature(f"curvature must be finite, got {self.c!r}")
        object.__setattr__(self, "c", float(self.c))

    @property
    def sign_class(self) -> SignClass:
        if abs(self.c) < EUCLIDEAN_TOLERANCE:
            return "euclidean"
        return "hyperbolic" if self.c < 0 else "spherical"


CurvatureLike = Curvature | float


def as_curvature(c: CurvatureLike) -> Curvature:
    return c if isinstance(c, Curvature) else Curvature(float(c))


def _frozen(values: object) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    if arr.ndim != 1:
        raise ShapeMismatch(f"expected a vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainViolation("coordinates must be finite")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class ManifoldPoint:
    coords: np.ndarray
    curvature: Curvature

    def __post_init__(self) -> None:
        object.__setattr__(self, "coords", _frozen(self.coords))
        object.__setattr__(self, "curvature", as_curvature(self.curvature))

    @classmethod
    def origin(cls, dim: int, c: CurvatureLike) -> ManifoldPoint:
        return cls(np.zeros(dim), as_curvature(c))

    @property
    def dim(self) -> int:
        return int(self.coords.shape[0])

    @property
    def c(self) -> float:
        return self.curvature.c

    def same_as(self, other: ManifoldPoint) -> bool:
        return self.curvature == other.curvature and np.array_equal(self.coords, other.coords)


@dataclass(frozen=True, eq=False)
class TangentVector:
    base: ManifoldPoint
    vec: np.ndarray

    def __post_init__(self) -> None:
        vec = _frozen(self.vec)
        if vec.shape != self.base.coords.shape:
            raise ShapeMismatch(f"tangent of dim {vec.shape[0]} at a point of dim {self.base.dim}")
        object.__setattr__(self, "vec", vec)


def check_domain(x: ManifoldPoint) -> None:
    """Ball condition -c|x|^2 < 1."""
    value = -x.c * float(x.coords @ x.coords)
    if value >= 1.0:
        raise DomainViolation(f"point outside the ball: -c|x|^2={value:.6g}")


def _same_curvature(x: ManifoldPoint, y: ManifoldPoint) -> Curvature:
    if x.curvature != y.curvature:
        raise InvalidCurvature(f"curvature mismatch: {x.c} vs {y.c}")
    if x.dim != y.dim:
        raise ShapeMismatch(f"dimension mismatch: {x.dim} vs {y.dim}")
    return x.curvature


def _require_base(v: TangentVector, x: ManifoldPoint) -> None:
    if not v.base.same_as(x):
        raise BaseMismatch("tangent vector is based at a different point")


def _injectivity_check(norm: float, c: float) -> None:
    if c > 0 and math.sqrt(c) * norm >= math.pi / 2:
        raise DomainViolation(f"tangent norm {norm:.6g} beyond the injectivity radius for c={c}")


def _point(coords: np.ndarray, curvature: Curvature) -> ManifoldPoint:
    if not np.all(np.isfinite(coords)):
        raise DomainViolation("operation left the manifold (non-finite result)")
    return ManifoldPoint(coords, curvature)


def conformal_factor(x: ManifoldPoint) -> float:
    check_domain(x)
    return float(kernels.conformal_factor(x.coords, x.c)[0])


def tan_c(x: float, c: CurvatureLike) -> float:
    k = as_curvature(c).c
    if k > 0 and math.sqrt(k) * abs(x) >= math.pi / 2:
        raise DomainViolation(f"tan_c undefined at x={x} for c={k}")
    return float(trig.tan_c(x, k))


def tan_c_inv(y: float, c: CurvatureLike) -> float:
    k = as_curvature(c).c
    if k < 0 and math.sqrt(-k) * abs(y) >= 1.0:
        raise DomainViolation(f"tan_c_inv undefined at y={y} for c={k}")
    return float(trig.artan_c(y, k))


def exp_origin(v: np.ndarray, c: CurvatureLike) -> ManifoldPoint:
    curvature = as_curvature(c)
    vec = _frozen(v)
    _injectivity_check(float(np.linalg.norm(vec)), curvature.c)
    return _point(kernels.expmap0(vec, curvature.c), curvature)


def log_origin(y: ManifoldPoint) -> np.ndarray:
    check_domain(y)
    if float(np.linalg.norm(y.coords)) < kernels.MIN_NORM:
        return np.zeros(y.dim)
    return np.asarray(kernels.logmap0(y.coords, y.c))


def project(x: ManifoldPoint) -> ManifoldPoint:
    return ManifoldPoint(kernels.project(np.asarray(x.coords), x.c), x.curvature)


def mobius_neg(x: ManifoldPoint) -> ManifoldPoint:
    return ManifoldPoint(-x.coords, x.curvature)


def mobius_add(x: ManifoldPoint, y: ManifoldPoint) -> ManifoldPoint:
    curvature = _same_curvature(x, y)
    check_domain(x)
    check_domain(y)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = kernels.mobius_add(x.coords, y.coords, curvature.c)
    return _point(out, curvature)


def mobius_scalar_mul(r: float, x: ManifoldPoint) -> ManifoldPoint:
    check_domain(x)
    return exp_origin(r * log_origin(x), x.curvature)


def gyration(u: ManifoldPoint, v: ManifoldPoint, w: np.ndarray) -> np.ndarray:
    curvature = _same_curvature(u, v)
    return np.asarray(kernels.gyration(u.coords, v.coords, np.asarray(w, dtype=np.float64), curvature.c))


def exp_at(x: ManifoldPoint, v: TangentVector) -> ManifoldPoint:
    _require_base(v, x)
    check_domain(x)
    lam = conformal_factor(x)
    _injectivity_check(lam * float(np.linalg.norm(v.vec)) / 2.0, x.c)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = kernels.expmap(x.coords, v.vec, x.c)
    return _point(out, x.curvature)


def log_at(x: ManifoldPoint, y: ManifoldPoint) -> TangentVector:
    curvature = _same_curvature(x, y)
    check_domain(x)
    check_domain(y)
    vec = np.asarray(kernels.logmap(x.coords, y.coords, curvature.c))
    if float(np.linalg.norm(vec)) < kernels.MIN_NORM:
        vec = np.zeros(x.dim)
    return TangentVector(x, vec)


def metric_inner(x: ManifoldPoint, u: TangentVector, w: TangentVector) -> float:
    _require_base(u, x)
    _require_base(w, x)
    lam = conformal_factor(x)
    return lam**2 * float(u.vec @ w.vec)


def metric_norm(x: ManifoldPoint, u: TangentVector) -> float:
    _require_base(u, x)
    return conformal_factor(x) * float(np.linalg.norm(u.vec))


def geodesic_distance(x: ManifoldPoint, y: ManifoldPoint) -> float:
    curvature = _same_curvature(x, y)
    check_domain(x)
    check_domain(y)
    return float(kernels.distance(x.coords, y.coords, curvature.c))


def geodesic(x: ManifoldPoint, y: ManifoldPoint, t: float) -> ManifoldPoint:
    """gamma(t) = Exp_x(t Log_x(y)); gamma(0) = x and gamma(1) = y exactly."""
    if t == 0.0:
        return x
    if t == 1.0:
        _same_curvature(x, y)
        return y
    return exp_at(x, TangentVector(x, t * log_at(x, y).vec))


def parallel_transport(src: ManifoldPoint, dst: ManifoldPoint, v: TangentVector) -> TangentVector:
    _require_base(v, src)
    curvature = _same_curvature(src, dst)
    check_domain(src)
    check_domain(dst)
    if src.same_as(dst):
        return TangentVector(dst, v.vec)
    return TangentVector(dst, np.asarray(kernels.transport(src.coords, dst.coords, v.vec, curvature.c)))


__all__ = [
    "Curvature",
    "CurvatureLike",
    "ManifoldPoint",
    "TangentVector",
    "as_curvature",
    "check_domain",
    "conformal_factor",
    "exp_at",
    "exp_origin",
    "geodesic",
    "geodesic_distance",
    "gyration",
    "log_at",
    "log_origin",
    "metric_inner",
    "metric_norm",
    "mobius_add",
    "mobius_neg",
    "mobius_scalar_mul",
    "parallel_transport",
    "project",
]
