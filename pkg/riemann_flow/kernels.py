"""Row-wise gyrovector kernels for the curvature-c stereographic model.

Every function takes points/vectors stacked along the last axis and works on plain
numpy arrays as well as :class:`~riemann_flow.autodiff.Tensor` values, so the
reference geometry and the differentiable training path share one set of formulas.
``c`` is always a plain float.
"""
from __future__ import annotations

from typing import Any

import numpy as np

from . import autodiff as ad
from . import trig

BOUNDARY_EPS = 1e-7
MIN_NORM = 1e-12


def _is_tensor(*values: Any) -> bool:
    return any(isinstance(v, ad.Tensor) for v in values)


def rowsum(x: Any) -> Any:
    if isinstance(x, ad.Tensor):
        return ad.sum_(x, axis=-1, keepdims=True)
    return np.sum(x, axis=-1, keepdims=True)


def _tan_ratio(sq: Any, c: float) -> Any:
    return ad.tan_c_ratio(sq, c) if isinstance(sq, ad.Tensor) else trig.tan_ratio_sq(sq, c)


def _artan_ratio(sq: Any, c: float) -> Any:
    return ad.artan_c_ratio(sq, c) if isinstance(sq, ad.Tensor) else trig.artan_ratio_sq(sq, c)


def max_norm(c: float) -> float:
    """Largest admissible coordinate norm; infinite unless c < 0."""
    return (1.0 - BOUNDARY_EPS) / np.sqrt(-c) if c < 0 else float("inf")


def project(x: Any, c: float) -> Any:
    """Pull rows back inside the ball ||x|| <= (1 - 1e-7)/sqrt|c| (no-op for c >= 0)."""
    if c >= 0:
        return x
    bound = max_norm(c)
    if isinstance(x, ad.Tensor):
        return ad.clip_rows(x, bound)
    norm = np.sqrt(np.sum(x * x, axis=-1, keepdims=True))
    return np.where(norm > bound, x * (bound / np.where(norm > bound, norm, 1.0)), x)


def conformal_factor(x: Any, c: float) -> Any:
    return 2.0 / (1.0 + c * rowsum(x * x))


def expmap0(v: Any, c: float) -> Any:
    return project(_tan_ratio(rowsum(v * v), c) * v, c)


def logmap0(y: Any, c: float) -> Any:
    y = project(y, c)
    return _artan_ratio(rowsum(y * y), c) * y


def mobius_add(x: Any, y: Any, c: float) -> Any:
    xy = rowsum(x * y)
    x2 = rowsum(x * x)
    y2 = rowsum(y * y)
    num = (1.0 - 2.0 * c * xy - c * y2) * x + (1.0 + c * x2) * y
    den = 1.0 - 2.0 * c * xy + c**2 * x2 * y2
    return project(num / den, c)


def expmap(x: Any, u: Any, c: float) -> Any:
    # lambda_x / 2 = 1 / (1 + c|x|^2)
    half_lambda = 1.0 / (1.0 + c * rowsum(x * x))
    step = half_lambda * _tan_ratio(rowsum(u * u) * half_lambda * half_lambda, c) * u
    return mobius_add(x, project(step, c), c)


def logmap(x: Any, y: Any, c: float) -> Any:
    w = mobius_add(-x, y, c)
    return (1.0 + c * rowsum(x * x)) * _artan_ratio(rowsum(w * w), c) * w


def distance(x: np.ndarray, y: np.ndarray, c: float) -> np.ndarray:
    """Geodesic distance 2 artan_c(||(-x) + y||); trailing axis reduced."""
    w = mobius_add(-np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64), c)
    norm = np.sqrt(np.sum(w * w, axis=-1))
    return 2.0 * trig.artan_c(norm, c)


def gyration(u: Any, v: Any, w: Any, c: float) -> Any:
    """gyr[u, v] w in closed form."""
    u2 = rowsum(u * u)
    v2 = rowsum(v * v)
    uv = rowsum(u * v)
    uw = rowsum(u * w)
    vw = rowsum(v * w)
    c2 = c**2
    a = -c2 * uw * v2 - c * vw + 2.0 * c2 * uv * vw
    b = -c2 * vw * u2 + c * uw
    d = 1.0 - 2.0 * c * uv + c2 * u2 * v2
    return w + 2.0 * (a * u + b * v) / d


def transport(x: Any, y: Any, v: Any, c: float) -> Any:
    """Parallel transport of v from T_x to T_y along the joining geodesic.

    Transport through the origin, corrected by the gyration gyr[y, -x], then
    rescaled by lambda_x / lambda_y.
    """
    ratio = (1.0 + c * rowsum(y * y)) / (1.0 + c * rowsum(x * x))
    return gyration(y, -x, v, c) * ratio


def geodesic(x: Any, y: Any, t: Any, c: float) -> Any:
    return expmap(x, t * logmap(x, y, c), c)


def mobius_matvec(weight: Any, h: Any, c: float) -> Any:
    """Exp_0(W Log_0(h)) for row-stacked h and W of shape (d_out, d_in)."""
    tangent = logmap0(h, c)
    if _is_tensor(weight, tangent):
        mapped = ad.matmul(ad.as_tensor(tangent), ad.transpose(weight))
    else:
        mapped = np.asarray(tangent) @ np.asarray(weight).T
    return expmap0(mapped, c)


def mobius_scalar_mul(r: Any, x: Any, c: float) -> Any:
    return expmap0(r * logmap0(x, c), c)


__all__ = [
    "BOUNDARY_EPS",
    "MIN_NORM",
    "conformal_factor",
    "distance",
    "expmap",
    "expmap0",
    "geodesic",
    "gyration",
    "logmap",
    "logmap0",
    "max_norm",
    "mobius_add",
    "mobius_matvec",
    "mobius_scalar_mul",
    "project",
    "rowsum",
    "transport",
]
