"""Curvature-dependent trigonometry for the stereographic model.

tan_c(x) = tanh(sqrt|c| x)/sqrt|c| for c < 0, tan(sqrt c x)/sqrt c for c > 0 and the
identity at c = 0. artan_c is its inverse.

The ``*_ratio_sq`` helpers evaluate tan_c(n)/n and artan_c(n)/n as functions of the
squared norm s = n**2. Written that way they are smooth at s = 0, which keeps
gradients of Exp/Log finite at the origin. Near zero a Taylor series is used.
"""
from __future__ import annotations

import numpy as np

SERIES_CUTOFF = 1e-4


def tan_c(x: np.ndarray | float, c: float) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if c < 0:
        k = np.sqrt(-c)
        return np.tanh(k * x) / k
    if c > 0:
        k = np.sqrt(c)
        return np.tan(k * x) / k
    return x.copy()


def artan_c(y: np.ndarray | float, c: float) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    if c < 0:
        k = np.sqrt(-c)
        return np.arctanh(k * y) / k
    if c > 0:
        k = np.sqrt(c)
        return np.arctan(k * y) / k
    return y.copy()


def _split(s: np.ndarray | float, c: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    s = np.asarray(s, dtype=np.float64)
    small = abs(c) * s < SERIES_CUTOFF
    # placeholder 1.0 keeps the direct branch away from 0/0 where the series is used
    x = np.sqrt(abs(c) * np.where(small, 1.0, s))
    return s, small, x


def tan_ratio_sq(s: np.ndarray | float, c: float) -> np.ndarray:
    """tan_c(sqrt s) / sqrt s."""
    s, small, x = _split(s, c)
    series = 1.0 + c * s / 3.0 + 2.0 * c**2 * s**2 / 15.0 + 17.0 * c**3 * s**3 / 315.0
    if c < 0:
        direct = np.tanh(x) / x
    elif c > 0:
        direct = np.tan(x) / x
    else:
        return np.ones_like(s)
    return np.where(small, series, direct)


def tan_ratio_sq_grad(s: np.ndarray | float, c: float) -> np.ndarray:
    """Derivative of :func:`tan_ratio_sq` with respect to s."""
    s, small, x = _split(s, c)
    series = c / 3.0 + 4.0 * c**2 * s / 15.0 + 17.0 * c**3 * s**2 / 105.0
    if c < 0:
        direct = -c * (x / np.cosh(x) ** 2 - np.tanh(x)) / (2.0 * x**3)
    elif c > 0:
        direct = c * (x / np.cos(x) ** 2 - np.tan(x)) / (2.0 * x**3)
    else:
        return np.zeros_like(s)
    return np.where(small, series, direct)


def artan_ratio_sq(s: np.ndarray | float, c: float) -> np.ndarray:
    """artan_c(sqrt s) / sqrt s."""
    s, small, x = _split(s, c)
    series = 1.0 - c * s / 3.0 + c**2 * s**2 / 5.0 - c**3 * s**3 / 7.0
    if c < 0:
        direct = np.arctanh(x) / x
    elif c > 0:
        direct = np.arctan(x) / x
    else:
        return np.ones_like(s)
    return np.where(small, series, direct)


def artan_ratio_sq_grad(s: np.ndarray | float, c: float) -> np.ndarray:
    """Derivative of :func:`artan_ratio_sq` with respect to s."""
    s, small, x = _split(s, c)
    series = -c / 3.0 + 2.0 * c**2 * s / 5.0 - 3.0 * c**3 * s**2 / 7.0
    if c < 0:
        direct = -c * (x / (1.0 - x**2) - np.arctanh(x)) / (2.0 * x**3)
    elif c > 0:
        direct = c * (x / (1.0 + x**2) - np.arctan(x)) / (2.0 * x**3)
    else:
        return np.zeros_like(s)
    return np.where(small, series, direct)


def warp(r: np.ndarray | float, c: float) -> np.ndarray:
    """Radial warping S_c(r) of the polar metric dr^2 + S_c(r)^2 dTheta^2."""
    r = np.asarray(r, dtype=np.float64)
    if c < 0:
        k = np.sqrt(-c)
        return np.sinh(k * r) / k
    if c > 0:
        k = np.sqrt(c)
        return np.sin(k * r) / k
    return r.copy()


__all__ = [
    "SERIES_CUTOFF",
    "artan_c",
    "artan_ratio_sq",
    "artan_ratio_sq_grad",
    "tan_c",
    "tan_ratio_sq",
    "tan_ratio_sq_grad",
    "warp",
]
