from __future__ import annotations

import math

import numpy as np
import pytest

from riemann_flow import kernels
from riemann_flow.errors import BaseMismatch, DomainViolation, InvalidCurvature, ShapeMismatch
from riemann_flow.manifold import (
    Curvature,
    ManifoldPoint,
    TangentVector,
    conformal_factor,
    exp_at,
    exp_origin,
    geodesic,
    geodesic_distance,
    log_at,
    log_origin,
    metric_inner,
    metric_norm,
    mobius_add,
    parallel_transport,
    tan_c,
    tan_c_inv,
)


def _point(*coords: float, c: float = -1.0) -> ManifoldPoint:
    return ManifoldPoint(np.array(coords), Curvature(c))


def _random_points(rng: np.random.Generator, n: int, d: int, c: float) -> list[ManifoldPoint]:
    reach = 0.8 / math.sqrt(-c) if c < 0 else 1.0
    out = []
    for _ in range(n):
        v = rng.normal(size=d)
        v *= rng.uniform(0.0, reach) / np.linalg.norm(v)
        out.append(ManifoldPoint(v, Curvature(c)))
    return out


def test_curvature_sign_class() -> None:
    assert Curvature(-1.0).sign_class == "hyperbolic"
    assert Curvature(0.0).sign_class == "euclidean"
    assert Curvature(1e-13).sign_class == "euclidean"
    assert Curvature(0.5).sign_class == "spherical"


def test_non_finite_curvature_rejected() -> None:
    with pytest.raises(InvalidCurvature):
        Curvature(float("nan"))


def test_point_outside_ball_rejected() -> None:
    with pytest.raises(DomainViolation):
        conformal_factor(_point(1.0, 0.0))


def test_conformal_factor_examples() -> None:
    assert math.isclose(conformal_factor(_point(0.0, 0.0)), 2.0)
    assert math.isclose(conformal_factor(_point(5.0, 7.0, c=0.0)), 2.0)
    assert math.isclose(conformal_factor(_point(0.6, 0.0)), 3.125)


def test_tan_c_and_inverse() -> None:
    assert math.isclose(tan_c(1.0, -1.0), 0.761594, abs_tol=1e-6)
    assert math.isclose(tan_c(0.3, 0.0), 0.3)
    assert math.isclose(tan_c(0.3, 1.0), math.tan(0.3))
    assert math.isclose(tan_c_inv(tan_c(0.7, -1.0), -1.0), 0.7, rel_tol=1e-12)
    with pytest.raises(DomainViolation):
        tan_c(2.0, 1.0)
    with pytest.raises(DomainViolation):
        tan_c_inv(1.0, -1.0)


def test_exp_and_log_at_origin() -> None:
    flat = exp_origin(np.array([1.0, 2.0]), 0.0)
    np.testing.assert_allclose(flat.coords, [1.0, 2.0])

    y = exp_origin(np.array([1.0, 0.0]), -1.0)
    np.testing.assert_allclose(y.coords, [math.tanh(1.0), 0.0], atol=1e-12)
    np.testing.assert_allclose(log_origin(y), [1.0, 0.0], atol=1e-9)

    assert np.array_equal(log_origin(ManifoldPoint.origin(3, -1.0)), np.zeros(3))


def test_exp_origin_beyond_injectivity_radius() -> None:
    with pytest.raises(DomainViolation):
        exp_origin(np.array([2.0, 0.0]), 1.0)


def test_mobius_add_euclidean_is_vector_sum() -> None:
    out = mobius_add(_point(1.0, 1.0, c=0.0), _point(2.0, 3.0, c=0.0))
    np.testing.assert_allclose(out.coords, [3.0, 4.0])


def test_mobius_add_curvature_mismatch() -> None:
    with pytest.raises(InvalidCurvature):
        mobius_add(_point(0.1, 0.0), _point(0.1, 0.0, c=-2.0))


def test_distance_is_additive_along_radial_ray() -> None:
    a = exp_origin(np.array([0.2, 0.0]), -1.0)
    b = exp_origin(np.array([0.9, 0.0]), -1.0)
    o = ManifoldPoint.origin(2, -1.0)
    total = geodesic_distance(o, b)
    assert math.isclose(geodesic_distance(o, a) + geodesic_distance(a, b), total, rel_tol=1e-12)
    assert math.isclose(total, 1.8, rel_tol=1e-12)


def test_distance_example() -> None:
    o = ManifoldPoint.origin(2, -1.0)
    assert math.isclose(geodesic_distance(o, _point(math.tanh(0.5), 0.0)), 1.0, rel_tol=1e-12)


def test_exp_at_euclidean() -> None:
    x = _point(1.0, 0.0, c=0.0)
    out = exp_at(x, TangentVector(x, np.array([0.0, 2.0])))
    np.testing.assert_allclose(out.coords, [1.0, 2.0])


def test_exp_log_roundtrip_random_points() -> None:
    rng = np.random.default_rng(7)
    for c in (-1.0, -0.3, 0.0):
        points = _random_points(rng, 40, 3, c)
        for x, y in zip(points[::2], points[1::2], strict=True):
            v = log_at(x, y)
            np.testing.assert_allclose(exp_at(x, v).coords, y.coords, atol=1e-8)


def test_tangent_base_mismatch() -> None:
    x = _point(0.1, 0.2)
    y = _point(0.2, 0.1)
    with pytest.raises(BaseMismatch):
        exp_at(y, TangentVector(x, np.array([0.1, 0.0])))


def test_tangent_dimension_checked() -> None:
    with pytest.raises(ShapeMismatch):
        TangentVector(_point(0.1, 0.2), np.array([1.0, 0.0, 0.0]))


def test_metric_inner_examples() -> None:
    o = _point(0.0, 0.0)
    e1 = TangentVector(o, np.array([1.0, 0.0]))
    assert math.isclose(metric_inner(o, e1, e1), 4.0)
    x = _point(0.6, 0.0)
    u = TangentVector(x, np.array([1.0, 0.0]))
    assert math.isclose(metric_inner(x, u, u), 9.765625)


def test_geodesic_endpoints_are_exact() -> None:
    x = _point(0.1, -0.4)
    y = _point(0.5, 0.2)
    assert geodesic(x, y, 0.0) is x
    assert geodesic(x, y, 1.0) is y
    mid = geodesic(x, y, 0.5)
    assert math.isclose(geodesic_distance(x, mid), geodesic_distance(mid, y), rel_tol=1e-9)


def test_parallel_transport_from_origin_example() -> None:
    o = _point(0.0, 0.0)
    dst = _point(0.6, 0.0)
    moved = parallel_transport(o, dst, TangentVector(o, np.array([1.0, 0.0])))
    np.testing.assert_allclose(moved.vec, [0.64, 0.0], atol=1e-12)
    assert math.isclose(metric_norm(dst, moved), 2.0, rel_tol=1e-12)


def test_parallel_transport_preserves_metric_norm() -> None:
    rng = np.random.default_rng(3)
    points = _random_points(rng, 20, 4, -1.0)
    for src, dst in zip(points[::2], points[1::2], strict=True):
        v = TangentVector(src, rng.normal(size=4))
        moved = parallel_transport(src, dst, v)
        assert math.isclose(metric_norm(dst, moved), metric_norm(src, v), rel_tol=1e-9)


def test_kernels_accept_batches() -> None:
    x = np.array([[0.1, 0.2], [0.0, 0.0]])
    y = np.array([[0.3, -0.1], [0.5, 0.0]])
    d = kernels.distance(x, y, -1.0)
    assert d.shape == (2,)
    assert math.isclose(float(d[1]), 2.0 * math.atanh(0.5), rel_tol=1e-12)
