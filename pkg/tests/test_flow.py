from __future__ import annotations

import csv
import math

import numpy as np
import pytest

from riemann_flow import autodiff as ad
from riemann_flow import kernels
from riemann_flow.errors import DomainViolation, EmptyBatch, ShapeMismatch
from riemann_flow.flow import (
    conditional_field,
    couple,
    fit_vector_field,
    flow_matching_objective,
    fm_loss,
    fm_loss_tensor,
    geodesic_interpolant,
    make_flow_batch,
    pairwise_distances,
    sample_flow_batch,
    target_field,
    transport_integrate,
    write_trajectory_csv,
)
from riemann_flow.manifold import ManifoldPoint, TangentVector, geodesic_distance, metric_norm
from riemann_flow.nn import VectorFieldParams, vector_field_eval


def _ball_points(rng: np.random.Generator, n: int, d: int, reach: float = 0.6) -> np.ndarray:
    v = rng.normal(size=(n, d))
    return v / np.linalg.norm(v, axis=1, keepdims=True) * rng.uniform(0.05, reach, size=(n, 1))


def _constant_field(dim: int, bias: np.ndarray) -> VectorFieldParams:
    zero = VectorFieldParams.init(dim, hidden=(4,), zero=True)
    return VectorFieldParams(zero.weights, (zero.biases[0], ad.Tensor(bias, requires_grad=True)))


def test_couple_identity_when_batches_match() -> None:
    rng = np.random.default_rng(0)
    z = _ball_points(rng, 6, 3)
    labels = [0, 1, 0, 1, 2, 2]
    plan = couple(z, labels, z, labels, -1.0)
    assert plan.pairs == [(i, i) for i in range(6)]
    assert not any(plan.fallback)
    dist = pairwise_distances(z, z, -1.0)
    assert np.allclose(np.diag(dist), 0.0, atol=1e-7)


def test_couple_respects_classes_over_distance() -> None:
    source = np.array([[0.1, 0.0], [-0.1, 0.0]])
    target = np.array([[-0.5, 0.0], [0.5, 0.0]])
    plan = couple(source, [0, 1], target, [1, 0], -1.0)
    assert plan.pairs == [(0, 1), (1, 0)]


def test_couple_matches_exhaustive_search() -> None:
    rng = np.random.default_rng(5)
    source, target = _ball_points(rng, 5, 3), _ball_points(rng, 5, 3)
    y_s, y_t = [0, 1, 1, 0, 1], [1, 0, 1, 1, 0]
    plan = couple(source, y_s, target, y_t, -1.0)
    for i, j in plan.pairs:
        a = ManifoldPoint(source[i], -1.0)
        candidates = [k for k in range(5) if y_t[k] == y_s[i]]
        best = min(candidates, key=lambda k: geodesic_distance(a, ManifoldPoint(target[k], -1.0)))
        assert j == best


def test_couple_falls_back_when_class_is_gated_out() -> None:
    source = np.array([[0.1, 0.0], [0.0, 0.2]])
    target = np.array([[0.3, 0.0], [0.0, 0.3], [-0.4, 0.0]])
    plan = couple(source, [0, 1], target, [0, 1, 1], -1.0, target_mask=[False, True, True])
    assert plan.fallback == [True, False]
    assert plan.pairs[0] == (0, 0)


def test_couple_errors() -> None:
    with pytest.raises(EmptyBatch):
        couple(np.zeros((0, 2)), [], np.zeros((2, 2)), [0, 1], -1.0)
    with pytest.raises(ShapeMismatch):
        couple(np.zeros((2, 2)), [0], np.zeros((2, 2)), [0, 1], -1.0)


def test_geodesic_interpolant_cases() -> None:
    z_s = ManifoldPoint(np.array([0.2, -0.1]), -1.0)
    z_t = ManifoldPoint(np.array([-0.3, 0.4]), -1.0)
    assert geodesic_interpolant(z_s, z_t, 0.0) is z_s
    mid = geodesic_interpolant(z_s, z_t, 0.5)
    assert math.isclose(geodesic_distance(z_s, mid), geodesic_distance(mid, z_t), rel_tol=1e-7)

    flat_a = ManifoldPoint(np.array([1.0, 2.0]), 0.0)
    flat_b = ManifoldPoint(np.array([3.0, 0.0]), 0.0)
    flat_mid = geodesic_interpolant(flat_a, flat_b, 0.5)
    np.testing.assert_allclose(flat_mid.coords, [2.0, 1.0])

    with pytest.raises(DomainViolation):
        geodesic_interpolant(z_s, z_t, 1.2)
    with pytest.raises(DomainViolation):
        geodesic_interpolant(z_s, ManifoldPoint(np.array([0.1, 0.0]), -2.0), 0.5)


def test_target_field_cases() -> None:
    a = ManifoldPoint(np.array([1.0, -1.0]), 0.0)
    b = ManifoldPoint(np.array([2.0, 3.0]), 0.0)
    for t in (0.0, 0.3, 1.0):
        np.testing.assert_allclose(target_field(a, b, t).vec, [1.0, 4.0])

    z = ManifoldPoint(np.array([0.3, 0.1]), -1.0)
    np.testing.assert_allclose(target_field(z, z, 0.6).vec, [0.0, 0.0], atol=1e-15)


def test_target_field_has_constant_speed() -> None:
    z_s = ManifoldPoint(np.array([0.4, 0.1]), -1.0)
    z_t = ManifoldPoint(np.array([-0.2, -0.5]), -1.0)
    speeds = []
    for t in (0.0, 0.25, 0.5, 0.9):
        u = target_field(z_s, z_t, t)
        speeds.append(metric_norm(u.base, u))
    np.testing.assert_allclose(speeds, geodesic_distance(z_s, z_t), rtol=1e-9)


def test_fm_loss_zero_network_single_sample() -> None:
    batch = make_flow_batch(np.zeros((1, 2)), np.array([[1.5, 0.0]]), [0.4], 0.0)
    params = VectorFieldParams.init(2, hidden=(4,), zero=True)
    assert math.isclose(fm_loss(params, batch), 9.0)


def test_fm_loss_vanishes_for_planted_field() -> None:
    rng = np.random.default_rng(1)
    source = rng.normal(size=(8, 2))
    shift = np.array([0.5, -1.0])
    batch = make_flow_batch(source, source + shift, rng.uniform(size=8), 0.0)
    assert fm_loss(_constant_field(2, shift), batch) < 1e-24


def test_fm_loss_matches_per_sample_oracle() -> None:
    rng = np.random.default_rng(2)
    source, target = _ball_points(rng, 10, 3), _ball_points(rng, 10, 3)
    batch = make_flow_batch(source, target, rng.uniform(size=10), -1.0)
    params = VectorFieldParams.init(3, hidden=(6,), seed=4)

    total = 0.0
    for i in range(len(batch)):
        z_s = ManifoldPoint(source[i], -1.0)
        z_t = ManifoldPoint(target[i], -1.0)
        u = target_field(z_s, z_t, float(batch.t[i]))
        v = vector_field_eval(params, u.base, float(batch.t[i]))
        residual = TangentVector(u.base, v.vec - u.vec)
        total += metric_norm(u.base, residual) ** 2
    assert math.isclose(fm_loss(params, batch), total / len(batch), rel_tol=1e-10)


def test_objective_agrees_with_sampled_batch() -> None:
    rng = np.random.default_rng(3)
    source, target = _ball_points(rng, 6, 2), _ball_points(rng, 6, 2)
    plan = couple(source, [0] * 6, target, [0] * 6, -1.0)
    batch = sample_flow_batch(source, target, plan, np.random.default_rng(9), -1.0)
    params = VectorFieldParams.init(2, hidden=(5,), seed=1)
    direct = flow_matching_objective(params, batch.source, batch.target, batch.t, -1.0).item()
    assert math.isclose(direct, fm_loss_tensor(params, batch).item(), rel_tol=1e-12)


def test_objective_gradient_reaches_embeddings() -> None:
    rng = np.random.default_rng(4)
    src = ad.Tensor(_ball_points(rng, 4, 2), requires_grad=True)
    tgt = ad.Tensor(_ball_points(rng, 4, 2), requires_grad=True)
    params = VectorFieldParams.init(2, hidden=(5,), seed=2)
    grads = ad.backward(flow_matching_objective(params, src, tgt, rng.uniform(size=4), -1.0), wrt=[src, tgt])
    assert np.linalg.norm(grads[src]) > 0.0
    assert np.linalg.norm(grads[tgt]) > 0.0


def test_make_flow_batch_validates() -> None:
    with pytest.raises(ShapeMismatch):
        make_flow_batch(np.zeros((2, 2)), np.zeros((3, 2)), [0.1, 0.2], -1.0)
    with pytest.raises(DomainViolation):
        make_flow_batch(np.zeros((1, 2)), np.zeros((1, 2)), [1.5], -1.0)
    with pytest.raises(EmptyBatch):
        make_flow_batch(np.zeros((0, 2)), np.zeros((0, 2)), [], -1.0)


def test_zero_field_gives_constant_trajectory() -> None:
    start = np.array([[0.1, 0.2], [-0.3, 0.0]])
    traj = transport_integrate(VectorFieldParams.init(2, hidden=(3,), zero=True), start, 7, c=-1.0)
    assert traj.points.shape == (8, 2, 2)
    for frame in traj.points:
        np.testing.assert_array_equal(frame, start)


def test_euclidean_conditional_field_is_exact() -> None:
    start, goal = np.array([[1.0, -2.0]]), np.array([[4.0, 2.0]])
    for steps in (1, 3, 10):
        traj = transport_integrate(conditional_field(goal, 0.0), start, steps, c=0.0)
        np.testing.assert_allclose(traj.endpoints, goal, atol=1e-12)


def test_hyperbolic_conditional_field_reaches_target() -> None:
    start = ManifoldPoint(np.array([0.5, -0.2]), -1.0)
    goal = np.array([[-0.4, 0.3]])
    traj = transport_integrate(conditional_field(goal, -1.0), start, 20)
    np.testing.assert_allclose(traj.endpoints, goal, atol=1e-9)
    assert traj.times[0] == 0.0 and traj.times[-1] == 1.0


def test_euler_endpoint_error_is_first_order() -> None:
    # conditional_field lands exactly on its last step, so the order is measured on a
    # constant coordinate field: its exact flow is z0 + t w, while each exp-map step
    # bends along a geodesic with an O(h^2) deviation.
    z0 = np.array([[0.1, 0.0]])
    w = np.array([[0.3, 0.2]])

    def field(z: np.ndarray, t: float) -> np.ndarray:
        return np.broadcast_to(w, z.shape)

    errors = []
    for steps in (100, 200):
        end = transport_integrate(field, z0, steps, c=-1.0).endpoints
        errors.append(float(np.linalg.norm(end - (z0 + w))))
    assert 1.7 <= errors[0] / errors[1] <= 2.3


def test_non_finite_step_aborts_with_partial_trajectory() -> None:
    def field(z: np.ndarray, t: float) -> np.ndarray:
        return np.full_like(z, np.nan) if t >= 0.5 else np.zeros_like(z)

    with pytest.raises(DomainViolation) as excinfo:
        transport_integrate(field, np.zeros((1, 2)), 4, c=-1.0)
    partial = excinfo.value.partial
    assert partial.points.shape[0] == 3
    np.testing.assert_allclose(partial.times, [0.0, 0.25, 0.5])


def test_transport_integrate_requires_curvature_and_steps() -> None:
    with pytest.raises(ValueError):
        transport_integrate(conditional_field(np.zeros((1, 2)), 0.0), np.zeros((1, 2)), 5)
    with pytest.raises(ValueError):
        transport_integrate(conditional_field(np.zeros((1, 2)), 0.0), np.zeros((1, 2)), 0, c=0.0)


def test_trajectory_csv(tmp_path) -> None:
    traj = transport_integrate(conditional_field(np.array([[1.0, 1.0]]), 0.0), np.zeros((1, 2)), 4, c=0.0)
    path = write_trajectory_csv(tmp_path / "traj.csv", traj)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["step", "t", "coord_0", "coord_1"]
    assert len(rows) == 6
    assert [float(x) for x in rows[-1][1:]] == pytest.approx([1.0, 1.0, 1.0])


@pytest.mark.slow
def test_trained_field_transports_sources_to_targets() -> None:
    rng = np.random.default_rng(0)
    c = -1.0
    # sources and targets keep the same vertical order so no two conditional paths cross
    rows = np.linspace(-0.25, 0.25, 10)
    source = np.column_stack([-0.4 + 0.02 * rng.normal(size=10), rows + 0.01 * rng.normal(size=10)])
    target = np.column_stack([0.4 + 0.02 * rng.normal(size=10), rows + 0.1 + 0.01 * rng.normal(size=10)])

    fit = fit_vector_field(VectorFieldParams.init(2, hidden=(32, 32), seed=0), source, target, c)
    assert fit.converged

    times = np.tile(np.linspace(0.0, 1.0, 8), 10)
    grid = make_flow_batch(np.repeat(source, 8, axis=0), np.repeat(target, 8, axis=0), times, c)
    assert fm_loss(fit.params, grid) < 1e-3

    ends = transport_integrate(fit.params, source, 100, c=c).endpoints
    distances = kernels.distance(ends, target, c)
    assert np.mean(distances < 0.1) >= 0.9


def test_fit_vector_field_stops_at_tolerance() -> None:
    source = np.array([[0.0, 0.0], [0.1, 0.0]])
    fit = fit_vector_field(VectorFieldParams.init(2, hidden=(4,), zero=True), source, source, -1.0, grid=4)
    assert fit.converged
    assert fit.steps == 0
    assert fit.loss == 0.0
    with pytest.raises(ShapeMismatch):
        fit_vector_field(fit.params, source, source[:1], -1.0)
