from __future__ import annotations

import itertools
import math

import numpy as np
import pytest

from riemann_flow import autodiff as ad
from riemann_flow.errors import BatchSizeMismatch, EmptyBatch, LabelOutOfRange
from riemann_flow.losses import (
    angular_gate,
    angular_loss,
    combine_objective,
    cosine_logits,
    radial_alignment,
    radial_wasserstein,
    task_loss,
    total_loss,
)
from riemann_flow.nn import ClassifierParams
from riemann_flow.schemas import AngularGateReport


def _classifier(weight: list[list[float]], bias: list[float] | None = None) -> ClassifierParams:
    w = np.asarray(weight, dtype=np.float64)
    b = np.zeros(w.shape[0]) if bias is None else np.asarray(bias, dtype=np.float64)
    return ClassifierParams(ad.Tensor(w, requires_grad=True), ad.Tensor(b, requires_grad=True))


def _report(**overrides) -> AngularGateReport:
    base = dict(confidence=[0.9], mask=[True], weight=[1.0], pseudo_label=[0], effective_count=1.0)
    base.update(overrides)
    return AngularGateReport(**base)


def test_task_loss_uniform_logits() -> None:
    clf = _classifier([[0.0, 0.0]] * 4)
    loss = task_loss(clf, np.ones((3, 2)), [0, 1, 3])
    assert math.isclose(loss.item(), math.log(4.0), rel_tol=1e-12)


def test_task_loss_scalar_example() -> None:
    clf = _classifier([[1.0, 0.0], [0.0, 1.0]])
    loss = task_loss(clf, np.array([[2.0, 0.0]]), [0])
    assert math.isclose(loss.item(), 0.126928, abs_tol=1e-6)


def test_task_loss_vanishes_for_confident_logits() -> None:
    clf = _classifier([[1.0, 0.0], [0.0, 1.0]])
    assert task_loss(clf, np.array([[60.0, 0.0]]), [0]).item() < 1e-20


def test_task_loss_label_out_of_range() -> None:
    clf = _classifier([[1.0, 0.0], [0.0, 1.0]])
    with pytest.raises(LabelOutOfRange):
        task_loss(clf, np.zeros((1, 2)), [2])


def test_radial_wasserstein_examples() -> None:
    assert radial_wasserstein([0.3, 1.2, 0.7], [1.2, 0.7, 0.3]) == 0.0
    assert radial_wasserstein([0.0, 1.0], [1.0, 2.0]) == 1.0
    assert radial_wasserstein([5.0], [2.0]) == 3.0


def test_radial_wasserstein_errors() -> None:
    with pytest.raises(BatchSizeMismatch):
        radial_wasserstein([1.0, 2.0], [1.0])
    with pytest.raises(EmptyBatch):
        radial_wasserstein([], [])


def test_radial_wasserstein_equals_best_assignment() -> None:
    rng = np.random.default_rng(0)
    for _ in range(200):
        n = int(rng.integers(1, 7))
        src = rng.exponential(size=n)
        tgt = rng.exponential(size=n)
        best = min(np.mean(np.abs(src - tgt[list(perm)])) for perm in itertools.permutations(range(n)))
        assert math.isclose(radial_wasserstein(src, tgt), best, rel_tol=1e-12, abs_tol=1e-15)


def test_radial_wasserstein_triangle_inequality() -> None:
    rng = np.random.default_rng(5)
    for _ in range(200):
        n = int(rng.integers(1, 9))
        a, b, c = (rng.exponential(scale=rng.uniform(0.2, 3.0), size=n) for _ in range(3))
        direct = radial_wasserstein(a, c)
        assert direct <= radial_wasserstein(a, b) + radial_wasserstein(b, c) + 1e-12
        assert math.isclose(radial_wasserstein(c, a), direct, rel_tol=1e-12, abs_tol=1e-15)


def test_radial_alignment_gradient_follows_sorted_pairs() -> None:
    src = ad.Tensor(np.array([2.0, 0.5]), requires_grad=True)
    grads = ad.backward(radial_alignment(src, ad.Tensor(np.array([1.0, 3.0]))), wrt=[src])
    # sorted pairs (0.5, 1.0) and (2.0, 3.0): both source radii sit below their partner
    np.testing.assert_allclose(grads[src], [-0.5, -0.5])


def test_angular_gate_examples() -> None:
    clf = _classifier([[1.0, 0.0], [-1.0, 0.0]])
    confident = angular_gate(clf, np.array([[math.atanh(0.8), 0.0]]), zeta=0.7)
    assert math.isclose(confident.confidence[0], 0.9, rel_tol=1e-12)
    assert confident.mask == [True]
    assert confident.pseudo_label == [0]

    uniform = angular_gate(clf, np.array([[0.0, 1.0]]), zeta=0.6)
    assert uniform.mask == [False]
    assert math.isclose(uniform.weight[0], math.exp(-1.0), rel_tol=1e-12)


def test_angular_gate_ignores_bias() -> None:
    clf = _classifier([[1.0, 0.0], [-1.0, 0.0]], bias=[-100.0, 100.0])
    report = angular_gate(clf, np.array([[2.0, 0.0]]), zeta=0.7)
    assert report.pseudo_label == [0]


def test_angular_gate_mask_shrinks_as_zeta_rises() -> None:
    rng = np.random.default_rng(3)
    clf = _classifier(rng.normal(size=(3, 4)).tolist())
    tangents = rng.normal(scale=1.5, size=(64, 4))
    reports = [angular_gate(clf, tangents, zeta=zeta) for zeta in (0.34, 0.45, 0.6, 0.75, 0.9, 0.99)]
    for looser, stricter in zip(reports[:-1], reports[1:], strict=True):
        assert all(kept <= was for kept, was in zip(stricter.mask, looser.mask, strict=True))
        assert stricter.gated_fraction <= looser.gated_fraction
        assert stricter.effective_count <= looser.effective_count
        assert stricter.pseudo_label == looser.pseudo_label
    assert reports[0].gated_fraction > reports[-1].gated_fraction


@pytest.mark.parametrize("polar_disentangle", [True, False])
def test_angular_loss_weight_gradient_matches_finite_differences(polar_disentangle: bool) -> None:
    rng = np.random.default_rng(8)
    clf = _classifier(rng.normal(size=(3, 4)).tolist(), bias=rng.normal(size=3).tolist())
    tangents = rng.normal(size=(5, 4))
    report = _report(
        confidence=[0.9] * 5,
        mask=[True, True, False, True, True],
        weight=np.exp(-np.linalg.norm(tangents, axis=1)).tolist(),
        pseudo_label=[0, 2, 1, 1, 0],
        effective_count=4.0,
    )

    def value(weight: np.ndarray) -> float:
        shifted = ClassifierParams(ad.Tensor(weight), clf.bias)
        return angular_loss(shifted, tangents, report, temperature=5.0, polar_disentangle=polar_disentangle).item()

    loss = angular_loss(clf, tangents, report, temperature=5.0, polar_disentangle=polar_disentangle)
    grads = ad.backward(loss, wrt=[clf.weight, clf.bias])
    np.testing.assert_array_equal(grads[clf.bias], 0.0)
    numeric = np.zeros_like(clf.weight.data)
    for idx in np.ndindex(*clf.weight.data.shape):
        up = clf.weight.data.copy()
        down = clf.weight.data.copy()
        up[idx] += 1e-5
        down[idx] -= 1e-5
        numeric[idx] = (value(up) - value(down)) / 2e-5
    assert np.linalg.norm(grads[clf.weight] - numeric) / np.linalg.norm(numeric) < 1e-4


def test_angular_loss_zero_when_nothing_gated() -> None:
    clf = _classifier([[1.0, 0.0], [-1.0, 0.0]])
    loss = angular_loss(clf, np.array([[1.0, 0.0]]), _report(mask=[False]))
    assert loss.item() == 0.0


def test_angular_loss_prototype_example() -> None:
    clf = _classifier([[1.0, 0.0], [-1.0, 0.0]])
    loss = angular_loss(clf, np.array([[0.4, 0.0]]), _report(), temperature=10.0, epsilon=1e-8)
    expected = math.log1p(math.exp(-20.0)) / (1.0 + 1e-8)
    assert math.isclose(loss.item(), expected, rel_tol=1e-6)
    assert math.isclose(loss.item(), 2.06e-9, rel_tol=1e-2)


def test_angular_loss_is_radius_invariant_without_weights() -> None:
    clf = _classifier([[1.0, 0.5], [-0.3, 1.0]])
    report = _report(confidence=[0.9, 0.9], mask=[True, True], weight=[1.0, 1.0], pseudo_label=[0, 1])
    small = angular_loss(clf, np.array([[0.1, 0.2], [0.3, -0.1]]), report).item()
    large = angular_loss(clf, np.array([[1.0, 2.0], [3.0, -1.0]]), report).item()
    assert math.isclose(small, large, rel_tol=1e-12)


def test_cosine_logits_are_bounded() -> None:
    clf = _classifier([[3.0, 4.0], [0.0, -2.0]])
    logits = cosine_logits(clf, np.array([[6.0, 8.0], [1.0, 0.0]])).data
    assert np.all(np.abs(logits) <= 1.0 + 1e-12)
    assert math.isclose(logits[0, 0], 1.0)


def test_angular_loss_batch_mismatch() -> None:
    clf = _classifier([[1.0, 0.0], [-1.0, 0.0]])
    with pytest.raises(BatchSizeMismatch):
        angular_loss(clf, np.ones((2, 2)), _report())


def test_total_loss_examples() -> None:
    assert total_loss((1.0, 2.0, 3.0, 4.0), 0.0, 0.0, 0.0).total == 1.0
    breakdown = total_loss((1.0, 2.0, 3.0, 4.0), 0.1, 0.1, 0.1)
    assert math.isclose(breakdown.total, 1.9)
    assert breakdown.lambdas == (0.1, 0.1, 0.1)


def test_combine_objective_matches_total_loss() -> None:
    parts = [ad.Tensor(x) for x in (0.7, 0.2, 0.4, 1.1)]
    combined = combine_objective(*parts, lambdas=(0.5, 0.25, 2.0)).item()
    assert math.isclose(combined, total_loss((0.7, 0.2, 0.4, 1.1), 0.5, 0.25, 2.0).total)
