from __future__ import annotations

import math

import numpy as np
import pytest

from riemann_flow import autodiff as ad
from riemann_flow.errors import DomainViolation, ParseError, ShapeMismatch
from riemann_flow.manifold import ManifoldPoint
from riemann_flow.nn import (
    AdamState,
    ClassifierParams,
    VectorFieldParams,
    adam_step,
    flatten_parameters,
    global_grad_norm,
    load_checkpoint,
    save_checkpoint,
    unflatten_parameters,
    vector_field_eval,
    vector_field_forward,
)


def _field(**overrides) -> VectorFieldParams:
    base = dict(dim=3, hidden=(8, 8), seed=0)
    base.update(overrides)
    return VectorFieldParams.init(**base)


def test_zero_field_outputs_zero() -> None:
    params = _field(zero=True)
    z = ManifoldPoint(np.array([0.1, -0.2, 0.3]), -1.0)
    out = vector_field_eval(params, z, 0.4)
    assert np.array_equal(out.vec, np.zeros(3))
    assert out.base is z


def test_vector_field_eval_checks_domain_and_time() -> None:
    params = _field()
    with pytest.raises(DomainViolation):
        vector_field_eval(params, ManifoldPoint(np.array([1.0, 0.0, 0.0]), -1.0), 0.5)
    with pytest.raises(DomainViolation):
        vector_field_eval(params, ManifoldPoint(np.zeros(3), -1.0), 1.5)


def test_vector_field_forward_shapes() -> None:
    params = _field()
    out = vector_field_forward(params, np.zeros((5, 3)), np.linspace(0, 1, 5))
    assert out.shape == (5, 3)
    with pytest.raises(ShapeMismatch):
        vector_field_forward(params, np.zeros((5, 2)), np.zeros(5))


def test_last_layer_gradient_matches_finite_differences() -> None:
    params = _field(seed=3)
    rng = np.random.default_rng(3)
    z = 0.3 * rng.normal(size=(4, 3))
    t = rng.uniform(size=4)
    last = params.weights[-1]

    def value(w_last: np.ndarray) -> float:
        swapped = VectorFieldParams((*params.weights[:-1], ad.Tensor(w_last)), params.biases)
        out = vector_field_forward(swapped, z, t).data
        return float(np.sum(out * out))

    out = vector_field_forward(params, z, t)
    grad = ad.backward(ad.sum_(out * out), wrt=[last])[last]
    numeric = np.zeros_like(last.data)
    for idx in np.ndindex(last.shape):
        up = last.data.copy()
        down = last.data.copy()
        up[idx] += 1e-5
        down[idx] -= 1e-5
        numeric[idx] = (value(up) - value(down)) / 2e-5
    assert np.linalg.norm(grad - numeric) / np.linalg.norm(numeric) < 1e-5


def test_adam_zero_gradient_leaves_parameters() -> None:
    params = {"w": ad.Tensor(np.array([1.0, -2.0]), requires_grad=True)}
    out = adam_step(params, {"w": np.zeros(2)}, AdamState(), lr=0.1)
    np.testing.assert_array_equal(out["w"].data, [1.0, -2.0])


def test_adam_first_step_moves_by_lr() -> None:
    params = {"x": ad.Tensor(np.array(1.0), requires_grad=True)}
    state = AdamState()
    out = adam_step(params, {"x": np.array(1.0)}, state, lr=0.1)
    assert math.isclose(float(out["x"].data), 0.9, rel_tol=1e-6)
    assert state.step == 1


def test_adam_rejects_mismatched_gradient() -> None:
    params = {"w": ad.Tensor(np.zeros(3), requires_grad=True)}
    with pytest.raises(ShapeMismatch):
        adam_step(params, {"w": np.zeros(2)}, AdamState(), lr=0.1)


def test_adam_runs_are_bitwise_reproducible() -> None:
    def run() -> np.ndarray:
        rng = np.random.default_rng(11)
        params = {"w": ad.Tensor(rng.normal(size=(3, 3)), requires_grad=True)}
        state = AdamState(weight_decay=1e-12)
        for _ in range(100):
            w = params["w"]
            loss = ad.mean(ad.tanh_act(ad.matmul(w, w)))
            grads = ad.backward(loss, wrt=[w])
            params = adam_step(params, {"w": grads[w]}, state, lr=1e-2)
        return params["w"].data

    assert np.array_equal(run(), run())


def test_global_grad_norm() -> None:
    assert global_grad_norm({"a": np.array([3.0]), "b": np.array([[4.0]])}) == 5.0


def test_flatten_roundtrip_keeps_layout() -> None:
    params = _field().parameters()
    flat, layout = flatten_parameters(params)
    assert flat.size == sum(p.data.size for p in params.values())
    rebuilt = unflatten_parameters(flat, layout)
    for name, tensor in params.items():
        np.testing.assert_array_equal(rebuilt[name].data, tensor.data)
    with pytest.raises(ShapeMismatch):
        unflatten_parameters(np.zeros(flat.size + 1), layout)


def test_classifier_from_parameters() -> None:
    clf = ClassifierParams.init(dim=4, n_classes=3, seed=1)
    again = ClassifierParams.from_parameters(clf.parameters())
    assert again.n_classes == 3
    np.testing.assert_array_equal(again.weight.data, clf.weight.data)


def test_checkpoint_roundtrip(tmp_path) -> None:
    tensors = {"a.weight": np.arange(6.0).reshape(2, 3), "meta.curvature": np.array([-1.0])}
    path = save_checkpoint(tmp_path / "model.ckpt", tensors)
    loaded = load_checkpoint(path)
    assert list(loaded) == ["a.weight", "meta.curvature"]
    np.testing.assert_array_equal(loaded["a.weight"], tensors["a.weight"])


def test_checkpoint_bad_magic(tmp_path) -> None:
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"something else\n")
    with pytest.raises(ParseError) as excinfo:
        load_checkpoint(path)
    assert excinfo.value.line == 1


def test_checkpoint_truncated_payload(tmp_path) -> None:
    path = save_checkpoint(tmp_path / "model.ckpt", {"w": np.ones(4)})
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(ParseError):
        load_checkpoint(path)
