"""Source task loss, radial Wasserstein alignment and gated angular clustering.

Each objective has a differentiable form over :class:`Tensor` inputs used by
training, and the scalar helpers (``radial_wasserstein``, ``total_loss``) return
plain floats.
"""
from __future__ import annotations

from collections.abc import Sequence

import numpy as np

from . import autodiff as ad
from .errors import BatchSizeMismatch, DomainViolation, EmptyBatch, LabelOutOfRange
from .nn import ClassifierParams
from .schemas import AngularGateReport, LossBreakdown

DEFAULT_EPSILON = 1e-8
DEFAULT_TEMPERATURE = 10.0
DEFAULT_ZETA = 0.7
DEFAULT_LAMBDAS = (0.1, 0.1, 0.1)
MIN_DIRECTION_NORM = 1e-12


def _one_hot(labels: np.ndarray, n_classes: int) -> np.ndarray:
    out = np.zeros((labels.shape[0], n_classes))
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


def task_loss(classifier: ClassifierParams, tangents: ad.Tensor | np.ndarray, labels: Sequence[int]) -> ad.Tensor:
    """Mean cross-entropy of Softmax(W v + b) against source labels."""
    y = np.asarray(labels, dtype=np.int64)
    if y.size == 0:
        raise EmptyBatch("task loss over an empty batch")
    if y.min() < 0 or y.max() >= classifier.n_classes:
        raise LabelOutOfRange(f"labels must lie in [0, {classifier.n_classes})")
    log_probs = ad.log_softmax(classifier.logits(tangents), axis=1)
    picked = ad.sum_(log_probs * _one_hot(y, classifier.n_classes), axis=1)
    return -ad.mean(picked)


def _check_radii(source: np.ndarray, target: np.ndarray) -> None:
    if source.shape[0] != target.shape[0]:
        raise BatchSizeMismatch(f"radial alignment needs equal batches, got {source.shape[0]} and {target.shape[0]}")
    if source.shape[0] == 0:
        raise EmptyBatch("radial alignment over an empty batch")


def radial_alignment(source_radii: ad.Tensor, target_radii: ad.Tensor) -> ad.Tensor:
    """1-D optimal transport between radius samples via sorted order statistics."""
    _check_radii(source_radii.data, target_radii.data)
    src = ad.gather_rows(source_radii, np.argsort(source_radii.data, kind="stable"))
    tgt = ad.gather_rows(target_radii, np.argsort(target_radii.data, kind="stable"))
    return ad.mean(ad.abs_act(src - tgt))


def radial_wasserstein(source_radii: Sequence[float] | np.ndarray, target_radii: Sequence[float] | np.ndarray) -> float:
    src = np.asarray(source_radii, dtype=np.float64).reshape(-1)
    tgt = np.asarray(target_radii, dtype=np.float64).reshape(-1)
    _check_radii(src, tgt)
    if (src < 0).any() or (tgt < 0).any():
        raise DomainViolation("radii must be non-negative")
    return radial_alignment(ad.Tensor(src), ad.Tensor(tgt)).item()


def angular_gate(
    classifier: ClassifierParams, target_tangents: ad.Tensor | np.ndarray, zeta: float = DEFAULT_ZETA
) -> AngularGateReport:
    """Confidence gate from Softmax(W v) (no bias) plus the radial weights exp(-|v|)."""
    v = ad.as_tensor(target_tangents).data
    probs = ad.softmax(classifier.logits(v, with_bias=False), axis=1).data
    confidence = probs.max(axis=1)
    norms = np.linalg.norm(v, axis=1)
    weight = np.exp(-norms)
    mask = (confidence > zeta) & (norms > MIN_DIRECTION_NORM)
    return AngularGateReport(
        confidence=confidence.tolist(),
        mask=mask.tolist(),
        weight=weight.tolist(),
        pseudo_label=probs.argmax(axis=1).tolist(),
        effective_count=float(np.sum(mask * weight)),
    )


def _unit_rows(x: ad.Tensor) -> ad.Tensor:
    return x / ad.clamp_min(ad.l2_norm(x, axis=1, keepdims=True), MIN_DIRECTION_NORM)


def cosine_logits(classifier: ClassifierParams, tangents: ad.Tensor | np.ndarray) -> ad.Tensor:
    """s_ik = <v_i/|v_i|, w_k/|w_k|>."""
    return ad.matmul(_unit_rows(ad.as_tensor(tangents)), ad.transpose(_unit_rows(classifier.weight)))


def angular_loss(
    classifier: ClassifierParams,
    target_tangents: ad.Tensor | np.ndarray,
    report: AngularGateReport,
    temperature: float = DEFAULT_TEMPERATURE,
    epsilon: float = DEFAULT_EPSILON,
    polar_disentangle: bool = True,
) -> ad.Tensor:
    """Weighted cross-entropy of temperature-scaled cosine logits against pseudo-labels.

    Mask and weights are constants. With ``polar_disentangle=False`` the raw
    logits W v are used and every gated sample has unit weight.
    """
    if epsilon <= 0 or temperature <= 0:
        raise DomainViolation("epsilon and temperature must be positive")
    v = ad.as_tensor(target_tangents)
    if v.shape[0] != len(report.mask):
        raise BatchSizeMismatch(f"{v.shape[0]} tangents vs a gate report for {len(report.mask)}")
    mask = np.asarray(report.mask, dtype=np.float64)
    if polar_disentangle:
        gates = mask * np.asarray(report.weight, dtype=np.float64)
        logits = temperature * cosine_logits(classifier, v)
    else:
        gates = mask
        logits = classifier.logits(v, with_bias=False)
    targets = _one_hot(np.asarray(report.pseudo_label, dtype=np.int64), classifier.n_classes)
    per_sample = -ad.sum_(ad.log_softmax(logits, axis=1) * targets, axis=1)
    return ad.sum_(per_sample * gates) / (float(gates.sum()) + epsilon)


def combine_objective(
    task: ad.Tensor,
    rad: ad.Tensor | float,
    ang: ad.Tensor | float,
    fm: ad.Tensor | float,
    lambdas: tuple[float, float, float] = DEFAULT_LAMBDAS,
) -> ad.Tensor:
    lam_rad, lam_ang, lam_fm = lambdas
    return task + lam_rad * ad.as_tensor(rad) + lam_ang * ad.as_tensor(ang) + lam_fm * ad.as_tensor(fm)


def total_loss(
    parts: tuple[float, float, float, float], lam_rad: float = 0.1, lam_ang: float = 0.1, lam_fm: float = 0.1
) -> LossBreakdown:
    if min(lam_rad, lam_ang, lam_fm) < 0:
        raise DomainViolation("loss weights must be non-negative")
    task, rad, ang, fm = (float(p) for p in parts)
    return LossBreakdown(
        task=task,
        rad=rad,
        ang=ang,
        fm=fm,
        total=task + lam_rad * rad + lam_ang * ang + lam_fm * fm,
        lambdas=(lam_rad, lam_ang, lam_fm),
    )


__all__ = [
    "DEFAULT_EPSILON",
    "DEFAULT_LAMBDAS",
    "DEFAULT_TEMPERATURE",
    "DEFAULT_ZETA",
    "angular_gate",
    "angular_loss",
    "combine_objective",
    "cosine_logits",
    "radial_alignment",
    "radial_wasserstein",
    "task_loss",
    "total_loss",
]
