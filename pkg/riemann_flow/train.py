"""Joint training of encoder, classifier and vector field on the combined objective.

Each step draws a source batch and a target batch uniformly with replacement,
encodes both, and sums the task loss with the weighted radial, angular and
flow-matching terms. One Adam step updates every parameter from the total.
Pseudo-labels and the confidence mask are refreshed from a full target encode
at the start of each epoch; the radial weights follow the current batch.
"""
from __future__ import annotations

import csv
import logging
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .config import RunConfig, apply_ablation
from .datasets import GraphInstance, generate_synthetic_shift, load_graph_file
from .encoder import EncoderParams, GraphBatch, encode_batch
from .errors import ConfigError, EmptyBatch, LabelOutOfRange, NonFinite, ShapeMismatch
from .flow import couple, flow_matching_objective
from .losses import MIN_DIRECTION_NORM, angular_gate, angular_loss, combine_objective, radial_alignment, task_loss
from .nn import (
    AdamState,
    ClassifierParams,
    VectorFieldParams,
    adam_step,
    global_grad_norm,
    load_checkpoint,
    save_checkpoint,
)
from .schemas import AngularGateReport, MetricsRow

LOGGER = logging.getLogger(__name__)

ENCODE_CHUNK = 256
METRICS_FILE = "metrics.csv"
CURVATURE_KEY = "meta.curvature"


@dataclass
class Model:
    encoder: EncoderParams
    classifier: ClassifierParams
    field: VectorFieldParams

    def parameters(self) -> dict[str, ad.Tensor]:
        return {**self.encoder.parameters(), **self.classifier.parameters(), **self.field.parameters()}

    @classmethod
    def from_parameters(cls, params: Mapping[str, ad.Tensor | np.ndarray], curvature: float) -> Model:
        return cls(
            EncoderParams.from_parameters(params, curvature),
            ClassifierParams.from_parameters(params),
            VectorFieldParams.from_parameters(params),
        )

    def save(self, path: str | Path) -> Path:
        tensors: dict[str, ad.Tensor | np.ndarray] = dict(self.parameters())
        tensors[CURVATURE_KEY] = np.array([self.encoder.curvature])
        return save_checkpoint(path, tensors)

    @classmethod
    def load(cls, path: str | Path) -> Model:
        tensors = load_checkpoint(path)
        if CURVATURE_KEY not in tensors:
            raise ShapeMismatch(f"{path} has no {CURVATURE_KEY} entry")
        return cls.from_parameters(tensors, float(tensors[CURVATURE_KEY][0]))


@dataclass(frozen=True)
class TrainResult:
    rows: list[MetricsRow]
    metrics_path: Path
    checkpoint_path: Path
    model: Model


def _labels(graphs: Sequence[GraphInstance], what: str) -> np.ndarray:
    labels = [g.label for g in graphs]
    if any(label is None for label in labels):
        raise LabelOutOfRange(f"every {what} graph needs a label")
    return np.asarray(labels, dtype=np.int64)


def encode_all(encoder: EncoderParams, graphs: Sequence[GraphInstance]) -> tuple[np.ndarray, np.ndarray]:
    """Embeddings and origin tangents for every graph, in chunks, without a tape."""
    if not graphs:
        raise EmptyBatch("nothing to encode")
    frozen = EncoderParams(tuple(w.detach() for w in encoder.weights), encoder.curvature)
    zs, vs = [], []
    for start in range(0, len(graphs), ENCODE_CHUNK):
        z, v = encode_batch(frozen, GraphBatch.from_graphs(graphs[start : start + ENCODE_CHUNK]))
        zs.append(z.data)
        vs.append(v.data)
    return np.concatenate(zs), np.concatenate(vs)


def predict(model: Model, graphs: Sequence[GraphInstance]) -> np.ndarray:
    _, v = encode_all(model.encoder, graphs)
    classifier = ClassifierParams(model.classifier.weight.detach(), model.classifier.bias.detach())
    return np.argmax(classifier.logits(v).data, axis=1)


def classification_accuracy(model: Model, graphs: Sequence[GraphInstance]) -> float:
    if not graphs:
        raise EmptyBatch("accuracy over an empty dataset")
    labels = _labels(graphs, "evaluation")
    return float(np.mean(predict(model, graphs) == labels))


def evaluate(checkpoint: str | Path, graphs: Sequence[GraphInstance]) -> float:
    model = Model.load(checkpoint)
    if graphs and graphs[0].n_features != model.encoder.in_features:
        raise ShapeMismatch(f"data has {graphs[0].n_features} features, checkpoint expects {model.encoder.in_features}")
    return classification_accuracy(model, graphs)


def load_data(config: RunConfig) -> tuple[list[GraphInstance], list[GraphInstance]]:
    if config.source_path and config.target_path:
        return load_graph_file(config.source_path), load_graph_file(config.target_path)
    return generate_synthetic_shift(config.synthetic, config.seed)


def _select_gate(report: AngularGateReport, index: np.ndarray) -> AngularGateReport:
    confidence = np.asarray(report.confidence)[index]
    mask = np.asarray(report.mask)[index]
    weight = np.asarray(report.weight)[index]
    return AngularGateReport(
        confidence=confidence.tolist(),
        mask=mask.tolist(),
        weight=weight.tolist(),
        pseudo_label=np.asarray(report.pseudo_label)[index].tolist(),
        effective_count=float(np.sum(mask * weight)),
    )


def _refresh_weights(report: AngularGateReport, tangents: np.ndarray) -> AngularGateReport:
    """Keep the epoch's pseudo-labels and confidence mask; radial weights follow the batch."""
    norms = np.linalg.norm(tangents, axis=1)
    mask = np.asarray(report.mask) & (norms > MIN_DIRECTION_NORM)
    weight = np.exp(-norms)
    return report.model_copy(
        update={"mask": mask.tolist(), "weight": weight.tolist(), "effective_count": float(np.sum(mask * weight))}
    )


@dataclass(frozen=True)
class ObjectiveTerms:
    task: ad.Tensor
    rad: ad.Tensor
    ang: ad.Tensor
    fm: ad.Tensor
    total: ad.Tensor


def batch_objective(
    model: Model,
    config: RunConfig,
    source: Sequence[GraphInstance],
    labels: np.ndarray,
    target: Sequence[GraphInstance],
    gate: AngularGateReport,
    times: np.ndarray,
) -> ObjectiveTerms:
    """Task loss plus the weighted alignment terms for one source/target batch.

    ``gate`` holds the epoch-level pseudo-labels and mask for ``target``; terms
    whose weight is zero are a constant zero tensor.
    """
    c = config.curvature
    lam_rad, lam_ang, lam_fm = config.lambdas
    zero = ad.Tensor(0.0)
    z_s, v_s = encode_batch(model.encoder, GraphBatch.from_graphs(source))
    z_t, v_t = encode_batch(model.encoder, GraphBatch.from_graphs(target))
    task = task_loss(model.classifier, v_s, labels)
    rad = radial_alignment(ad.l2_norm(v_s, axis=1), ad.l2_norm(v_t, axis=1)) if lam_rad > 0 else zero
    gate = _refresh_weights(gate, v_t.data)
    ang = (
        angular_loss(
            model.classifier,
            v_t,
            gate,
            temperature=config.temperature,
            epsilon=config.epsilon,
            polar_disentangle=config.polar_disentangle,
        )
        if lam_ang > 0
        else zero
    )
    if lam_fm > 0:
        plan = couple(z_s.data, labels, z_t.data, gate.pseudo_label, c, gate.mask)
        ends_s = ad.gather_rows(z_s, plan.sources)
        ends_t = ad.gather_rows(z_t, plan.targets)
        if config.fm_detach_embeddings:
            ends_s, ends_t = ends_s.detach(), ends_t.detach()
        fm = flow_matching_objective(model.field, ends_s, ends_t, times[: len(plan.pairs)], c)
    else:
        fm = zero
    return ObjectiveTerms(task, rad, ang, fm, combine_objective(task, rad, ang, fm, config.lambdas))


def _write_row(path: Path, row: MetricsRow, header: bool) -> None:
    columns = list(MetricsRow.model_fields)
    with path.open("w" if header else "a", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        if header:
            writer.writerow(columns)
        values = row.model_dump()
        writer.writerow(["" if values[k] is None else repr(values[k]) for k in columns])


def _run_epoch(
    epoch: int,
    model: Model,
    config: RunConfig,
    source: Sequence[GraphInstance],
    y_source: np.ndarray,
    target: Sequence[GraphInstance],
    adam: AdamState,
    rng: np.random.Generator,
    steps: int,
) -> tuple[Model, MetricsRow]:
    _, v_target_all = encode_all(model.encoder, target)
    epoch_gate = angular_gate(model.classifier, v_target_all, config.zeta)
    sums = np.zeros(6)  # task, rad, ang, fm, total, grad_norm
    for step in range(steps):
        # every draw happens whatever the loss weights, so ablations share batches and times
        s_idx = rng.integers(len(source), size=config.batch_size)
        t_idx = rng.integers(len(target), size=config.batch_size)
        times = rng.uniform(0.0, 1.0, size=config.batch_size)
        try:
            terms = batch_objective(
                model,
                config,
                [source[i] for i in s_idx],
                y_source[s_idx],
                [target[i] for i in t_idx],
                _select_gate(epoch_gate, t_idx),
                times,
            )
            params = model.parameters()
            grads = ad.backward(terms.total, wrt=params.values())
            named = {name: grads[tensor] for name, tensor in params.items()}
            grad_norm = global_grad_norm(named)
            if not math.isfinite(grad_norm):
                raise NonFinite(f"gradient norm is {grad_norm}")
        except NonFinite as exc:
            raise NonFinite(f"step {step}: {exc}") from exc
        model = Model.from_parameters(adam_step(params, named, adam, config.lr), config.curvature)
        sums += [terms.task.item(), terms.rad.item(), terms.ang.item(), terms.fm.item(), terms.total.item(), grad_norm]

    means = sums / steps
    target_labeled = all(g.label is not None for g in target)
    row = MetricsRow(
        epoch=epoch,
        task=float(means[0]),
        rad=float(means[1]),
        ang=float(means[2]),
        fm=float(means[3]),
        total=float(means[4]),
        source_accuracy=classification_accuracy(model, source),
        target_accuracy=classification_accuracy(model, target) if target_labeled else None,
        gated_fraction=epoch_gate.gated_fraction,
        grad_norm=float(means[5]),
    )
    return model, row


def train(
    config: RunConfig,
    out_dir: str | Path,
    source: Sequence[GraphInstance] | None = None,
    target: Sequence[GraphInstance] | None = None,
) -> TrainResult:
    config = apply_ablation(config.validate())
    if source is None or target is None:
        loaded_source, loaded_target = load_data(config)
        source = loaded_source if source is None else source
        target = loaded_target if target is None else target
    if not source or not target:
        raise EmptyBatch("training needs non-empty source and target sets")
    y_source = _labels(source, "source")
    n_classes = max(int(y_source.max()) + 1, 2)
    if config.zeta <= 1.0 / n_classes:
        raise ConfigError(f"zeta must exceed 1/K = {1.0 / n_classes:.4g} for {n_classes} classes, got {config.zeta}")

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    metrics_path = out / METRICS_FILE
    c = config.curvature
    rng = np.random.default_rng(config.seed)
    model = Model(
        EncoderParams.init(source[0].n_features, config.hidden, config.dim, config.layers, c, seed=config.seed),
        ClassifierParams.init(config.dim, n_classes, seed=config.seed + 1),
        VectorFieldParams.init(config.dim, hidden=(config.field_hidden,) * config.field_layers, seed=config.seed + 2),
    )
    adam = AdamState(weight_decay=config.weight_decay)
    steps = config.steps_per_epoch or math.ceil(len(source) / config.batch_size)
    rows: list[MetricsRow] = []
    checkpoint: Path | None = None
    LOGGER.info(
        "train: source=%d target=%d classes=%d ablation=%s lambdas=%s steps/epoch=%d",
        len(source),
        len(target),
        n_classes,
        config.ablation,
        config.lambdas,
        steps,
    )

    for epoch in range(1, config.epochs + 1):
        try:
            model, row = _run_epoch(epoch, model, config, source, y_source, target, adam, rng, steps)
        except NonFinite as exc:
            LOGGER.error("train: non-finite value at epoch=%d: %s", epoch, exc)
            raise NonFinite(f"epoch {epoch}: {exc}", partial=checkpoint) from exc
        rows.append(row)
        _write_row(metrics_path, row, header=epoch == 1)
        checkpoint = model.save(out / f"epoch_{epoch:03d}.ckpt")
        LOGGER.info(
            "train: epoch=%d total=%.4f task=%.4f rad=%.4f ang=%.4f fm=%.4f src_acc=%.3f tgt_acc=%s gated=%.2f",
            epoch,
            row.total,
            row.task,
            row.rad,
            row.ang,
            row.fm,
            row.source_accuracy,
            "n/a" if row.target_accuracy is None else f"{row.target_accuracy:.3f}",
            row.gated_fraction,
        )

    assert checkpoint is not None
    return TrainResult(rows=rows, metrics_path=metrics_path, checkpoint_path=checkpoint, model=model)


__all__ = [
    "Model",
    "ObjectiveTerms",
    "TrainResult",
    "batch_objective",
    "classification_accuracy",
    "encode_all",
    "evaluate",
    "load_data",
    "predict",
    "train",
]
