"""Riemannian graph convolution: Log-Transform-Exp layers anchored at the origin.

Graphs are encoded in batches. A batch stacks node features and uses a
block-diagonal aggregation operator plus a block mean-pooling operator, so one
sparse product per layer covers every graph and the result is identical to
encoding the graphs one by one.
"""
from __future__ import annotations

import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from typing import Literal

import numpy as np
import scipy.sparse as sp

from . import autodiff as ad
from . import kernels
from .datasets import GraphInstance
from .errors import EmptyGraph, ShapeMismatch
from .manifold import CurvatureLike, ManifoldPoint, as_curvature, check_domain

Activation = Literal["relu", "linear"]


@dataclass(frozen=True)
class EncoderParams:
    weights: tuple[ad.Tensor, ...]  # W^(l): (d_out, d_in)
    curvature: float = -1.0
    aggregation: Literal["mean"] = "mean"

    def __post_init__(self) -> None:
        if not self.weights:
            raise ShapeMismatch("encoder needs at least one layer")
        for prev, nxt in zip(self.weights[:-1], self.weights[1:], strict=True):
            if prev.shape[0] != nxt.shape[1]:
                raise ShapeMismatch(f"layer widths do not chain: {prev.shape} -> {nxt.shape}")

    @classmethod
    def init(
        cls, in_features: int, hidden: int, dim: int, layers: int, curvature: float = -1.0, seed: int = 0
    ) -> EncoderParams:
        if layers < 1:
            raise ShapeMismatch(f"layers must be >= 1, got {layers}")
        rng = np.random.default_rng(seed)
        widths = [in_features, *([hidden] * (layers - 1)), dim]
        weights = []
        for fan_in, fan_out in zip(widths[:-1], widths[1:], strict=True):
            bound = 1.0 / math.sqrt(fan_in)
            weights.append(ad.Tensor(rng.uniform(-bound, bound, size=(fan_out, fan_in)), requires_grad=True))
        return cls(tuple(weights), curvature)

    @property
    def in_features(self) -> int:
        return self.weights[0].shape[1]

    @property
    def dim(self) -> int:
        return self.weights[-1].shape[0]

    @property
    def layers(self) -> int:
        return len(self.weights)

    def parameters(self, prefix: str = "encoder") -> dict[str, ad.Tensor]:
        return {f"{prefix}.weight.{i}": w for i, w in enumerate(self.weights)}

    @classmethod
    def from_parameters(
        cls, params: Mapping[str, ad.Tensor | np.ndarray], curvature: float, prefix: str = "encoder"
    ) -> EncoderParams:
        count = sum(1 for name in params if name.startswith(f"{prefix}.weight."))
        weights = []
        for i in range(count):
            value = params[f"{prefix}.weight.{i}"]
            data = value.data if isinstance(value, ad.Tensor) else value
            weights.append(ad.Tensor(data, requires_grad=True))
        return cls(tuple(weights), curvature)


@dataclass(frozen=True)
class GraphBatch:
    features: np.ndarray  # stacked node features (N, F)
    aggregation: sp.csr_matrix  # block-diagonal (N, N)
    pooling: sp.csr_matrix  # (G, N), rows average the nodes of one graph
    sizes: tuple[int, ...]

    @classmethod
    def from_graphs(cls, graphs: Sequence[GraphInstance]) -> GraphBatch:
        if not graphs:
            raise EmptyGraph("cannot batch an empty list of graphs")
        widths = {g.n_features for g in graphs}
        if len(widths) != 1:
            raise ShapeMismatch(f"graphs disagree on feature width: {sorted(widths)}")
        sizes = tuple(g.n_nodes for g in graphs)
        offsets = np.concatenate([[0], np.cumsum(sizes)])
        rows = np.repeat(np.arange(len(graphs)), sizes)
        pooling = sp.csr_matrix(
            (np.repeat(1.0 / np.asarray(sizes, dtype=np.float64), sizes), (rows, np.arange(offsets[-1]))),
            shape=(len(graphs), int(offsets[-1])),
        )
        return cls(
            features=np.concatenate([g.node_features for g in graphs]),
            aggregation=sp.block_diag([g.aggregation_matrix() for g in graphs], format="csr"),
            pooling=pooling,
            sizes=sizes,
        )

    @property
    def n_graphs(self) -> int:
        return len(self.sizes)


def _layer(h: ad.Tensor, weight: ad.Tensor, aggregation: sp.csr_matrix, c: float, activation: Activation) -> ad.Tensor:
    transformed = kernels.mobius_matvec(weight, h, c)
    tangent = ad.sparse_matmul(aggregation, kernels.logmap0(transformed, c))
    if activation == "relu":
        tangent = ad.relu_act(tangent)
    return kernels.expmap0(tangent, c)


def encode_batch(params: EncoderParams, batch: GraphBatch) -> tuple[ad.Tensor, ad.Tensor]:
    """Graph embeddings z (G, d) on the manifold and their origin tangents v = Log_0(z).

    Hidden layers use ReLU in the tangent space; the last layer is linear so
    directions can cover the whole sphere.
    """
    if batch.features.shape[1] != params.in_features:
        raise ShapeMismatch(f"feature width {batch.features.shape[1]} vs encoder input {params.in_features}")
    c = params.curvature
    h = kernels.expmap0(ad.Tensor(batch.features), c)
    last = params.layers - 1
    for i, weight in enumerate(params.weights):
        h = _layer(h, weight, batch.aggregation, c, "linear" if i == last else "relu")
    z = kernels.expmap0(ad.sparse_matmul(batch.pooling, kernels.logmap0(h, c)), c)
    return z, kernels.logmap0(z, c)


def encode(params: EncoderParams, graph: GraphInstance) -> tuple[ManifoldPoint, np.ndarray]:
    z, v = encode_batch(params, GraphBatch.from_graphs([graph]))
    return ManifoldPoint(z.data[0], params.curvature), v.data[0].copy()


def mobius_matvec(weight: np.ndarray, h: ManifoldPoint) -> ManifoldPoint:
    """Exp_0(W Log_0(h))."""
    w = np.asarray(weight, dtype=np.float64)
    if w.ndim != 2 or w.shape[1] != h.dim:
        raise ShapeMismatch(f"weight {w.shape} cannot act on a point of dim {h.dim}")
    check_domain(h)
    return ManifoldPoint(np.asarray(kernels.mobius_matvec(w, h.coords[None, :], h.c))[0], h.curvature)


def rgcn_layer(
    weight: np.ndarray, node_states: Sequence[ManifoldPoint], graph: GraphInstance, activation: Activation = "relu"
) -> list[ManifoldPoint]:
    if len(node_states) != graph.n_nodes:
        raise ShapeMismatch(f"{len(node_states)} states for a graph with {graph.n_nodes} nodes")
    curvature = node_states[0].curvature
    for state in node_states:
        check_domain(state)
    h = ad.Tensor(np.stack([s.coords for s in node_states]))
    out = _layer(h, ad.Tensor(weight), graph.aggregation_matrix(), curvature.c, activation)
    return [ManifoldPoint(row, curvature) for row in out.data]


def graph_readout(node_states: Sequence[ManifoldPoint]) -> ManifoldPoint:
    """Exp_0 of the tangent mean at the origin."""
    if not node_states:
        raise EmptyGraph("readout of an empty node set")
    c = node_states[0].c
    tangents = np.asarray(kernels.logmap0(np.stack([s.coords for s in node_states]), c))
    return ManifoldPoint(np.asarray(kernels.expmap0(tangents.mean(axis=0), c)), node_states[0].curvature)


def input_states(graph: GraphInstance, c: CurvatureLike) -> list[ManifoldPoint]:
    """Node features lifted onto the manifold with Exp_0."""
    k = as_curvature(c)
    lifted = np.asarray(kernels.expmap0(graph.node_features, k.c))
    return [ManifoldPoint(row, k) for row in lifted]


__all__ = [
    "EncoderParams",
    "GraphBatch",
    "encode",
    "encode_batch",
    "graph_readout",
    "input_states",
    "mobius_matvec",
    "rgcn_layer",
]
