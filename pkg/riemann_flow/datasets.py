"""Graph instances, the shifted stochastic-block-model benchmark and the graph file format.

File format, one block per graph, a blank line ends a block::

    graph <n_nodes> <label|?>
    node <idx> <f_0> ... <f_{F-1}>
    edge <i> <j>

``?`` marks an unlabeled graph. Undirected edges are written once and
symmetrized on load.
"""
from __future__ import annotations

import logging
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import EmptyGraph, IndexOutOfRange, InvalidSpec, ParseError, ShapeMismatch

LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class GraphInstance:
    n_nodes: int
    edges: np.ndarray
    node_features: np.ndarray
    label: int | None = None

    def __post_init__(self) -> None:
        if self.n_nodes <= 0:
            raise EmptyGraph("a graph needs at least one node")
        features = np.array(self.node_features, dtype=np.float64)
        if features.ndim != 2 or features.shape[0] != self.n_nodes:
            raise ShapeMismatch(f"features {features.shape} do not match {self.n_nodes} nodes")
        features.flags.writeable = False
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if edges.size and (edges.min() < 0 or edges.max() >= self.n_nodes):
            raise IndexOutOfRange(f"edge endpoint outside [0, {self.n_nodes})")
        edges = edges[edges[:, 0] != edges[:, 1]]
        both = np.concatenate([edges, edges[:, ::-1]]) if edges.size else edges
        both = np.unique(both, axis=0) if both.size else np.zeros((0, 2), dtype=np.int64)
        both.flags.writeable = False
        object.__setattr__(self, "node_features", features)
        object.__setattr__(self, "edges", both)

    @property
    def n_features(self) -> int:
        return int(self.node_features.shape[1])

    @property
    def undirected_edges(self) -> np.ndarray:
        return self.edges[self.edges[:, 0] < self.edges[:, 1]]

    def degrees(self) -> np.ndarray:
        return np.bincount(self.edges[:, 0], minlength=self.n_nodes)

    def aggregation_matrix(self) -> sp.csr_matrix:
        """Row-normalised A + I: alpha_ij = 1/(deg(i)+1) over N(i) and i itself."""
        n = self.n_nodes
        rows = np.concatenate([self.edges[:, 0], np.arange(n)])
        cols = np.concatenate([self.edges[:, 1], np.arange(n)])
        weights = 1.0 / (self.degrees() + 1.0)
        return sp.csr_matrix((weights[rows], (rows, cols)), shape=(n, n))

    def structurally_equal(self, other: GraphInstance) -> bool:
        return (
            self.n_nodes == other.n_nodes
            and self.label == other.label
            and np.array_equal(self.edges, other.edges)
            and np.array_equal(self.node_features, other.node_features)
        )


@dataclass
class SyntheticShiftSpec:
    """Two-domain SBM benchmark.

    Node features are Gaussian noise plus two signals. Channel 0 is structural:
    ``density_scale`` times the node's local edge density relative to the
    source domain's expected density, minus one. Channels 1..K carry a centred
    class code whose per-channel gap is ``class_separation``. The target domain
    multiplies every edge probability by ``density_multiplier`` and moves the
    structural channel's mean by ``feature_shift`` noise units, so a classifier
    that leans on structure misreads target graphs while the class code stays put.
    """

    n_source: int = 400
    n_target: int = 400
    n_classes: int = 2
    min_nodes: int = 12
    max_nodes: int = 24
    blocks: int = 2
    p_in: list[float] = field(default_factory=lambda: [0.30, 0.15])
    p_out: float = 0.05
    density_multiplier: float = 1.5
    feature_dim: int = 8
    class_separation: float = 0.6
    feature_noise: float = 1.0
    feature_shift: float = 0.5  # in units of feature_noise, along the structural channel
    density_scale: float = 1.0

    def validate(self) -> None:
        if self.n_classes < 2:
            raise InvalidSpec(f"need at least 2 classes, got {self.n_classes}")
        if len(self.p_in) != self.n_classes:
            raise InvalidSpec(f"p_in needs one density per class, got {len(self.p_in)} for {self.n_classes}")
        if self.n_source < 0 or self.n_target < 0:
            raise InvalidSpec("graph counts must be non-negative")
        if not 1 <= self.min_nodes <= self.max_nodes:
            raise InvalidSpec(f"invalid node range [{self.min_nodes}, {self.max_nodes}]")
        if self.blocks < 1:
            raise InvalidSpec("need at least one block")
        if self.feature_dim < self.n_classes + 1:
            raise InvalidSpec(f"feature_dim must be at least n_classes + 1 = {self.n_classes + 1}")
        if self.density_multiplier <= 0 or self.feature_noise <= 0:
            raise InvalidSpec("density_multiplier and feature_noise must be positive")
        for p in [*self.p_in, self.p_out]:
            if not 0.0 < p < 1.0 or not 0.0 < p * self.density_multiplier < 1.0:
                raise InvalidSpec(f"edge density {p} (x{self.density_multiplier}) must stay in (0, 1)")

    def reference_density(self) -> float:
        """Expected source edge density, averaged over classes (uniform block assignment)."""
        same = 1.0 / self.blocks
        return float(np.mean([p * same + self.p_out * (1.0 - same) for p in self.p_in]))


def _sample_graph(
    rng: np.random.Generator, spec: SyntheticShiftSpec, label: int, multiplier: float, shift: float
) -> GraphInstance:
    n = int(rng.integers(spec.min_nodes, spec.max_nodes + 1))
    block = rng.integers(spec.blocks, size=n)
    same = block[:, None] == block[None, :]
    probs = np.where(same, spec.p_in[label], spec.p_out) * multiplier
    upper = np.triu(rng.random((n, n)) < probs, k=1)
    edges = np.argwhere(upper)
    degree = upper.sum(axis=0) + upper.sum(axis=1)

    features = rng.normal(0.0, spec.feature_noise, size=(n, spec.feature_dim))
    local = degree / max(n - 1, 1)
    features[:, 0] += spec.density_scale * (local / spec.reference_density() - 1.0) + shift * spec.feature_noise
    code = np.full(spec.n_classes, -spec.class_separation / spec.n_classes)
    code[label] += spec.class_separation
    features[:, 1 : 1 + spec.n_classes] += code
    return GraphInstance(n, edges, features, label)


def generate_synthetic_shift(spec: SyntheticShiftSpec, seed: int) -> tuple[list[GraphInstance], list[GraphInstance]]:
    """Source and target sets; both keep their labels, training ignores the target ones."""
    spec.validate()
    rng = np.random.default_rng(seed)
    source = [_sample_graph(rng, spec, i % spec.n_classes, 1.0, 0.0) for i in range(spec.n_source)]
    target = [
        _sample_graph(rng, spec, i % spec.n_classes, spec.density_multiplier, spec.feature_shift)
        for i in range(spec.n_target)
    ]
    LOGGER.info(
        "generated synthetic shift: source=%d target=%d multiplier=%.3g shift=%.3g",
        len(source),
        len(target),
        spec.density_multiplier,
        spec.feature_shift,
    )
    return source, target


def mean_degree(graphs: Iterable[GraphInstance]) -> float:
    degrees = [graph.degrees().mean() for graph in graphs]
    return float(np.mean(degrees)) if degrees else 0.0


# ---------------------------------------------------------------------------
# file format


def format_graphs(graphs: Sequence[GraphInstance]) -> str:
    lines: list[str] = []
    for graph in graphs:
        label = "?" if graph.label is None else str(graph.label)
        lines.append(f"graph {graph.n_nodes} {label}")
        for idx, row in enumerate(graph.node_features):
            lines.append(" ".join(["node", str(idx), *(repr(float(x)) for x in row)]))
        for i, j in graph.undirected_edges:
            lines.append(f"edge {i} {j}")
        lines.append("")
    return "\n".join(lines) + ("\n" if lines else "")


def write_graph_file(path: str | Path, graphs: Sequence[GraphInstance]) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(format_graphs(graphs), encoding="utf-8")
    return target


@dataclass
class _Block:
    header_line: int
    n_nodes: int
    label: int | None
    features: dict[int, list[float]] = field(default_factory=dict)
    edges: list[tuple[int, int]] = field(default_factory=list)
    edge_lines: list[int] = field(default_factory=list)


def _finish(block: _Block) -> GraphInstance:
    missing = [i for i in range(block.n_nodes) if i not in block.features]
    if missing:
        raise ParseError(f"graph is missing node lines for {missing[:5]}", block.header_line)
    widths = {len(row) for row in block.features.values()}
    if len(widths) != 1:
        raise ParseError("node feature widths differ within a graph", block.header_line)
    for (i, j), number in zip(block.edges, block.edge_lines, strict=True):
        if not (0 <= i < block.n_nodes and 0 <= j < block.n_nodes):
            raise IndexOutOfRange(f"line {number}: edge ({i}, {j}) outside [0, {block.n_nodes})")
    features = np.array([block.features[i] for i in range(block.n_nodes)], dtype=np.float64)
    return GraphInstance(block.n_nodes, np.array(block.edges, dtype=np.int64).reshape(-1, 2), features, block.label)


def parse_graphs(text: str) -> list[GraphInstance]:
    graphs: list[GraphInstance] = []
    block: _Block | None = None
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if line.startswith("#"):
            continue
        if not line:
            if block is not None:
                graphs.append(_finish(block))
                block = None
            continue
        parts = line.split()
        keyword = parts[0]
        try:
            if keyword == "graph":
                if block is not None:
                    raise ParseError("new graph header before the blank line ending the previous block", number)
                if len(parts) != 3:
                    raise ParseError("expected 'graph <n_nodes> <label|?>'", number)
                n_nodes = int(parts[1])
                if n_nodes <= 0:
                    raise ParseError(f"graph must have at least one node, got {n_nodes}", number)
                label = None if parts[2] == "?" else int(parts[2])
                if label is not None and label < 0:
                    raise ParseError(f"negative label {label}", number)
                block = _Block(number, n_nodes, label)
            elif keyword == "node":
                if block is None or len(parts) < 2:
                    raise ParseError("node line outside a graph block", number)
                idx = int(parts[1])
                if not 0 <= idx < block.n_nodes:
                    raise IndexOutOfRange(f"line {number}: node index {idx} outside [0, {block.n_nodes})")
                if idx in block.features:
                    raise ParseError(f"duplicate node {idx}", number)
                block.features[idx] = [float(x) for x in parts[2:]]
            elif keyword == "edge":
                if block is None or len(parts) != 3:
                    raise ParseError("expected 'edge <i> <j>' inside a graph block", number)
                block.edges.append((int(parts[1]), int(parts[2])))
                block.edge_lines.append(number)
            else:
                raise ParseError(f"unknown record {keyword!r}", number)
        except ValueError as exc:
            if isinstance(exc, (ParseError, IndexOutOfRange)):
                raise
            raise ParseError(f"malformed number: {exc}", number) from exc
    if block is not None:
        graphs.append(_finish(block))
    return graphs


def load_graph_file(path: str | Path) -> list[GraphInstance]:
    graphs = parse_graphs(Path(path).read_text(encoding="utf-8"))
    LOGGER.info("loaded %d graphs from %s", len(graphs), path)
    return graphs


__all__ = [
    "GraphInstance",
    "SyntheticShiftSpec",
    "format_graphs",
    "generate_synthetic_shift",
    "load_graph_file",
    "mean_degree",
    "parse_graphs",
    "write_graph_file",
]
