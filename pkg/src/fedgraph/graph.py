"""Immutable sparse graph types and structural utilities.

Graphs are undirected and stored in CSR form over the symmetrized,
deduplicated edge set. Self-loops are never stored; normalization layers
add them on the fly. Node ids are dense 0..n-1; original ids from any
subgraph extraction are kept in ``orig_ids``.
"""

from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyDataset,
    EmptySet,
    IndexOutOfRange,
    NonFiniteFeature,
)


class Task(str, Enum):
    GRAPH_CLASSIFICATION = "graph_classification"
    GRAPH_REGRESSION = "graph_regression"
    NODE_CLASSIFICATION = "node_classification"
    LINK_REGRESSION = "link_regression"


@dataclass(frozen=True, eq=False)
class Graph:
    """CSR graph with optional node/edge features and task labels.

    node_labels uses -1 for unlabeled nodes. graph_label is a float vector
    of length num_tasks where NaN marks a missing per-task label.
    edge_labels is an (m, 3) float array of (src, dst, value) rows for
    link regression.
    """

    num_nodes: int
    indptr: np.ndarray          # int64, len num_nodes + 1
    indices: np.ndarray         # int64, sorted within each row
    node_features: np.ndarray   # float64 (num_nodes, d_node)
    edge_features: Optional[np.ndarray] = None
    node_labels: Optional[np.ndarray] = None
    graph_label: Optional[np.ndarray] = None
    edge_labels: Optional[np.ndarray] = None
    orig_ids: Optional[np.ndarray] = None
    category: Optional[str] = None

    @property
    def num_edges(self) -> int:
        """Directed CSR entry count (2x the undirected edge count)."""
        return int(self.indices.shape[0])

    def neighbors(self, u: int) -> np.ndarray:
        return self.indices[self.indptr[u]:self.indptr[u + 1]]

    def degree(self, u: int) -> int:
        return int(self.indptr[u + 1] - self.indptr[u])

    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def edge_list(self) -> list[tuple[int, int]]:
        """Each undirected edge once, as (u, v) with u < v."""
        out = []
        for u in range(self.num_nodes):
            for v in self.neighbors(u):
                if u < v:
                    out.append((u, int(v)))
        return out


def build_graph(
    num_nodes: int,
    edge_list: Sequence[tuple[int, int]],
    node_features,
    edge_features=None,
    node_labels=None,
    graph_label=None,
    edge_labels=None,
    orig_ids=None,
    category=None,
) -> Graph:
    """Construct a symmetrized, deduplicated CSR graph.

    Column indices are sorted within each row so the representation is
    deterministic regardless of input edge order.
    """
    if num_nodes <= 0:
        raise IndexOutOfRange(f"num_nodes must be positive, got {num_nodes}")
    X = np.asarray(node_features, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != num_nodes:
        raise DimensionMismatch(
            f"node_features shape {X.shape} incompatible with num_nodes={num_nodes}"
        )
    if not np.all(np.isfinite(X)):
        raise NonFiniteFeature("node_features contains NaN or Inf")

    pairs = set()
    for u, v in edge_list:
        u, v = int(u), int(v)
        if not (0 <= u < num_nodes and 0 <= v < num_nodes):
            raise IndexOutOfRange(f"edge ({u},{v}) outside 0..{num_nodes - 1}")
        if u == v:
            continue  # self-loops are not stored
        pairs.add((u, v))
        pairs.add((v, u))

    adj: list[list[int]] = [[] for _ in range(num_nodes)]
    for u, v in pairs:
        adj[u].append(v)
    indptr = np.zeros(num_nodes + 1, dtype=np.int64)
    cols: list[int] = []
    for u in range(num_nodes):
        nbrs = sorted(adj[u])
        cols.extend(nbrs)
        indptr[u + 1] = indptr[u] + len(nbrs)
    indices = np.asarray(cols, dtype=np.int64)

    if edge_features is not None:
        edge_features = np.asarray(edge_features, dtype=np.float64)
        if not np.all(np.isfinite(edge_features)):
            raise NonFiniteFeature("edge_features contains NaN or Inf")
    if node_labels is not None:
        node_labels = np.asarray(node_labels, dtype=np.int64)
        if node_labels.shape != (num_nodes,):
            raise DimensionMismatch("node_labels length must equal num_nodes")
    if graph_label is not None:
        graph_label = np.asarray(graph_label, dtype=np.float64).reshape(-1)
    if edge_labels is not None:
        edge_labels = np.asarray(edge_labels, dtype=np.float64).reshape(-1, 3)
        ends = edge_labels[:, :2].astype(np.int64)
        if ends.size and (ends.min() < 0 or ends.max() >= num_nodes):
            raise IndexOutOfRange("edge_labels endpoint outside node range")
    if orig_ids is not None:
        orig_ids = np.asarray(orig_ids, dtype=np.int64)

    return Graph(
        num_nodes=num_nodes,
        indptr=indptr,
        indices=indices,
        node_features=X,
        edge_features=edge_features,
        node_labels=node_labels,
        graph_label=graph_label,
        edge_labels=edge_labels,
        orig_ids=orig_ids,
        category=category,
    )


def khop_ego(graph: Graph, center: int, k: int) -> Graph:
    """Induced subgraph on nodes within BFS distance k of center.

    Node 0 of the result is the center; remaining nodes keep BFS-then-id
    order. Original node ids are recorded in orig_ids.
    """
    if not (0 <= center < graph.num_nodes):
        raise IndexOutOfRange(f"center {center} outside graph")
    if k < 0:
        raise IndexOutOfRange("k must be >= 0")
    dist = {center: 0}
    order = [center]
    q = deque([center])
    while q:
        u = q.popleft()
        if dist[u] == k:
            continue
        for v in graph.neighbors(u):
            v = int(v)
            if v not in dist:
                dist[v] = dist[u] + 1
                order.append(v)
                q.append(v)
    return induced_subgraph(graph, order, _keep_order=True)


def induced_subgraph(graph: Graph, node_set, _keep_order: bool = False) -> Graph:
    """Relabeled compact subgraph with exactly the edges internal to node_set."""
    nodes = list(node_set) if _keep_order else sorted(set(int(v) for v in node_set))
    if not nodes:
        raise EmptySet("node_set is empty")
    for v in nodes:
        if not (0 <= v < graph.num_nodes):
            raise IndexOutOfRange(f"node {v} outside graph")
    remap = {old: new for new, old in enumerate(nodes)}
    edges = []
    for old_u in nodes:
        for old_v in graph.neighbors(old_u):
            old_v = int(old_v)
            if old_v in remap and old_u < old_v:
                edges.append((remap[old_u], remap[old_v]))
    sub_labels = None
    if graph.node_labels is not None:
        sub_labels = graph.node_labels[nodes]
    orig = (
        graph.orig_ids[nodes]
        if graph.orig_ids is not None
        else np.asarray(nodes, dtype=np.int64)
    )
    return build_graph(
        num_nodes=len(nodes),
        edge_list=edges,
        node_features=graph.node_features[nodes],
        node_labels=sub_labels,
        graph_label=graph.graph_label,
        orig_ids=orig,
    )


@dataclass
class GraphDataset:
    """A task-typed collection of graphs."""

    task: Task
    graphs: list[Graph]
    num_tasks_or_classes: int
    feature_dims: tuple[int, int] = (0, 0)  # (d_node, d_edge)

    def __post_init__(self):
        if self.graphs and self.feature_dims[0] == 0:
            d_edge = 0
            g0 = self.graphs[0]
            if g0.edge_features is not None:
                d_edge = g0.edge_features.shape[1]
            self.feature_dims = (g0.node_features.shape[1], d_edge)

    def __len__(self) -> int:
        return len(self.graphs)

    def num_units(self) -> int:
        """Training units: graphs for graph/node tasks, labeled edges for links."""
        if self.task is Task.LINK_REGRESSION:
            return sum(
                0 if g.edge_labels is None else g.edge_labels.shape[0]
                for g in self.graphs
            )
        return len(self.graphs)

    def validate(self):
        if self.num_tasks_or_classes < 1:
            raise EmptyDataset("num_tasks_or_classes must be >= 1")
        for g in self.graphs:
            if self.task in (Task.GRAPH_CLASSIFICATION, Task.GRAPH_REGRESSION):
                if g.graph_label is None:
                    raise EmptyDataset("graph task requires graph_label on every graph")
            elif self.task is Task.NODE_CLASSIFICATION:
                if g.node_labels is None:
                    raise EmptyDataset("node task requires node_labels on every graph")
                if g.node_labels.max(initial=-1) >= self.num_tasks_or_classes:
                    raise IndexOutOfRange("node label >= num_classes")
            elif self.task is Task.LINK_REGRESSION:
                if g.edge_labels is None:
                    raise EmptyDataset("link task requires edge_labels on every graph")


@dataclass
class ClientShard:
    """One client's local train/val/test data."""

    client_id: int
    train: GraphDataset
    val: GraphDataset
    test: GraphDataset
    num_train_samples: int = field(default=0)

    def __post_init__(self):
        if self.num_train_samples == 0:
            self.num_train_samples = self.train.num_units()
