"""Dataset file formats, loaders and synthetic generators.

Canonical JSON format (format_version 1):
{
  "format_version": 1,
  "task": "graph_classification" | "graph_regression"
          | "node_classification" | "link_regression",
  "num_tasks_or_classes": int,
  "feature_dims": [d_node, d_edge],
  "graphs": [
    {"num_nodes": n, "edges": [[u, v], ...],   # each undirected edge once
     "node_features": [[...], ...],
     "node_labels": [...],                      # optional, -1 = unlabeled
     "graph_label": [...],                      # optional, null = missing task
     "edge_labels": [[u, v, y], ...],           # optional
     "category": "..."}                         # optional
  ]
}

The planetoid loader reads the classic citation-network file pair:
<name>.content  (node_id feat_0 ... feat_k label) and
<name>.cites    (citing cited).
"""

import json
import logging
import warnings
from pathlib import Path

import numpy as np

from .errors import InvalidParams, ParseError, SchemaViolation
from .graph import Graph, GraphDataset, Task, build_graph

log = logging.getLogger("fedgraph.datasets")


def save_dataset(dataset: GraphDataset, path):
    doc = {
        "format_version": 1,
        "task": dataset.task.value,
        "num_tasks_or_classes": dataset.num_tasks_or_classes,
        "feature_dims": list(dataset.feature_dims),
        "graphs": [_graph_to_json(g) for g in dataset.graphs],
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True))


def _graph_to_json(g: Graph) -> dict:
    doc = {
        "num_nodes": g.num_nodes,
        "edges": [[int(u), int(v)] for u, v in g.edge_list()],
        "node_features": g.node_features.tolist(),
    }
    if g.node_labels is not None:
        doc["node_labels"] = g.node_labels.tolist()
    if g.graph_label is not None:
        doc["graph_label"] = [
            None if np.isnan(v) else float(v) for v in g.graph_label
        ]
    if g.edge_labels is not None:
        doc["edge_labels"] = [
            [int(r[0]), int(r[1]), float(r[2])] for r in g.edge_labels
        ]
    if g.category is not None:
        doc["category"] = g.category
    return doc


def load_dataset(path, format: str = "json") -> GraphDataset:
    if format == "json":
        return _load_json(path)
    if format == "planetoid":
        return load_planetoid(path)
    raise InvalidParams(f"unknown dataset format {format!r}")


def _load_json(path) -> GraphDataset:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"cannot read dataset {path}: {exc}") from exc
    try:
        task = Task(doc["task"])
        graphs = []
        for gdoc in doc["graphs"]:
            feats = np.asarray(gdoc["node_features"], dtype=np.float64)
            if not np.all(np.isfinite(feats)):
                raise SchemaViolation("node_features contains NaN or Inf")
            glabel = gdoc.get("graph_label")
            if glabel is not None:
                glabel = [np.nan if v is None else float(v) for v in glabel]
            graphs.append(build_graph(
                num_nodes=gdoc["num_nodes"],
                edge_list=[tuple(e) for e in gdoc["edges"]],
                node_features=feats,
                node_labels=gdoc.get("node_labels"),
                graph_label=glabel,
                edge_labels=gdoc.get("edge_labels"),
                category=gdoc.get("category"),
            ))
        ds = GraphDataset(
            task=task,
            graphs=graphs,
            num_tasks_or_classes=int(doc["num_tasks_or_classes"]),
        )
        ds.validate()
        return ds
    except KeyError as exc:
        raise SchemaViolation(f"missing field {exc}") from exc


def load_planetoid(prefix) -> GraphDataset:
    """Load <prefix>.content and <prefix>.cites into a one-graph dataset.

    Label strings become class ids in first-appearance order. Cites rows
    referencing unknown ids are dropped with a warning and counted on the
    returned dataset as ``dropped_edges``.
    """
    prefix = Path(prefix)
    content = prefix.with_suffix(".content")
    cites = prefix.with_suffix(".cites")
    if not content.exists() or not cites.exists():
        raise ParseError(f"expected {content} and {cites}")
    ids, feats, labels = [], [], []
    label_ids: dict[str, int] = {}
    for line in content.read_text().splitlines():
        parts = line.strip().split()
        if not parts:
            continue
        if len(parts) < 3:
            raise SchemaViolation(f"content row too short: {line[:60]}")
        ids.append(parts[0])
        row = np.asarray([float(v) for v in parts[1:-1]])
        if not np.all(np.isfinite(row)):
            raise SchemaViolation("non-finite feature value")
        feats.append(row)
        label = parts[-1]
        if label not in label_ids:
            label_ids[label] = len(label_ids)
        labels.append(label_ids[label])
    index = {node_id: i for i, node_id in enumerate(ids)}
    edges = []
    dropped = 0
    for line in cites.read_text().splitlines():
        parts = line.strip().split()
        if not parts:
            continue
        if len(parts) != 2:
            raise SchemaViolation(f"cites row malformed: {line[:60]}")
        a, b = parts
        if a in index and b in index:
            edges.append((index[a], index[b]))
        else:
            dropped += 1
    if dropped:
        warnings.warn(f"dropped {dropped} cites row(s) with unknown node ids")
    g = build_graph(
        num_nodes=len(ids),
        edge_list=edges,
        node_features=np.vstack(feats),
        node_labels=labels,
    )
    ds = GraphDataset(
        task=Task.NODE_CLASSIFICATION,
        graphs=[g],
        num_tasks_or_classes=len(label_ids),
    )
    ds.label_names = sorted(label_ids, key=label_ids.get)  # manifest record
    ds.dropped_edges = dropped
    return ds


# ---------------------------------------------------------------------------
# Synthetic generators

def gen_synthetic(kind: str, seed: int = 0, **params) -> GraphDataset:
    if kind == "sbm_node":
        return gen_sbm_node(seed=seed, **params)
    if kind == "motif_graph":
        return gen_motif_graphs(seed=seed, **params)
    if kind == "bipartite_rating":
        return gen_bipartite_rating(seed=seed, **params)
    raise InvalidParams(f"unknown synthetic kind {kind!r}")


def gen_sbm_node(num_nodes: int = 200, num_blocks: int = 4,
                 p_in: float = 0.1, p_out: float = 0.01,
                 noise: float = 0.3, seed: int = 0) -> GraphDataset:
    """Stochastic block model; block id is the node label, features are a
    one-hot block indicator plus Gaussian noise."""
    if num_nodes < num_blocks or num_blocks < 1:
        raise InvalidParams("need num_nodes >= num_blocks >= 1")
    if not (0 <= p_out <= p_in <= 1):
        raise InvalidParams("need 0 <= p_out <= p_in <= 1")
    rng = np.random.default_rng([0x5b3, seed & 0xFFFFFFFF])
    blocks = rng.integers(0, num_blocks, size=num_nodes)
    edges = []
    for u in range(num_nodes):
        for v in range(u + 1, num_nodes):
            prob = p_in if blocks[u] == blocks[v] else p_out
            if rng.random() < prob:
                edges.append((u, v))
    feats = np.eye(num_blocks)[blocks] + noise * rng.standard_normal(
        (num_nodes, num_blocks)
    )
    g = build_graph(num_nodes, edges, feats, node_labels=blocks)
    return GraphDataset(Task.NODE_CLASSIFICATION, [g], num_blocks)


_MOTIFS = ("cycle", "star", "path")


def gen_motif_graphs(num_graphs: int = 600, min_nodes: int = 6,
                     max_nodes: int = 12, seed: int = 0) -> GraphDataset:
    """Graph classification over cycle vs star vs path motifs with degree
    one-hot node features and one-hot graph labels."""
    if num_graphs < 1 or min_nodes < 3 or max_nodes < min_nodes:
        raise InvalidParams("invalid motif sizes")
    rng = np.random.default_rng([0x307f, seed & 0xFFFFFFFF])
    max_deg_bucket = 8
    graphs = []
    for i in range(num_graphs):
        cls = i % len(_MOTIFS)
        n = int(rng.integers(min_nodes, max_nodes + 1))
        if _MOTIFS[cls] == "cycle":
            edges = [(j, (j + 1) % n) for j in range(n)]
        elif _MOTIFS[cls] == "star":
            edges = [(0, j) for j in range(1, n)]
        else:
            edges = [(j, j + 1) for j in range(n - 1)]
        deg = np.zeros(n, dtype=np.int64)
        for u, v in edges:
            deg[u] += 1
            deg[v] += 1
        feats = np.eye(max_deg_bucket)[np.minimum(deg, max_deg_bucket - 1)]
        label = np.zeros(len(_MOTIFS))
        label[cls] = 1.0
        graphs.append(build_graph(n, edges, feats, graph_label=label))
    # shuffle so classes are not interleaved in file order
    order = rng.permutation(num_graphs)
    graphs = [graphs[j] for j in order]
    return GraphDataset(Task.GRAPH_CLASSIFICATION, graphs, len(_MOTIFS))


def gen_bipartite_rating(num_users: int = 40, num_items: int = 60,
                         num_categories: int = 6, rank: int = 2,
                         density: float = 0.2, noise: float = 0.0,
                         seed: int = 0) -> GraphDataset:
    """User-item graphs with planted low-rank ratings in {1..5}; one graph
    per item category (users shared), for metadata partitioning."""
    if min(num_users, num_items, num_categories, rank) < 1 or num_categories > num_items:
        raise InvalidParams("invalid bipartite sizes")
    if not (0 < density <= 1):
        raise InvalidParams("density must be in (0, 1]")
    rng = np.random.default_rng([0xb1b, seed & 0xFFFFFFFF])
    U = rng.standard_normal((num_users, rank))
    V = rng.standard_normal((num_items, rank))
    raw = U @ V.T
    ratings = np.clip(np.rint(1.5 * raw + 3.0), 1, 5)
    item_cat = rng.integers(0, num_categories, size=num_items)
    graphs = []
    for c in range(num_categories):
        items = np.flatnonzero(item_cat == c)
        if items.size == 0:
            continue
        n = num_users + items.size
        edges, edge_labels = [], []
        for local_j, j in enumerate(items.tolist()):
            item_node = num_users + local_j
            for u in range(num_users):
                if rng.random() < density:
                    y = ratings[u, j] + noise * rng.standard_normal()
                    edges.append((u, item_node))
                    edge_labels.append((u, item_node, float(y)))
        feats = np.zeros((n, 2 + rank))
        feats[:num_users, 0] = 1.0
        feats[num_users:, 1] = 1.0
        feats[:num_users, 2:] = U + 0.1 * rng.standard_normal((num_users, rank))
        feats[num_users:, 2:] = V[items] + 0.1 * rng.standard_normal((items.size, rank))
        graphs.append(build_graph(
            n, edges, feats, edge_labels=edge_labels, category=f"cat{c}"
        ))
    ds = GraphDataset(Task.LINK_REGRESSION, graphs, 1)
    ds.planted = {"users": U, "items": V, "item_categories": item_cat}
    return ds
