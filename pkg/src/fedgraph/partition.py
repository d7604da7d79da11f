"""Client data partitioning: LDA non-IID, uniform, metadata, ego sampling.

All schemes are pure functions of (data, spec) with explicit generators,
so a (spec, seed) pair always reproduces the same shards byte for byte.
"""

import warnings
from dataclasses import dataclass, replace

import numpy as np

from .errors import (
    EmptyDataset,
    InvalidAlpha,
    MissingCategory,
    MoreClientsThanSamples,
    TooManyEgos,
)
from .graph import ClientShard, Graph, GraphDataset, Task, khop_ego


@dataclass
class PartitionSpec:
    scheme: str = "uniform"  # lda | uniform | metadata
    num_clients: int = 1
    alpha: float = 0.5       # LDA concentration
    seed: int = 0
    split_ratios: tuple[float, float, float] = (0.8, 0.1, 0.1)
    local_split: bool = True  # per-client 80/10/10; False = global split first
    ego_label_scheme: str = "lda"  # how ego samples are grouped: lda | uniform

    def validate(self):
        if self.scheme not in ("lda", "uniform", "metadata"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.num_clients < 1:
            raise ValueError("num_clients must be >= 1")
        if self.scheme == "lda" and self.alpha <= 0:
            raise InvalidAlpha(f"alpha must be > 0, got {self.alpha}")
        r = self.split_ratios
        if any(x < 0 or x > 1 for x in r) or abs(sum(r) - 1.0) > 1e-9:
            raise ValueError(f"split ratios {r} must lie in [0,1] and sum to 1")


def _rng(*key):
    return np.random.default_rng([int(k) & 0xFFFFFFFF for k in key])


def split_train_val_test(dataset: GraphDataset, ratios=(0.8, 0.1, 0.1), seed=0):
    """Disjoint shuffled split; floor sizes for val/test, remainder to train."""
    n = dataset.num_units()
    if n == 0:
        raise EmptyDataset("cannot split an empty dataset")
    idx = _rng(seed, 0x5911).permutation(n)
    n_val = int(np.floor(n * ratios[1]))
    n_test = int(np.floor(n * ratios[2]))
    n_train = n - n_val - n_test
    if n_val == 0 or n_test == 0:
        warnings.warn("EmptyEvalSplit: a val or test split received 0 samples")
    parts = (idx[:n_train], idx[n_train:n_train + n_val], idx[n_train + n_val:])
    return tuple(_subset(dataset, sorted(p.tolist())) for p in parts), \
        tuple(sorted(p.tolist()) for p in parts)


def _subset(dataset: GraphDataset, unit_ids) -> GraphDataset:
    """Dataset restricted to the given unit ids (graphs, or labeled edges
    for link tasks where the graph structure is retained)."""
    if dataset.task is not Task.LINK_REGRESSION:
        return GraphDataset(
            task=dataset.task,
            graphs=[dataset.graphs[i] for i in unit_ids],
            num_tasks_or_classes=dataset.num_tasks_or_classes,
            feature_dims=dataset.feature_dims,
        )
    wanted = set(unit_ids)
    graphs = []
    offset = 0
    for g in dataset.graphs:
        m = 0 if g.edge_labels is None else g.edge_labels.shape[0]
        keep = [e for e in range(m) if offset + e in wanted]
        offset += m
        labels = g.edge_labels[keep] if keep else np.zeros((0, 3))
        graphs.append(replace(g, edge_labels=labels))
    return GraphDataset(
        task=dataset.task,
        graphs=graphs,
        num_tasks_or_classes=dataset.num_tasks_or_classes,
        feature_dims=dataset.feature_dims,
    )


def lda_partition(labels, num_clients: int, alpha: float, seed: int):
    """Dirichlet(alpha) non-IID assignment of samples to clients.

    Per class, client proportions are drawn as normalized Gamma(alpha, 1)
    variates; the shuffled class indices are cut at the rounded cumulative
    proportions. Every client is then guaranteed at least one sample when
    totals allow, by moving singles from the largest client.
    """
    if alpha <= 0:
        raise InvalidAlpha(f"alpha must be > 0, got {alpha}")
    labels = np.asarray(labels, dtype=np.int64)
    n = labels.size
    if num_clients > n:
        raise MoreClientsThanSamples(f"{num_clients} clients but {n} samples")
    rng = _rng(seed, 0x1da)
    assignment = np.zeros(n, dtype=np.int64)
    for k in sorted(set(labels.tolist())):
        cls_idx = np.flatnonzero(labels == k)
        rng.shuffle(cls_idx)
        gammas = rng.gamma(alpha, 1.0, size=num_clients)
        total = gammas.sum()
        if total == 0:  # extreme small alpha underflow
            gammas = np.ones(num_clients)
            total = float(num_clients)
        cuts = np.round(cls_idx.size * np.cumsum(gammas / total)).astype(int)
        prev = 0
        for j, cut in enumerate(cuts):
            assignment[cls_idx[prev:cut]] = j
            prev = cut
        assignment[cls_idx[prev:]] = num_clients - 1
    _rebalance_min_one(assignment, num_clients)
    return assignment


def _rebalance_min_one(assignment, num_clients):
    sizes = np.bincount(assignment, minlength=num_clients)
    while sizes.min() == 0 and sizes.sum() >= num_clients:
        empty = int(np.argmin(sizes))
        largest = int(np.argmax(sizes))
        moved = np.flatnonzero(assignment == largest)[0]
        assignment[moved] = empty
        sizes[largest] -= 1
        sizes[empty] += 1


def uniform_partition(n: int, num_clients: int, seed: int):
    """Shuffled round-robin; client sizes differ by at most one."""
    if num_clients > n:
        raise MoreClientsThanSamples(f"{num_clients} clients but {n} samples")
    perm = _rng(seed, 0x0413).permutation(n)
    assignment = np.zeros(n, dtype=np.int64)
    for pos, sample in enumerate(perm.tolist()):
        assignment[sample] = pos % num_clients
    return assignment


def metadata_partition(categories, num_clients: int, seed: int):
    """All samples of one category land on one client; categories are dealt
    round-robin in descending size order."""
    cats = list(categories)
    if any(c is None for c in cats):
        raise MissingCategory("every sample must carry a category key")
    groups: dict = {}
    for i, c in enumerate(cats):
        groups.setdefault(c, []).append(i)
    order = sorted(groups, key=lambda c: (-len(groups[c]), str(c)))
    client_order = _rng(seed, 0x3e7a).permutation(num_clients).tolist()
    assignment = np.zeros(len(cats), dtype=np.int64)
    for pos, cat in enumerate(order):
        client = client_order[pos % num_clients]
        for i in groups[cat]:
            assignment[i] = client
    used = set(assignment.tolist())
    if len(used) < num_clients:
        warnings.warn(
            f"{num_clients - len(used)} client(s) received no category"
        )
    return assignment


def sample_ego_networks(global_graph: Graph, num_egos: int, k: int, seed: int,
                        mask_noncenter_labels: bool = True) -> GraphDataset:
    """Uniformly sample ego centers without replacement and build k-hop
    ego-networks. Only the center keeps its label by default, so labels of
    other centers never leak through overlapping neighborhoods."""
    if num_egos > global_graph.num_nodes:
        raise TooManyEgos(
            f"{num_egos} egos requested from {global_graph.num_nodes} nodes"
        )
    centers = _rng(seed, 0xe90).choice(
        global_graph.num_nodes, size=num_egos, replace=False
    )
    graphs = []
    for c in sorted(centers.tolist()):
        ego = khop_ego(global_graph, c, k)
        if mask_noncenter_labels and ego.node_labels is not None:
            masked = np.full(ego.num_nodes, -1, dtype=np.int64)
            masked[0] = ego.node_labels[0]
            ego = replace(ego, node_labels=masked)
        graphs.append(ego)
    num_classes = int(global_graph.node_labels.max()) + 1 \
        if global_graph.node_labels is not None else 1
    return GraphDataset(
        task=Task.NODE_CLASSIFICATION,
        graphs=graphs,
        num_tasks_or_classes=num_classes,
    )


def _sample_class_labels(dataset: GraphDataset):
    """Per-sample class labels used by the LDA scheme; unlabeled/regression
    datasets collapse to a single class."""
    labels = []
    for g in dataset.graphs:
        if dataset.task is Task.GRAPH_CLASSIFICATION and g.graph_label is not None:
            lab = g.graph_label
            if lab.size >= 1 and np.isfinite(lab).all() and set(np.unique(lab)) <= {0.0, 1.0}:
                labels.append(int(np.argmax(lab)))
            else:
                labels.append(0)
        elif dataset.task is Task.NODE_CLASSIFICATION and g.node_labels is not None:
            labels.append(int(g.node_labels[0]))  # ego center
        else:
            labels.append(0)
    return np.asarray(labels, dtype=np.int64)


def make_shards(dataset: GraphDataset, spec: PartitionSpec):
    """Assign samples to clients, then split each client 80/10/10 locally.

    Returns (shards, manifest). The manifest records the seed, scheme and
    exact per-client sample/split indices for reproducibility audits.
    """
    spec.validate()
    if len(dataset.graphs) == 0:
        raise EmptyDataset("no graphs to partition")
    if dataset.task is Task.LINK_REGRESSION or spec.scheme == "metadata":
        sample_ids = list(range(len(dataset.graphs)))
    else:
        sample_ids = list(range(len(dataset.graphs)))

    if spec.scheme == "uniform":
        assignment = uniform_partition(len(sample_ids), spec.num_clients, spec.seed)
    elif spec.scheme == "lda":
        assignment = lda_partition(
            _sample_class_labels(dataset), spec.num_clients, spec.alpha, spec.seed
        )
    else:
        cats = [getattr(g, "category", None) for g in dataset.graphs]
        assignment = metadata_partition(cats, spec.num_clients, spec.seed)

    shards = []
    manifest = {
        "seed": spec.seed,
        "scheme": spec.scheme,
        "num_clients": spec.num_clients,
        "split_ratios": list(spec.split_ratios),
        "assignments": [],
        "splits": [],
    }
    if spec.scheme == "lda":
        manifest["alpha"] = spec.alpha

    global_splits = None
    if not spec.local_split:
        if dataset.task is Task.LINK_REGRESSION:
            raise ValueError("global split mode is not supported for link tasks")
        _, global_splits = split_train_val_test(dataset, spec.split_ratios, spec.seed)

    for j in range(spec.num_clients):
        mine = [i for i in sample_ids if assignment[i] == j]
        local = _subset(dataset, mine) if dataset.task is not Task.LINK_REGRESSION \
            else GraphDataset(dataset.task,
                              [dataset.graphs[i] for i in mine],
                              dataset.num_tasks_or_classes, dataset.feature_dims)
        if spec.local_split:
            (tr, va, te), split_idx = split_train_val_test(
                local, spec.split_ratios, seed=spec.seed * 10007 + j
            )
        else:
            unit_in_split = [set(s) for s in global_splits]
            split_idx = tuple(
                [pos for pos, i in enumerate(mine) if i in s] for s in unit_in_split
            )
            tr, va, te = (_subset(local, s) for s in split_idx)
        shards.append(ClientShard(client_id=j, train=tr, val=va, test=te))
        manifest["assignments"].append(mine)
        manifest["splits"].append(
            {"train": list(map(int, split_idx[0])),
             "val": list(map(int, split_idx[1])),
             "test": list(map(int, split_idx[2]))}
        )
    return shards, manifest


def class_histograms(shards, num_classes: int):
    """Per-client training class histogram (textual analogue of the
    partition-skew figures)."""
    out = []
    for shard in shards:
        labels = _sample_class_labels(shard.train)
        hist = np.bincount(labels, minlength=num_classes)[:num_classes]
        out.append(hist.tolist())
    return out
