"""Message-passing models (GCN, GraphSAGE, GAT, SGC), readout heads and losses.

Every model exposes forward(params, graph, ...) -> (output, cache) and
backward(params, cache, grad_output) -> flat gradient over the same
layout. Backward rules are hand-derived and finite-difference checked.
"""

import weakref
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    AllLabelsMasked,
    DimensionMismatch,
    EmptyGraph,
    HeadDivisibility,
    IndexOutOfRange,
)
from .graph import Graph, Task
from .ndmath import (
    SparseMatrix,
    activation,
    activation_backward,
    dropout_backward,
    dropout_forward,
    row_softmax_segmented,
    row_softmax_segmented_backward,
    spmm,
    spmm_backward,
)
from .params import ParamVector

GRAPH_TASKS = (Task.GRAPH_CLASSIFICATION, Task.GRAPH_REGRESSION)


@dataclass
class ModelConfig:
    """Architecture hyperparameters; defaults follow the tuned settings
    used throughout (2 layers, 64-dim embeddings, 2 attention heads,
    LeakyReLU slope 0.2)."""

    model: str = "gcn"  # gcn | sage | gat | sgc
    num_layers: int = 2
    node_embedding_dim: int = 64
    hidden_dim: int = 64
    readout_dim: int = 64
    graph_embedding_dim: int = 64
    attention_heads: int = 2
    leaky_slope: float = 0.2
    dropout: float = 0.0
    pooling: str = "sum"  # sum | mean
    task: Task = Task.GRAPH_CLASSIFICATION

    def validate(self):
        for name in ("num_layers", "node_embedding_dim", "hidden_dim",
                     "readout_dim", "graph_embedding_dim"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.attention_heads < 1:
            raise ValueError("attention_heads must be >= 1")
        if self.model == "gat" and self.hidden_dim % self.attention_heads != 0:
            raise HeadDivisibility(
                f"hidden_dim {self.hidden_dim} not divisible by "
                f"{self.attention_heads} heads"
            )
        if not (0.0 <= self.dropout < 1.0):
            raise ValueError("dropout must be in [0, 1)")
        if self.pooling not in ("sum", "mean"):
            raise ValueError(f"unknown pooling {self.pooling!r}")
        if self.model not in ("gcn", "sage", "gat", "sgc"):
            raise ValueError(f"unknown model {self.model!r}")


# ---------------------------------------------------------------------------
# Propagation operators (cached per graph; graphs are immutable)

_norm_adj_cache: "weakref.WeakKeyDictionary" = weakref.WeakKeyDictionary()
_mean_adj_cache: "weakref.WeakKeyDictionary" = weakref.WeakKeyDictionary()
_att_struct_cache: "weakref.WeakKeyDictionary" = weakref.WeakKeyDictionary()


def normalize_adjacency(graph: Graph) -> SparseMatrix:
    """Symmetric GCN normalization with self-loops:
    entry (i, j) = 1/sqrt(d~_i d~_j) for stored edges and the diagonal."""
    cached = _norm_adj_cache.get(graph)
    if cached is not None:
        return cached
    n = graph.num_nodes
    deg = graph.degrees().astype(np.float64) + 1.0
    inv_sqrt = 1.0 / np.sqrt(deg)
    indptr = np.zeros(n + 1, dtype=np.int64)
    cols, vals = [], []
    for i in range(n):
        nbrs = graph.neighbors(i)
        row = np.concatenate((nbrs, [i]))
        order = np.argsort(row, kind="stable")
        row = row[order]
        cols.append(row)
        vals.append(inv_sqrt[i] * inv_sqrt[row])
        indptr[i + 1] = indptr[i] + row.size
    out = SparseMatrix(
        shape=(n, n),
        indptr=indptr,
        indices=np.concatenate(cols).astype(np.int64) if cols else np.zeros(0, np.int64),
        values=np.concatenate(vals) if vals else np.zeros(0),
    )
    _norm_adj_cache[graph] = out
    return out


def mean_adjacency(graph: Graph) -> SparseMatrix:
    """Row-normalized adjacency without self-loops; isolated nodes get a
    zero row (their neighbor mean is the zero vector)."""
    cached = _mean_adj_cache.get(graph)
    if cached is not None:
        return cached
    n = graph.num_nodes
    deg = graph.degrees().astype(np.float64)
    inv = np.where(deg > 0, 1.0 / np.maximum(deg, 1.0), 0.0)
    vals = np.repeat(inv, graph.degrees())
    out = SparseMatrix(
        shape=(n, n),
        indptr=graph.indptr.copy(),
        indices=graph.indices.copy(),
        values=vals,
    )
    _mean_adj_cache[graph] = out
    return out


def attention_structure(graph: Graph):
    """(dst, src) index arrays for attention over N(i) u {i}, grouped by
    destination i with sources in ascending order."""
    cached = _att_struct_cache.get(graph)
    if cached is not None:
        return cached
    dst, src = [], []
    for i in range(graph.num_nodes):
        row = np.concatenate((graph.neighbors(i), [i]))
        row.sort()
        src.append(row)
        dst.append(np.full(row.size, i, dtype=np.int64))
    out = (np.concatenate(dst), np.concatenate(src).astype(np.int64))
    _att_struct_cache[graph] = out
    return out


# ---------------------------------------------------------------------------
# Layers

def gcn_layer(H, A_hat: SparseMatrix, W, b, act="relu", slope=0.2):
    AH = spmm(A_hat, H)
    pre = AH @ W + b
    out = activation(pre, act, slope)
    cache = (H, A_hat, W, AH, pre, act, slope)
    return out, cache


def gcn_layer_backward(cache, G):
    H, A_hat, W, AH, pre, act, slope = cache
    Gp = G * activation_backward(pre, act, slope)
    dW = AH.T @ Gp
    db = Gp.sum(axis=0)
    dH = spmm(A_hat, Gp @ W.T)  # A_hat is symmetric
    return dH, dW, db


def sage_layer(H, P_mean: SparseMatrix, W_self, W_neigh, b, act="relu", slope=0.2):
    M = spmm(P_mean, H)
    pre = H @ W_self + M @ W_neigh + b
    out = activation(pre, act, slope)
    cache = (H, P_mean, W_self, W_neigh, M, pre, act, slope)
    return out, cache


def sage_layer_backward(cache, G):
    H, P_mean, W_self, W_neigh, M, pre, act, slope = cache
    Gp = G * activation_backward(pre, act, slope)
    dW_self = H.T @ Gp
    dW_neigh = M.T @ Gp
    db = Gp.sum(axis=0)
    dH = Gp @ W_self.T + spmm_backward(P_mean, Gp @ W_neigh.T)
    return dH, dW_self, dW_neigh, db


def gat_head(H, dst, src, W, a_src, a_dst, slope, act="relu", act_slope=0.2):
    """Single attention head: alpha over N(i) u {i}, output act(sum alpha Wh)."""
    P = H @ W
    s = P @ a_src
    t = P @ a_dst
    logits_pre = s[dst] + t[src]
    logits = activation(logits_pre, "leaky_relu", slope)
    alpha = row_softmax_segmented(logits, dst)
    n, dh = P.shape
    agg = np.zeros((n, dh))
    # segments in dst are contiguous; sorted-value sums keep the output
    # bit-identical under node relabeling
    contrib = alpha[:, None] * P[src]
    starts = np.searchsorted(dst, np.arange(n), side="left")
    ends = np.searchsorted(dst, np.arange(n), side="right")
    for i in range(n):
        if ends[i] > starts[i]:
            agg[i] = np.sort(contrib[starts[i]:ends[i]], axis=0).sum(axis=0)
    out = activation(agg, act, act_slope)
    cache = (H, dst, src, W, a_src, a_dst, slope, act, act_slope,
             P, s, t, logits_pre, alpha, agg)
    return out, cache


def gat_head_backward(cache, G):
    (H, dst, src, W, a_src, a_dst, slope, act, act_slope,
     P, s, t, logits_pre, alpha, agg) = cache
    Gp = G * activation_backward(agg, act, act_slope)
    # through agg_i = sum_e alpha_e P_src(e)
    dalpha = np.einsum("ed,ed->e", Gp[dst], P[src])
    dP = np.zeros_like(P)
    np.add.at(dP, src, alpha[:, None] * Gp[dst])
    dlogits = row_softmax_segmented_backward(alpha, dst, dalpha)
    dpre = dlogits * activation_backward(logits_pre, "leaky_relu", slope)
    ds = np.zeros(P.shape[0])
    dt = np.zeros(P.shape[0])
    np.add.at(ds, dst, dpre)
    np.add.at(dt, src, dpre)
    dP += np.outer(ds, a_src) + np.outer(dt, a_dst)
    da_src = P.T @ ds
    da_dst = P.T @ dt
    dW = H.T @ dP
    dH = dP @ W.T
    return dH, dW, da_src, da_dst


# ---------------------------------------------------------------------------
# Readout heads

def pool_nodes(H, pooling):
    """Order-canonical pooling: columns are summed in sorted-value order so
    the result is bit-identical under any node permutation."""
    if H.shape[0] == 0:
        raise EmptyGraph("cannot pool an empty node set")
    pooled = np.sort(H, axis=0).sum(axis=0)
    if pooling == "mean":
        pooled = pooled / H.shape[0]
    return pooled


def readout_graph(H, pooling, W1, b1, W2, b2):
    pooled = pool_nodes(H, pooling)
    z = pooled @ W1 + b1
    h = np.maximum(z, 0.0)
    out = h @ W2 + b2
    cache = (H.shape[0], pooling, pooled, W1, W2, z, h)
    return out, cache


def readout_graph_backward(cache, G):
    n, pooling, pooled, W1, W2, z, h = cache
    dW2 = np.outer(h, G)
    db2 = G
    dh = W2 @ G
    dz = dh * (z > 0)
    dW1 = np.outer(pooled, dz)
    db1 = dz
    dpooled = W1 @ dz
    scale = 1.0 / n if pooling == "mean" else 1.0
    dH = np.tile(dpooled * scale, (n, 1))
    return dH, dW1, db1, dW2, db2


def readout_node(H, W_out, b_out):
    out = H @ W_out + b_out
    return out, (H, W_out)


def readout_node_backward(cache, G):
    H, W_out = cache
    return G @ W_out.T, H.T @ G, G.sum(axis=0)


def readout_link(H, pairs, W1, b1, W2, b2):
    """Scalar score per (src, dst) pair from an MLP on [h_src ; h_dst]."""
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if pairs.size and (pairs.min() < 0 or pairs.max() >= H.shape[0]):
        raise IndexOutOfRange("link endpoint outside graph")
    C = np.concatenate((H[pairs[:, 0]], H[pairs[:, 1]]), axis=1)
    z = C @ W1 + b1
    h = np.maximum(z, 0.0)
    out = (h @ W2 + b2).reshape(-1)
    cache = (H.shape, pairs, C, W1, W2, z, h)
    return out, cache


def readout_link_backward(cache, G):
    H_shape, pairs, C, W1, W2, z, h = cache
    G = np.asarray(G, dtype=np.float64).reshape(-1, 1)
    dW2 = h.T @ G
    db2 = G.sum(axis=0)
    dh = G @ W2.T
    dz = dh * (z > 0)
    dW1 = C.T @ dz
    db1 = dz.sum(axis=0)
    dC = dz @ W1.T
    d = H_shape[1]
    dH = np.zeros(H_shape)
    np.add.at(dH, pairs[:, 0], dC[:, :d])
    np.add.at(dH, pairs[:, 1], dC[:, d:])
    return dH, dW1, db1, dW2, db2


# ---------------------------------------------------------------------------
# Losses

def loss(prediction, labels, task: Task):
    """Scalar loss and its gradient w.r.t. the prediction.

    Graph classification: mean sigmoid cross-entropy over non-NaN labels.
    Node classification: mean softmax cross-entropy over labels >= 0.
    Regressions: mean squared error (NaN targets are skipped).
    """
    if task is Task.GRAPH_CLASSIFICATION:
        x = np.asarray(prediction, dtype=np.float64).reshape(-1)
        y = np.asarray(labels, dtype=np.float64).reshape(-1)
        if x.shape != y.shape:
            raise DimensionMismatch(f"prediction {x.shape} vs labels {y.shape}")
        valid = ~np.isnan(y)
        nv = int(valid.sum())
        if nv == 0:
            raise AllLabelsMasked("all labels are NaN")
        xv, yv = x[valid], y[valid]
        # stable BCE with logits
        val = np.maximum(xv, 0.0) - xv * yv + np.log1p(np.exp(-np.abs(xv)))
        grad = np.zeros_like(x)
        grad[valid] = (1.0 / (1.0 + np.exp(-xv)) - yv) / nv
        return float(val.mean()), grad.reshape(np.shape(prediction))

    if task is Task.NODE_CLASSIFICATION:
        X = np.asarray(prediction, dtype=np.float64)
        y = np.asarray(labels, dtype=np.int64).reshape(-1)
        if X.shape[0] != y.shape[0]:
            raise DimensionMismatch("one label per node required")
        valid = y >= 0
        nv = int(valid.sum())
        if nv == 0:
            raise AllLabelsMasked("no labeled nodes")
        Z = X - X.max(axis=1, keepdims=True)
        logsumexp = np.log(np.exp(Z).sum(axis=1))
        probs = np.exp(Z - logsumexp[:, None])
        ll = Z[np.arange(len(y)), np.where(valid, y, 0)] - logsumexp
        val = -float(ll[valid].mean())
        grad = np.zeros_like(X)
        grad[valid] = probs[valid]
        grad[valid, y[valid]] -= 1.0
        grad /= nv
        return val, grad

    # regressions
    x = np.asarray(prediction, dtype=np.float64).reshape(-1)
    y = np.asarray(labels, dtype=np.float64).reshape(-1)
    if x.shape != y.shape:
        raise DimensionMismatch(f"prediction {x.shape} vs labels {y.shape}")
    valid = ~np.isnan(y)
    nv = int(valid.sum())
    if nv == 0:
        raise AllLabelsMasked("all regression targets are NaN")
    diff = np.where(valid, x - np.where(valid, y, 0.0), 0.0)
    val = float((diff[valid] ** 2).mean())
    grad = (2.0 / nv) * diff
    return val, grad.reshape(np.shape(prediction))


# ---------------------------------------------------------------------------
# Assembled models

class Model:
    """One of the four baselines assembled for a task head.

    out_dim is num_tasks for graph heads, num_classes for node heads and
    ignored for link heads (always scalar).
    """

    def __init__(self, config: ModelConfig, d_node: int, out_dim: int):
        config.validate()
        self.config = config
        self.d_node = d_node
        self.out_dim = out_dim
        self.layout = self._build_layout()

    # -- layout ------------------------------------------------------------
    def _layer_dims(self):
        cfg = self.config
        dims = [self.d_node]
        for _ in range(cfg.num_layers - 1):
            dims.append(cfg.hidden_dim)
        dims.append(cfg.node_embedding_dim)
        return dims

    def _build_layout(self):
        cfg = self.config
        layout = []
        if cfg.model == "sgc":
            d_in = self.d_node if cfg.task is not Task.LINK_REGRESSION else 2 * self.d_node
            d_out = 1 if cfg.task is Task.LINK_REGRESSION else self.out_dim
            layout.append(("W", (d_in, d_out)))
            return layout
        dims = self._layer_dims()
        for l in range(cfg.num_layers):
            d_in, d_out = dims[l], dims[l + 1]
            if cfg.model == "gcn":
                layout.append((f"layer{l}.W", (d_in, d_out)))
                layout.append((f"layer{l}.b", (d_out,)))
            elif cfg.model == "sage":
                layout.append((f"layer{l}.W_self", (d_in, d_out)))
                layout.append((f"layer{l}.W_neigh", (d_in, d_out)))
                layout.append((f"layer{l}.b", (d_out,)))
            elif cfg.model == "gat":
                last = l == cfg.num_layers - 1
                d_head = d_out if last else d_out // cfg.attention_heads
                for h in range(cfg.attention_heads):
                    layout.append((f"layer{l}.head{h}.W", (d_in, d_head)))
                    layout.append((f"layer{l}.head{h}.a_src", (d_head,)))
                    layout.append((f"layer{l}.head{h}.a_dst", (d_head,)))
        d_emb = cfg.node_embedding_dim
        if cfg.task in GRAPH_TASKS:
            layout.append(("head.W1", (d_emb, cfg.graph_embedding_dim)))
            layout.append(("head.b1", (cfg.graph_embedding_dim,)))
            layout.append(("head.W2", (cfg.graph_embedding_dim, self.out_dim)))
            layout.append(("head.b2", (self.out_dim,)))
        elif cfg.task is Task.NODE_CLASSIFICATION:
            layout.append(("head.W_out", (d_emb, self.out_dim)))
            layout.append(("head.b_out", (self.out_dim,)))
        elif cfg.task is Task.LINK_REGRESSION:
            layout.append(("head.W1", (2 * d_emb, cfg.graph_embedding_dim)))
            layout.append(("head.b1", (cfg.graph_embedding_dim,)))
            layout.append(("head.W2", (cfg.graph_embedding_dim, 1)))
            layout.append(("head.b2", (1,)))
        return layout

    def param_count(self) -> int:
        return sum(int(np.prod(s)) if s else 1 for _, s in self.layout)

    def init_params(self, seed: int) -> ParamVector:
        """Glorot-uniform weight matrices, zero biases, seeded."""
        rng = np.random.default_rng([0x1817, seed & 0xFFFFFFFF])
        pv = ParamVector.zeros(self.layout)
        for name, shape in self.layout:
            seg = pv.get(name)
            if len(shape) == 2:
                fan_in, fan_out = shape
                bound = np.sqrt(6.0 / (fan_in + fan_out))
                seg[...] = rng.uniform(-bound, bound, size=shape)
            elif name.endswith(("a_src", "a_dst")):
                bound = np.sqrt(6.0 / (shape[0] + 1))
                seg[...] = rng.uniform(-bound, bound, size=shape)
            # biases stay zero
        return pv

    # -- forward/backward ---------------------------------------------------
    def _node_embeddings(self, params: ParamVector, g: Graph, training, rng):
        cfg = self.config
        H = g.node_features
        caches = []
        if cfg.model == "sgc":
            A = normalize_adjacency(g)
            for _ in range(cfg.num_layers):
                H = spmm(A, H)
            return H, [("sgc", A)]
        for l in range(cfg.num_layers):
            drop_cache = None
            if training and cfg.dropout > 0.0:
                H, mask = dropout_forward(H, cfg.dropout, rng)
                drop_cache = mask
            last = l == cfg.num_layers - 1
            act = "relu"
            if cfg.model == "gcn":
                A = normalize_adjacency(g)
                H, c = gcn_layer(H, A, params.get(f"layer{l}.W"),
                                 params.get(f"layer{l}.b"), act=act)
                caches.append(("gcn", l, c, drop_cache))
            elif cfg.model == "sage":
                P = mean_adjacency(g)
                H, c = sage_layer(H, P, params.get(f"layer{l}.W_self"),
                                  params.get(f"layer{l}.W_neigh"),
                                  params.get(f"layer{l}.b"), act=act)
                caches.append(("sage", l, c, drop_cache))
            elif cfg.model == "gat":
                dst, src = attention_structure(g)
                outs, hcaches = [], []
                for h in range(cfg.attention_heads):
                    o, c = gat_head(
                        H, dst, src,
                        params.get(f"layer{l}.head{h}.W"),
                        params.get(f"layer{l}.head{h}.a_src"),
                        params.get(f"layer{l}.head{h}.a_dst"),
                        cfg.leaky_slope, act=act,
                    )
                    outs.append(o)
                    hcaches.append(c)
                if last:
                    H = sum(outs) / cfg.attention_heads
                else:
                    H = np.concatenate(outs, axis=1)
                caches.append(("gat", l, hcaches, drop_cache, last))
        return H, caches

    def _node_embeddings_backward(self, params, caches, dH):
        cfg = self.config
        grads = ParamVector.zeros(self.layout)
        for entry in reversed(caches):
            kind = entry[0]
            if kind == "sgc":
                A = entry[1]
                for _ in range(cfg.num_layers):
                    dH = spmm_backward(A, dH)
                continue
            if kind == "gcn":
                _, l, c, drop = entry
                dH, dW, db = gcn_layer_backward(c, dH)
                grads.get(f"layer{l}.W")[...] += dW
                grads.get(f"layer{l}.b")[...] += db
            elif kind == "sage":
                _, l, c, drop = entry
                dH, dWs, dWn, db = sage_layer_backward(c, dH)
                grads.get(f"layer{l}.W_self")[...] += dWs
                grads.get(f"layer{l}.W_neigh")[...] += dWn
                grads.get(f"layer{l}.b")[...] += db
            elif kind == "gat":
                _, l, hcaches, drop, last = entry
                nheads = cfg.attention_heads
                dH_in = None
                if last:
                    per_head = dH / nheads
                    splits = [per_head] * nheads
                else:
                    splits = np.split(dH, nheads, axis=1)
                for h, (c, g_out) in enumerate(zip(hcaches, splits)):
                    dHh, dW, das, dad = gat_head_backward(c, g_out)
                    grads.get(f"layer{l}.head{h}.W")[...] += dW
                    grads.get(f"layer{l}.head{h}.a_src")[...] += das
                    grads.get(f"layer{l}.head{h}.a_dst")[...] += dad
                    dH_in = dHh if dH_in is None else dH_in + dHh
                dH = dH_in
            if entry[3] is not None:
                dH = dropout_backward(dH, entry[3])
        return grads, dH

    def forward(self, params: ParamVector, g: Graph, training=False,
                rng=None, pairs=None):
        """Returns (output, cache). Output: graph tasks -> (out_dim,) vector;
        node task -> (n, out_dim) logits; link task -> (len(pairs),) scores."""
        cfg = self.config
        H, caches = self._node_embeddings(params, g, training, rng)
        if cfg.model == "sgc":
            return self._sgc_head(params, H, caches, pairs)
        if cfg.task in GRAPH_TASKS:
            out, hc = readout_graph(
                H, cfg.pooling,
                params.get("head.W1"), params.get("head.b1"),
                params.get("head.W2"), params.get("head.b2"),
            )
        elif cfg.task is Task.NODE_CLASSIFICATION:
            out, hc = readout_node(H, params.get("head.W_out"),
                                   params.get("head.b_out"))
        else:
            out, hc = readout_link(
                H, pairs,
                params.get("head.W1"), params.get("head.b1"),
                params.get("head.W2"), params.get("head.b2"),
            )
        return out, ("mpnn", caches, hc)

    def _sgc_head(self, params, H, caches, pairs):
        cfg = self.config
        W = params.get("W")
        if cfg.task in GRAPH_TASKS:
            pooled = pool_nodes(H, cfg.pooling)
            out = pooled @ W
            return out, ("sgc", caches, (H.shape[0], pooled))
        if cfg.task is Task.NODE_CLASSIFICATION:
            return H @ W, ("sgc", caches, (H, None))
        pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        C = np.concatenate((H[pairs[:, 0]], H[pairs[:, 1]]), axis=1)
        return (C @ W).reshape(-1), ("sgc", caches, (H.shape, pairs, C))

    def backward(self, params: ParamVector, cache, grad_out) -> ParamVector:
        cfg = self.config
        kind, caches, hc = cache
        if kind == "sgc":
            grads = ParamVector.zeros(self.layout)
            W = params.get("W")
            if cfg.task in GRAPH_TASKS:
                n, pooled = hc
                g = np.asarray(grad_out).reshape(-1)
                grads.get("W")[...] = np.outer(pooled, g)
                scale = 1.0 / n if cfg.pooling == "mean" else 1.0
                dH = np.tile((W @ g) * scale, (n, 1))
            elif cfg.task is Task.NODE_CLASSIFICATION:
                H, _ = hc
                grads.get("W")[...] = H.T @ grad_out
                dH = grad_out @ W.T
            else:
                H_shape, pairs, C = hc
                g = np.asarray(grad_out).reshape(-1, 1)
                grads.get("W")[...] = C.T @ g
                dC = g @ W.T
                d = H_shape[1]
                dH = np.zeros(H_shape)
                np.add.at(dH, pairs[:, 0], dC[:, :d])
                np.add.at(dH, pairs[:, 1], dC[:, d:])
            layer_grads, _ = self._node_embeddings_backward(params, caches, dH)
            grads.data += layer_grads.data
            return grads
        if cfg.task in GRAPH_TASKS:
            dH, dW1, db1, dW2, db2 = readout_graph_backward(hc, np.asarray(grad_out).reshape(-1))
            grads, _ = self._node_embeddings_backward(params, caches, dH)
            grads.get("head.W1")[...] += dW1
            grads.get("head.b1")[...] += db1
            grads.get("head.W2")[...] += dW2
            grads.get("head.b2")[...] += db2
        elif cfg.task is Task.NODE_CLASSIFICATION:
            dH, dW, db = readout_node_backward(hc, grad_out)
            grads, _ = self._node_embeddings_backward(params, caches, dH)
            grads.get("head.W_out")[...] += dW
            grads.get("head.b_out")[...] += db
        else:
            dH, dW1, db1, dW2, db2 = readout_link_backward(hc, grad_out)
            grads, _ = self._node_embeddings_backward(params, caches, dH)
            grads.get("head.W1")[...] += dW1
            grads.get("head.b1")[...] += db1
            grads.get("head.W2")[...] += dW2
            grads.get("head.b2")[...] += db2
        return grads


def sgc_forward(X, A_hat: SparseMatrix, K: int, W):
    """Propagate K times then apply the single weight matrix (no nonlinearity)."""
    if K < 0:
        raise DimensionMismatch("K must be >= 0")
    H = X
    for _ in range(K):
        H = spmm(A_hat, H)
    return H @ W


def param_count(config: ModelConfig, d_node: int, num_tasks: int) -> int:
    return Model(config, d_node, num_tasks).param_count()
