import numpy as np
import pytest

from fedgraph.gnn import Model, loss
from fedgraph.graph import build_graph


def random_graph(rng, n=None, p=0.35, d_node=5, node_classes=None,
                 graph_label=None):
    n = n or int(rng.integers(3, 12))
    edges = [(i, j) for i in range(n) for j in range(i + 1, n)
             if rng.random() < p]
    X = rng.standard_normal((n, d_node))
    node_labels = (rng.integers(0, node_classes, size=n)
                   if node_classes else None)
    return build_graph(n, edges, X, node_labels=node_labels,
                       graph_label=graph_label)


def finite_difference_check(model: Model, params, g, labels, pairs=None,
                            eps=1e-5, max_coords=None):
    """Max relative error between analytic and central-difference gradients,
    with denominator max(1, |analytic| + |numeric|)."""
    out, cache = model.forward(params, g, pairs=pairs)
    _, gpred = loss(out, labels, model.config.task)
    analytic = model.backward(params, cache, gpred).data

    def loss_at():
        o, _ = model.forward(params, g, pairs=pairs)
        return loss(o, labels, model.config.task)[0]

    coords = range(len(params))
    if max_coords is not None and len(params) > max_coords:
        coords = np.random.default_rng(0).choice(
            len(params), size=max_coords, replace=False
        )
    worst = 0.0
    for i in coords:
        orig = params.data[i]
        params.data[i] = orig + eps
        up = loss_at()
        params.data[i] = orig - eps
        down = loss_at()
        params.data[i] = orig
        numeric = (up - down) / (2 * eps)
        err = abs(numeric - analytic[i]) / max(1.0, abs(analytic[i]) + abs(numeric))
        worst = max(worst, err)
    return worst


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
