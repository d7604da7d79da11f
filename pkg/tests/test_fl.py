import json

import numpy as np
import pytest

from fedgraph.datasets import gen_motif_graphs
from fedgraph.errors import EmptyUpdateSet, InvalidCount, LayoutMismatch
from fedgraph.fl import (
    Adam,
    ClientUpdate,
    FedOptState,
    FLConfig,
    SGD,
    aggregate_fedavg,
    centralized_train,
    evaluate,
    fedopt_server_step,
    local_train,
    run_training,
    sample_clients,
)
from fedgraph.gnn import Model, ModelConfig
from fedgraph.graph import ClientShard, GraphDataset, Task
from fedgraph.params import ParamVector
from fedgraph.partition import PartitionSpec, make_shards


def _pv(values):
    arr = np.asarray(values, dtype=np.float64)
    return ParamVector(arr, [("W", arr.shape)])


def _motif_shards(num_clients, num_graphs=48, seed=0, scheme="uniform",
                  alpha=0.5):
    ds = gen_motif_graphs(num_graphs=num_graphs, seed=seed)
    spec = PartitionSpec(scheme=scheme, num_clients=num_clients,
                         alpha=alpha, seed=seed)
    shards, _ = make_shards(ds, spec)
    return ds, shards


def _tiny_model_config(**over):
    kw = dict(model="gcn", num_layers=2, hidden_dim=4, node_embedding_dim=4,
              graph_embedding_dim=4, task=Task.GRAPH_CLASSIFICATION)
    kw.update(over)
    return ModelConfig(**kw)


# -- aggregation --------------------------------------------------------------

def test_aggregate_weighted_mean_example():
    updates = [ClientUpdate(0, _pv([1.0, 3.0]), 2, 0.0),
               ClientUpdate(1, _pv([5.0, 7.0]), 6, 0.0)]
    out = aggregate_fedavg(updates)
    assert out.data.tolist() == [4.0, 6.0]


def test_aggregate_single_update(rng):
    u = ClientUpdate(0, _pv(rng.standard_normal(5)), 3, 0.0)
    out = aggregate_fedavg([u])
    assert np.array_equal(out.data, u.params.data)


def test_aggregate_identical_updates_conserved(rng):
    w = rng.standard_normal(6)
    updates = [ClientUpdate(j, _pv(w.copy()), j + 1, 0.0) for j in range(4)]
    assert np.array_equal(aggregate_fedavg(updates).data, w)


def test_aggregate_matches_independent_mean(rng):
    for _ in range(100):
        k = int(rng.integers(1, 7))
        d = int(rng.integers(1, 9))
        ws = rng.standard_normal((k, d))
        ns = rng.integers(1, 50, size=k)
        updates = [ClientUpdate(j, _pv(ws[j]), int(ns[j]), 0.0)
                   for j in range(k)]
        out = aggregate_fedavg(updates)
        expect = np.average(ws, axis=0, weights=ns)  # independent oracle
        assert np.max(np.abs(out.data - expect)) < 1e-15


def test_aggregate_scale_invariance(rng):
    ws = rng.standard_normal((3, 4))
    base = [ClientUpdate(j, _pv(ws[j]), j + 1, 0.0) for j in range(3)]
    scaled = [ClientUpdate(j, _pv(ws[j]), 7 * (j + 1), 0.0) for j in range(3)]
    assert np.array_equal(aggregate_fedavg(base).data,
                          aggregate_fedavg(scaled).data)


def test_aggregate_errors(rng):
    with pytest.raises(EmptyUpdateSet):
        aggregate_fedavg([])
    a = ClientUpdate(0, _pv([1.0]), 1, 0.0)
    b = ClientUpdate(1, ParamVector(np.zeros(2), [("V", (2,))]), 1, 0.0)
    with pytest.raises(LayoutMismatch):
        aggregate_fedavg([a, b])


# -- server optimizer ---------------------------------------------------------

def test_fedopt_zero_delta_is_noop(rng):
    g = _pv(rng.standard_normal(4))
    updates = [ClientUpdate(j, g.copy(), 2, 0.0) for j in range(3)]
    state = FedOptState()
    out = fedopt_server_step(state, g, updates, server_lr=1.0,
                             beta1=0.9, beta2=0.999, tau=1e-3, step=1)
    assert np.array_equal(out.data, g.data)


def test_fedopt_plain_gradient_reduces_to_fedavg(rng):
    # with delta = global - fedavg, a plain unit-lr gradient step lands
    # exactly on the fedavg point
    g = _pv(rng.standard_normal(5))
    updates = [ClientUpdate(j, _pv(rng.standard_normal(5)), j + 1, 0.0)
               for j in range(3)]
    avg = aggregate_fedavg(updates)
    delta = g.data - avg.data
    assert np.allclose(g.data - 1.0 * delta, avg.data, rtol=0, atol=1e-15)


def test_fedopt_first_step_formula():
    """Hand-evaluated first step from zero moments on delta = [0.5]."""
    g = _pv([2.0])
    avg_target = 1.5  # so delta = 0.5
    updates = [ClientUpdate(0, _pv([avg_target]), 1, 0.0)]
    lr, b1, b2, tau = 0.7, 0.9, 0.999, 1e-3
    out = fedopt_server_step(FedOptState(), g, updates, lr, b1, b2, tau, step=1)
    delta = 0.5
    m_hat = (0.1 * delta) / (1 - b1)
    v_hat = (0.001 * delta ** 2) / (1 - b2)
    expect = 2.0 - lr * m_hat / (np.sqrt(v_hat) + tau)
    assert out.data[0] == pytest.approx(expect, abs=1e-15)


def test_sample_clients():
    assert sample_clients(4, 4, 1, 0) == {1, 2, 3, 4}
    assert sample_clients(1, 1, 3, 0) == {1}
    assert sample_clients(10, 3, 5, 42) == sample_clients(10, 3, 5, 42)
    with pytest.raises(InvalidCount):
        sample_clients(3, 4, 1, 0)


# -- local training -----------------------------------------------------------

def test_local_train_zero_lr_is_noop():
    _, shards = _motif_shards(2)
    cfg = _tiny_model_config()
    model = Model(cfg, 8, 3)
    params = model.init_params(0)
    upd = local_train(params, shards[0], model, epochs=2,
                      optimizer_name="sgd", lr=0.0, seed=0, round_index=1)
    assert np.array_equal(upd.params.data, params.data)
    assert upd.num_samples == shards[0].num_train_samples


def test_sgd_closed_form_step():
    # one step on 0.5*(w - y)^2: w' = w - lr*(w - y)
    w, y, lr = 3.0, 1.0, 0.25
    pv = _pv([w])
    grads = _pv([w - y])
    SGD(lr).step(pv, grads)
    assert pv.data[0] == pytest.approx(w - lr * (w - y), abs=1e-15)


def test_adam_convex_quadratic_converges():
    # minimize 0.5*w^2 with Adam defaults for 200 steps
    pv = _pv([2.0])
    opt = Adam(lr=0.02)
    losses = []
    for _ in range(200):
        losses.append(0.5 * pv.data[0] ** 2)
        opt.step(pv, _pv([pv.data[0]]))
    assert losses[-1] < 1e-3
    warm = losses[5:]
    assert all(a >= b - 1e-12 for a, b in zip(warm, warm[1:]))


# -- end-to-end runs ----------------------------------------------------------

def test_one_client_equals_centralized_bit_exact():
    """K=1, E=1 FedAvg reproduces centralized SGD training bit-exactly
    (clients are stateless, so SGD is the apples-to-apples optimizer)."""
    ds, shards = _motif_shards(1, num_graphs=30)
    mcfg = _tiny_model_config()
    fl_cfg = FLConfig(num_clients=1, rounds=3, local_epochs=1,
                      optimizer="sgd", learning_rate=0.01,
                      eval_frequency=100, seed=5)
    _, fed_params = run_training(shards, mcfg, fl_cfg)
    model = Model(mcfg, 8, 3)
    cen_params, _ = centralized_train(shards[0].train, model, epochs=3,
                                      optimizer_name="sgd", lr=0.01, seed=5)
    assert np.array_equal(fed_params.data, cen_params.data)


def test_zero_lr_keeps_initial_metric():
    ds, shards = _motif_shards(2, num_graphs=30)
    mcfg = _tiny_model_config()
    fl_cfg = FLConfig(num_clients=2, rounds=2, local_epochs=1,
                      optimizer="sgd", learning_rate=0.0,
                      eval_frequency=1, seed=3)
    report, params = run_training(shards, mcfg, fl_cfg)
    model = Model(mcfg, 8, 3)
    init = model.init_params(3)
    assert np.array_equal(params.data, init.data)
    # pooled metric equals evaluating the initial model directly
    vals, ns = zip(*(evaluate(model, init, s.test) for s in shards))
    expect = sum(v * n for v, n in zip(vals, ns)) / sum(ns)
    assert report.final_test_metric == pytest.approx(expect, abs=1e-12)


def test_report_schema_and_primary_json():
    _, shards = _motif_shards(2, num_graphs=30)
    fl_cfg = FLConfig(num_clients=2, rounds=4, eval_frequency=2, seed=1,
                      learning_rate=0.01)
    report, _ = run_training(shards, _tiny_model_config(), fl_cfg,
                             config_echo={"note": "test"})
    doc = json.loads(report.to_json())
    assert {"config", "seed", "param_count", "per_round",
            "final_test_metric", "best_round", "best_eval_metric",
            "timing"} <= set(doc)
    assert len(doc["per_round"]) == 4
    assert doc["per_round"][1]["eval_metric"] is not None  # round 2 evaluates
    primary = json.loads(report.primary_json())
    assert "timing" not in primary


def test_partial_participation_runs():
    _, shards = _motif_shards(4, num_graphs=60)
    fl_cfg = FLConfig(num_clients=4, clients_per_round=2, rounds=3,
                      eval_frequency=3, seed=2, learning_rate=0.01)
    report, _ = run_training(shards, _tiny_model_config(), fl_cfg)
    assert len(report.per_round) == 3


def test_fedopt_training_runs():
    _, shards = _motif_shards(2, num_graphs=30)
    fl_cfg = FLConfig(num_clients=2, rounds=3, server_algorithm="fedopt",
                      server_lr=0.5, eval_frequency=3, seed=4,
                      learning_rate=0.01)
    report, _ = run_training(shards, _tiny_model_config(), fl_cfg)
    assert report.final_test_metric is not None
