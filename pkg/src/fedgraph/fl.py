"""Round-based federated optimization over the transport abstraction.

The server holds the global parameter vector; each round it sends the
model to the selected clients, which train locally (batch size one
training unit) and reply with either plaintext updates or the secure
aggregation message flow. Evaluation happens every ``eval_frequency``
rounds and on the final round, with client metrics pooled by local
eval-set size.
"""

import json
import logging
import threading
import time
from dataclasses import dataclass, field as dc_field

import numpy as np

from .comm import (
    BROADCAST_ID,
    MSG_AGG_SHARE,
    MSG_CLIENT_UPDATE,
    MSG_CONTROL,
    MSG_EVAL_REPORT,
    MSG_GLOBAL_MODEL,
    MSG_MASK_SHARE,
    MSG_MASKED_UPLOAD,
    SERVER_ID,
    MemoryTransport,
    RoundMessage,
    TcpClientTransport,
    TcpServerTransport,
    deserialize_params,
    serialize_params,
)
from .errors import (
    EmptyShard,
    EmptyUpdateSet,
    InsufficientSurvivors,
    InvalidCount,
    LayoutMismatch,
    Timeout,
    TransportFailure,
)
from .field import FieldVector
from .gnn import GRAPH_TASKS, Model, ModelConfig, loss
from .graph import ClientShard, GraphDataset, Task
from .metrics import micro_f1, regression_metrics, roc_auc
from .params import ParamVector
from .secure import (
    SAConfig,
    aggregate_share,
    client_mask_shares,
    masked_upload,
    unmask_aggregate,
)

log = logging.getLogger("fedgraph.fl")


@dataclass
class FLConfig:
    num_clients: int = 1
    clients_per_round: int = 0     # 0 = full participation
    rounds: int = 10
    local_epochs: int = 1
    optimizer: str = "adam"        # sgd | adam
    learning_rate: float = 0.0015
    server_algorithm: str = "fedavg"  # fedavg | fedopt
    server_lr: float = 1.0
    server_beta1: float = 0.9
    server_beta2: float = 0.999
    server_tau: float = 1e-3
    eval_frequency: int = 5
    seed: int = 0
    recv_timeout: float = 120.0

    def validate(self):
        if self.rounds < 1 or self.local_epochs < 1 or self.num_clients < 1:
            raise ValueError("rounds, local_epochs and num_clients must be >= 1")
        m = self.clients_per_round or self.num_clients
        if not (1 <= m <= self.num_clients):
            raise InvalidCount(f"clients_per_round {m} outside 1..{self.num_clients}")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.server_algorithm not in ("fedavg", "fedopt"):
            raise ValueError(f"unknown server algorithm {self.server_algorithm!r}")


@dataclass
class ClientUpdate:
    client_id: int
    params: ParamVector
    num_samples: int
    train_loss: float


# ---------------------------------------------------------------------------
# Optimizers (per-sample steps on the flat parameter vector)

class SGD:
    def __init__(self, lr):
        self.lr = lr

    def step(self, params: ParamVector, grads: ParamVector):
        params.data -= self.lr * grads.data


class Adam:
    def __init__(self, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = None
        self.v = None
        self.t = 0

    def step(self, params: ParamVector, grads: ParamVector):
        if self.m is None:
            self.m = np.zeros_like(params.data)
            self.v = np.zeros_like(params.data)
        self.t += 1
        g = grads.data
        self.m = self.beta1 * self.m + (1 - self.beta1) * g
        self.v = self.beta2 * self.v + (1 - self.beta2) * g * g
        mhat = self.m / (1 - self.beta1 ** self.t)
        vhat = self.v / (1 - self.beta2 ** self.t)
        params.data -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


def make_optimizer(name: str, lr: float):
    return SGD(lr) if name == "sgd" else Adam(lr)


# ---------------------------------------------------------------------------
# Local training

def dataset_units(ds: GraphDataset):
    """Training units: (graph, labels, pairs). One unit is one graph for
    graph/node tasks and one labeled edge for link tasks."""
    units = []
    for g in ds.graphs:
        if ds.task in GRAPH_TASKS:
            units.append((g, g.graph_label, None))
        elif ds.task is Task.NODE_CLASSIFICATION:
            units.append((g, g.node_labels, None))
        else:
            if g.edge_labels is None:
                continue
            for row in g.edge_labels:
                units.append((g, np.array([row[2]]),
                              [(int(row[0]), int(row[1]))]))
    return units


def _epoch_rng(seed: int, client_id: int, round_index: int):
    return np.random.default_rng(
        [0x10ca1, seed & 0xFFFFFFFF, client_id, round_index]
    )


def train_one_pass(model: Model, params: ParamVector, units, optimizer, rng):
    """One shuffled pass, one optimizer step per unit. Returns mean loss."""
    order = rng.permutation(len(units))
    total = 0.0
    for idx in order.tolist():
        g, labels, pairs = units[idx]
        out, cache = model.forward(params, g, training=True, rng=rng, pairs=pairs)
        val, gpred = loss(out, labels, model.config.task)
        grads = model.backward(params, cache, gpred)
        optimizer.step(params, grads)
        total += val
    return total / max(1, len(units))


def local_train(global_params: ParamVector, shard: ClientShard, model: Model,
                epochs: int, optimizer_name: str, lr: float,
                seed: int, round_index: int) -> ClientUpdate:
    """E full passes over the shard's training units from a fresh optimizer
    (clients are stateless across rounds)."""
    units = dataset_units(shard.train)
    if not units:
        raise EmptyShard(f"client {shard.client_id} has no training units")
    params = global_params.copy()
    optimizer = make_optimizer(optimizer_name, lr)
    rng = _epoch_rng(seed, shard.client_id + 1, round_index)
    mean_loss = 0.0
    for _ in range(epochs):
        mean_loss = train_one_pass(model, params, units, optimizer, rng)
    return ClientUpdate(
        client_id=shard.client_id,
        params=params,
        num_samples=len(units),
        train_loss=mean_loss,
    )


def centralized_train(dataset: GraphDataset, model: Model, epochs: int,
                      optimizer_name: str, lr: float, seed: int,
                      val_dataset=None, eval_frequency: int = 5):
    """Plain centralized baseline: one persistent optimizer, one shuffled
    pass per epoch (the same per-epoch routine clients use)."""
    units = dataset_units(dataset)
    if not units:
        raise EmptyShard("no training units")
    params = model.init_params(seed)
    optimizer = make_optimizer(optimizer_name, lr)
    history = []
    for epoch in range(1, epochs + 1):
        rng = _epoch_rng(seed, 1, epoch)
        mean_loss = train_one_pass(model, params, units, optimizer, rng)
        row = {"round": epoch, "mean_train_loss": mean_loss}
        if val_dataset is not None and (
            epoch % eval_frequency == 0 or epoch == epochs
        ):
            metric, _ = evaluate(model, params, val_dataset)
            row["eval_metric"] = metric
        history.append(row)
    return params, history


# ---------------------------------------------------------------------------
# Evaluation

def _is_onehot_multiclass(ds: GraphDataset) -> bool:
    if ds.task is not Task.GRAPH_CLASSIFICATION or ds.num_tasks_or_classes < 2:
        return False
    for g in ds.graphs:
        lab = g.graph_label
        if lab is None or np.isnan(lab).any() or not set(np.unique(lab)) <= {0.0, 1.0} \
                or lab.sum() != 1.0:
            return False
    return True


def evaluate(model: Model, params: ParamVector, ds: GraphDataset):
    """(metric value, support). Metric by task: micro-F1 for one-hot graph
    classification and node classification, ROC-AUC for multi-label graph
    classification, RMSE for regressions."""
    if ds.task is Task.GRAPH_CLASSIFICATION:
        outs, labs = [], []
        for g in ds.graphs:
            out, _ = model.forward(params, g)
            outs.append(out)
            labs.append(g.graph_label)
        outs, labs = np.vstack(outs), np.vstack(labs)
        if _is_onehot_multiclass(ds):
            return micro_f1(outs.argmax(axis=1), labs.argmax(axis=1)), len(ds.graphs)
        return roc_auc(outs, labs), len(ds.graphs)
    if ds.task is Task.GRAPH_REGRESSION:
        preds, targs = [], []
        for g in ds.graphs:
            out, _ = model.forward(params, g)
            valid = ~np.isnan(g.graph_label)
            preds.extend(out[valid].tolist())
            targs.extend(g.graph_label[valid].tolist())
        return regression_metrics(preds, targs)["RMSE"], len(preds)
    if ds.task is Task.NODE_CLASSIFICATION:
        preds, targs = [], []
        for g in ds.graphs:
            out, _ = model.forward(params, g)
            labeled = np.flatnonzero(g.node_labels >= 0)
            preds.extend(out[labeled].argmax(axis=1).tolist())
            targs.extend(g.node_labels[labeled].tolist())
        return micro_f1(preds, targs), len(preds)
    preds, targs = [], []
    for g in ds.graphs:
        if g.edge_labels is None or g.edge_labels.shape[0] == 0:
            continue
        pairs = g.edge_labels[:, :2].astype(np.int64)
        out, _ = model.forward(params, g, pairs=pairs)
        preds.extend(out.tolist())
        targs.extend(g.edge_labels[:, 2].tolist())
    return regression_metrics(preds, targs)["RMSE"], len(preds)


def metric_higher_is_better(task: Task) -> bool:
    return task in (Task.GRAPH_CLASSIFICATION, Task.NODE_CLASSIFICATION)


# ---------------------------------------------------------------------------
# Aggregation

def aggregate_fedavg(updates: list[ClientUpdate]) -> ParamVector:
    """Sample-count-weighted parameter average, summed in client-id order."""
    if not updates:
        raise EmptyUpdateSet("no client updates")
    updates = sorted(updates, key=lambda u: u.client_id)
    first = updates[0].params
    for u in updates[1:]:
        if not u.params.same_layout(first):
            raise LayoutMismatch("client update layouts differ")
    total = sum(u.num_samples for u in updates)
    # delta form around the first update: identical updates aggregate to
    # themselves bit-exactly regardless of the weights
    acc = first.data.copy()
    for u in updates[1:]:
        acc += (u.num_samples / total) * (u.params.data - first.data)
    return ParamVector(acc, list(first.layout))


@dataclass
class FedOptState:
    m: np.ndarray = None
    v: np.ndarray = None


def fedopt_server_step(state: FedOptState, global_params: ParamVector,
                       updates: list[ClientUpdate], server_lr: float,
                       beta1: float, beta2: float, tau: float,
                       step: int) -> ParamVector:
    """Adam-style server step on the pseudo-gradient
    delta = global - fedavg(updates)."""
    avg = aggregate_fedavg(updates)
    delta = global_params.data - avg.data
    if state.m is None:
        state.m = np.zeros_like(delta)
        state.v = np.zeros_like(delta)
    state.m = beta1 * state.m + (1 - beta1) * delta
    state.v = beta2 * state.v + (1 - beta2) * delta * delta
    mhat = state.m / (1 - beta1 ** step)
    vhat = state.v / (1 - beta2 ** step)
    new = global_params.data - server_lr * mhat / (np.sqrt(vhat) + tau)
    return ParamVector(new, list(global_params.layout))


def sample_clients(num_clients: int, m: int, round_index: int, seed: int):
    """Uniform without replacement, deterministic in (seed, round_index)."""
    if not (1 <= m <= num_clients):
        raise InvalidCount(f"cannot select {m} of {num_clients} clients")
    rng = np.random.default_rng([0x5a3b1e, seed & 0xFFFFFFFF, round_index])
    return set(
        (rng.choice(num_clients, size=m, replace=False) + 1).tolist()
    )


# ---------------------------------------------------------------------------
# Reports

@dataclass
class TrainingReport:
    config: dict
    seed: int
    param_count: int
    per_round: list
    final_test_metric: float
    best_round: int
    best_eval_metric: float
    timing: dict = dc_field(default_factory=dict)

    def to_json(self) -> str:
        doc = {
            "config": self.config,
            "seed": self.seed,
            "param_count": self.param_count,
            "per_round": self.per_round,
            "final_test_metric": self.final_test_metric,
            "best_round": self.best_round,
            "best_eval_metric": self.best_eval_metric,
            "timing": self.timing,
        }
        return json.dumps(doc, sort_keys=True, indent=2)

    def primary_json(self) -> str:
        """Deterministic portion (wall-clock block excluded)."""
        doc = json.loads(self.to_json())
        doc.pop("timing")
        return json.dumps(doc, sort_keys=True, indent=2)


# ---------------------------------------------------------------------------
# Round protocol

_FLAG_TRAIN = 1
_FLAG_EVAL = 2
_FLAG_STOP = 4


def _recv_typed(endpoint, msg_type, timeout, stash):
    """Next message of the wanted type; others are stashed in arrival order."""
    for i, m in enumerate(stash):
        if m.msg_type == msg_type:
            return stash.pop(i)
    deadline = time.monotonic() + timeout
    while True:
        remaining = max(0.0, deadline - time.monotonic())
        m = endpoint.recv(timeout=remaining)
        if m.msg_type == msg_type:
            return m
        stash.append(m)


def _client_loop(endpoint, shard: ClientShard, model: Model, fl_cfg: FLConfig,
                 sa_cfg: SAConfig | None, errors: list):
    cid = shard.client_id + 1
    stash: list[RoundMessage] = []
    try:
        while True:
            msg = _recv_typed(endpoint, MSG_GLOBAL_MODEL, fl_cfg.recv_timeout, stash)
            flags = msg.payload[0]
            if flags & _FLAG_STOP:
                return
            rnd = msg.round
            params = deserialize_params(msg.payload[1:])
            if flags & _FLAG_EVAL:
                val_metric, val_n = evaluate(model, params, shard.val) \
                    if shard.val.num_units() else (None, 0)
                test_metric, test_n = evaluate(model, params, shard.test) \
                    if shard.test.num_units() else (None, 0)
                payload = json.dumps({
                    "val": val_metric, "val_n": val_n,
                    "test": test_metric, "test_n": test_n,
                }).encode()
                endpoint.send(RoundMessage(MSG_EVAL_REPORT, rnd, cid,
                                           SERVER_ID, payload))
            if not flags & _FLAG_TRAIN:
                continue
            update = local_train(
                params, shard, model, fl_cfg.local_epochs,
                fl_cfg.optimizer, fl_cfg.learning_rate, fl_cfg.seed, rnd,
            )
            if sa_cfg is None:
                payload = (update.num_samples.to_bytes(4, "big")
                           + np.float64(update.train_loss).tobytes()
                           + serialize_params(update.params))
                endpoint.send(RoundMessage(MSG_CLIENT_UPDATE, rnd, cid,
                                           SERVER_ID, payload))
                continue
            _client_secure_round(endpoint, cid, rnd, update, sa_cfg, stash,
                                 fl_cfg.recv_timeout)
    except Exception as exc:  # surfaced by run_training
        errors.append((cid, exc))


def _client_secure_round(endpoint, cid, rnd, update: ClientUpdate,
                         sa_cfg: SAConfig, stash, timeout):
    dim = len(update.params)
    mask, shares = client_mask_shares(sa_cfg, cid, rnd, dim)
    for x, sv in shares:
        if x == cid:
            my_share = sv
            continue
        endpoint.send(RoundMessage(MSG_MASK_SHARE, rnd, cid, x, sv.to_bytes()))
    held = {cid: my_share}
    while len(held) < sa_cfg.num_clients:
        m = _recv_typed(endpoint, MSG_MASK_SHARE, timeout, stash)
        held[m.sender] = FieldVector.from_bytes(m.payload, sa_cfg.prime)
    dropped = cid in sa_cfg.dropouts.get(rnd, [])
    if not dropped:
        upload, _ = masked_upload(sa_cfg, update.params.data,
                                  update.num_samples, mask)
        payload = update.num_samples.to_bytes(4, "big") + upload.to_bytes()
        endpoint.send(RoundMessage(MSG_MASKED_UPLOAD, rnd, cid, SERVER_ID, payload))
    # wait for the server's survivor announcement
    ctrl = _recv_typed(endpoint, MSG_CONTROL, timeout, stash)
    doc = json.loads(ctrl.payload.decode())
    if doc.get("action") == "abort":
        raise InsufficientSurvivors("server aborted the secure round")
    survivors = doc["survivors"]
    if not dropped:
        agg = aggregate_share(held, survivors)
        endpoint.send(RoundMessage(MSG_AGG_SHARE, rnd, cid, SERVER_ID,
                                   agg.to_bytes()))


def _server_loop(endpoint, shards_meta, model: Model, fl_cfg: FLConfig,
                 sa_cfg: SAConfig | None, config_echo: dict):
    K = fl_cfg.num_clients
    m = fl_cfg.clients_per_round or K
    params = model.init_params(fl_cfg.seed)
    fedopt_state = FedOptState()
    per_round = []
    wall = []
    stash: list[RoundMessage] = []
    best_round, best_eval = 0, None
    final_test = None
    higher_better = metric_higher_is_better(model.config.task)
    t_start = time.monotonic()
    try:
        for rnd in range(1, fl_cfg.rounds + 1):
            t0 = time.monotonic()
            selected = sample_clients(K, m, rnd, fl_cfg.seed)
            eval_round = (rnd % fl_cfg.eval_frequency == 0) or rnd == fl_cfg.rounds
            blob = serialize_params(params)
            for cid in range(1, K + 1):
                flags = (_FLAG_TRAIN if cid in selected else 0) \
                    | (_FLAG_EVAL if eval_round else 0)
                endpoint.send(RoundMessage(
                    MSG_GLOBAL_MODEL, rnd, SERVER_ID, cid,
                    bytes([flags]) + blob,
                ))
            row = {"round": rnd}
            if eval_round:
                reports = [
                    json.loads(_recv_typed(endpoint, MSG_EVAL_REPORT,
                                           fl_cfg.recv_timeout, stash).payload)
                    for _ in range(K)
                ]
                val = _pool_metric(reports, "val")
                test = _pool_metric(reports, "test")
                row["eval_metric"] = val
                row["test_metric"] = test
                final_test = test
                if val is not None and (
                    best_eval is None
                    or (val > best_eval if higher_better else val < best_eval)
                ):
                    best_eval, best_round = val, rnd
            if sa_cfg is None:
                updates = []
                for _ in range(len(selected)):
                    msg = _recv_typed(endpoint, MSG_CLIENT_UPDATE,
                                      fl_cfg.recv_timeout, stash)
                    n = int.from_bytes(msg.payload[:4], "big")
                    train_loss = float(np.frombuffer(msg.payload[4:12], np.float64)[0])
                    upd_params = deserialize_params(msg.payload[12:])
                    updates.append(ClientUpdate(msg.sender - 1, upd_params,
                                                n, train_loss))
                total_n = sum(u.num_samples for u in updates)
                row["mean_train_loss"] = sum(
                    u.num_samples * u.train_loss for u in
                    sorted(updates, key=lambda u: u.client_id)
                ) / total_n
                agg = aggregate_fedavg(updates)
            else:
                row["mean_train_loss"] = None
                agg = _server_secure_aggregate(endpoint, rnd, selected, sa_cfg,
                                               stash, params.layout)
                agg = ParamVector(agg, list(params.layout))
                updates = [ClientUpdate(0, agg, 1, 0.0)]  # pre-averaged
            if fl_cfg.server_algorithm == "fedopt":
                params = fedopt_server_step(
                    fedopt_state, params, updates, fl_cfg.server_lr,
                    fl_cfg.server_beta1, fl_cfg.server_beta2,
                    fl_cfg.server_tau, step=rnd,
                )
            else:
                params = aggregate_fedavg(updates)
            wall.append(round((time.monotonic() - t0) * 1000.0, 3))
            per_round.append(row)
    finally:
        stop = RoundMessage(MSG_GLOBAL_MODEL, 0, SERVER_ID, BROADCAST_ID,
                            bytes([_FLAG_STOP]))
        try:
            endpoint.broadcast(stop)
        except Exception:
            pass
    report = TrainingReport(
        config=config_echo,
        seed=fl_cfg.seed,
        param_count=model.param_count(),
        per_round=per_round,
        final_test_metric=final_test,
        best_round=best_round,
        best_eval_metric=best_eval,
        timing={
            "total_wall_ms": round((time.monotonic() - t_start) * 1000.0, 3),
            "per_round_wall_ms": wall,
        },
    )
    return report, params


def _pool_metric(reports, key):
    num = 0.0
    den = 0
    for r in reports:
        if r[key] is not None and r[f"{key}_n"] > 0:
            num += r[key] * r[f"{key}_n"]
            den += r[f"{key}_n"]
    return (num / den) if den else None


def _server_secure_aggregate(endpoint, rnd, selected, sa_cfg: SAConfig,
                             stash, layout):
    uploads: dict[int, FieldVector] = {}
    counts: dict[int, int] = {}
    expected = set(selected)
    scheduled_drops = set(sa_cfg.dropouts.get(rnd, [])) & expected
    deadline = time.monotonic() + sa_cfg.timeout
    while len(uploads) < len(expected) - len(scheduled_drops):
        try:
            remaining = max(0.0, deadline - time.monotonic())
            msg = _recv_typed(endpoint, MSG_MASKED_UPLOAD, remaining, stash)
        except Timeout:
            break
        counts[msg.sender] = int.from_bytes(msg.payload[:4], "big")
        uploads[msg.sender] = FieldVector.from_bytes(msg.payload[4:], sa_cfg.prime)
    survivors = sorted(uploads)
    if len(survivors) < sa_cfg.threshold:
        abort = json.dumps({"action": "abort"}).encode()
        for cid in sorted(expected):
            endpoint.send(RoundMessage(MSG_CONTROL, rnd, SERVER_ID, cid, abort))
        raise InsufficientSurvivors(
            f"{len(survivors)} survivors < threshold {sa_cfg.threshold}"
        )
    ctrl = json.dumps({"action": "agg", "survivors": survivors}).encode()
    for cid in sorted(expected):
        endpoint.send(RoundMessage(MSG_CONTROL, rnd, SERVER_ID, cid, ctrl))
    agg_shares: dict[int, FieldVector] = {}
    deadline = time.monotonic() + sa_cfg.timeout
    while len(agg_shares) < len(survivors):
        try:
            remaining = max(0.0, deadline - time.monotonic())
            msg = _recv_typed(endpoint, MSG_AGG_SHARE, remaining, stash)
        except Timeout:
            break
        agg_shares[msg.sender] = FieldVector.from_bytes(msg.payload, sa_cfg.prime)
    return unmask_aggregate(sa_cfg, uploads, agg_shares, counts)


def run_training(shards: list[ClientShard], model_config: ModelConfig,
                 fl_config: FLConfig, transport: str = "memory",
                 secure: SAConfig | None = None, config_echo: dict | None = None):
    """Run the full federated protocol; returns (TrainingReport, final params)."""
    fl_config.validate()
    if len(shards) != fl_config.num_clients:
        raise ValueError(
            f"{len(shards)} shards but num_clients={fl_config.num_clients}"
        )
    if secure is not None:
        secure.validate()
        if secure.num_clients != fl_config.num_clients:
            raise ValueError("secure num_clients must match fl num_clients")
        m = fl_config.clients_per_round or fl_config.num_clients
        if m != fl_config.num_clients:
            raise ValueError("secure aggregation requires full participation")
    ref = shards[0].train
    d_node = ref.feature_dims[0]
    out_dim = 1 if ref.task is Task.LINK_REGRESSION else ref.num_tasks_or_classes
    model_config.task = ref.task
    model = Model(model_config, d_node, out_dim)
    K = fl_config.num_clients
    errors: list = []
    config_echo = config_echo or {}

    if transport == "memory":
        tr = MemoryTransport([SERVER_ID] + list(range(1, K + 1)))
        client_eps = {cid: tr.endpoint(cid) for cid in range(1, K + 1)}
        server_ep = tr.endpoint(SERVER_ID)
        closers = [tr.close]
    elif transport == "tcp":
        server_tr = TcpServerTransport(K)
        client_trs = {}

        def connect(cid):
            client_trs[cid] = TcpClientTransport(cid, server_tr.address)

        conn_threads = [threading.Thread(target=connect, args=(cid,))
                        for cid in range(1, K + 1)]
        for t in conn_threads:
            t.start()
        server_tr.accept_clients()
        for t in conn_threads:
            t.join()
        client_eps = {cid: client_trs[cid].endpoint(cid) for cid in range(1, K + 1)}
        server_ep = server_tr.endpoint(SERVER_ID)
        closers = [server_tr.close] + [t.close for t in client_trs.values()]
    else:
        raise TransportFailure(f"unknown transport {transport!r}")

    workers = [
        threading.Thread(
            target=_client_loop,
            args=(client_eps[shard.client_id + 1], shard, model, fl_config,
                  secure, errors),
            daemon=True,
        )
        for shard in shards
    ]
    for w in workers:
        w.start()
    try:
        report, params = _server_loop(server_ep, None, model, fl_config,
                                      secure, config_echo)
    finally:
        for w in workers:
            w.join(timeout=10)
        for close in closers:
            close()
    for cid, exc in errors:
        if isinstance(exc, InsufficientSurvivors):
            continue  # server-side abort already raised or reported
        raise TransportFailure(f"client {cid} failed: {exc!r}") from exc
    return report, params
