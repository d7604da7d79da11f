"""Command line interface: gen-data, partition, train, sweep.

Run configs are JSON documents with sections
{data, partition, model, fl, secure?, output_dir}. Flag overrides take
precedence over config values, which take precedence over defaults.
Exit codes: 0 success, 2 invalid config/usage, 3 transport failure,
4 insufficient secure-aggregation survivors.
"""

import argparse
import copy
import csv
import itertools
import json
import logging
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import datasets, plots
from .errors import (
    ConfigError,
    FedGraphError,
    InsufficientSurvivors,
    InvalidParams,
    TransportFailure,
)
from .fl import (
    FLConfig,
    Model,
    centralized_train,
    evaluate,
    metric_higher_is_better,
    run_training,
)
from .gnn import ModelConfig
from .graph import Task
from .partition import PartitionSpec, class_histograms, make_shards, sample_ego_networks
from .secure import SAConfig

log = logging.getLogger("fedgraph.cli")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_TRANSPORT = 3
EXIT_SURVIVORS = 4


def _setup_logging():
    level = os.environ.get("FEDGRAPHNN_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


# ---------------------------------------------------------------------------
# Config plumbing

def _dotted_set(doc: dict, key: str, value):
    parts = key.split(".")
    cur = doc
    for p in parts[:-1]:
        if p not in cur or not isinstance(cur[p], dict):
            cur[p] = {}
        cur = cur[p]
    cur[parts[-1]] = value


def _dotted_has(doc: dict, key: str) -> bool:
    cur = doc
    for p in key.split("."):
        if not isinstance(cur, dict) or p not in cur:
            return False
        cur = cur[p]
    return True


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


_KNOWN_SECTIONS = {"data", "partition", "model", "fl", "secure", "output_dir"}


def load_run_config(path, overrides=()):
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"config: {exc}") from exc
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} must be key=value")
        key, _, value = item.partition("=")
        _dotted_set(doc, key, _parse_value(value))
    unknown = set(doc) - _KNOWN_SECTIONS
    if unknown:
        raise ConfigError(f"unknown config section(s): {sorted(unknown)}")
    return doc


def _take(section: dict, cls, name: str, **extra):
    """Build a dataclass from a config section, rejecting unknown keys."""
    known = set(cls.__dataclass_fields__)
    unknown = set(section) - known
    if unknown:
        raise ConfigError(f"{name}.{sorted(unknown)[0]} is not a valid key")
    merged = {**section, **extra}
    return cls(**merged)


def build_dataset(doc: dict):
    data = doc.get("data")
    if not data:
        raise ConfigError("data: section is required")
    if "path" in data:
        return datasets.load_dataset(data["path"], data.get("format", "json"))
    if "synthetic" in data:
        spec = dict(data["synthetic"])
        kind = spec.pop("kind", None)
        if kind is None:
            raise ConfigError("data.synthetic.kind is required")
        return datasets.gen_synthetic(kind, **spec)
    raise ConfigError("data: needs either 'path' or 'synthetic'")


def build_shards(dataset, doc: dict):
    psec = dict(doc.get("partition", {}))
    egos = psec.pop("egos", 0)
    ego_hops = psec.pop("ego_hops", 2)
    if psec.get("split_ratios"):
        psec["split_ratios"] = tuple(psec["split_ratios"])
    spec = _take(psec, PartitionSpec, "partition")
    if egos:
        if dataset.task is not Task.NODE_CLASSIFICATION or len(dataset.graphs) != 1:
            raise ConfigError("partition.egos requires a single-graph node dataset")
        dataset = sample_ego_networks(dataset.graphs[0], egos, ego_hops, spec.seed)
    if dataset.task is Task.NODE_CLASSIFICATION and len(dataset.graphs) == 1:
        raise ConfigError(
            "partition.egos must be set to shard a single-graph node dataset"
        )
    shards, manifest = make_shards(dataset, spec)
    return dataset, spec, shards, manifest


def build_model_config(doc: dict, dataset) -> ModelConfig:
    msec = dict(doc.get("model", {}))
    if "task" in msec:
        if Task(msec["task"]) is not dataset.task:
            raise ConfigError(
                f"model.task {msec['task']!r} does not match dataset task "
                f"{dataset.task.value!r}"
            )
        msec.pop("task")
    cfg = _take(msec, ModelConfig, "model", task=dataset.task)
    cfg.validate()
    return cfg


def build_fl_config(doc: dict, num_clients: int) -> FLConfig:
    fsec = dict(doc.get("fl", {}))
    if "num_clients" in fsec and fsec["num_clients"] != num_clients:
        raise ConfigError(
            f"fl.num_clients={fsec['num_clients']} does not match "
            f"partition.num_clients={num_clients}"
        )
    fsec["num_clients"] = num_clients
    cfg = _take(fsec, FLConfig, "fl")
    cfg.validate()
    return cfg


def build_sa_config(doc: dict, num_clients: int) -> SAConfig:
    ssec = dict(doc.get("secure", {}))
    if "dropouts" in ssec:
        ssec["dropouts"] = {int(k): list(v) for k, v in ssec["dropouts"].items()}
    ssec.setdefault("num_clients", num_clients)
    if ssec["num_clients"] != num_clients:
        raise ConfigError(
            f"secure.num_clients={ssec['num_clients']} does not match "
            f"partition.num_clients={num_clients}"
        )
    ssec.setdefault("threshold", max(1, num_clients - 1))
    cfg = _take(ssec, SAConfig, "secure")
    cfg.validate()
    return cfg


# ---------------------------------------------------------------------------
# Commands

def cmd_gen_data(args) -> int:
    params = {}
    if args.kind == "motif_graph":
        if args.graphs:
            params["num_graphs"] = args.graphs
    elif args.kind == "sbm_node":
        if args.nodes:
            params["num_nodes"] = args.nodes
        if args.classes:
            params["num_blocks"] = args.classes
    elif args.kind == "bipartite_rating":
        if args.nodes:
            params["num_users"] = args.nodes
        if args.classes:
            params["num_categories"] = args.classes
    ds = datasets.gen_synthetic(args.kind, seed=args.seed, **params)
    datasets.save_dataset(ds, args.out)
    print(f"wrote {args.out}: task={ds.task.value} graphs={len(ds.graphs)} "
          f"classes_or_tasks={ds.num_tasks_or_classes} "
          f"feature_dims={ds.feature_dims}")
    return EXIT_OK


def cmd_partition(args) -> int:
    ds = datasets.load_dataset(args.input, args.format)
    doc = {"partition": {
        "scheme": args.scheme,
        "num_clients": args.clients,
        "alpha": args.alpha,
        "seed": args.seed,
        "egos": args.egos,
        "ego_hops": args.ego_hops,
    }}
    _, spec, shards, manifest = build_shards(ds, doc)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=2))
    for shard in shards:
        for split in ("train", "val", "test"):
            datasets.save_dataset(
                getattr(shard, split),
                out / f"client_{shard.client_id:02d}_{split}.json",
            )
    hists = class_histograms(shards, ds.num_tasks_or_classes)
    with open(out / "class_histogram.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["client"] + [f"class_{c}" for c in range(len(hists[0]))])
        for j, row in enumerate(hists):
            writer.writerow([j] + row)
    plots.plot_class_histograms(hists, out / "class_histogram.png")
    print(f"wrote {len(shards)} shards to {out}")
    for j, row in enumerate(hists):
        print(f"client {j}: {row}")
    return EXIT_OK


def _run_config_train(doc, transport, secure_flag, centralized):
    dataset = build_dataset(doc)
    dataset.validate()
    dataset, pspec, shards, manifest = build_shards(dataset, doc)
    model_cfg = build_model_config(doc, dataset)
    fl_cfg = build_fl_config(doc, pspec.num_clients)
    config_echo = copy.deepcopy({k: doc.get(k) for k in sorted(_KNOWN_SECTIONS)
                                 if k in doc})
    t0 = time.monotonic()
    if centralized:
        central_spec = replace(pspec, num_clients=1, scheme="uniform")
        base_ds = dataset
        cshards, _ = make_shards(base_ds, central_spec)
        shard = cshards[0]
        d_node = shard.train.feature_dims[0]
        out_dim = 1 if dataset.task is Task.LINK_REGRESSION \
            else dataset.num_tasks_or_classes
        model = Model(model_cfg, d_node, out_dim)
        epochs = fl_cfg.rounds * fl_cfg.local_epochs
        params, history = centralized_train(
            shard.train, model, epochs, fl_cfg.optimizer,
            fl_cfg.learning_rate, fl_cfg.seed,
            val_dataset=shard.val if shard.val.num_units() else None,
            eval_frequency=fl_cfg.eval_frequency,
        )
        test_metric, _ = evaluate(model, params, shard.test) \
            if shard.test.num_units() else (None, 0)
        higher = metric_higher_is_better(dataset.task)
        evals = [(r["round"], r["eval_metric"]) for r in history
                 if r.get("eval_metric") is not None]
        best_round, best_eval = (0, None)
        if evals:
            best_round, best_eval = (max if higher else min)(
                evals, key=lambda t: t[1]
            )
        from .fl import TrainingReport
        report = TrainingReport(
            config=config_echo, seed=fl_cfg.seed,
            param_count=model.param_count(), per_round=history,
            final_test_metric=test_metric, best_round=best_round,
            best_eval_metric=best_eval,
            timing={"total_wall_ms": round((time.monotonic() - t0) * 1000, 3)},
        )
        return report, manifest
    sa_cfg = build_sa_config(doc, pspec.num_clients) \
        if (secure_flag or "secure" in doc) else None
    report, _ = run_training(shards, model_cfg, fl_cfg, transport=transport,
                             secure=sa_cfg, config_echo=config_echo)
    return report, manifest


def _write_report(report, out_dir, metric_name="metric"):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(report.primary_json())
    (out / "timing.json").write_text(
        json.dumps(report.timing, sort_keys=True, indent=2)
    )
    with open(out / "results.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["round", "mean_train_loss", "eval_metric"])
        for row in report.per_round:
            writer.writerow([
                row["round"],
                "" if row.get("mean_train_loss") is None else row["mean_train_loss"],
                "" if row.get("eval_metric") is None else row["eval_metric"],
            ])
    plots.plot_training_curves(report.per_round, out / "curves.png", metric_name)


def cmd_train(args) -> int:
    doc = load_run_config(args.config, args.set or ())
    out_dir = args.output_dir or doc.get("output_dir", "runs/latest")
    report, manifest = _run_config_train(
        doc, args.transport, args.secure, args.centralized
    )
    _write_report(report, out_dir)
    Path(out_dir, "shard_manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=2)
    )
    print(f"final_test_metric={report.final_test_metric} "
          f"best_round={report.best_round} -> {out_dir}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    try:
        grid_doc = json.loads(Path(args.grid).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"grid file: {exc}") from exc
    base = grid_doc.get("base")
    if isinstance(base, str):
        base = load_run_config(base)
    if not isinstance(base, dict):
        raise ConfigError("grid file needs a 'base' run config (path or inline)")
    grid = grid_doc.get("grid", {})
    if not grid:
        raise ConfigError("grid file needs a nonempty 'grid' section")
    template = copy.deepcopy(base)
    for key in grid:
        if not _dotted_has(template, key) and not any(
            key.startswith(s + ".") for s in _KNOWN_SECTIONS
        ):
            raise ConfigError(f"unknown grid key {key!r}")
    keys = sorted(grid)
    rows = []
    higher = None
    for combo in itertools.product(*(grid[k] for k in keys)):
        doc = copy.deepcopy(base)
        for k, v in zip(keys, combo):
            _dotted_set(doc, k, v)
        t0 = time.monotonic()
        report, _ = _run_config_train(doc, args.transport, args.secure,
                                      args.centralized)
        wall_ms = round((time.monotonic() - t0) * 1000, 3)
        row = {k: v for k, v in zip(keys, combo)}
        row.update({
            "val_metric": report.best_eval_metric,
            "test_metric": report.final_test_metric,
            "wall_ms": wall_ms,
        })
        rows.append(row)
        if higher is None:
            higher = _higher_better_from_doc(doc)
    valid = [r for r in rows if r["val_metric"] is not None]
    best = None
    if valid:
        best = (max if higher else min)(valid, key=lambda r: r["val_metric"])
    for r in rows:
        r["best"] = 1 if r is best else 0
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    fields = keys + ["val_metric", "test_metric", "wall_ms", "best"]
    with open(out, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)
    plots.plot_sweep(rows, "val_metric", out.with_suffix(".png"))
    print(f"wrote {len(rows)} trials to {out}")
    if best:
        print(f"best: {best}")
    return EXIT_OK


def _higher_better_from_doc(doc):
    ds = build_dataset(doc)
    return metric_higher_is_better(ds.task)


# ---------------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(prog="fedgraph")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate a synthetic dataset file")
    g.add_argument("--kind", required=True,
                   choices=["motif_graph", "sbm_node", "bipartite_rating"])
    g.add_argument("--graphs", type=int, default=0)
    g.add_argument("--nodes", type=int, default=0)
    g.add_argument("--classes", type=int, default=0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("partition", help="shard a dataset across clients")
    p.add_argument("--input", required=True)
    p.add_argument("--format", default="json", choices=["json", "planetoid"])
    p.add_argument("--clients", type=int, required=True)
    p.add_argument("--scheme", default="uniform",
                   choices=["lda", "uniform", "metadata"])
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--egos", type=int, default=0)
    p.add_argument("--ego-hops", type=int, default=2)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_partition)

    t = sub.add_parser("train", help="train centralized or federated")
    t.add_argument("config")
    t.add_argument("--centralized", action="store_true")
    t.add_argument("--secure", action="store_true")
    t.add_argument("--transport", default="memory", choices=["memory", "tcp"])
    t.add_argument("--output-dir")
    t.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a dotted config key")
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("sweep", help="cartesian hyperparameter sweep")
    s.add_argument("grid")
    s.add_argument("--out", default="leaderboard.csv")
    s.add_argument("--centralized", action="store_true")
    s.add_argument("--secure", action="store_true")
    s.add_argument("--transport", default="memory", choices=["memory", "tcp"])
    s.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except InsufficientSurvivors as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SURVIVORS
    except TransportFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT
    except (ConfigError, InvalidParams, FedGraphError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
