"""Federated graph neural network training framework and simulator."""

__version__ = "0.1.0"

from .graph import ClientShard, Graph, GraphDataset, Task, build_graph, khop_ego, induced_subgraph
from .gnn import Model, ModelConfig, loss, normalize_adjacency, param_count
from .params import ParamVector
from .partition import PartitionSpec, lda_partition, make_shards, sample_ego_networks
from .fl import (
    FLConfig,
    TrainingReport,
    aggregate_fedavg,
    centralized_train,
    evaluate,
    fedopt_server_step,
    local_train,
    run_training,
    sample_clients,
)
from .secure import SAConfig, lightsecagg_round, pairwise_mask_round, quantize, dequantize
from .field import FieldVector, shamir_reconstruct, shamir_share
from .metrics import micro_f1, regression_metrics, roc_auc
from .datasets import gen_synthetic, load_dataset, save_dataset

__all__ = [name for name in dir() if not name.startswith("_")]
