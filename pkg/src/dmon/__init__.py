"""Deep Modularity Networks: attributed graph clustering by differentiable
modularity maximization, with the ADC-SBM benchmark and reference baselines."""

from dmon.graph import SparseGraph, load_edge_list, normalized_adjacency, spmm
from dmon.metrics import MetricsReport, mean_conductance, modularity, nmi, pairwise_f1
from dmon.model import DmonModel, TrainConfig, fit_predict, forward, harden, loss, train

__version__ = "0.1.0"

__all__ = [
    "DmonModel", "MetricsReport", "SparseGraph", "TrainConfig", "fit_predict", "forward",
    "harden", "load_edge_list", "loss", "mean_conductance", "modularity", "nmi",
    "normalized_adjacency", "pairwise_f1", "spmm", "train",
]
