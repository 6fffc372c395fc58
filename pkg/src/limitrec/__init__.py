"""Collaborative filtering that trains embeddings against the closed-form
limit of infinite-layer graph convolution, with full-ranking evaluation."""

from .data import InteractionDataset, assemble, load_adjacency_list, load_pair_list
from .evaluation import EvalReport, evaluate
from .graph import (
    BipartiteGraph,
    CooccurrenceGraph,
    ItemNeighborIndex,
    beta,
    build_cooccurrence,
    build_graph,
    build_neighbor_index,
    omega,
)
from .model import EmbeddingModel, TrainBatch, total_loss
from .training import TrainConfig, fit

__all__ = [
    "InteractionDataset", "assemble", "load_adjacency_list", "load_pair_list",
    "EvalReport", "evaluate",
    "BipartiteGraph", "CooccurrenceGraph", "ItemNeighborIndex",
    "beta", "build_cooccurrence", "build_graph", "build_neighbor_index", "omega",
    "EmbeddingModel", "TrainBatch", "total_loss",
    "TrainConfig", "fit",
]

__version__ = "0.1.0"
