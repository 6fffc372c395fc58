"""Sparse bipartite structure and precomputed coefficient tables.

Holds the user-item CSR adjacency with degree vectors, the per-pair
degree weight used by the constraint loss, the item-item co-occurrence
graph, its similarity weights, and the top-K neighbor index.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import sparse


@dataclass(frozen=True)
class BipartiteGraph:
    """CSR user->item adjacency over train pairs, with its transpose."""

    user_items: sparse.csr_matrix
    item_users: sparse.csr_matrix
    user_degree: np.ndarray
    item_degree: np.ndarray

    @property
    def num_users(self):
        return self.user_items.shape[0]

    @property
    def num_items(self):
        return self.user_items.shape[1]

    def items_of(self, u):
        m = self.user_items
        return m.indices[m.indptr[u]:m.indptr[u + 1]]


@dataclass(frozen=True)
class CooccurrenceGraph:
    """Symmetric co-occurrence counts with per-node degree sums."""

    matrix: sparse.csr_matrix
    degrees: np.ndarray


@dataclass(frozen=True)
class ItemNeighborIndex:
    """Per-item top-K neighbors by similarity weight, padded with -1 / 0."""

    neighbors: np.ndarray  # (n, K) int64, -1 padding
    weights: np.ndarray    # (n, K) float64, 0 padding
    k: int

    def neighbors_of(self, i):
        row = self.neighbors[i]
        valid = row >= 0
        return row[valid], self.weights[i][valid]


def build_graph(dataset):
    """CSR adjacency and degrees from train pairs only."""
    rows = dataset.train_pairs[:, 0]
    cols = dataset.train_pairs[:, 1]
    shape = (dataset.num_users, dataset.num_items)
    mat = sparse.csr_matrix(
        (np.ones(len(rows), dtype=np.float64), (rows, cols)), shape=shape
    )
    mat.sum_duplicates()
    user_degree = np.asarray(mat.sum(axis=1)).ravel().astype(np.int64)
    item_degree = np.asarray(mat.sum(axis=0)).ravel().astype(np.int64)
    return BipartiteGraph(
        user_items=mat,
        item_users=mat.T.tocsr(),
        user_degree=user_degree,
        item_degree=item_degree,
    )


def beta(d_u, d_i):
    """Degree weight for a (user, item) pair: (1/d_u) * sqrt((d_u+1)/(d_i+1)).

    Defined for d_u >= 1; d_i = 0 is allowed (sampled negatives may hit
    items unseen in train).
    """
    d_u = np.asarray(d_u, dtype=np.float64)
    d_i = np.asarray(d_i, dtype=np.float64)
    if np.any(d_u < 1):
        raise ValueError("beta requires user degree >= 1")
    return (1.0 / d_u) * np.sqrt((d_u + 1.0) / (d_i + 1.0))


def build_cooccurrence(graph, mode="item"):
    """Exact sparse co-occurrence product joined through the shared side.

    mode="item" builds the item-item graph (join over users); mode="user"
    builds the user-user graph (join over items) for the ablation loss.
    """
    a = graph.user_items
    g = (a.T @ a) if mode == "item" else (a @ a.T)
    g = g.tocsr()
    g.sum_duplicates()
    degrees = np.asarray(g.sum(axis=1)).ravel()
    return CooccurrenceGraph(matrix=g, degrees=degrees)


def omega(cograph, i, j):
    """Similarity weight between two distinct nodes of the co-occurrence graph.

    Returns 0 when node i co-occurs with nothing besides itself.
    """
    if i == j:
        raise ValueError("omega is defined for distinct nodes")
    g = cograph.matrix
    deg = cograph.degrees
    if deg[j] <= 0:
        raise ValueError(f"node {j} has zero co-occurrence degree")
    g_ij = g[i, j]
    denom = deg[i] - g[i, i]
    if denom == 0:
        return 0.0
    return float(g_ij / denom * np.sqrt(deg[i] / deg[j]))


def build_neighbor_index(cograph, k):
    """Top-k neighbors per node by similarity weight, descending.

    Candidates are nodes with positive co-occurrence (excluding self);
    ties break toward the smaller node index.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    g = cograph.matrix
    deg = cograph.degrees
    n = g.shape[0]
    neighbors = np.full((n, k), -1, dtype=np.int64)
    weights = np.zeros((n, k), dtype=np.float64)
    indptr, indices, values = g.indptr, g.indices, g.data
    for i in range(n):
        lo, hi = indptr[i], indptr[i + 1]
        cand = indices[lo:hi]
        vals = values[lo:hi]
        mask = cand != i
        cand, vals = cand[mask], vals[mask]
        if len(cand) == 0:
            continue
        denom = deg[i] - g[i, i]
        if denom == 0:
            continue
        w = vals / denom * np.sqrt(deg[i] / deg[cand])
        keep = w > 0
        cand, w = cand[keep], w[keep]
        if len(cand) == 0:
            continue
        # sort by (-weight, index); lexsort keys are applied last-first
        order = np.lexsort((cand, -w))[:k]
        neighbors[i, : len(order)] = cand[order]
        weights[i, : len(order)] = w[order]
    return ItemNeighborIndex(neighbors=neighbors, weights=weights, k=k)


def dataset_hash(dataset):
    """Stable hash of the train split, used as a cache key component."""
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(dataset.train_pairs).tobytes())
    h.update(f"{dataset.num_users}x{dataset.num_items}".encode())
    return h.hexdigest()[:16]


def cache_dir():
    return Path(os.environ.get("LIMITREC_CACHE_DIR", Path.home() / ".cache" / "limitrec"))


def save_neighbor_index(index, dataset, mode="item"):
    path = cache_dir() / f"nbr_{mode}_{dataset_hash(dataset)}_k{index.k}.npz"
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez_compressed(path, neighbors=index.neighbors, weights=index.weights, k=index.k)
    return path


def load_neighbor_index(dataset, k, mode="item"):
    """Load a cached neighbor index, or None on cache miss."""
    path = cache_dir() / f"nbr_{mode}_{dataset_hash(dataset)}_k{k}.npz"
    if not path.exists():
        return None
    with np.load(path) as npz:
        return ItemNeighborIndex(
            neighbors=npz["neighbors"], weights=npz["weights"], k=int(npz["k"])
        )
