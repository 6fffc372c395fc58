"""Dense reference for degree-normalized message passing on tiny graphs.

This module exists to validate, by direct computation, that the training
objective's closed forms agree with explicit propagation: the one-step
dot-product expansion and the closed-form limit of infinitely repeated
propagation. It is never used in training and is deliberately dense,
double precision, and capped in size.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MAX_NODES = 1000


@dataclass(frozen=True)
class DenseGraph:
    """Undirected graph as a dense symmetric 0/1 adjacency, zero diagonal."""

    adjacency: np.ndarray

    def __post_init__(self):
        a = self.adjacency
        if a.shape[0] != a.shape[1]:
            raise ValueError("adjacency must be square")
        if a.shape[0] > MAX_NODES:
            raise ValueError(f"dense reference is capped at {MAX_NODES} nodes")
        if not np.array_equal(a, a.T):
            raise ValueError("adjacency must be symmetric")
        if np.any(np.diag(a) != 0):
            raise ValueError("adjacency must have a zero diagonal")

    @property
    def num_nodes(self):
        return self.adjacency.shape[0]

    @property
    def num_edges(self):
        return int(self.adjacency.sum()) // 2

    @property
    def degrees(self):
        return self.adjacency.sum(axis=1).astype(np.int64)


def bipartite_dense_graph(num_users, num_items, edges):
    """Joint user+item node graph; users occupy indices [0, num_users)."""
    n = num_users + num_items
    a = np.zeros((n, n), dtype=np.float64)
    for u, i in edges:
        a[u, num_users + i] = 1.0
        a[num_users + i, u] = 1.0
    return DenseGraph(adjacency=a)


def propagation_matrix(g):
    """Self-looped, degree-normalized propagation operator.

    Entry (i, j) is 1/sqrt((d_i+1)(d_j+1)) for edges and the diagonal,
    0 elsewhere.
    """
    d1 = g.degrees + 1.0
    scale = 1.0 / np.sqrt(np.outer(d1, d1))
    hat = g.adjacency + np.eye(g.num_nodes)
    return hat * scale


def is_connected(g):
    """Union-find connectivity over the edge set."""
    n = g.num_nodes
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    rows, cols = np.nonzero(g.adjacency)
    for a, b in zip(rows, cols):
        ra, rb = find(int(a)), find(int(b))
        if ra != rb:
            parent[ra] = rb
    return len({find(x) for x in range(n)}) == 1


def limit_matrix(g):
    """Closed form of the infinitely repeated propagation operator.

    Entry (i, j) is sqrt((d_i+1)(d_j+1)) / (2m + n). Only valid on a
    connected graph; callers must test components separately.
    """
    if not is_connected(g):
        raise ValueError("limit formula requires a connected graph")
    d1 = g.degrees + 1.0
    return np.sqrt(np.outer(d1, d1)) / (2 * g.num_edges + g.num_nodes)


def power_iterate(p, steps):
    """steps-fold repeated application of the operator; steps=0 gives I."""
    if steps < 0:
        raise ValueError("steps must be >= 0")
    out = np.eye(p.shape[0])
    for _ in range(steps):
        out = out @ p
    return out


def steps_to_limit(g, tol=1e-6, max_steps=10_000):
    """Iterate the operator until it is within tol (inf-norm) of the limit.

    Returns (steps, achieved_gap). steps is None if max_steps was hit.
    """
    p = propagation_matrix(g)
    lim = limit_matrix(g)
    cur = np.eye(g.num_nodes)
    for step in range(1, max_steps + 1):
        cur = cur @ p
        gap = np.abs(cur - lim).max()
        if gap <= tol:
            return step, gap
    return None, gap


def propagate_once(g, embeddings):
    """One explicit propagation step applied to an embedding matrix."""
    return propagation_matrix(g) @ embeddings


def dot_decomposition_check(g, embeddings, u, i, num_users=None):
    """Residual between the propagated dot product and its four-term expansion.

    Left side: propagate all embeddings one step, then dot node u with
    node i. Right side: the same quantity rebuilt from current-layer dot
    products weighted by the four degree coefficients over u's and i's
    neighborhoods. At double precision the residual should sit at
    rounding level (<= 1e-10).
    """
    e_next = propagate_once(g, embeddings)
    lhs = float(e_next[u] @ e_next[i])

    a = g.adjacency
    d = g.degrees.astype(np.float64)
    nbr_u = np.nonzero(a[u])[0]
    nbr_i = np.nonzero(a[i])[0]
    e = embeddings

    du1, di1 = d[u] + 1.0, d[i] + 1.0
    rhs = (e[u] @ e[i]) / (du1 * di1)
    for k in nbr_u:
        rhs += (e[i] @ e[k]) / (np.sqrt(du1 * (d[k] + 1.0)) * di1)
    for v in nbr_i:
        rhs += (e[u] @ e[v]) / (np.sqrt((d[v] + 1.0) * di1) * du1)
    for k in nbr_u:
        for v in nbr_i:
            rhs += (e[k] @ e[v]) / np.sqrt(du1 * (d[k] + 1.0) * (d[v] + 1.0) * di1)
    return abs(lhs - float(rhs))


def random_connected_graph(n, rng, extra_edge_prob=0.15):
    """Random connected graph: a random spanning tree plus extra edges."""
    a = np.zeros((n, n), dtype=np.float64)
    order = rng.permutation(n)
    for idx in range(1, n):
        parent = order[rng.integers(0, idx)]
        child = order[idx]
        a[parent, child] = a[child, parent] = 1.0
    mask = rng.random((n, n)) < extra_edge_prob
    mask = np.triu(mask, k=1)
    a[mask] = 1.0
    a = np.maximum(a, a.T)
    np.fill_diagonal(a, 0.0)
    return DenseGraph(adjacency=a)


def random_bipartite_graph(num_users, num_items, rng, edge_prob=0.4):
    """Random bipartite graph; every user and item gets at least one edge."""
    edges = set()
    for u in range(num_users):
        edges.add((u, int(rng.integers(0, num_items))))
    for i in range(num_items):
        edges.add((int(rng.integers(0, num_users)), i))
    for u in range(num_users):
        for i in range(num_items):
            if rng.random() < edge_prob:
                edges.add((u, i))
    return bipartite_dense_graph(num_users, num_items, sorted(edges))
