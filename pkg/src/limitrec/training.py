"""Negative sampling, batching, optimizer, and the training loop."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from . import graph as graph_mod
from .errors import ConfigError, NumericError
from .model import EmbeddingModel, TrainBatch, gradients, loss_C, loss_I, loss_O, total_loss


@dataclass
class TrainConfig:
    """Hyperparameters; defaults follow the reference experimental setup."""

    dim: int = 64
    lr: float = 1e-4
    batch_size: int = 1024
    negatives: int = 300       # R: sampled negatives per positive
    neighbors: int = 10        # K: co-occurrence neighbors per item
    lam: float = 1.0
    gamma: float = 1.5
    reg: float = 1e-4
    max_epochs: int = 500
    patience: int = 10
    eval_interval: int = 5
    seed: int = 0
    init_std: float = 1e-4
    strict_negatives: bool = False
    normalize_in_loss: bool = False
    use_item_pair_loss: bool = False
    use_user_user_loss: bool = False

    def validate(self):
        if self.lr <= 0:
            raise ConfigError("lr must be > 0")
        if self.negatives < 0 or self.neighbors < 0:
            raise ConfigError("negatives and neighbors must be >= 0")
        if self.lam < 0 or self.gamma < 0:
            raise ConfigError("loss weights must be >= 0")
        if self.normalize_in_loss:
            raise ConfigError(
                "normalize_in_loss is not supported: the objective is defined "
                "on raw dot products"
            )
        return self


@dataclass
class OptimizerState:
    """Adaptive-moment accumulators, updated lazily on touched rows only."""

    m_user: np.ndarray
    v_user: np.ndarray
    m_item: np.ndarray
    v_item: np.ndarray
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_model(cls, model):
        return cls(
            m_user=np.zeros_like(model.user_embeddings),
            v_user=np.zeros_like(model.user_embeddings),
            m_item=np.zeros_like(model.item_embeddings),
            v_item=np.zeros_like(model.item_embeddings),
        )

    def apply(self, model, grads, lr):
        self.step += 1
        bc1 = 1.0 - self.beta1 ** self.step
        bc2 = 1.0 - self.beta2 ** self.step
        for emb, m, v, rows, g in (
            (model.user_embeddings, self.m_user, self.v_user, grads.user_rows, grads.user_grads),
            (model.item_embeddings, self.m_item, self.v_item, grads.item_rows, grads.item_grads),
        ):
            if len(rows) == 0:
                continue
            m[rows] = self.beta1 * m[rows] + (1.0 - self.beta1) * g
            v[rows] = self.beta2 * v[rows] + (1.0 - self.beta2) * g * g
            m_hat = m[rows] / bc1
            v_hat = v[rows] / bc2
            emb[rows] -= lr * m_hat / (np.sqrt(v_hat) + self.eps)


def sample_negatives(pos_items, r, rng, num_items, user_items=None, users=None):
    """Uniform negatives with replacement, excluding each paired positive.

    With `user_items` (a CSR adjacency) and `users` given, the user's whole
    train history is excluded instead.
    """
    pos_items = np.asarray(pos_items)
    n = len(pos_items)
    if r == 0:
        return np.empty((n, r), dtype=np.int64)
    if num_items < 2:
        raise ValueError("negative sampling needs at least 2 items")
    out = rng.integers(0, num_items, size=(n, r), dtype=np.int64)
    if user_items is not None and users is not None:
        forbidden = [
            set(user_items.indices[user_items.indptr[u]:user_items.indptr[u + 1]])
            for u in users
        ]
        for b in range(n):
            bad = forbidden[b] | {int(pos_items[b])}
            if len(bad) >= num_items:
                raise ValueError(f"user {users[b]} has no negative candidates")
            for col in range(r):
                while int(out[b, col]) in bad:
                    out[b, col] = rng.integers(0, num_items)
    else:
        collisions = out == pos_items[:, None]
        while collisions.any():
            out[collisions] = rng.integers(0, num_items, size=int(collisions.sum()))
            collisions = out == pos_items[:, None]
    return out


def init_embeddings(config, rng, num_users, num_items):
    """Gaussian init with zero mean and config.init_std standard deviation."""
    return EmbeddingModel(
        user_embeddings=rng.normal(0.0, config.init_std, size=(num_users, config.dim)),
        item_embeddings=rng.normal(0.0, config.init_std, size=(num_items, config.dim)),
    )


def make_batch(users, pos_items, config, bipartite, index, rng, user_index=None):
    """Assemble one TrainBatch: sample negatives and gather neighbor lists."""
    negs = sample_negatives(
        pos_items, config.negatives, rng, bipartite.num_items,
        user_items=bipartite.user_items if config.strict_negatives else None,
        users=users if config.strict_negatives else None,
    )
    neighbor_items = index.neighbors[pos_items] if index is not None else \
        np.full((len(users), 0), -1, dtype=np.int64)
    neighbor_weights = index.weights[pos_items] if index is not None else \
        np.zeros((len(users), 0))
    batch = TrainBatch(
        users=users, pos_items=pos_items, neg_items=negs,
        neighbor_items=neighbor_items, neighbor_weights=neighbor_weights,
    )
    if user_index is not None:
        batch.neighbor_users = user_index.neighbors[users]
        batch.neighbor_user_weights = user_index.weights[users]
    return batch


def train_epoch(model, dataset, bipartite, index, config, opt_state, rng,
                user_index=None):
    """One shuffled pass over the train pairs; returns mean loss components."""
    pairs = dataset.train_pairs
    order = rng.permutation(len(pairs))
    sums = {"loss_O": 0.0, "loss_C": 0.0, "loss_I": 0.0, "total": 0.0}
    n_batches = 0
    for start in range(0, len(order), config.batch_size):
        sel = order[start:start + config.batch_size]
        users, pos = pairs[sel, 0], pairs[sel, 1]
        batch = make_batch(users, pos, config, bipartite, index, rng, user_index)
        lo = loss_O(model, batch)
        lc = loss_C(model, batch, bipartite.user_degree, bipartite.item_degree) \
            if config.lam != 0.0 else 0.0
        li = loss_I(model, batch) if config.gamma != 0.0 and index is not None else 0.0
        total = total_loss(
            model, batch, config.lam, config.gamma,
            bipartite.user_degree, bipartite.item_degree,
            use_item_pair_loss=config.use_item_pair_loss,
            use_user_user_loss=config.use_user_user_loss,
        )
        if not np.isfinite(total):
            raise NumericError(f"non-finite loss in batch {n_batches}")
        grads = gradients(
            model, batch, config.lam, config.gamma,
            bipartite.user_degree, bipartite.item_degree, reg=config.reg,
            use_item_pair_loss=config.use_item_pair_loss,
            use_user_user_loss=config.use_user_user_loss,
        )
        opt_state.apply(model, grads, config.lr)
        denom = len(sel)
        sums["loss_O"] += lo / denom
        sums["loss_C"] += lc / denom
        sums["loss_I"] += li / denom
        sums["total"] += total / denom
        n_batches += 1
    return {k: v / max(n_batches, 1) for k, v in sums.items()}


def fit(dataset, config, bipartite=None, index=None, user_index=None,
        log_file=None, progress=None):
    """Train to convergence with validation-based early stopping.

    Evaluates Recall@20 on the validation split every eval_interval epochs
    and returns the checkpoint with the best validation recall, plus the
    per-epoch training log.
    """
    from .evaluation import evaluate  # deferred: avoids a circular import

    config.validate()
    if bipartite is None:
        bipartite = graph_mod.build_graph(dataset)
    if index is None and config.gamma != 0.0 and config.neighbors >= 1:
        co = graph_mod.build_cooccurrence(bipartite, mode="item")
        index = graph_mod.build_neighbor_index(co, config.neighbors)
    if user_index is None and config.use_user_user_loss:
        co_u = graph_mod.build_cooccurrence(bipartite, mode="user")
        user_index = graph_mod.build_neighbor_index(co_u, config.neighbors)

    rng = np.random.default_rng(config.seed)
    model = init_embeddings(config, rng, dataset.num_users, dataset.num_items)
    opt_state = OptimizerState.for_model(model)

    can_stop_early = len(dataset.valid_pairs) > 0
    if not can_stop_early:
        import logging
        logging.getLogger(__name__).warning(
            "empty validation split: early stopping disabled"
        )

    best_model = model.copy()
    best_recall = -1.0
    evals_since_best = 0
    log = []
    for epoch in range(1, config.max_epochs + 1):
        t0 = time.perf_counter()
        stats = train_epoch(model, dataset, bipartite, index, config, opt_state,
                            rng, user_index)
        record = {"epoch": epoch, "wall_clock": time.perf_counter() - t0, **stats}
        if can_stop_early and epoch % config.eval_interval == 0:
            report = evaluate(model, dataset, cutoffs=[20], split="valid")
            record["valid_recall@20"] = report.recall[20]
            record["valid_ndcg@20"] = report.ndcg[20]
            if report.recall[20] > best_recall:
                best_recall = report.recall[20]
                best_model = model.copy()
                evals_since_best = 0
            else:
                evals_since_best += 1
        log.append(record)
        if log_file is not None:
            log_file.write(json.dumps(record) + "\n")
            log_file.flush()
        if progress is not None:
            progress(record)
        if can_stop_early and evals_since_best >= config.patience:
            break
    if not can_stop_early:
        best_model = model
    elif not log or "valid_recall@20" not in log[-1]:
        # last epoch fell between evaluations; give it a chance at best
        report = evaluate(model, dataset, cutoffs=[20], split="valid")
        if report.recall[20] > best_recall:
            best_model = model.copy()
    return best_model, log
