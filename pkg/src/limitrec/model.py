"""Embedding storage, scoring, loss terms, and analytic gradients.

Every loss term has the form -w * log(sigmoid(s * e_a . e_b)) with sign
s in {+1, -1}; all terms are accumulated in double precision through the
softplus identity -log(sigmoid(x)) = log(1 + exp(-x)), so scores far into
either tail never overflow.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .errors import DataFormatError
from .graph import beta

CHECKPOINT_MAGIC = b"LREC"
CHECKPOINT_VERSION = 1


@dataclass
class EmbeddingModel:
    """Dense user and item embedding matrices of a fixed dimension."""

    user_embeddings: np.ndarray
    item_embeddings: np.ndarray

    @property
    def dim(self):
        return self.user_embeddings.shape[1]

    def score(self, u, i):
        """Dot-product ranking score for one (user, item) pair."""
        return float(self.user_embeddings[u] @ self.item_embeddings[i])

    def copy(self):
        return EmbeddingModel(self.user_embeddings.copy(), self.item_embeddings.copy())

    def save(self, path):
        u, v = self.user_embeddings, self.item_embeddings
        with open(path, "wb") as fh:
            fh.write(CHECKPOINT_MAGIC)
            fh.write(struct.pack("<IQQQ", CHECKPOINT_VERSION, u.shape[0], v.shape[0], u.shape[1]))
            fh.write(np.ascontiguousarray(u, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(v, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            magic = fh.read(4)
            if magic != CHECKPOINT_MAGIC:
                raise DataFormatError(f"{path}: not a checkpoint (bad magic {magic!r})")
            version, n_users, n_items, dim = struct.unpack("<IQQQ", fh.read(28))
            if version != CHECKPOINT_VERSION:
                raise DataFormatError(f"{path}: unsupported checkpoint version {version}")
            u = np.frombuffer(fh.read(n_users * dim * 8), dtype="<f8").reshape(n_users, dim)
            v = np.frombuffer(fh.read(n_items * dim * 8), dtype="<f8").reshape(n_items, dim)
        return cls(user_embeddings=u.copy(), item_embeddings=v.copy())


@dataclass
class TrainBatch:
    """One mini-batch: positives, their sampled negatives, and neighbor lists.

    neg_items has shape (B, R). Item neighbor arrays are (B, K) and padded
    with -1 / weight 0; user neighbor arrays are present only when the
    user-user ablation loss is enabled.
    """

    users: np.ndarray
    pos_items: np.ndarray
    neg_items: np.ndarray
    neighbor_items: np.ndarray
    neighbor_weights: np.ndarray
    neighbor_users: np.ndarray = None
    neighbor_user_weights: np.ndarray = None


@dataclass
class SparseGrads:
    """Gradient rows touched by a batch, deduplicated by row index."""

    user_rows: np.ndarray
    user_grads: np.ndarray
    item_rows: np.ndarray
    item_grads: np.ndarray


def softplus(x):
    return np.logaddexp(0.0, x)


def _pair_scores(model, users, items):
    return np.einsum(
        "bd,bd->b", model.user_embeddings[users], model.item_embeddings[items]
    )


def _neg_scores(model, batch):
    return np.einsum(
        "bd,brd->br",
        model.user_embeddings[batch.users],
        model.item_embeddings[batch.neg_items],
    )


def loss_O(model, batch):
    """Plain BCE link-prediction objective over positives and negatives."""
    pos = softplus(-_pair_scores(model, batch.users, batch.pos_items)).sum()
    neg = softplus(_neg_scores(model, batch)).sum()
    return float(pos + neg)


def _batch_betas(batch, user_degree, item_degree):
    d_u = user_degree[batch.users]
    b_pos = beta(d_u, item_degree[batch.pos_items])
    b_neg = beta(d_u[:, None], item_degree[batch.neg_items])
    return b_pos, b_neg


def loss_C(model, batch, user_degree, item_degree):
    """Degree-weighted BCE that pins embeddings to the propagation fixed point.

    Negatives reuse the same samples as the BCE objective; their weight uses
    the sampled item's train degree, which may be 0.
    """
    b_pos, b_neg = _batch_betas(batch, user_degree, item_degree)
    pos = (b_pos * softplus(-_pair_scores(model, batch.users, batch.pos_items))).sum()
    neg = (b_neg * softplus(_neg_scores(model, batch))).sum()
    return float(pos + neg)


def loss_I(model, batch):
    """Neighbor-item augmentation loss: user vs. neighbors of the positive.

    Weighted by the co-occurrence similarity; no negative term.
    """
    nbrs = np.maximum(batch.neighbor_items, 0)
    scores = np.einsum(
        "bd,bkd->bk", model.user_embeddings[batch.users], model.item_embeddings[nbrs]
    )
    return float((batch.neighbor_weights * softplus(-scores)).sum())


def loss_I_prime(model, batch):
    """Ablation variant: positive item vs. its neighbors instead of the user."""
    nbrs = np.maximum(batch.neighbor_items, 0)
    scores = np.einsum(
        "bd,bkd->bk",
        model.item_embeddings[batch.pos_items],
        model.item_embeddings[nbrs],
    )
    return float((batch.neighbor_weights * softplus(-scores)).sum())


def loss_U(model, batch):
    """User-user ablation loss: similar users vs. the positive item."""
    if batch.neighbor_users is None:
        raise ValueError("batch carries no user neighbor lists")
    nbrs = np.maximum(batch.neighbor_users, 0)
    scores = np.einsum(
        "bkd,bd->bk", model.user_embeddings[nbrs], model.item_embeddings[batch.pos_items]
    )
    return float((batch.neighbor_user_weights * softplus(-scores)).sum())


def total_loss(model, batch, lam, gamma, user_degree=None, item_degree=None,
               use_item_pair_loss=False, use_user_user_loss=False):
    """Weighted objective: BCE + lam * degree-weighted + gamma * neighbor loss.

    Zero-weight terms are skipped entirely, so lam = gamma = 0 reproduces
    the plain BCE loss bitwise.
    """
    if lam < 0 or gamma < 0:
        raise ValueError("loss weights must be >= 0")
    total = loss_O(model, batch)
    if lam != 0.0:
        total = total + lam * loss_C(model, batch, user_degree, item_degree)
    if gamma != 0.0:
        item_term = loss_I_prime(model, batch) if use_item_pair_loss else loss_I(model, batch)
        total = total + gamma * item_term
        if use_user_user_loss:
            total = total + gamma * loss_U(model, batch)
    return total


class _GradAccumulator:
    def __init__(self):
        self.rows = []
        self.vecs = []

    def add(self, rows, vecs):
        self.rows.append(np.asarray(rows).ravel())
        self.vecs.append(vecs.reshape(-1, vecs.shape[-1]))

    def compact(self, dim):
        if not self.rows:
            return np.empty(0, dtype=np.int64), np.empty((0, dim))
        rows = np.concatenate(self.rows)
        vecs = np.concatenate(self.vecs)
        uniq, inv = np.unique(rows, return_inverse=True)
        out = np.zeros((len(uniq), dim))
        np.add.at(out, inv, vecs)
        return uniq, out


def gradients(model, batch, lam, gamma, user_degree=None, item_degree=None,
              reg=0.0, use_item_pair_loss=False, use_user_user_loss=False):
    """Analytic gradient of the total objective, sparse over touched rows.

    For a term -w * log(sigmoid(s * e_a . e_b)) the gradient w.r.t. e_a is
    -w * s * (1 - sigmoid(s * e_a . e_b)) * e_b, and symmetrically for e_b.
    Weight decay adds 2 * reg * e to every touched row.
    """
    U, V = model.user_embeddings, model.item_embeddings
    gu, gi = _GradAccumulator(), _GradAccumulator()
    users, pos = batch.users, batch.pos_items

    # positive user-item terms: BCE weight 1 plus lam * degree weight
    if lam != 0.0:
        b_pos, b_neg = _batch_betas(batch, user_degree, item_degree)
    else:
        b_pos = b_neg = 0.0
    p = _pair_scores(model, users, pos)
    c_pos = -(1.0 + lam * b_pos) * (1.0 - expit(p))
    gu.add(users, c_pos[:, None] * V[pos])
    gi.add(pos, c_pos[:, None] * U[users])

    # negative terms, sign -1
    if batch.neg_items.shape[1] > 0:
        q = _neg_scores(model, batch)
        c_neg = (1.0 + lam * b_neg) * expit(q)
        gu.add(users, np.einsum("br,brd->bd", c_neg, V[batch.neg_items]))
        gi.add(batch.neg_items, c_neg[..., None] * U[users][:, None, :])

    if gamma != 0.0:
        nbrs = np.maximum(batch.neighbor_items, 0)
        w = batch.neighbor_weights
        if use_item_pair_loss:
            t = np.einsum("bd,bkd->bk", V[pos], V[nbrs])
            c = -gamma * w * (1.0 - expit(t))
            gi.add(pos, np.einsum("bk,bkd->bd", c, V[nbrs]))
            gi.add(nbrs, c[..., None] * V[pos][:, None, :])
        else:
            t = np.einsum("bd,bkd->bk", U[users], V[nbrs])
            c = -gamma * w * (1.0 - expit(t))
            gu.add(users, np.einsum("bk,bkd->bd", c, V[nbrs]))
            gi.add(nbrs, c[..., None] * U[users][:, None, :])
        if use_user_user_loss:
            unbrs = np.maximum(batch.neighbor_users, 0)
            uw = batch.neighbor_user_weights
            t = np.einsum("bkd,bd->bk", U[unbrs], V[pos])
            c = -gamma * uw * (1.0 - expit(t))
            gu.add(unbrs, c[..., None] * V[pos][:, None, :])
            gi.add(pos, np.einsum("bk,bkd->bd", c, U[unbrs]))

    user_rows, user_grads = gu.compact(model.dim)
    item_rows, item_grads = gi.compact(model.dim)
    if reg != 0.0:
        user_grads += 2.0 * reg * U[user_rows]
        item_grads += 2.0 * reg * V[item_rows]
    return SparseGrads(user_rows, user_grads, item_rows, item_grads)
