"""Full-ranking top-K evaluation with train-item masking."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import LimitrecError


class EvalError(LimitrecError):
    """Evaluation could not run (e.g. no users with held-out items)."""


@dataclass(frozen=True)
class EvalReport:
    """Mean Recall@K / NDCG@K over users with a nonempty held-out set."""

    cutoffs: tuple
    recall: dict
    ndcg: dict
    num_evaluated_users: int

    def to_dict(self):
        return {
            "cutoffs": list(self.cutoffs),
            "recall": {str(k): v for k, v in self.recall.items()},
            "ndcg": {str(k): v for k, v in self.ndcg.items()},
            "num_evaluated_users": self.num_evaluated_users,
        }

    def to_table(self):
        lines = [f"{'cutoff':>8} {'recall':>10} {'ndcg':>10}"]
        for k in self.cutoffs:
            lines.append(f"{k:>8} {self.recall[k]:>10.6f} {self.ndcg[k]:>10.6f}")
        lines.append(f"users evaluated: {self.num_evaluated_users}")
        return "\n".join(lines)


def rank_user(model, u, masked_items, cutoff):
    """Top-`cutoff` items for user u, masked items excluded.

    Ties break toward the smaller item index (stable across runs).
    """
    scores = model.item_embeddings @ model.user_embeddings[u]
    if len(masked_items):
        scores[np.asarray(masked_items)] = -np.inf
    order = np.lexsort((np.arange(len(scores)), -scores))
    return order[:cutoff]


def recall_at_k(topk, test_items, k):
    """Fraction of held-out items retrieved in the top k."""
    hits = sum(1 for item in topk[:k] if item in test_items)
    return hits / len(test_items)


def ndcg_at_k(topk, test_items, k):
    """Binary-relevance NDCG with log2 discount, ranks starting at 1."""
    dcg = 0.0
    for rank, item in enumerate(topk[:k], start=1):
        if item in test_items:
            dcg += 1.0 / np.log2(rank + 1)
    ideal = min(len(test_items), k)
    idcg = sum(1.0 / np.log2(r + 1) for r in range(1, ideal + 1))
    return float(dcg / idcg) if idcg > 0 else 0.0


def _split_items_by_user(pairs, num_users):
    out = [[] for _ in range(num_users)]
    for u, i in pairs:
        out[u].append(int(i))
    return out


def evaluate(model, dataset, cutoffs=(20,), split="test", chunk=512):
    """Mean metrics over all users with held-out items in the given split.

    Candidates are all items the user did not interact with in train; when
    scoring the test split, validation items are masked as well.
    """
    cutoffs = tuple(int(k) for k in cutoffs)
    held = _split_items_by_user(
        getattr(dataset, f"{split}_pairs"), dataset.num_users
    )
    masked = _split_items_by_user(dataset.train_pairs, dataset.num_users)
    if split == "test":
        for u, i in dataset.valid_pairs:
            masked[u].append(int(i))

    eval_users = [u for u in range(dataset.num_users) if held[u]]
    if not eval_users:
        raise EvalError(f"no users with held-out items in split {split!r}")

    max_k = max(cutoffs)
    recall_sums = {k: 0.0 for k in cutoffs}
    ndcg_sums = {k: 0.0 for k in cutoffs}
    item_emb = model.item_embeddings
    idx = np.arange(item_emb.shape[0])
    for start in range(0, len(eval_users), chunk):
        users = eval_users[start:start + chunk]
        scores = model.user_embeddings[users] @ item_emb.T
        for row, u in enumerate(users):
            s = scores[row]
            if masked[u]:
                s[np.asarray(masked[u])] = -np.inf
            order = np.lexsort((idx, -s))[:max_k]
            test_set = set(held[u])
            for k in cutoffs:
                recall_sums[k] += recall_at_k(order, test_set, k)
                ndcg_sums[k] += ndcg_at_k(order, test_set, k)
    n = len(eval_users)
    return EvalReport(
        cutoffs=cutoffs,
        recall={k: recall_sums[k] / n for k in cutoffs},
        ndcg={k: ndcg_sums[k] / n for k in cutoffs},
        num_evaluated_users=n,
    )
