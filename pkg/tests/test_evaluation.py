import math

import numpy as np
import pytest

from limitrec.data import InteractionFragment, assemble
from limitrec.evaluation import (
    EvalError,
    evaluate,
    ndcg_at_k,
    rank_user,
    recall_at_k,
)
from limitrec.model import EmbeddingModel


def model_from_scores(score_rows):
    """1-d embeddings so that score(u, i) equals the given table."""
    scores = np.asarray(score_rows, dtype=float)
    return EmbeddingModel(
        user_embeddings=np.ones((scores.shape[0], 1)),
        item_embeddings=None,
    ), scores


class TestRankUser:
    def rank(self, scores, masked, cutoff):
        model = EmbeddingModel(
            user_embeddings=np.array([[1.0]]),
            item_embeddings=np.asarray(scores, dtype=float).reshape(-1, 1),
        )
        return list(rank_user(model, 0, masked, cutoff))

    def test_masked_training_item_skipped(self):
        assert self.rank([0.9, 0.5, 0.1], [1], 2) == [0, 2]

    def test_all_equal_scores_ascending_index(self):
        assert self.rank([0.3, 0.3, 0.3, 0.3], [], 4) == [0, 1, 2, 3]

    def test_matches_full_sort_oracle(self):
        rng = np.random.default_rng(0)
        scores = rng.standard_normal(200)
        masked = rng.choice(200, 30, replace=False)
        got = self.rank(scores, masked, 200)
        s = scores.copy()
        s[masked] = -np.inf
        expected = sorted(range(200), key=lambda i: (-s[i], i))
        assert got == expected


class TestRecall:
    def test_half_retrieved(self):
        assert recall_at_k([5, 1, 2], {5, 9}, 3) == 0.5

    def test_all_retrieved(self):
        assert recall_at_k([5, 9, 2], {5, 9}, 3) == 1.0

    def test_matches_brute_force_intersection(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            topk = list(rng.choice(100, 20, replace=False))
            test = set(rng.choice(100, int(rng.integers(1, 10)), replace=False))
            expected = len(set(topk) & test) / len(test)
            assert recall_at_k(topk, test, 20) == expected


class TestNdcg:
    def test_single_hit_at_rank_one(self):
        assert ndcg_at_k([7] + list(range(100, 119)), {7}, 20) == 1.0

    def test_partial_hit_hand_evaluated(self):
        # a at rank 1, b absent: 1 / (1 + 1/log2(3))
        got = ndcg_at_k([4, 0, 1], {4, 9}, 3)
        assert got == pytest.approx(1.0 / (1.0 + 1.0 / math.log2(3)), abs=1e-12)

    def test_no_hits(self):
        assert ndcg_at_k([0, 1, 2], {9}, 3) == 0.0

    def test_matches_high_precision_oracle(self):
        import mpmath

        mpmath.mp.dps = 50
        rng = np.random.default_rng(2)
        for _ in range(100):
            n_items = 50
            k = int(rng.integers(1, 25))
            topk = list(rng.permutation(n_items)[:k])
            test = set(int(x) for x in
                       rng.choice(n_items, int(rng.integers(1, 8)), replace=False))
            dcg = mpmath.mpf(0)
            for rank, item in enumerate(topk, start=1):
                if item in test:
                    dcg += 1 / (mpmath.log(rank + 1) / mpmath.log(2))
            idcg = mpmath.mpf(0)
            for r in range(1, min(len(test), k) + 1):
                idcg += 1 / (mpmath.log(r + 1) / mpmath.log(2))
            expected = float(dcg / idcg) if idcg > 0 else 0.0
            assert ndcg_at_k(topk, test, k) == pytest.approx(expected, abs=1e-12)


def toy_dataset():
    train = InteractionFragment()
    test = InteractionFragment()
    for u, i in [(0, 0), (0, 1), (1, 2), (1, 3), (2, 0)]:
        train.add(u, i)
    for u, i in [(0, 2), (1, 0), (2, 3)]:
        test.add(u, i)
    return assemble(train, test=test, holdout_fraction=0)


class TestEvaluate:
    def test_perfect_model_scores_one(self):
        ds = toy_dataset()
        emb = np.zeros((ds.num_items, ds.num_items))
        user = np.zeros((ds.num_users, ds.num_items))
        for u, i in ds.test_pairs:
            user[u, i] = 10.0
        np.fill_diagonal(emb, 1.0)
        model = EmbeddingModel(user_embeddings=user, item_embeddings=emb)
        report = evaluate(model, ds, cutoffs=[1, 20])
        assert report.recall[1] == 1.0
        assert report.ndcg[1] == 1.0

    def test_training_items_never_ranked(self):
        ds = toy_dataset()
        rng = np.random.default_rng(3)
        model = EmbeddingModel(
            user_embeddings=rng.standard_normal((ds.num_users, 4)),
            item_embeddings=rng.standard_normal((ds.num_items, 4)),
        )
        train_items = {}
        for u, i in ds.train_pairs:
            train_items.setdefault(int(u), set()).add(int(i))
        for u in train_items:
            top = rank_user(model, u, sorted(train_items[u]), ds.num_items)
            k_free = ds.num_items - len(train_items[u])
            assert not train_items[u] & set(int(x) for x in top[:k_free])

    def test_score_shift_invariance(self):
        ds = toy_dataset()
        rng = np.random.default_rng(4)
        base = rng.standard_normal((ds.num_users, 4))
        items = rng.standard_normal((ds.num_items, 4))
        m1 = EmbeddingModel(user_embeddings=base, item_embeddings=items)
        # shift all of a user's scores by a constant via an extra dimension
        items2 = np.hstack([items, np.ones((ds.num_items, 1))])
        base2 = np.hstack([base, 3.7 * np.ones((ds.num_users, 1))])
        m2 = EmbeddingModel(user_embeddings=base2, item_embeddings=items2)
        r1 = evaluate(m1, ds, cutoffs=[2])
        r2 = evaluate(m2, ds, cutoffs=[2])
        assert r1.recall == r2.recall
        assert r1.ndcg == r2.ndcg

    def test_valid_items_masked_for_test_split(self):
        train = InteractionFragment()
        valid = InteractionFragment()
        test = InteractionFragment()
        for i in range(4):
            train.add(0, i)
        valid.add(0, 4)
        test.add(0, 5)
        ds = assemble(train, valid=valid, test=test, holdout_fraction=0)
        model = EmbeddingModel(
            user_embeddings=np.ones((1, 1)),
            item_embeddings=np.arange(6, dtype=float).reshape(-1, 1)[::-1].copy(),
        )
        # item 4 (valid) outranks item 5 but must be masked
        report = evaluate(model, ds, cutoffs=[1], split="test")
        assert report.recall[1] == 1.0

    def test_no_evaluable_users_raises(self):
        train = InteractionFragment()
        train.add(0, 0)
        ds = assemble(train, holdout_fraction=0)
        model = EmbeddingModel(
            user_embeddings=np.ones((1, 2)), item_embeddings=np.ones((1, 2))
        )
        with pytest.raises(EvalError):
            evaluate(model, ds, cutoffs=[20], split="test")

    def test_report_serialization(self):
        ds = toy_dataset()
        rng = np.random.default_rng(5)
        model = EmbeddingModel(
            user_embeddings=rng.standard_normal((ds.num_users, 4)),
            item_embeddings=rng.standard_normal((ds.num_items, 4)),
        )
        report = evaluate(model, ds, cutoffs=[5, 20])
        d = report.to_dict()
        assert set(d["recall"]) == {"5", "20"}
        assert "users evaluated" in report.to_table()
        import json
        json.dumps(d)
