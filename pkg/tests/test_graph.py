import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from limitrec.data import InteractionFragment, assemble
from limitrec.graph import (
    beta,
    build_cooccurrence,
    build_graph,
    build_neighbor_index,
    load_neighbor_index,
    omega,
    save_neighbor_index,
)


def dataset_from(pairs, num_users=None, num_items=None):
    frag = InteractionFragment()
    for u, i in pairs:
        frag.add(u, i)
    if num_users:
        frag.users.update(range(num_users))
    if num_items:
        frag.items.update(range(num_items))
    return assemble(frag, holdout_fraction=0)


class TestBuildGraph:
    def test_degree_counts(self):
        g = build_graph(dataset_from([(0, 0), (0, 1), (1, 1)]))
        assert list(g.user_degree) == [2, 1]
        assert list(g.item_degree) == [1, 2]

    def test_empty_train(self):
        ds = dataset_from([], num_users=3, num_items=4)
        g = build_graph(ds)
        assert g.user_degree.sum() == 0 and g.item_degree.sum() == 0

    def test_degrees_match_dense_oracle(self):
        rng = np.random.default_rng(0)
        dense = (rng.random((50, 50)) < 0.1).astype(float)
        pairs = [(int(u), int(i)) for u, i in zip(*np.nonzero(dense))]
        ds = dataset_from(pairs, num_users=50, num_items=50)
        g = build_graph(ds)
        assert np.array_equal(g.user_degree, dense.sum(axis=1))
        assert np.array_equal(g.item_degree, dense.sum(axis=0))

    def test_degree_sums_equal_pair_count(self):
        ds = dataset_from([(u, (u * 3 + k) % 7) for u in range(9) for k in range(3)])
        g = build_graph(ds)
        assert g.user_degree.sum() == g.item_degree.sum() == len(ds.train_pairs)


class TestBeta:
    def test_unit_degrees(self):
        assert beta(1, 1) == 1.0

    def test_hand_evaluated_values(self):
        # 0.25 * sqrt(5/2) and 0.5 * sqrt(3/4)
        assert beta(4, 1) == pytest.approx(0.25 * math.sqrt(2.5), abs=1e-12)
        assert beta(2, 3) == pytest.approx(0.5 * math.sqrt(0.75), abs=1e-12)

    def test_zero_user_degree_rejected(self):
        with pytest.raises(ValueError):
            beta(0, 1)

    def test_item_degree_zero_allowed(self):
        assert beta(2, 0) == pytest.approx(0.5 * math.sqrt(3.0))

    @given(d_u=st.integers(1, 500), d_i=st.integers(0, 499))
    def test_strictly_decreasing_in_item_degree(self, d_u, d_i):
        assert beta(d_u, d_i) > beta(d_u, d_i + 1)

    def test_vanishes_for_heavy_users(self):
        assert beta(10**4, 5) < beta(10**2, 5) < beta(10**0, 5)
        assert beta(10**12, 5) < 1e-5


A_EXAMPLE = [(0, 0), (0, 1), (1, 1), (1, 2)]  # A = [[1,1,0],[0,1,1]]


class TestCooccurrence:
    def test_small_example_against_dense_product(self):
        g = build_graph(dataset_from(A_EXAMPLE))
        co = build_cooccurrence(g)
        expected = np.array([[1, 1, 0], [1, 2, 1], [0, 1, 1]])
        assert np.array_equal(co.matrix.toarray(), expected)
        assert list(co.degrees) == [2, 4, 2]

    def test_single_user_single_item(self):
        co = build_cooccurrence(build_graph(dataset_from([(0, 0)])))
        assert co.matrix.toarray().tolist() == [[1.0]]
        assert list(co.degrees) == [1]

    def test_disjoint_users_give_diagonal(self):
        co = build_cooccurrence(build_graph(dataset_from([(0, 0), (1, 1), (2, 2)])))
        dense = co.matrix.toarray()
        assert np.array_equal(dense, np.diag(np.diag(dense)))

    def test_diagonal_equals_item_degree(self):
        ds = dataset_from([(u, (u + k) % 8) for u in range(12) for k in range(4)])
        g = build_graph(ds)
        co = build_cooccurrence(g)
        assert np.array_equal(np.diag(co.matrix.toarray()), g.item_degree)

    def test_random_instance_matches_dense_oracle(self):
        rng = np.random.default_rng(5)
        dense = (rng.random((40, 100)) < 0.07).astype(float)
        pairs = [(int(u), int(i)) for u, i in zip(*np.nonzero(dense))]
        ds = dataset_from(pairs, num_users=40, num_items=100)
        co = build_cooccurrence(build_graph(ds))
        assert np.array_equal(co.matrix.toarray(), dense.T @ dense)

    def test_user_mode_matches_dense_oracle(self):
        rng = np.random.default_rng(6)
        dense = (rng.random((30, 40)) < 0.1).astype(float)
        pairs = [(int(u), int(i)) for u, i in zip(*np.nonzero(dense))]
        ds = dataset_from(pairs, num_users=30, num_items=40)
        co = build_cooccurrence(build_graph(ds), mode="user")
        assert np.array_equal(co.matrix.toarray(), dense @ dense.T)


class TestOmega:
    @pytest.fixture
    def co(self):
        return build_cooccurrence(build_graph(dataset_from(A_EXAMPLE)))

    def test_hand_evaluated(self, co):
        # G_01 / (g_0 - G_00) * sqrt(g_0 / g_1) = 1/1 * sqrt(2/4)
        assert omega(co, 0, 1) == pytest.approx(math.sqrt(0.5), abs=1e-12)

    def test_no_cooccurrence_gives_zero(self, co):
        assert omega(co, 0, 2) == 0.0

    def test_self_only_cooccurrence_gives_zero(self):
        co = build_cooccurrence(build_graph(dataset_from([(0, 0), (1, 1)])))
        assert omega(co, 0, 1) == 0.0

    def test_zero_degree_neighbor_rejected(self):
        ds = dataset_from([(0, 0)], num_items=2)
        co = build_cooccurrence(build_graph(ds))
        with pytest.raises(ValueError):
            omega(co, 0, 1)

    def test_same_node_rejected(self, co):
        with pytest.raises(ValueError):
            omega(co, 1, 1)


class TestNeighborIndex:
    def test_tie_breaks_to_smaller_index(self):
        co = build_cooccurrence(build_graph(dataset_from(A_EXAMPLE)))
        index = build_neighbor_index(co, 1)
        # item 1 sees items 0 and 2 with equal weight sqrt(0.5)
        nbrs, weights = index.neighbors_of(1)
        assert list(nbrs) == [0]
        assert weights[0] == pytest.approx(math.sqrt(0.5))

    def test_truncates_to_available_neighbors(self):
        co = build_cooccurrence(build_graph(dataset_from(A_EXAMPLE)))
        index = build_neighbor_index(co, 10)
        nbrs, _ = index.neighbors_of(1)
        assert len(nbrs) == 2

    def test_item_without_cooccurrence_has_empty_list(self):
        co = build_cooccurrence(build_graph(dataset_from([(0, 0), (1, 1)])))
        index = build_neighbor_index(co, 3)
        nbrs, _ = index.neighbors_of(0)
        assert len(nbrs) == 0

    def test_weights_sorted_descending_and_match_omega(self):
        rng = np.random.default_rng(11)
        dense = (rng.random((25, 30)) < 0.15).astype(float)
        pairs = [(int(u), int(i)) for u, i in zip(*np.nonzero(dense))]
        ds = dataset_from(pairs, num_users=25, num_items=30)
        co = build_cooccurrence(build_graph(ds))
        index = build_neighbor_index(co, 4)
        for i in range(30):
            nbrs, weights = index.neighbors_of(i)
            assert all(weights[a] >= weights[a + 1] for a in range(len(weights) - 1))
            for j, w in zip(nbrs, weights):
                assert w == pytest.approx(omega(co, i, int(j)), abs=1e-12)
            assert i not in nbrs

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 1000))
    def test_invariant_under_pair_order_permutation(self, seed):
        rng = np.random.default_rng(seed)
        pairs = [(int(u), int(i)) for u, i in
                 zip(rng.integers(0, 8, 30), rng.integers(0, 10, 30))]
        shuffled = list(pairs)
        rng.shuffle(shuffled)
        idx1 = build_neighbor_index(
            build_cooccurrence(build_graph(dataset_from(pairs))), 3)
        idx2 = build_neighbor_index(
            build_cooccurrence(build_graph(dataset_from(shuffled))), 3)
        assert np.array_equal(idx1.neighbors, idx2.neighbors)
        assert np.array_equal(idx1.weights, idx2.weights)


class TestNeighborIndexCache:
    def test_round_trip(self, tmp_path, monkeypatch):
        monkeypatch.setenv("LIMITREC_CACHE_DIR", str(tmp_path))
        ds = dataset_from(A_EXAMPLE)
        co = build_cooccurrence(build_graph(ds))
        index = build_neighbor_index(co, 2)
        save_neighbor_index(index, ds)
        loaded = load_neighbor_index(ds, 2)
        assert loaded is not None
        assert np.array_equal(loaded.neighbors, index.neighbors)
        assert np.array_equal(loaded.weights, index.weights)

    def test_miss_on_different_k(self, tmp_path, monkeypatch):
        monkeypatch.setenv("LIMITREC_CACHE_DIR", str(tmp_path))
        ds = dataset_from(A_EXAMPLE)
        assert load_neighbor_index(ds, 5) is None
