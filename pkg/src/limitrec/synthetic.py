"""Seeded synthetic implicit-feedback data with latent cluster structure.

Used by the test suite and the demo configs: interactions are drawn from
a user-cluster preference model so that collaborative structure exists
for the trainer to recover.
"""

from __future__ import annotations

import numpy as np

from .data import InteractionFragment, assemble


def generate_fragments(num_users=600, num_items=800, interactions_per_user=60,
                       clusters=8, noise=0.15, test_fraction=0.2, seed=7):
    """Return (train, test) fragments from a cluster preference model.

    Each item belongs to one cluster; each user mixes two clusters. A
    `noise` share of each user's interactions is uniform over all items.
    """
    rng = np.random.default_rng(seed)
    item_cluster = rng.integers(0, clusters, size=num_items)
    cluster_items = [np.nonzero(item_cluster == c)[0] for c in range(clusters)]
    # item popularity within a cluster is skewed, like real catalogs
    popularity = rng.zipf(1.6, size=num_items).astype(np.float64)

    train = InteractionFragment()
    test = InteractionFragment()
    for u in range(num_users):
        c1, c2 = rng.choice(clusters, size=2, replace=False)
        mix = rng.uniform(0.55, 0.9)
        chosen = set()
        target = int(rng.poisson(interactions_per_user))
        attempts = 0
        while len(chosen) < target and attempts < target * 20:
            attempts += 1
            r = rng.random()
            if r < noise:
                item = int(rng.integers(0, num_items))
            else:
                pool = cluster_items[c1 if rng.random() < mix else c2]
                if len(pool) == 0:
                    continue
                p = popularity[pool]
                item = int(rng.choice(pool, p=p / p.sum()))
            chosen.add(item)
        chosen = sorted(chosen)
        rng.shuffle(chosen)
        n_test = max(1, int(len(chosen) * test_fraction)) if len(chosen) > 2 else 0
        for item in chosen[n_test:]:
            train.add(u, item)
        for item in chosen[:n_test]:
            test.add(u, item)
    return train, test


def generate_dataset(holdout_fraction=0.05, seed=7, **kwargs):
    """Assembled dataset with a seeded validation holdout from train."""
    train, test = generate_fragments(seed=seed, **kwargs)
    return assemble(train, test=test, holdout_fraction=holdout_fraction, seed=seed)


def generate_exposure_biased_dataset(num_users=900, num_items=1400,
                                     pref_per_user=30, clusters=14, seed=42,
                                     zipf_a=1.2, heavy_frac=0.3, heavy_expo=120,
                                     light_expo=10, holdout_fraction=0.05):
    """Dataset where training mixes preference and popularity-driven exposure.

    Held-out items are preference-pure, so popularity memorization alone
    scores poorly: degree weighting and co-occurrence structure carry real
    signal here. A `heavy_frac` share of users adds `heavy_expo` exposure
    interactions instead of `light_expo`, giving the user-degree weighting
    something to discount.
    """
    rng = np.random.default_rng(seed)
    item_cluster = rng.integers(0, clusters, size=num_items)
    cluster_items = [np.nonzero(item_cluster == c)[0] for c in range(clusters)]
    popularity = np.minimum(rng.zipf(zipf_a, size=num_items).astype(np.float64), 2000.0)
    pop_p = popularity / popularity.sum()

    train = InteractionFragment()
    test = InteractionFragment()
    train.items.update(range(num_items))
    for u in range(num_users):
        c1, c2 = rng.choice(clusters, size=2, replace=False)
        mix = rng.uniform(0.6, 0.9)
        pref = set()
        tries = 0
        while len(pref) < pref_per_user and tries < pref_per_user * 20:
            tries += 1
            pool = cluster_items[c1 if rng.random() < mix else c2]
            p = popularity[pool]
            pref.add(int(rng.choice(pool, p=p / p.sum())))
        n_expo = heavy_expo if rng.random() < heavy_frac else light_expo
        exposure = set()
        tries = 0
        while len(exposure) < n_expo and tries < n_expo * 20:
            tries += 1
            item = int(rng.choice(num_items, p=pop_p))
            if item not in pref:
                exposure.add(item)
        pref = list(pref)
        rng.shuffle(pref)
        n_test = max(1, int(0.3 * len(pref)))
        for item in pref[n_test:]:
            train.add(u, item)
        for item in exposure:
            train.add(u, item)
        for item in pref[:n_test]:
            test.add(u, item)
    return assemble(train, test=test, holdout_fraction=holdout_fraction, seed=seed)
