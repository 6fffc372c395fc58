"""Interaction file loading, ID mapping, and train/valid/test assembly."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import DataFormatError

logger = logging.getLogger(__name__)


@dataclass
class InteractionFragment:
    """Raw (user, item) pairs with external IDs, before index mapping.

    Users that appear on a line with no items are still registered so they
    keep a slot in the ID space.
    """

    pairs: set = field(default_factory=set)
    users: set = field(default_factory=set)
    items: set = field(default_factory=set)

    def add(self, user, item):
        self.pairs.add((user, item))
        self.users.add(user)
        self.items.add(item)


@dataclass(frozen=True)
class InteractionDataset:
    """ID-mapped positive interactions split into train/valid/test.

    Pair arrays have shape (n, 2) with columns (user_index, item_index).
    Splits are disjoint as pair sets and every user in valid/test has at
    least one train interaction.
    """

    num_users: int
    num_items: int
    train_pairs: np.ndarray
    valid_pairs: np.ndarray
    test_pairs: np.ndarray
    user_id_map: dict
    item_id_map: dict
    dropped_pairs: int = 0

    @property
    def num_interactions(self):
        return len(self.train_pairs) + len(self.valid_pairs) + len(self.test_pairs)

    @property
    def density(self):
        cells = self.num_users * self.num_items
        return self.num_interactions / cells if cells else 0.0

    def manifest(self):
        """Dataset statistics for reports, JSON-serializable."""
        return {
            "num_users": self.num_users,
            "num_items": self.num_items,
            "num_interactions": self.num_interactions,
            "num_train": int(len(self.train_pairs)),
            "num_valid": int(len(self.valid_pairs)),
            "num_test": int(len(self.test_pairs)),
            "density": self.density,
            "dropped_pairs": int(self.dropped_pairs),
        }


def _parse_tokens(tokens, path, lineno):
    out = []
    for tok in tokens:
        try:
            value = int(tok)
        except ValueError:
            raise DataFormatError(
                f"{path}:{lineno}: malformed token {tok!r}, expected integer"
            ) from None
        if value < 0:
            raise DataFormatError(f"{path}:{lineno}: negative ID {value}")
        out.append(value)
    return out


def _iter_lines(path):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            yield lineno, line.split()


def load_adjacency_list(path):
    """Read `user item1 item2 ...` lines into a fragment.

    A line with only a user registers the user and contributes no pairs.
    """
    frag = InteractionFragment()
    for lineno, tokens in _iter_lines(path):
        ids = _parse_tokens(tokens, path, lineno)
        user = ids[0]
        frag.users.add(user)
        for item in ids[1:]:
            frag.add(user, item)
    return frag


def load_pair_list(path):
    """Read `user item [extra...]` lines into a fragment.

    Trailing columns (ratings, timestamps) are ignored.
    """
    frag = InteractionFragment()
    for lineno, tokens in _iter_lines(path):
        if len(tokens) < 2:
            raise DataFormatError(
                f"{path}:{lineno}: expected `user item`, got {len(tokens)} column(s)"
            )
        user, item = _parse_tokens(tokens[:2], path, lineno)
        frag.add(user, item)
    return frag


def write_pair_list(path, dataset, split="train"):
    """Emit one split back to pair format (used for round-trip checks)."""
    pairs = getattr(dataset, f"{split}_pairs")
    inv_user = {v: k for k, v in dataset.user_id_map.items()}
    inv_item = {v: k for k, v in dataset.item_id_map.items()}
    with open(path, "w", encoding="utf-8") as fh:
        for u, i in pairs:
            fh.write(f"{inv_user[int(u)]} {inv_item[int(i)]}\n")


def _pairs_array(pair_set, user_map, item_map):
    if not pair_set:
        return np.empty((0, 2), dtype=np.int64)
    arr = np.array(
        sorted((user_map[u], item_map[i]) for u, i in pair_set), dtype=np.int64
    )
    return arr


def _holdout_split(train_pairs, fraction, seed):
    """Hold out a fraction of train pairs, never emptying a user's history."""
    rng = np.random.default_rng(seed)
    n_hold = int(round(len(train_pairs) * fraction))
    order = rng.permutation(len(train_pairs))
    remaining = np.bincount(train_pairs[:, 0], minlength=train_pairs[:, 0].max() + 1)
    held = []
    for idx in order:
        if len(held) >= n_hold:
            break
        u = train_pairs[idx, 0]
        if remaining[u] <= 1:
            continue
        remaining[u] -= 1
        held.append(idx)
    held = np.array(sorted(held), dtype=np.int64)
    mask = np.ones(len(train_pairs), dtype=bool)
    mask[held] = False
    return train_pairs[mask], train_pairs[~mask]


def assemble(train, valid=None, test=None, holdout_fraction=0.05, seed=0):
    """Build an InteractionDataset from fragments sharing one ID universe.

    Dense ID maps cover the union of all IDs seen in any fragment. Valid/test
    pairs whose user has no train interaction, or that duplicate a train
    pair, are dropped with a counted warning. Without an explicit validation
    fragment, a seeded `holdout_fraction` of train pairs is held out.
    """
    test = test if test is not None else InteractionFragment()
    valid_given = valid is not None
    valid = valid if valid is not None else InteractionFragment()

    all_users = sorted(train.users | valid.users | test.users)
    all_items = sorted(train.items | valid.items | test.items)
    user_map = {u: idx for idx, u in enumerate(all_users)}
    item_map = {i: idx for idx, i in enumerate(all_items)}

    train_arr = _pairs_array(train.pairs, user_map, item_map)
    if not valid_given and holdout_fraction > 0 and len(train_arr):
        train_arr, valid_arr = _holdout_split(train_arr, holdout_fraction, seed)
    else:
        valid_arr = _pairs_array(valid.pairs, user_map, item_map)
    test_arr = _pairs_array(test.pairs, user_map, item_map)

    train_set = {tuple(p) for p in train_arr}
    train_users = {p[0] for p in train_set}
    dropped = 0

    def _filter(arr, other_sets):
        nonlocal dropped
        keep = []
        for row in arr:
            pair = (int(row[0]), int(row[1]))
            if pair[0] not in train_users or any(pair in s for s in other_sets):
                dropped += 1
                continue
            keep.append(row)
        return np.array(keep, dtype=np.int64).reshape(-1, 2)

    valid_arr = _filter(valid_arr, [train_set])
    valid_set = {tuple(p) for p in valid_arr}
    test_arr = _filter(test_arr, [train_set, valid_set])

    if dropped:
        logger.warning("dropped %d valid/test pairs (unknown user or duplicate)", dropped)

    return InteractionDataset(
        num_users=len(all_users),
        num_items=len(all_items),
        train_pairs=train_arr,
        valid_pairs=valid_arr,
        test_pairs=test_arr,
        user_id_map=user_map,
        item_id_map=item_map,
        dropped_pairs=dropped,
    )
