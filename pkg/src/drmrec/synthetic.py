"""Synthetic low-rank interaction data for experiments and demos."""

from __future__ import annotations

import numpy as np

from .interactions import InteractionMatrix


def low_rank_interactions(num_users: int = 200, num_items: int = 300,
                          rank: int = 8, positives_per_user: int = 20,
                          seed: int = 0) -> InteractionMatrix:
    """Each user's positives are their top-scoring items under a random
    rank-`rank` factor model, so a learned model of that rank can in
    principle recover the preference structure exactly.
    """
    rng = np.random.default_rng(seed)
    users = rng.normal(size=(num_users, rank))
    items = rng.normal(size=(num_items, rank))
    scores = users @ items.T
    top = np.argsort(-scores, axis=1, kind="stable")[:, :positives_per_user]
    rows = [np.sort(top[u]) for u in range(num_users)]
    return InteractionMatrix.from_user_items(
        num_users, num_items, rows,
        user_labels=[f"u{u}" for u in range(num_users)],
        item_labels=[f"i{i}" for i in range(num_items)])
