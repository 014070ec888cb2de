"""Exact top-K ranking metrics and model evaluation.

Every metric here is a weighted sum of per-rank hit indicators over the top
K positions of a ranked item list. The named metrics and `unified_metric`
accumulate those weighted hits in ascending rank order with identical
per-term expressions, so they agree bitwise, not just approximately.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EvaluationError
from .interactions import eligible_users

WEIGHT_KINDS = ("precision", "recall", "ndcg", "ap", "constant-one")

# Weight kinds usable on the loss side, where the weight of rank k must not
# depend on which items actually hit.
LOSS_WEIGHT_KINDS = ("precision", "recall", "ndcg", "constant-one")


@dataclass(frozen=True)
class MetricWeight:
    """A per-rank weight profile w(k, K) plus the cutoff K."""

    kind: str
    k: int

    def __post_init__(self):
        if self.kind not in WEIGHT_KINDS:
            raise ValueError(f"unknown weight kind {self.kind!r}")
        if self.k < 1:
            raise ValueError(f"cutoff must be >= 1, got {self.k}")


def _hit_flags(ranked, holdout, k):
    """Boolean list: does the item at each of the first k ranks hit holdout."""
    ranked = np.asarray(ranked)
    kk = min(int(k), ranked.shape[0])
    holdout = np.asarray(holdout)
    if holdout.size == 0:
        return [False] * kk
    return np.isin(ranked[:kk], holdout).tolist()


def hit(ranked, k, holdout) -> int:
    """1 if the rank-k item (1-based) is in the holdout, else 0."""
    ranked = np.asarray(ranked)
    if not 1 <= k <= ranked.shape[0]:
        raise ValueError(f"rank {k} out of range 1..{ranked.shape[0]}")
    holdout = np.asarray(holdout)
    return int(holdout.size and np.isin(ranked[k - 1], holdout))


def ideal_dcg(k: int, n_pos: int) -> float:
    """Best possible DCG@k when n_pos relevant items exist."""
    total = 0.0
    for rank in range(1, min(k, n_pos) + 1):
        total += 1.0 / math.log2(rank + 1)
    return total


def precision_at(ranked, holdout, k) -> float:
    total = 0.0
    for flag in _hit_flags(ranked, holdout, k):
        if flag:
            total += 1.0 / k
    return total


def recall_at(ranked, holdout, k) -> float:
    n_pos = len(holdout)
    if n_pos == 0:
        return 0.0
    total = 0.0
    for flag in _hit_flags(ranked, holdout, k):
        if flag:
            total += 1.0 / n_pos
    return total


def ndcg_at(ranked, holdout, k) -> float:
    n_pos = len(holdout)
    if n_pos == 0:
        return 0.0
    inv_idcg = 1.0 / ideal_dcg(k, n_pos)
    total = 0.0
    for rank, flag in enumerate(_hit_flags(ranked, holdout, k), 1):
        if flag:
            total += inv_idcg / math.log2(rank + 1)
    return total


def average_precision_at(ranked, holdout, k) -> float:
    n_pos = len(holdout)
    if n_pos == 0:
        return 0.0
    denom = min(k, n_pos)
    seen = 0
    total = 0.0
    for rank, flag in enumerate(_hit_flags(ranked, holdout, k), 1):
        if flag:
            seen += 1
            total += (seen / rank) / denom
    return total


def unified_metric(ranked, holdout, weight: MetricWeight) -> float:
    """Sum of w(k, K) over hit ranks k <= K.

    With the precision / recall / ndcg / ap weight profiles this reproduces
    the correspondingly named metric exactly; "constant-one" counts hits.
    """
    k_cut = weight.k
    n_pos = len(holdout)
    kind = weight.kind
    if n_pos == 0 and kind != "precision" and kind != "constant-one":
        return 0.0
    inv_idcg = 1.0 / ideal_dcg(k_cut, n_pos) if kind == "ndcg" else 0.0
    ap_denom = min(k_cut, n_pos) if kind == "ap" else 0
    seen = 0
    total = 0.0
    for rank, flag in enumerate(_hit_flags(ranked, holdout, k_cut), 1):
        if not flag:
            continue
        seen += 1
        if kind == "constant-one":
            total += 1.0
        elif kind == "precision":
            total += 1.0 / k_cut
        elif kind == "recall":
            total += 1.0 / n_pos
        elif kind == "ndcg":
            total += inv_idcg / math.log2(rank + 1)
        else:  # ap
            total += (seen / rank) / ap_denom
    return total


def rank_weight_vector(weight: MetricWeight, n_pos: int) -> np.ndarray:
    """Materialize w(1..K, K) for use as loss weights.

    The "ap" profile is excluded: its rank weights depend on which ranks hit,
    so no fixed vector exists before the ranking is realized.
    """
    if weight.kind not in LOSS_WEIGHT_KINDS:
        raise ValueError(f"weight kind {weight.kind!r} cannot be used as a "
                         "loss weight")
    k_cut = weight.k
    if weight.kind == "constant-one":
        return np.ones(k_cut)
    if weight.kind == "precision":
        return np.full(k_cut, 1.0 / k_cut)
    if n_pos < 1:
        raise ValueError("recall and ndcg weights need n_pos >= 1")
    if weight.kind == "recall":
        return np.full(k_cut, 1.0 / n_pos)
    inv_idcg = 1.0 / ideal_dcg(k_cut, n_pos)
    return np.asarray([inv_idcg / math.log2(rank + 1)
                       for rank in range(1, k_cut + 1)])


def rank_items(scores, exclude=None) -> np.ndarray:
    """Item ids sorted by score descending; ties broken by ascending id.

    Items in `exclude` are pushed to the very end of the list.
    """
    s = np.asarray(scores, dtype=np.float64).copy()
    if exclude is not None:
        exclude = np.asarray(exclude, dtype=np.int64)
        if exclude.size:
            s[exclude] = -np.inf
    # stable sort of the negated scores keeps equal-score items id-ascending
    return np.argsort(-s, kind="stable")


METRIC_FUNCS = (
    ("precision", precision_at),
    ("recall", recall_at),
    ("ndcg", ndcg_at),
    ("map", average_precision_at),
)


@dataclass(frozen=True)
class MetricValue:
    metric: str
    k: int
    mean: float
    std: float


@dataclass(frozen=True)
class EvalReport:
    """Per-metric means and standard deviations over eligible users."""

    values: tuple
    n_users: int

    def get(self, metric: str, k: int) -> MetricValue:
        for v in self.values:
            if v.metric == metric and v.k == k:
                return v
        raise KeyError(f"{metric}@{k} not in report")


def evaluate_model(model, train, test, ks, min_train: int = 5) -> EvalReport:
    """Rank all unseen items per eligible user and average the four metrics.

    A user is eligible with >= min_train training interactions and a nonempty
    test holdout. The user's own training items are excluded from the
    candidate ranking. Ordering over users is fixed (ascending id), so the
    result is deterministic.

    Raises:
        EvaluationError: no user is eligible.
    """
    users = eligible_users(train, test, min_train)
    if users.size == 0:
        raise EvaluationError(
            f"no user has >= {min_train} train and >= 1 test interactions")
    ks = sorted(set(int(k) for k in ks))
    buckets = {(name, k): [] for name, _ in METRIC_FUNCS for k in ks}
    for u in users:
        ranked = rank_items(model.score_all(int(u)), exclude=train.items_of(int(u)))
        holdout = test.items_of(int(u))
        for name, func in METRIC_FUNCS:
            for k in ks:
                buckets[(name, k)].append(func(ranked, holdout, k))
    values = []
    for name, _ in METRIC_FUNCS:
        for k in ks:
            vals = np.asarray(buckets[(name, k)])
            values.append(MetricValue(name, k, float(vals.mean()),
                                      float(vals.std())))
    return EvalReport(tuple(values), int(users.size))
