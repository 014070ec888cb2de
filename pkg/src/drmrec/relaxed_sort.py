"""Relaxed descending-sort permutation matrices.

For a score vector s of length n, row k of the (relaxed) sort operator is
built from the logits (n + 1 - 2k) * s - A_s 1, where A_s[i, j] = |s_i - s_j|.
The hard operator places a 1 at the argmax of each row's logits; the relaxed
operator replaces the argmax by a temperature softmax and is differentiable
in s wherever all entries of s are distinct.
"""

from __future__ import annotations

import numpy as np

# Softmax temperatures below this amplify score noise past float64 range.
MIN_TAU = 1e-6


def _check_tau(tau: float) -> float:
    tau = float(tau)
    if not tau >= MIN_TAU:
        raise ValueError(f"temperature must be >= {MIN_TAU}, got {tau}")
    return tau


def abs_diff_matrix(s) -> np.ndarray:
    """A_s with A[i, j] = |s_i - s_j|."""
    s = np.asarray(s, dtype=np.float64)
    return np.abs(s[:, None] - s[None, :])


def rank_logits(s, ranks) -> np.ndarray:
    """Rows of (n + 1 - 2k) * s - A_s 1 for each 1-based rank k in `ranks`.

    Returns an array of shape (len(ranks), n).
    """
    s = np.asarray(s, dtype=np.float64)
    n = s.shape[0]
    ranks = np.asarray(ranks, dtype=np.int64)
    if ranks.size and (ranks.min() < 1 or ranks.max() > n):
        raise ValueError(f"ranks must lie in 1..{n}")
    row_sums = abs_diff_matrix(s).sum(axis=1)
    coef = (n + 1 - 2 * ranks).astype(np.float64)
    return coef[:, None] * s[None, :] - row_sums[None, :]


def _softmax_rows(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def hard_perm(s) -> np.ndarray:
    """Zero-temperature sort operator.

    Row k has a single 1 at the argmax of that row's logits; argmax breaks
    ties by lowest index, so the function is total. For distinct entries the
    result is a true permutation matrix and P @ s sorts s descending.
    """
    s = np.asarray(s, dtype=np.float64)
    n = s.shape[0]
    logits = rank_logits(s, np.arange(1, n + 1))
    perm = np.zeros((n, n))
    perm[np.arange(n), np.argmax(logits, axis=1)] = 1.0
    return perm


def relaxed_perm_row(s, k: int, tau: float) -> np.ndarray:
    """Row k (1-based) of the temperature-tau relaxed sort operator."""
    tau = _check_tau(tau)
    z = rank_logits(s, [k]) / tau
    return _softmax_rows(z)[0]


def relaxed_perm(s, tau: float, num_rows=None) -> np.ndarray:
    """First num_rows rows (default: all n) of the relaxed sort operator.

    Each row is a softmax, hence positive and summing to 1.
    """
    tau = _check_tau(tau)
    s = np.asarray(s, dtype=np.float64)
    n = s.shape[0]
    num_rows = n if num_rows is None else int(num_rows)
    if not 1 <= num_rows <= n:
        raise ValueError(f"num_rows must lie in 1..{n}")
    z = rank_logits(s, np.arange(1, num_rows + 1)) / tau
    return _softmax_rows(z)


def weighted_truncated_sum(s, weights, tau: float) -> np.ndarray:
    """Sum over the first K rows of the relaxed operator, weighted per rank.

    `weights` has length K <= n; entry k-1 scales row k. The result is an
    n-vector whose j-th entry is the relaxed weighted credit item j earns for
    the ranks it (softly) occupies.
    """
    weights = np.asarray(weights, dtype=np.float64)
    if weights.ndim != 1 or weights.size < 1:
        raise ValueError("weights must be a nonempty vector")
    rows = relaxed_perm(s, tau, num_rows=weights.size)
    return weights @ rows
