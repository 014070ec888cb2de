"""Independent oracles and finite-difference harnesses used by the tests.

Everything here recomputes expected values from first principles (brute
force, enumeration, or central differences of the loss), deliberately not
sharing code with the library paths under test.
"""

import math

import numpy as np

from drmrec.objectives import drm_loss_many


def rel_err(analytic, fd, floor=1e-5):
    """Elementwise |a - f| / max(|a|, |f|, floor).

    The floor keeps coordinates whose true gradient is below measurement
    resolution (finite differences with h=1e-5 resolve little beyond 1e-10
    absolute) from registering spurious relative error.
    """
    analytic = np.asarray(analytic, dtype=np.float64).ravel()
    fd = np.asarray(fd, dtype=np.float64).ravel()
    denom = np.maximum.reduce(
        [np.abs(analytic), np.abs(fd), np.full(analytic.size, floor)])
    return np.abs(analytic - fd) / denom


def _fd_offsets(h, order):
    # order 4 adds the +-2h points; its truncation term shrinks from h^2 to
    # h^4, which matters at tau=0.1 where third derivatives are huge
    if order == 2:
        return (h, -h)
    if order == 4:
        return (h, -h, 2.0 * h, -2.0 * h)
    raise ValueError(f"unsupported finite-difference order {order}")


def _fd_combine(per_offset, h, order):
    """Combine per-offset loss arrays (ordered like _fd_offsets) into
    derivative estimates."""
    if order == 2:
        return (per_offset[0] - per_offset[1]) / (2.0 * h)
    return (8.0 * (per_offset[0] - per_offset[1])
            - (per_offset[2] - per_offset[3])) / (12.0 * h)


def fd_drm_score_grad(y, scores, weights, tau, h=1e-5, order=2):
    """Central finite differences of the ranking loss in the scores."""
    scores = np.asarray(scores, dtype=np.float64)
    n = scores.size
    eye = np.eye(n)
    offsets = _fd_offsets(h, order)
    batch = np.vstack([scores + off * eye for off in offsets])
    losses = drm_loss_many(y, batch, weights, tau)
    per_offset = [losses[i * n:(i + 1) * n] for i in range(len(offsets))]
    return _fd_combine(per_offset, h, order)


def scores_from_params(alpha, betas, score_kind):
    """Recompute the score list from raw parameters (oracle-side scoring)."""
    betas = np.asarray(betas, dtype=np.float64)
    alpha = np.asarray(alpha, dtype=np.float64)
    if score_kind == "dot":
        return betas @ alpha
    diff = alpha[None, :] - betas
    return -(diff * diff).sum(axis=1)


def fd_drm_factor_grads(alpha, betas, score_kind, y, weights, tau, h=1e-5,
                        order=2):
    """Central differences of drm_loss(score_list(params)) per coordinate.

    Builds the full batch of perturbed score vectors first so the loss is
    evaluated in one vectorized call.
    """
    alpha = np.asarray(alpha, dtype=np.float64)
    betas = np.asarray(betas, dtype=np.float64)
    n, d = betas.shape
    offsets = _fd_offsets(h, order)
    rows = []
    for c in range(d):
        for off in offsets:
            a = alpha.copy()
            a[c] += off
            rows.append(scores_from_params(a, betas, score_kind))
    for t in range(n):
        for c in range(d):
            for off in offsets:
                b = betas.copy()
                b[t, c] += off
                rows.append(scores_from_params(alpha, b, score_kind))
    losses = drm_loss_many(y, np.vstack(rows), weights, tau)
    per = len(offsets)
    per_offset = [losses[i::per] for i in range(per)]
    diffs = _fd_combine(per_offset, h, order)
    grad_alpha = diffs[:d]
    grad_items = diffs[d:].reshape(n, d)
    return grad_alpha, grad_items


def sort_permutation(scores):
    """Descending-sort permutation matrix built by an ordinary stable sort."""
    scores = np.asarray(scores, dtype=np.float64)
    n = scores.size
    order = sorted(range(n), key=lambda j: (-scores[j], j))
    perm = np.zeros((n, n))
    for row, j in enumerate(order):
        perm[row, j] = 1.0
    return perm


def oracle_metric(ranked, holdout, k, kind):
    """Direct per-metric implementation used as the enumeration oracle.

    Same ascending-rank accumulation of weighted hits the library promises,
    coded independently with plain Python sets.
    """
    holdout = set(int(x) for x in holdout)
    n_pos = len(holdout)
    ranked = [int(x) for x in ranked][:k]
    if n_pos == 0 and kind in ("recall", "ndcg", "ap"):
        return 0.0
    if kind == "ndcg":
        ideal = 0.0
        for rank in range(1, min(k, n_pos) + 1):
            ideal += 1.0 / math.log2(rank + 1)
        inv_ideal = 1.0 / ideal
    if kind == "ap":
        denom = min(k, n_pos)
    seen = 0
    total = 0.0
    for rank, item in enumerate(ranked, 1):
        if item not in holdout:
            continue
        seen += 1
        if kind == "precision":
            total += 1.0 / k
        elif kind == "recall":
            total += 1.0 / n_pos
        elif kind == "ndcg":
            total += inv_ideal / math.log2(rank + 1)
        elif kind == "ap":
            total += (seen / rank) / denom
        else:
            total += 1.0
    return total


def oracle_covariance_loss(user_factors, item_factors):
    """Sum of squared off-diagonal covariances over the pooled rows, via an
    explicit double loop over coordinate pairs."""
    pooled = np.vstack([user_factors, item_factors])
    m, d = pooled.shape
    mean = pooled.mean(axis=0)
    total = 0.0
    for a in range(d):
        for b in range(d):
            if a == b:
                continue
            cov_ab = float(
                ((pooled[:, a] - mean[a]) * (pooled[:, b] - mean[b])).mean())
            total += cov_ab * cov_ab
    return total / m


def write_lines(path, lines):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in lines:
            fh.write(line + "\n")
