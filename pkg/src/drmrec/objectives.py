"""Training objectives and their closed-form gradients.

Two losses are combined during training: a rank-weighted pairwise hinge and
a squared distance between the relevance vector and the weighted top-K rows
of the relaxed sort operator. All gradients are hand-derived; nothing here
relies on automatic differentiation.

Notation for a sampled list of n items with scores s and 0/1 relevance y:
    z_k   = ((n + 1 - 2k) s - A_s 1) / tau          (row-k softmax logits)
    sigma = softmax(z_k)                            (relaxed row k)
    Q     = sum_k w_k sigma_k                       (weighted truncated sum)
    loss  = ||y - Q||^2
The score gradient is -(2 / tau) * sum_k w_k (D_k + R)^T H_k (y - Q), where
H_k = diag(sigma) - sigma sigma^T, D_k = (n + 1 - 2k) I, and R collects the
sign structure of A_s (off-diagonal R[j, l] = sign(s_j - s_l), diagonal
minus the row sum of those signs; exact ties contribute the subgradient 0).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .factors import FactorModel
from .relaxed_sort import MIN_TAU, _softmax_rows, abs_diff_matrix


def phi_weight(pos_score: float, neg_scores, num_items: int) -> float:
    """Rank-sensitive hinge weight log(1 + (N / |J|) * violations).

    A sampled negative j counts as a violation when 1 - pos + neg >= 0; the
    indicator's margin constant is fixed at 1 independent of the hinge
    margin. More violations among |J| uniform negatives imply the positive
    sits lower in the full ranking over N items, hence a larger weight.
    """
    neg_scores = np.asarray(neg_scores, dtype=np.float64)
    if neg_scores.size == 0:
        raise ValueError("phi_weight needs at least one sampled negative")
    violations = int(np.count_nonzero(1.0 - pos_score + neg_scores >= 0.0))
    return float(np.log1p(num_items / neg_scores.size * violations))


def hinge_loss(pos_score: float, neg_score: float, margin: float,
               phi: float) -> float:
    """phi * max(0, margin - pos + neg); phi acts as a constant weight."""
    return phi * max(0.0, margin - pos_score + neg_score)


def hinge_gradients(model: FactorModel, user: int, pos_item: int,
                    neg_item: int, margin: float, phi: float):
    """Gradients of the weighted hinge for (alpha_u, beta_i, beta_j).

    Zero everywhere when the margin is satisfied (active iff
    margin - s_i + s_j > 0, strictly; the kink's subgradient is 0).
    """
    alpha = model.user_factors[user]
    beta_i = model.item_factors[pos_item]
    beta_j = model.item_factors[neg_item]
    d = model.dim
    s_i = model.score(user, pos_item)
    s_j = model.score(user, neg_item)
    if margin - s_i + s_j <= 0.0:
        zero = np.zeros(d)
        return zero, zero.copy(), zero.copy()
    if model.score_kind == "dot":
        g_alpha = phi * (beta_j - beta_i)
        g_beta_i = -phi * alpha
        g_beta_j = phi * alpha
    else:
        g_alpha = 2.0 * phi * (beta_j - beta_i)
        g_beta_i = 2.0 * phi * (beta_i - alpha)
        g_beta_j = 2.0 * phi * (alpha - beta_j)
    return g_alpha, g_beta_i, g_beta_j


def _rank_coefficients(n: int, num_rows: int) -> np.ndarray:
    return (n + 1 - 2 * np.arange(1, num_rows + 1)).astype(np.float64)


def _relaxed_rows_many(score_rows: np.ndarray, num_rows: int,
                       tau: float) -> np.ndarray:
    """Relaxed rows 1..num_rows for a batch of score vectors.

    score_rows has shape (B, n); the result has shape (B, num_rows, n).
    """
    n = score_rows.shape[1]
    a1 = np.abs(score_rows[:, :, None] - score_rows[:, None, :]).sum(axis=2)
    coef = _rank_coefficients(n, num_rows)
    z = (coef[None, :, None] * score_rows[:, None, :] - a1[:, None, :]) / tau
    return _softmax_rows(z)


def drm_loss_many(y, score_rows, weights, tau: float) -> np.ndarray:
    """Vector of losses ||y - Q(s_b)||^2 for a batch of score vectors."""
    y = np.asarray(y, dtype=np.float64)
    score_rows = np.atleast_2d(np.asarray(score_rows, dtype=np.float64))
    weights = np.asarray(weights, dtype=np.float64)
    _check_loss_args(y, score_rows.shape[1], weights, tau)
    sig = _relaxed_rows_many(score_rows, weights.size, tau)
    q = np.einsum("k,bkn->bn", weights, sig)
    resid = y[None, :] - q
    return np.einsum("bn,bn->b", resid, resid)


def drm_loss(y, scores, weights, tau: float) -> float:
    """||y - sum_k w_k relaxed_row_k(scores)||^2."""
    return float(drm_loss_many(y, np.asarray(scores)[None, :], weights, tau)[0])


def relaxed_objective(y, scores, weights, tau: float) -> float:
    """Relaxed weighted hit count y^T Q; lower-bounded by -loss / 2."""
    y = np.asarray(y, dtype=np.float64)
    scores = np.asarray(scores, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    _check_loss_args(y, scores.shape[0], weights, tau)
    sig = _relaxed_rows_many(scores[None, :], weights.size, tau)[0]
    return float(y @ (weights @ sig))


def _check_loss_args(y, n, weights, tau):
    if not float(tau) >= MIN_TAU:
        raise ValueError(f"temperature must be >= {MIN_TAU}, got {tau}")
    if y.shape[0] != n:
        raise ValueError("relevance vector and scores disagree on length")
    if weights.ndim != 1 or not 1 <= weights.size <= n:
        raise ValueError("need 1 <= len(weights) <= n")


@dataclass(frozen=True)
class DrmGradientWorkspace:
    """Dense intermediates of the score gradient, mainly for verification.

    Attributes:
        sgn: pairwise sign matrix sign(s_j - s_l), zero on ties.
        r_matrix: sgn with its diagonal replaced by minus the row sums.
        coef: per-rank multipliers n + 1 - 2k, k = 1..K.
        logits: z_k rows, shape (K, n).
        rows: softmax of the logits, shape (K, n).
    """

    sgn: np.ndarray
    r_matrix: np.ndarray
    coef: np.ndarray
    logits: np.ndarray
    rows: np.ndarray

    def h_matrix(self, k: int) -> np.ndarray:
        """diag(sigma_k) - sigma_k sigma_k^T for 1-based rank k."""
        sig = self.rows[k - 1]
        return np.diag(sig) - np.outer(sig, sig)

    def d_matrix(self, k: int) -> np.ndarray:
        n = self.sgn.shape[0]
        return self.coef[k - 1] * np.eye(n)


def drm_workspace(scores, weights, tau: float) -> DrmGradientWorkspace:
    scores = np.asarray(scores, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    n = scores.shape[0]
    _check_loss_args(np.zeros(n), n, weights, tau)
    diff = scores[:, None] - scores[None, :]
    sgn = np.sign(diff)
    r_matrix = sgn.copy()
    np.fill_diagonal(r_matrix, -sgn.sum(axis=1))
    coef = _rank_coefficients(n, weights.size)
    a1 = abs_diff_matrix(scores).sum(axis=1)
    logits = (coef[:, None] * scores[None, :] - a1[None, :]) / tau
    return DrmGradientWorkspace(sgn, r_matrix, coef, logits,
                                _softmax_rows(logits))


def drm_loss_and_score_grad(y, scores, weights, tau: float):
    """Loss value and its exact gradient with respect to the scores.

    Never materializes the (n, n) matrices H_k: each rank contributes
    (D_k + R)^T H_k resid, computed with matrix-vector products only.
    """
    y = np.asarray(y, dtype=np.float64)
    scores = np.asarray(scores, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    n = scores.shape[0]
    _check_loss_args(y, n, weights, tau)
    tau = float(tau)

    diff = scores[:, None] - scores[None, :]
    sgn = np.sign(diff)
    sgn_row_sums = sgn.sum(axis=1)
    a1 = np.abs(diff).sum(axis=1)
    coef = _rank_coefficients(n, weights.size)
    z = (coef[:, None] * scores[None, :] - a1[None, :]) / tau
    sig = _softmax_rows(z)                      # (K, n)

    q = weights @ sig
    resid = y - q
    loss = float(resid @ resid)

    # H_k resid = sigma * resid - sigma (sigma . resid), all ranks at once
    h_resid = sig * resid[None, :] - sig * (sig @ resid)[:, None]
    # (D_k + R)^T x = coef_k x - row_sums * x - sgn @ x  (R^T = -diag - sgn)
    rt_part = -sgn_row_sums[None, :] * h_resid - h_resid @ sgn.T
    contrib = coef[:, None] * h_resid + rt_part
    grad = -(2.0 / tau) * (weights @ contrib)
    return loss, grad


def drm_score_grad(y, scores, weights, tau: float) -> np.ndarray:
    return drm_loss_and_score_grad(y, scores, weights, tau)[1]


def drm_factor_grads(model: FactorModel, user: int, items, y, weights,
                     tau: float, scores=None):
    """Chain the score gradient through the factor parameterization.

    Args:
        items: item ids of the sampled list, positives first.
        scores: optional precomputed score_list(user, items).

    Returns:
        (loss, grad_alpha, grad_items) with grad_items of shape (n, d).
    """
    items = np.asarray(items, dtype=np.int64)
    if scores is None:
        scores = model.score_list(user, items)
    loss, g_scores = drm_loss_and_score_grad(y, scores, weights, tau)
    alpha = model.user_factors[user]
    betas = model.item_factors[items]
    if model.score_kind == "dot":
        grad_alpha = betas.T @ g_scores
        grad_items = g_scores[:, None] * alpha[None, :]
    else:
        two_diff = 2.0 * (alpha[None, :] - betas)
        grad_alpha = -(two_diff.T @ g_scores)
        grad_items = g_scores[:, None] * two_diff
    return loss, grad_alpha, grad_items


def mse_loss(y, scores):
    """Pointwise squared-error baseline: ||y - s||^2 and gradient 2 (s - y)."""
    y = np.asarray(y, dtype=np.float64)
    scores = np.asarray(scores, dtype=np.float64)
    resid = scores - y
    return float(resid @ resid), 2.0 * resid
