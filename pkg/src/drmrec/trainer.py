"""Stochastic trainer for the joint hinge + relaxed ranking objective.

One step processes one user: draw rho positives and eta negatives, pick the
hardest positive/negative pair for the weighted hinge, add the relaxed
ranking-loss gradient over the whole sampled list (plus the decorrelation
penalty for neg-l2 models), then apply a single Adagrad update and project
every touched factor back onto the unit ball.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, TrainingError
from .factors import FactorModel, covariance_loss, covariance_stats, init_model
from .interactions import InteractionMatrix, eligible_users
from .metrics import (LOSS_WEIGHT_KINDS, MetricWeight, ndcg_at,
                      rank_items, rank_weight_vector, recall_at)
from .objectives import (drm_factor_grads, hinge_gradients, hinge_loss,
                         phi_weight)

_SAMPLER_STREAM = 0x5EED


@dataclass
class HyperParams:
    """Everything that parameterizes a training run.

    eta defaults to 15 * rho when left unset. val_k is the validation recall
    cutoff used for early stopping and the trace.
    """

    dim: int = 64
    lr: float = 0.05
    tau: float = 1.0
    lam: float = 1.0
    lam_c: float = 1.0
    rho: int = 3
    eta: int | None = None
    margin: float = 1.0
    k: int = 10
    weight_kind: str = "constant-one"
    epochs: int = 100
    seed: int = 0
    score_kind: str = "dot"
    min_train: int = 5
    patience: int = 10
    val_k: int = 50
    adagrad_eps: float = 1e-8
    cov_refresh: int = 128

    @property
    def resolved_eta(self) -> int:
        return 15 * self.rho if self.eta is None else self.eta

    def validate(self) -> "HyperParams":
        checks = [
            (self.dim >= 1, "d must be >= 1"),
            (self.lr > 0, "lr must be > 0"),
            (self.tau >= 1e-6, "tau must be >= 1e-6"),
            (self.lam >= 0, "lambda must be >= 0"),
            (self.lam_c >= 0, "lambda_c must be >= 0"),
            (self.rho >= 1, "rho must be >= 1"),
            (self.resolved_eta >= 1, "eta must be >= 1"),
            (self.margin >= 0, "margin must be >= 0"),
            (self.k >= 1, "k must be >= 1"),
            (self.weight_kind in LOSS_WEIGHT_KINDS,
             f"weight_kind must be one of {LOSS_WEIGHT_KINDS}"),
            (self.epochs >= 0, "epochs must be >= 0"),
            (self.score_kind in ("dot", "neg-l2"),
             "score_kind must be 'dot' or 'neg-l2'"),
            (self.min_train >= 0, "min_train must be >= 0"),
            (self.patience >= 1, "patience must be >= 1"),
            (self.val_k >= 1, "val_k must be >= 1"),
            (self.cov_refresh >= 1, "cov_refresh must be >= 1"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)
        return self


@dataclass(frozen=True)
class TrainingSample:
    """One user's sampled item list; positives first, then negatives."""

    user: int
    positives: np.ndarray
    negatives: np.ndarray

    @property
    def items(self) -> np.ndarray:
        return np.concatenate([self.positives, self.negatives])

    @property
    def relevance(self) -> np.ndarray:
        y = np.zeros(self.positives.size + self.negatives.size)
        y[:self.positives.size] = 1.0
        return y


def draw_sample(train: InteractionMatrix, user: int, rho: int, eta: int,
                rng: np.random.Generator) -> TrainingSample:
    """Sample min(rho, |V_u|) positives and eta negatives without replacement.

    Negatives come uniformly from the items the user never interacted with,
    via rejection sampling, which stays deterministic for a given generator
    state.
    """
    owned = train.items_of(user)
    if owned.size == 0:
        raise TrainingError(f"user {user} has no training interactions")
    free = train.num_items - owned.size
    if eta >= free:
        raise TrainingError(
            f"cannot draw {eta} negatives for user {user}: only {free} "
            "non-interacted items exist")
    n_pos = min(rho, owned.size)
    positives = rng.choice(owned, size=n_pos, replace=False).astype(np.int64)
    owned_set = set(owned.tolist())
    chosen: list = []
    seen = set()
    while len(chosen) < eta:
        for cand in rng.integers(0, train.num_items, size=2 * eta).tolist():
            if cand in owned_set or cand in seen:
                continue
            seen.add(cand)
            chosen.append(cand)
            if len(chosen) == eta:
                break
    return TrainingSample(user, positives, np.asarray(chosen, dtype=np.int64))


def hardest_pair(sample: TrainingSample, scores: np.ndarray):
    """Positions (in sample.items) of the lowest-scored positive and the
    highest-scored negative; ties go to the lowest index."""
    n_pos = sample.positives.size
    pos_idx = int(np.argmin(scores[:n_pos]))
    neg_idx = n_pos + int(np.argmax(scores[n_pos:]))
    return pos_idx, neg_idx


@dataclass
class AdagradState:
    """Per-parameter accumulated squared gradients."""

    sq_user: np.ndarray
    sq_item: np.ndarray

    @classmethod
    def for_model(cls, model: FactorModel) -> "AdagradState":
        return cls(np.zeros_like(model.user_factors),
                   np.zeros_like(model.item_factors))


class CovarianceCache:
    """Pooled-factor mean and off-diagonal covariance, refreshed lazily.

    Exact recomputation every step would dominate the step cost, so the
    stats are refreshed every `refresh_every` steps; refresh_every=1 gives
    the exact penalty gradient.
    """

    def __init__(self, model: FactorModel, refresh_every: int):
        self.refresh_every = refresh_every
        self._steps_left = 0
        self.count = model.num_users + model.num_items
        self.mean = None
        self.c_off = None
        self.refresh(model)

    def refresh(self, model: FactorModel) -> None:
        stats = covariance_stats(model)
        off = stats.cov.copy()
        np.fill_diagonal(off, 0.0)
        self.mean = stats.mean
        self.c_off = off
        self._steps_left = self.refresh_every

    def tick(self, model: FactorModel) -> None:
        self._steps_left -= 1
        if self._steps_left <= 0:
            self.refresh(model)

    def grad_rows(self, rows: np.ndarray) -> np.ndarray:
        return (4.0 / (self.count * self.count)) * ((rows - self.mean) @ self.c_off)


@dataclass
class TrainerState:
    adagrad: AdagradState
    cov_cache: CovarianceCache | None = None
    step_count: int = 0
    drm_evals: int = 0


def trainer_state(model: FactorModel, hp: HyperParams) -> TrainerState:
    """Fresh optimizer state for a model: Adagrad accumulators, plus the
    covariance cache when the score kind and penalty weight call for one."""
    state = TrainerState(AdagradState.for_model(model))
    if hp.score_kind == "neg-l2" and hp.lam_c > 0.0:
        state.cov_cache = CovarianceCache(model, hp.cov_refresh)
    return state


@dataclass(frozen=True)
class StepStats:
    hinge_loss: float
    drm_loss: float
    phi: float


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    hinge_loss_mean: float
    drm_loss_mean: float
    cov_loss: float
    val_recall: float
    val_ndcg: float


@dataclass
class FitResult:
    """Best-by-validation model plus the full per-epoch trace."""

    model: FactorModel
    trace: list
    best_epoch: int
    epochs_run: int


def _loss_weights(hp: HyperParams, n_items: int, n_pos: int) -> np.ndarray:
    k = min(hp.k, n_items)
    return rank_weight_vector(MetricWeight(hp.weight_kind, k), n_pos)


def train_step(model: FactorModel, sample: TrainingSample, hp: HyperParams,
               state: TrainerState) -> StepStats:
    """One accumulated gradient step for one user.

    All loss terms for the sampled list are summed into a single delta per
    touched factor, Adagrad is applied once, and the touched rows are
    projected back onto the unit ball.
    """
    items = sample.items
    n = items.size
    scores = model.score_list(sample.user, items)
    n_pos = sample.positives.size

    pos_idx, neg_idx = hardest_pair(sample, scores)
    phi = phi_weight(scores[pos_idx], scores[n_pos:], model.num_items)
    hinge_val = hinge_loss(scores[pos_idx], scores[neg_idx], hp.margin, phi)
    g_alpha, g_beta_i, g_beta_j = hinge_gradients(
        model, sample.user, int(items[pos_idx]), int(items[neg_idx]),
        hp.margin, phi)

    delta_alpha = g_alpha.copy()
    delta_items = np.zeros((n, model.dim))
    delta_items[pos_idx] += g_beta_i
    delta_items[neg_idx] += g_beta_j

    drm_val = 0.0
    if hp.lam > 0.0:
        weights = _loss_weights(hp, n, n_pos)
        drm_val, g_alpha_drm, g_items_drm = drm_factor_grads(
            model, sample.user, items, sample.relevance, weights, hp.tau,
            scores=scores)
        delta_alpha += hp.lam * g_alpha_drm
        delta_items += hp.lam * g_items_drm
        state.drm_evals += 1

    if model.score_kind == "neg-l2" and hp.lam_c > 0.0:
        cache = state.cov_cache
        delta_alpha += hp.lam_c * cache.grad_rows(
            model.user_factors[sample.user][None, :])[0]
        delta_items += hp.lam_c * cache.grad_rows(model.item_factors[items])

    if not (np.all(np.isfinite(delta_alpha)) and np.all(np.isfinite(delta_items))):
        raise TrainingError(
            f"non-finite gradient at step {state.step_count} "
            f"(user {sample.user}, tau {hp.tau}, lr {hp.lr}); "
            f"score range [{scores.min()}, {scores.max()}]")

    ada = state.adagrad
    u = sample.user
    ada.sq_user[u] += delta_alpha * delta_alpha
    model.user_factors[u] -= hp.lr * delta_alpha / np.sqrt(
        ada.sq_user[u] + hp.adagrad_eps)
    norm = np.linalg.norm(model.user_factors[u])
    if norm > 1.0:
        model.user_factors[u] /= norm

    ada.sq_item[items] += delta_items * delta_items
    model.item_factors[items] -= hp.lr * delta_items / np.sqrt(
        ada.sq_item[items] + hp.adagrad_eps)
    norms = np.linalg.norm(model.item_factors[items], axis=1, keepdims=True)
    model.item_factors[items] /= np.maximum(1.0, norms)

    if state.cov_cache is not None:
        state.cov_cache.tick(model)
    state.step_count += 1
    return StepStats(hinge_val, drm_val, phi)


def _validation_metrics(model, train, validation, hp: HyperParams):
    users = eligible_users(train, validation, hp.min_train)
    if users.size == 0:
        return None
    recalls = []
    ndcgs = []
    for u in users:
        ranked = rank_items(model.score_all(int(u)),
                            exclude=train.items_of(int(u)))
        holdout = validation.items_of(int(u))
        recalls.append(recall_at(ranked, holdout, hp.val_k))
        ndcgs.append(ndcg_at(ranked, holdout, 10))
    return float(np.mean(recalls)), float(np.mean(ndcgs))


def fit(train: InteractionMatrix, validation: InteractionMatrix,
        hp: HyperParams, on_epoch=None) -> FitResult:
    """Run up to hp.epochs passes with early stopping on validation recall.

    Each epoch visits every user with at least one training interaction once,
    in a seeded shuffled order. Training stops after hp.patience epochs
    without improving validation recall@val_k; the returned model is the
    best-by-validation snapshot (the final model when no validation user is
    eligible, in which case early stopping is disabled).
    """
    hp.validate()
    model = init_model(train.num_users, train.num_items, hp.dim, hp.seed,
                       score_kind=hp.score_kind)
    state = trainer_state(model, hp)
    rng = np.random.default_rng(np.random.SeedSequence([hp.seed, _SAMPLER_STREAM]))
    users = np.asarray([u for u in range(train.num_users)
                        if train.items_of(u).size > 0], dtype=np.int64)
    if users.size == 0:
        raise TrainingError("training split has no interactions")

    trace: list = []
    best_recall = -np.inf
    best_model = model.copy()
    best_epoch = 0
    stale = 0
    for epoch in range(1, hp.epochs + 1):
        order = rng.permutation(users)
        hinge_sum = 0.0
        drm_sum = 0.0
        for u in order:
            sample = draw_sample(train, int(u), hp.rho, hp.resolved_eta, rng)
            stats = train_step(model, sample, hp, state)
            hinge_sum += stats.hinge_loss
            drm_sum += stats.drm_loss
        if model.score_kind == "neg-l2" and hp.lam_c > 0.0:
            cov_val = covariance_loss(model)[0]
        else:
            cov_val = 0.0
        val = _validation_metrics(model, train, validation, hp)
        val_recall, val_ndcg = val if val is not None else (0.0, 0.0)
        record = EpochRecord(epoch, hinge_sum / users.size,
                             drm_sum / users.size, cov_val,
                             val_recall, val_ndcg)
        trace.append(record)
        if on_epoch is not None:
            on_epoch(epoch, model, record)
        if val is not None:
            if val_recall > best_recall:
                best_recall = val_recall
                best_model = model.copy()
                best_epoch = epoch
                stale = 0
            else:
                stale += 1
                if stale >= hp.patience:
                    break
        else:
            best_model = model
            best_epoch = epoch
    if hp.epochs == 0:
        best_model = model
    return FitResult(best_model, trace, best_epoch, len(trace))

