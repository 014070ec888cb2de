"""Latent factor model: scoring, unit-ball projection, covariance penalty,
and binary persistence.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import ModelFormatError

SCORE_KINDS = ("dot", "neg-l2")

_MAGIC = b"FACM"
_VERSION = 1
_SCORE_KIND_CODE = {"dot": 0, "neg-l2": 1}
_SCORE_KIND_NAME = {v: k for k, v in _SCORE_KIND_CODE.items()}
# magic, version, score kind, pad, M, N, d, seed
_HEADER = struct.Struct("<4sHBBQQIq")


@dataclass
class FactorModel:
    """User and item factors plus the score kind that combines them."""

    user_factors: np.ndarray
    item_factors: np.ndarray
    score_kind: str
    seed: int = 0

    def __post_init__(self):
        if self.score_kind not in SCORE_KINDS:
            raise ValueError(f"unknown score kind {self.score_kind!r}")
        if self.user_factors.ndim != 2 or self.item_factors.ndim != 2:
            raise ValueError("factor arrays must be 2-d")
        if self.user_factors.shape[1] != self.item_factors.shape[1]:
            raise ValueError("user and item factor dimensions differ")

    @property
    def num_users(self) -> int:
        return self.user_factors.shape[0]

    @property
    def num_items(self) -> int:
        return self.item_factors.shape[0]

    @property
    def dim(self) -> int:
        return self.user_factors.shape[1]

    def score(self, user: int, item: int) -> float:
        return float(self._score_rows(self.user_factors[user],
                                      self.item_factors[item][None, :])[0])

    def score_list(self, user: int, items) -> np.ndarray:
        items = np.asarray(items, dtype=np.int64)
        return self._score_rows(self.user_factors[user], self.item_factors[items])

    def score_all(self, user: int) -> np.ndarray:
        return self._score_rows(self.user_factors[user], self.item_factors)

    def _score_rows(self, alpha: np.ndarray, betas: np.ndarray) -> np.ndarray:
        if self.score_kind == "dot":
            return betas @ alpha
        diff = alpha[None, :] - betas
        return -np.einsum("ij,ij->i", diff, diff)

    def copy(self) -> "FactorModel":
        return FactorModel(self.user_factors.copy(), self.item_factors.copy(),
                           self.score_kind, self.seed)


def project_unit_ball(vec: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the closed unit ball: v / max(1, ||v||)."""
    vec = np.asarray(vec, dtype=np.float64)
    return vec / max(1.0, float(np.linalg.norm(vec)))


def project_rows_inplace(mat: np.ndarray, rows=None) -> None:
    """Project selected rows (default: all) of a factor matrix in place."""
    target = mat if rows is None else mat[rows]
    norms = np.linalg.norm(target, axis=1, keepdims=True)
    scale = np.maximum(1.0, norms)
    if rows is None:
        mat /= scale
    else:
        mat[rows] = target / scale


def init_model(num_users: int, num_items: int, dim: int, seed: int,
               score_kind: str = "dot", scale: float | None = None) -> FactorModel:
    """Uniform random factors in [-scale, scale], projected onto the ball.

    The default scale 1/sqrt(dim) keeps initial row norms below 1, so the
    projection is only a safety net for caller-supplied larger scales.
    """
    if dim < 1:
        raise ValueError("factor dimension must be >= 1")
    if scale is None:
        scale = 1.0 / np.sqrt(dim)
    rng = np.random.default_rng(seed)
    users = rng.uniform(-scale, scale, size=(num_users, dim))
    items = rng.uniform(-scale, scale, size=(num_items, dim))
    project_rows_inplace(users)
    project_rows_inplace(items)
    return FactorModel(users, items, score_kind, seed=seed)


@dataclass(frozen=True)
class CovarianceStats:
    """Mean and covariance of the pooled (user + item) factor rows."""

    mean: np.ndarray
    cov: np.ndarray
    count: int


def covariance_stats(model: FactorModel) -> CovarianceStats:
    pooled = np.concatenate([model.user_factors, model.item_factors], axis=0)
    mean = pooled.mean(axis=0)
    centered = pooled - mean
    cov = centered.T @ centered / pooled.shape[0]
    return CovarianceStats(mean, cov, pooled.shape[0])


def covariance_loss(model: FactorModel):
    """Decorrelation penalty and its exact gradient for every factor row.

    The penalty is the sum of squared off-diagonal covariance entries of the
    pooled factors, divided by the pooled row count. Centering drops out of
    the gradient because the off-diagonal-only covariance times the centered
    matrix has zero column sums.

    Returns:
        (value, grad_users, grad_items)
    """
    stats = covariance_stats(model)
    m = stats.count
    off = stats.cov.copy()
    np.fill_diagonal(off, 0.0)
    value = float((off * off).sum() / m)
    pooled = np.concatenate([model.user_factors, model.item_factors], axis=0)
    grad = (4.0 / (m * m)) * ((pooled - stats.mean) @ off)
    n_users = model.num_users
    return value, grad[:n_users], grad[n_users:]


def save_model(model: FactorModel, path) -> None:
    """Write header plus row-major little-endian float32 factors."""
    header = _HEADER.pack(_MAGIC, _VERSION, _SCORE_KIND_CODE[model.score_kind],
                          0, model.num_users, model.num_items, model.dim,
                          model.seed)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(model.user_factors, dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(model.item_factors, dtype="<f4").tobytes())


def load_model(path) -> FactorModel:
    """Read a model file, rejecting unknown magic or version."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise ModelFormatError(f"{path}: file too short for a model header")
    magic, version, kind_code, _, m, n, d, seed = _HEADER.unpack_from(raw)
    if magic != _MAGIC:
        raise ModelFormatError(f"{path}: bad magic {magic!r}")
    if version != _VERSION:
        raise ModelFormatError(
            f"{path}: unsupported model version {version} (expected {_VERSION})")
    if kind_code not in _SCORE_KIND_NAME:
        raise ModelFormatError(f"{path}: unknown score kind code {kind_code}")
    expected = _HEADER.size + 4 * d * (m + n)
    if len(raw) != expected:
        raise ModelFormatError(
            f"{path}: payload is {len(raw)} bytes, expected {expected}")
    flat = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size)
    users = flat[:m * d].reshape(m, d).astype(np.float64)
    items = flat[m * d:].reshape(n, d).astype(np.float64)
    return FactorModel(users, items, _SCORE_KIND_NAME[kind_code], seed=seed)
