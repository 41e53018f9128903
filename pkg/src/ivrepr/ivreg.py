"""Least squares, two-stage least squares and a PCA baseline."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class RankDeficiencyError(np.linalg.LinAlgError):
    pass


def _as2d(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    return a.reshape(-1, 1) if a.ndim == 1 else a


@dataclass(frozen=True, eq=False)
class OlsFit:
    coef: np.ndarray  # p x q
    intercept: np.ndarray  # q
    residuals: np.ndarray  # n x q

    def predict(self, features) -> np.ndarray:
        return _as2d(features) @ self.coef + self.intercept


def _column_rank(M: np.ndarray) -> int:
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    return int(np.sum(s > s[0] * max(M.shape) * np.finfo(float).eps)) if s[0] > 0 else 0


def ols_fit(features, targets, with_intercept: bool = True) -> OlsFit:
    """Least squares via SVD-based lstsq on (optionally) centered features."""
    F, T = _as2d(features), _as2d(targets)
    n, p = F.shape
    if T.shape[0] != n:
        raise ValueError(f"features have {n} rows but targets have {T.shape[0]}")
    if n <= p:
        raise RankDeficiencyError(f"need more samples than features (n={n}, p={p})")
    if with_intercept:
        fm, tm = F.mean(axis=0), T.mean(axis=0)
        Fc, Tc = F - fm, T - tm
    else:
        fm, tm = np.zeros(p), np.zeros(T.shape[1])
        Fc, Tc = F, T
    rank = _column_rank(Fc)
    if rank < p:
        raise RankDeficiencyError(f"feature matrix has rank {rank} < {p} columns")
    coef = np.linalg.lstsq(Fc, Tc, rcond=None)[0]
    intercept = tm - fm @ coef
    return OlsFit(coef, intercept, T - (F @ coef + intercept))


@dataclass(frozen=True, eq=False)
class TslsFit:
    coef: np.ndarray  # r
    intercept: float
    first_stage: OlsFit

    def residuals(self, D, Y) -> np.ndarray:
        return np.asarray(Y, dtype=float).reshape(-1) - _as2d(D) @ self.coef - self.intercept


def tsls_fit(Z, D, Y, with_intercept: bool = True) -> TslsFit:
    """Classical 2SLS: project D on Z, then regress Y on the projection."""
    Z, D = _as2d(Z), _as2d(D)
    y = np.asarray(Y, dtype=float).reshape(-1)
    k, r = Z.shape[1], D.shape[1]
    if k < r:
        raise RankDeficiencyError(f"under-identified: {k} instruments for {r} treatments")
    first = ols_fit(Z, D, with_intercept)
    D_hat = D - first.residuals
    try:
        second = ols_fit(D_hat, y, with_intercept)
    except RankDeficiencyError as exc:
        raise RankDeficiencyError(f"weak or rank-deficient first stage: {exc}") from exc
    coef = second.coef[:, 0]
    return TslsFit(coef, float(second.intercept[0]), first)


@dataclass(frozen=True, eq=False)
class PcaModel:
    mean: np.ndarray  # m
    components: np.ndarray  # m x k, orthonormal columns
    singular_values: np.ndarray  # k

    def encode(self, X) -> np.ndarray:
        return pca_encode(self, X)

    def decode(self, scores) -> np.ndarray:
        return self.mean + _as2d(scores) @ self.components.T


def pca_fit(X, k: int) -> PcaModel:
    X = _as2d(X)
    n, m = X.shape
    if not 1 <= k <= min(n, m):
        raise ValueError(f"k={k} must lie in [1, min(n, m)={min(n, m)}]")
    mean = X.mean(axis=0)
    _, s, vt = np.linalg.svd(X - mean, full_matrices=False)
    return PcaModel(mean, vt[:k].T.copy(), s[:k].copy())


def pca_encode(model: PcaModel, X) -> np.ndarray:
    return (_as2d(X) - model.mean) @ model.components
