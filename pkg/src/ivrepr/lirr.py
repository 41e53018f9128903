"""Linear instrument-regularized representation.

The first-stage coefficient matrix C of X on Z spans the instrument-driven
subspace of the treatment.  Its top left singular vectors give an orthonormal
basis B_hat; latents are D_tilde = X B_hat and an X-space intervention moves
every row by alpha * B_hat u.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ivreg import TslsFit, ols_fit, pca_fit, tsls_fit


class NoImprovingDirection(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class LinearReprModel:
    basis: np.ndarray  # m x r_hat, orthonormal columns (B_hat)
    loading: np.ndarray  # r_hat x k (A_hat = Sigma V^T); empty for PCA
    theta: np.ndarray  # r_hat
    intercept: float
    singular_values: np.ndarray
    x_mean: np.ndarray
    method: str = "lirr"
    first_stage: TslsFit | None = None

    @property
    def rank(self) -> int:
        return self.basis.shape[1]

    def encode(self, X) -> np.ndarray:
        return np.asarray(X, dtype=float) @ self.basis

    def direction(self) -> np.ndarray:
        norm = np.linalg.norm(self.theta)
        if not norm > 0:
            raise NoImprovingDirection("no improving direction: estimated effect is zero")
        return self.theta / norm

    def alignment(self, B: np.ndarray) -> np.ndarray:
        """P = B_hat^T B against a known mixing matrix (diagnostics only)."""
        return self.basis.T @ B


def lirr_basis(Z, X, rank: int | None = None, threshold: float | None = None):
    """Thin SVD of the demeaned first-stage coefficients; returns (B_hat, A_hat, s)."""
    Z, X = np.asarray(Z, float), np.asarray(X, float)
    k = Z.shape[1]
    fit = ols_fit(Z - Z.mean(0), X - X.mean(0), with_intercept=False)
    C = fit.coef.T  # m x k
    U, s, Vt = np.linalg.svd(C, full_matrices=False)
    if threshold is not None:
        r_hat = int(np.sum(s > threshold * s[0])) if s[0] > 0 else 0
    else:
        r_hat = k if rank is None else int(rank)
    if not 1 <= r_hat <= min(k, len(s)):
        raise ValueError(f"truncation rank {r_hat} outside [1, {min(k, len(s))}]")
    return U[:, :r_hat].copy(), s[:r_hat, None] * Vt[:r_hat], s


def lirr_fit(Z, X, Y, rank: int | None = None, threshold: float | None = None) -> LinearReprModel:
    """Fit the basis and run 2SLS of Y on D_tilde = X B_hat with instrument Z.

    ``threshold`` switches to relative singular-value truncation (keep
    s_i > threshold * s_1) for rank-deficient first stages.
    """
    Bhat, Ahat, s = lirr_basis(Z, X, rank, threshold)
    D_tilde = np.asarray(X, float) @ Bhat
    iv = tsls_fit(Z, D_tilde, Y)
    return LinearReprModel(Bhat, Ahat, iv.coef, iv.intercept, s, np.asarray(X, float).mean(0), "lirr", iv)


def pca_repr_fit(Z, X, Y, k: int | None = None) -> LinearReprModel:
    """PCA baseline: top-k principal axes as the basis, same downstream 2SLS."""
    k = np.asarray(Z).shape[1] if k is None else k
    pca = pca_fit(X, k)
    D_tilde = np.asarray(X, float) @ pca.components
    iv = tsls_fit(Z, D_tilde, Y)
    return LinearReprModel(
        pca.components, np.zeros((k, 0)), iv.coef, iv.intercept, pca.singular_values, pca.mean, "pca", iv
    )


def lirr_intervene(model: LinearReprModel, X, alpha: float, u: np.ndarray | None = None) -> np.ndarray:
    """X + alpha * B_hat u, the same shift for every row."""
    u = model.direction() if u is None else np.asarray(u, float)
    if u.shape != (model.rank,):
        raise ValueError(f"direction has shape {u.shape}, expected ({model.rank},)")
    return np.asarray(X, float) + alpha * (model.basis @ u)
