"""Synthetic structural equation models with hidden ground truth and outcome oracles.

Linear family:    D = A Z + U,  X = B D + V,              Y = theta^T D + eta
Quadratic family: D = A Z + U,  X = B quad_features(D) + V, Y = theta^T D + eta
with eta = sum_j U_j + eps_scale * N(0, 1) in every variant.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from .rng import stream


class Variant(str, enum.Enum):
    LINEAR1 = "linear1"
    LINEAR2 = "linear2"
    LINEAR3 = "linear3"
    QUAD1 = "quad1"
    QUAD2 = "quad2"
    QUAD3 = "quad3"

    @property
    def is_linear(self) -> bool:
        return self.value.startswith("linear")

    @property
    def case(self) -> int:
        return int(self.value[-1])


@dataclass(frozen=True)
class NoiseScales:
    """u: std of U (case 1) or half-width of the uniform draw (cases 2, 3);
    v: std of V (cases 1, 2) or of the mixed Gaussian source (case 3)."""

    u: float
    v: float
    eps: float = 0.2


DEFAULT_NOISE = {
    Variant.LINEAR1: NoiseScales(20.0, 10.0),
    Variant.LINEAR2: NoiseScales(1.0, 10.0),
    Variant.LINEAR3: NoiseScales(1.0, 5.0),
    Variant.QUAD1: NoiseScales(0.2, 0.2),
    Variant.QUAD2: NoiseScales(0.2, 0.2),
    Variant.QUAD3: NoiseScales(0.2, 0.05),
}
NOISELESS = NoiseScales(0.0, 0.0, 0.0)


@dataclass(frozen=True)
class Dims:
    n: int = 10000
    m: int = 50
    r: int = 4
    k: int = 4
    h1: int = 3
    h2: int = 5

    def validate(self) -> None:
        for name in ("n", "m", "r", "k", "h1", "h2"):
            if getattr(self, name) < 1:
                raise ValueError(f"dimension {name} must be >= 1, got {getattr(self, name)}")
        if self.n < 2:
            raise ValueError("need at least two samples")


def n_quad_features(r: int) -> int:
    return 2 * r + r * (r - 1) // 2


@dataclass(frozen=True, eq=False)
class SemParams:
    variant: Variant
    dims: Dims
    noise: NoiseScales
    A: np.ndarray  # r x k
    B: np.ndarray  # m x r (linear) or m x p (quadratic)
    theta: np.ndarray  # r
    E: np.ndarray | None = None  # h1 x r
    F: np.ndarray | None = None  # h2 x m

    @property
    def p(self) -> int:
        return self.B.shape[1]

    @cached_property
    def B_pinv(self) -> np.ndarray:
        if self.B.shape[0] < self.B.shape[1]:
            raise np.linalg.LinAlgError(
                f"mixing matrix B is {self.B.shape[0]}x{self.B.shape[1]}; needs full column rank"
            )
        s = np.linalg.svd(self.B, compute_uv=False)
        if s[-1] <= s[0] * max(self.B.shape) * np.finfo(float).eps:
            raise np.linalg.LinAlgError(
                f"mixing matrix B is rank deficient (smallest singular value {s[-1]:.3g})"
            )
        return np.linalg.pinv(self.B)


@dataclass(frozen=True, eq=False)
class Hidden:
    """Ground truth; read only by oracles and diagnostics."""

    D: np.ndarray
    U: np.ndarray
    V: np.ndarray
    eta: np.ndarray


@dataclass(frozen=True, eq=False)
class Dataset:
    Z: np.ndarray
    X: np.ndarray
    Y: np.ndarray
    hidden: Hidden = field(repr=False)
    seed: int = 0

    @property
    def n(self) -> int:
        return self.Z.shape[0]

    def take(self, idx: np.ndarray) -> "Dataset":
        h = self.hidden
        return Dataset(
            self.Z[idx],
            self.X[idx],
            self.Y[idx],
            Hidden(h.D[idx], h.U[idx], h.V[idx], h.eta[idx]),
            self.seed,
        )


def quad_features(D: np.ndarray) -> np.ndarray:
    """[D_1..D_r, D_a D_b for a<b (lexicographic), D_1^2..D_r^2] per row."""
    D = np.asarray(D, dtype=float)
    single = D.ndim == 1
    D2 = D.reshape(1, -1) if single else D
    r = D2.shape[1]
    if r < 1:
        raise ValueError("quad_features needs r >= 1")
    pairs = list(itertools.combinations(range(r), 2))
    cross = np.empty((D2.shape[0], len(pairs)))
    for j, (a, b) in enumerate(pairs):
        cross[:, j] = D2[:, a] * D2[:, b]
    out = np.concatenate([D2, cross, D2 * D2], axis=1)
    return out[0] if single else out


def _draw_params(variant: Variant, dims: Dims, noise: NoiseScales, rng) -> SemParams:
    r, k, m = dims.r, dims.k, dims.m
    a_std = 0.1 if variant.is_linear else 1.0
    p = r if variant.is_linear else n_quad_features(r)
    if m < p:
        raise ValueError(f"{variant.value} needs m >= {p} treatment columns, got m={m}")
    A = rng.normal(0.0, a_std, (r, k))
    B = rng.normal(0.0, 1.0, (m, p))
    theta = rng.normal(0.0, 1.0, r)
    E = rng.normal(0.0, 1.0, (dims.h1, r)) if variant.case >= 2 else None
    F = rng.normal(0.0, 1.0, (dims.h2, m)) if variant.case == 3 else None
    return SemParams(variant, dims, noise, A, B, theta, E, F)


def _draw_samples(params: SemParams, seed: int) -> Dataset:
    dims, noise, case = params.dims, params.noise, params.variant.case
    n, r, k, m = dims.n, dims.r, dims.k, dims.m
    rng = stream(seed, "samples")
    Z = rng.normal(0.0, 1.0, (n, k))
    if case == 1:
        U = rng.normal(0.0, 1.0, (n, r)) * noise.u
    else:
        U = rng.uniform(-1.0, 1.0, (n, dims.h1)) * noise.u @ params.E
    if case == 3:
        V = rng.normal(0.0, 1.0, (n, dims.h2)) * noise.v @ params.F
    else:
        V = rng.normal(0.0, 1.0, (n, m)) * noise.v
    eps = rng.normal(0.0, 1.0, n)
    eta = U.sum(axis=1) + noise.eps * eps
    D = Z @ params.A.T + U
    feats = D if params.variant.is_linear else quad_features(D)
    X = feats @ params.B.T + V
    Y = D @ params.theta + eta
    return Dataset(Z, X, Y, Hidden(D, U, V, eta), seed)


def _generate(variant, dims, seed, noise) -> tuple[SemParams, Dataset]:
    variant = Variant(variant)
    dims = dims or Dims()
    dims.validate()
    noise = DEFAULT_NOISE[variant] if noise is None else noise
    params = _draw_params(variant, dims, noise, stream(seed, "params"))
    return params, _draw_samples(params, seed)


def gen_linear(
    variant, dims: Dims | None = None, seed: int = 0, noise: NoiseScales | None = None
) -> tuple[SemParams, Dataset]:
    if not Variant(variant).is_linear:
        raise ValueError(f"{variant} is not a linear variant")
    return _generate(variant, dims, seed, noise)


def gen_quadratic(
    variant, dims: Dims | None = None, seed: int = 0, noise: NoiseScales | None = None
) -> tuple[SemParams, Dataset]:
    if Variant(variant).is_linear:
        raise ValueError(f"{variant} is not a quadratic variant")
    return _generate(variant, dims, seed, noise)


def generate(variant, dims: Dims | None = None, seed: int = 0, noise: NoiseScales | None = None):
    """Dispatch to the linear or quadratic generator."""
    return _generate(variant, dims, seed, noise)


def oracle_outcome_linear(params: SemParams, X: np.ndarray) -> np.ndarray:
    """theta^T B^+ x for every row x."""
    if not params.variant.is_linear:
        raise ValueError("linear oracle called with quadratic parameters")
    return np.atleast_2d(X) @ params.B_pinv.T @ params.theta


def oracle_outcome_quadratic(params: SemParams, X: np.ndarray) -> np.ndarray:
    """theta^T (B^+ x)[:r]: recover the first-order feature block and apply theta."""
    if params.variant.is_linear:
        raise ValueError("quadratic oracle called with linear parameters")
    r = params.dims.r
    return np.atleast_2d(X) @ params.B_pinv[:r].T @ params.theta


def oracle_outcome(params: SemParams, X: np.ndarray) -> np.ndarray:
    if params.variant.is_linear:
        return oracle_outcome_linear(params, X)
    return oracle_outcome_quadratic(params, X)


def with_noise(params: SemParams, noise: NoiseScales) -> SemParams:
    return replace(params, noise=noise)
