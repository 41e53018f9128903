"""Kernel dependence statistics (biased V-statistics), differentiable via ndcore.

All functions accept plain arrays or autodiff Vars.  Bandwidths chosen by the
median heuristic are computed from values and treated as constants.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .ndcore import autodiff as ad


@dataclass(frozen=True)
class KernelSpec:
    kind: str = "linear"  # "linear" | "rbf"
    bandwidth: float | str = "median"

    def __post_init__(self):
        if self.kind not in ("linear", "rbf"):
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.bandwidth != "median" and not float(self.bandwidth) > 0:
            raise ValueError("rbf bandwidth must be positive")


LINEAR = KernelSpec("linear")


def _n(a) -> int:
    return ad._value(a).shape[0]


def median_bandwidth(data: np.ndarray) -> float:
    """Median of pairwise Euclidean distances over distinct pairs (1.0 if all coincide)."""
    data = np.asarray(data, float)
    d2 = ad._sqdist(data)
    iu = np.triu_indices(data.shape[0], k=1)
    med = float(np.median(np.sqrt(d2[iu])))
    return med if med > 0 else 1.0


def gram(spec: KernelSpec, data):
    """n x n kernel matrix of the rows of ``data``."""
    if _n(data) < 2:
        raise ValueError("gram matrix needs n >= 2")
    if spec.kind == "linear":
        return ad.matmul(data, ad.transpose(data))
    sigma = median_bandwidth(ad._value(data)) if spec.bandwidth == "median" else float(spec.bandwidth)
    return ad.exp(ad.scale(ad.sqdist(data), -1.0 / (2.0 * sigma * sigma)))


def _double_center(K):
    return ad.transpose(ad.center(ad.transpose(ad.center(K))))


def hsic(A, B, spec_a: KernelSpec = LINEAR, spec_b: KernelSpec | None = None):
    """(1/n^2) tr(K H L H).  Returns a 1x1 tensor (or Var)."""
    spec_b = spec_a if spec_b is None else spec_b
    n = _n(A)
    if _n(B) != n:
        raise ValueError(f"sample counts differ: {n} vs {_n(B)}")
    if n < 2:
        raise ValueError("HSIC needs n >= 2")
    if spec_a.kind == "linear" and spec_b.kind == "linear":
        cross = ad.matmul(ad.transpose(ad.center(A)), ad.center(B))
        return ad.scale(ad.total(ad.square(cross)), 1.0 / (n * n))
    K = gram(spec_a, A)
    L = gram(spec_b, B)
    return ad.scale(ad.total(ad.mul(_double_center(K), L)), 1.0 / (n * n))


def dhsic(variables: Sequence, specs: Sequence[KernelSpec] | KernelSpec = LINEAR):
    """Joint-independence statistic for d >= 2 variables sharing n rows."""
    d = len(variables)
    if d < 2:
        raise ValueError("dHSIC needs at least two variables")
    if isinstance(specs, KernelSpec):
        specs = [specs] * d
    n = _n(variables[0])
    if any(_n(v) != n for v in variables):
        raise ValueError("all variables must share the sample count")
    grams = [gram(s, v) for s, v in zip(specs, variables)]
    prod = grams[0]
    row_prod = ad.rowsum(grams[0])
    tot_prod = ad.total(grams[0])
    for K in grams[1:]:
        prod = ad.mul(prod, K)
        row_prod = ad.mul(row_prod, ad.rowsum(K))
        tot_prod = ad.mul(tot_prod, ad.total(K))
    t1 = ad.scale(ad.total(prod), 1.0 / n**2)
    t2 = ad.scale(ad.total(row_prod), 2.0 / float(n) ** (d + 1))
    t3 = ad.scale(tot_prod, 1.0 / float(n) ** (2 * d))
    return ad.add(ad.sub(t1, t2), t3)


def pairwise_hsic(A, B, spec: KernelSpec = LINEAR):
    """Sum of scalar HSICs over every (column of A, column of B) pair."""
    if _n(A) != _n(B):
        raise ValueError("sample counts differ")
    da, db = ad._value(A).shape[1], ad._value(B).shape[1]
    out = np.zeros((1, 1))
    for a in range(da):
        ca = ad.cols(A, a, a + 1)
        for b in range(db):
            out = ad.add(out, hsic(ca, ad.cols(B, b, b + 1), spec))
    return out


def as_float(x) -> float:
    return float(ad._value(x).reshape(-1)[0])
