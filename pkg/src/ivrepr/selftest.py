"""Fast numerical self-checks: gradients, dependence statistics, identification."""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .ndcore import autodiff as ad

GRAD_TOL = 1e-4


@dataclass
class CheckResult:
    name: str
    ok: bool
    detail: str = ""


# inputs for each primitive: list of shapes, keyword args, and an optional
# transform keeping inputs away from kinks
_PRIMITIVE_CASES: dict[str, tuple[list[tuple[int, int]], dict, Callable | None]] = {
    "add": ([(6, 5), (1, 5)], {}, None),
    "sub": ([(6, 5), (6, 1)], {}, None),
    "mul": ([(6, 5), (6, 5)], {}, None),
    "matmul": ([(6, 5), (5, 4)], {}, None),
    "scale": ([(4, 3)], {"c": -1.7}, None),
    "transpose": ([(4, 3)], {}, None),
    "cos": ([(5, 5)], {}, None),
    "tanh": ([(5, 5)], {}, None),
    "relu": ([(5, 5)], {}, lambda x: np.sign(x) * (np.abs(x) + 0.1)),
    "exp": ([(5, 5)], {}, None),
    "square": ([(5, 5)], {}, None),
    "sum": ([(5, 4)], {}, None),
    "mean": ([(5, 4)], {}, None),
    "colsum": ([(5, 4)], {}, None),
    "rowsum": ([(5, 4)], {}, None),
    "center": ([(8, 3)], {}, None),
    "cols": ([(5, 6)], {"start": 1, "stop": 4}, None),
    "concat": ([(5, 2), (5, 3)], {}, None),
    "sqdist": ([(7, 3)], {}, None),
}


def check_primitive(name: str, seed: int = 0, tol: float = GRAD_TOL) -> CheckResult:
    shapes, kw, fix = _PRIMITIVE_CASES[name]
    rng = np.random.default_rng(seed)
    inputs = {f"x{i}": rng.normal(size=s) for i, s in enumerate(shapes)}
    if fix is not None:
        inputs = {k: fix(v) for k, v in inputs.items()}
    out_shape = ad.PRIMITIVES[name].forward(*inputs.values(), **kw).shape
    probe = rng.normal(size=out_shape)

    def fn(p):
        return ad.total(ad.mul(ad.apply(name, *p.values(), **kw), probe))

    _, analytic = ad.value_and_grad(fn, inputs)
    numeric = ad.numeric_grad(fn, inputs)
    worst = max(ad.max_relative_error(analytic, numeric).values())
    return CheckResult(f"grad:{name}", worst < tol, f"max rel err {worst:.2e}")


def check_irae_gradient(seed: int = 0, tol: float = GRAD_TOL, n: int = 32, m: int = 16) -> CheckResult:
    from .irae import RegWeights, TrainConfig, init_model, loss_terms, combine
    from .ndcore.layers import rff_forward

    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, m))
    Z = rng.normal(size=(n, 4))
    cfg = TrainConfig(rff_dim=12, encoder_widths=(10, 8), decoder_widths=(8, 10), rff_bandwidth=3.0, seed=seed)
    model = init_model(cfg, m, 4, 2, 2)
    weights = RegWeights(1.0, 1.0, 1.0, 1.0, c1=1.0, c2=1.0, c3=1.0)
    Xs = model.standardize(X)
    feats = rff_forward(model.rff, Xs)

    def fn(p):
        return combine(loss_terms(model, p, feats, Xs, Z, weights), weights)

    _, analytic = ad.value_and_grad(fn, model.params)
    numeric = ad.numeric_grad(fn, model.params)
    errs = ad.max_relative_error(analytic, numeric)
    worst_name = max(errs, key=errs.get)
    return CheckResult(
        "grad:irae_loss", errs[worst_name] < tol, f"max rel err {errs[worst_name]:.2e} ({worst_name})"
    )


def check_hsic_oracles(seed: int = 0) -> list[CheckResult]:
    from .independence import KernelSpec, dhsic, gram, hsic

    rng = np.random.default_rng(seed)
    A, B = rng.normal(size=(16, 2)), rng.normal(size=(16, 3))
    results = []
    for spec in (KernelSpec("linear"), KernelSpec("rbf", 1.3)):
        K, L = gram(spec, A), gram(spec, B)
        n = 16
        H = np.eye(n) - 1.0 / n
        Kc, Lc = H @ K @ H, H @ L @ H
        brute = sum(Kc[i, j] * Lc[j, i] for i in range(n) for j in range(n)) / n**2
        fast = float(hsic(A, B, spec)[0, 0])
        results.append(CheckResult(f"hsic:{spec.kind}", abs(fast - brute) < 1e-10, f"diff {abs(fast - brute):.1e}"))
        d2 = float(dhsic([A, B], spec)[0, 0])
        results.append(CheckResult(f"dhsic2:{spec.kind}", abs(d2 - fast) < 1e-12, f"diff {abs(d2 - fast):.1e}"))
    return results


def check_noiseless_lirr(seed: int = 0) -> list[CheckResult]:
    from .dgp import NOISELESS, Dims, gen_linear, oracle_outcome_linear
    from .lirr import lirr_fit, lirr_intervene

    params, data = gen_linear("linear1", Dims(n=2000, m=30), seed, NOISELESS)
    model = lirr_fit(data.Z, data.X, data.Y)
    B = params.B
    sub = np.linalg.norm(B - model.basis @ (model.basis.T @ B))
    P = model.alignment(B)
    theta_err = np.max(np.abs(model.theta - np.linalg.solve(P.T, params.theta)))
    X_int = lirr_intervene(model, data.X, 1.0)
    gain = oracle_outcome_linear(params, X_int).mean() - data.Y.mean()
    gain_err = abs(gain - np.linalg.norm(model.theta))
    return [
        CheckResult("lirr:subspace", sub < 1e-8, f"residual {sub:.1e}"),
        CheckResult("lirr:theta", theta_err < 1e-8, f"err {theta_err:.1e}"),
        CheckResult("lirr:improvement", gain_err < 1e-8, f"err {gain_err:.1e}"),
    ]


def check_rmsprop() -> CheckResult:
    from .ndcore.optim import RmspropState, rmsprop_step

    st = RmspropState(lr=0.1, alpha=0.9, eps=1e-8, weight_decay=0.0)
    w = rmsprop_step(st, {"w": np.array([1.0])}, {"w": np.array([1.0])})["w"][0]
    ok = abs(st.square_avg["w"][0] - 0.1) < 1e-15 and abs(w - (1 - 0.1 / (np.sqrt(0.1) + 1e-8))) < 1e-12
    return CheckResult("rmsprop:update", ok, f"w'={w:.6f}")


def run_all() -> list[CheckResult]:
    results = [check_primitive(name) for name in _PRIMITIVE_CASES]
    results.append(check_irae_gradient())
    results.extend(check_hsic_oracles())
    results.extend(check_noiseless_lirr())
    results.append(check_rmsprop())
    return results


def report(results: list[CheckResult], elapsed: float | None = None) -> str:
    lines = [f"{'PASS' if r.ok else 'FAIL'}  {r.name:<20} {r.detail}" for r in results]
    failed = [r.name for r in results if not r.ok]
    tail = f"{len(results) - len(failed)}/{len(results)} checks passed"
    if elapsed is not None:
        tail += f" in {elapsed:.1f}s"
    if failed:
        tail += "; failing: " + ", ".join(failed)
    return "\n".join(lines + [tail])


def main() -> int:
    start = time.perf_counter()
    results = run_all()
    print(report(results, time.perf_counter() - start))
    return 0 if all(r.ok for r in results) else 2
