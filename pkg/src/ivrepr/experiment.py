"""Experiment orchestration: per-seed runs, sweeps, and benchmark summaries."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .dgp import NOISELESS, Dims, NoiseScales, Variant, generate
from .independence import KernelSpec
from .intervene import METRICS, evaluate_improvement, fit_direction, perturb_decode
from .irae import (
    ABLATIONS,
    RegularizerSpec,
    RegWeights,
    TrainConfig,
    encode_split,
    irae_train,
    method_layout,
    reconstruction_mse,
)
from .lirr import lirr_fit, pca_repr_fit
from .rng import split_indices

log = logging.getLogger(__name__)

LINEAR_METHODS = ("lirr", "pca")
METHODS = LINEAR_METHODS + tuple(ABLATIONS)
CSV_COLUMNS = (
    "seed",
    "method",
    "variant",
    "m",
    "n",
    "alpha",
    "improvement",
    "theta_norm",
    "recon_mse",
    "pred_mse",
    "n_test",
    "wall_time_s",
    "status",
)


@dataclass(frozen=True)
class ExperimentConfig:
    variant: str = "linear1"
    dims: Dims = field(default_factory=Dims)
    methods: tuple[str, ...] = ("lirr",)
    alpha: float = 1.0
    seeds: tuple[int, ...] = (0,)
    train: TrainConfig = field(default_factory=TrainConfig)
    weights: RegWeights | None = None  # None -> ablation defaults per method
    kernel: KernelSpec = field(default_factory=KernelSpec)
    pairwise: bool = False
    noise: NoiseScales | None = None
    noiseless: bool = False
    split: tuple[float, ...] | None = None  # lirr/pca; None -> 80/20 linear, 70/10/20 quadratic
    wide_bottleneck: int = 10
    metric: str = "default"
    record_timing: bool = False
    out: str | None = None

    def __post_init__(self):
        Variant(self.variant)
        for m in self.methods:
            if m not in METHODS:
                raise ValueError(f"unknown method {m!r}; choose from {METHODS}")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError("seeds must be unique")
        if self.metric not in METRICS:
            raise ValueError(f"metric must be one of {METRICS}")
        self.dims.validate()

    @property
    def noise_scales(self) -> NoiseScales | None:
        return NOISELESS if self.noiseless else self.noise

    @classmethod
    def from_dict(cls, d: Mapping) -> "ExperimentConfig":
        d = dict(d)
        if "method" in d:
            d["methods"] = [d.pop("method")]
        if "dims" in d:
            d["dims"] = Dims(**d["dims"])
        if "train" in d:
            d["train"] = TrainConfig.from_dict(d["train"])
        if d.get("weights") is not None:
            d["weights"] = RegWeights(**d["weights"])
        if "kernel" in d:
            d["kernel"] = KernelSpec(**d["kernel"])
        if d.get("noise") is not None:
            d["noise"] = NoiseScales(**d["noise"])
        for key in ("methods", "seeds", "split"):
            if d.get(key) is not None:
                d[key] = tuple(d[key])
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def to_dict(self) -> dict:
        return json.loads(json.dumps(asdict(self)))


def load_configs(path) -> list[ExperimentConfig]:
    """A config file holds one experiment or {"experiments": [...]}."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if isinstance(doc, dict) and "experiments" in doc:
        shared = {k: v for k, v in doc.items() if k != "experiments"}
        return [ExperimentConfig.from_dict({**shared, **e}) for e in doc["experiments"]]
    return [ExperimentConfig.from_dict(doc)]


def parse_seeds(text: str) -> tuple[int, ...]:
    """'A..B' (inclusive) or comma-separated integers."""
    text = text.strip()
    if ".." in text:
        a, b = text.split("..", 1)
        lo, hi = int(a), int(b)
        if hi < lo:
            raise ValueError(f"empty seed range {text!r}")
        return tuple(range(lo, hi + 1))
    return tuple(int(s) for s in text.split(",") if s.strip())


# ---------------------------------------------------------------- single run


def _linear_method(config: ExperimentConfig, method: str, params, data) -> dict:
    linear = params.variant.is_linear
    fractions = config.split or ((0.8, 0.2) if linear else (0.7, 0.1, 0.2))
    train, _, test = split_indices(data.n, fractions, data.seed)
    Z, X, Y = data.Z, data.X, data.Y
    fit = lirr_fit if method == "lirr" else pca_repr_fit
    model = fit(Z[train], X[train], Y[train])
    theta, u = model.theta, model.direction()
    X_test = X[test]
    X_int = perturb_decode(model, X_test, u, config.alpha)
    centered = X_test - model.x_mean
    resid = centered - centered @ model.basis @ model.basis.T
    D_test = model.encode(X_test)
    first = model.first_stage.first_stage
    return dict(
        X_int=X_int,
        test=test,
        theta=theta,
        recon_mse=float(np.mean(np.sum(resid**2, axis=1))),
        pred_mse=float(np.mean(np.sum((D_test - first.predict(Z[test])) ** 2, axis=1))),
    )


def _ae_method(config: ExperimentConfig, method: str, params, data) -> dict:
    k = data.Z.shape[1]
    bottleneck, r_d = method_layout(method, k, config.wide_bottleneck)
    if config.train.r_d is not None:
        r_d = config.train.r_d
    if config.train.bottleneck is not None:
        bottleneck = config.train.bottleneck
    weights = config.weights or ABLATIONS[method]
    reg = RegularizerSpec(config.kernel, config.pairwise)
    tc = replace(config.train, seed=data.seed)
    result = irae_train(tc, weights, data, r_d=r_d, bottleneck=bottleneck, reg=reg)
    model = result.model
    train, _, test = result.split
    D_train, _ = encode_split(model, data.X[train])
    theta, u = fit_direction(data.Z[train], D_train, data.Y[train])
    X_test = data.X[test]
    X_int = perturb_decode(model, X_test, u, config.alpha)
    D_test, _ = encode_split(model, X_test)
    resid = D_test - data.Z[test] @ model.params["head_A"].T - model.params["head_c"]
    return dict(
        X_int=X_int,
        test=test,
        theta=theta,
        recon_mse=reconstruction_mse(model, X_test),
        pred_mse=float(np.mean(np.sum(resid**2, axis=1))),
        epochs=len(result.history),
    )


def run_seed(config: ExperimentConfig, method: str, seed: int) -> dict:
    """One results row; failures are captured in ``status`` instead of raised."""
    row = {
        "seed": seed,
        "method": method,
        "variant": config.variant,
        "m": config.dims.m,
        "n": config.dims.n,
        "alpha": config.alpha,
    }
    start = time.perf_counter()
    try:
        params, data = generate(config.variant, config.dims, seed, config.noise_scales)
        runner = _linear_method if method in LINEAR_METHODS else _ae_method
        out = runner(config, method, params, data)
        test = out["test"]
        report = evaluate_improvement(
            params,
            out["X_int"],
            data.Y[test],
            data.X[test],
            config.metric,
            method=method,
            alpha=config.alpha,
            theta_norm=float(np.linalg.norm(out["theta"])),
            recon_mse=out["recon_mse"],
            pred_mse=out["pred_mse"],
            wall_time_s=time.perf_counter() - start,
        )
        row.update(
            improvement=report.mean_improvement,
            theta_norm=report.theta_norm,
            recon_mse=report.recon_mse,
            pred_mse=report.pred_mse,
            n_test=report.n_test,
            wall_time_s=report.wall_time_s,
            status="ok",
        )
    except (ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        log.warning("seed %d method %s failed: %s", seed, method, exc)
        row.update(
            improvement=math.nan,
            theta_norm=math.nan,
            recon_mse=math.nan,
            pred_mse=math.nan,
            n_test=0,
            wall_time_s=time.perf_counter() - start,
            status=f"error: {type(exc).__name__}: {exc}".replace("\n", " "),
        )
    return row


def _job(args):
    config, method, seed = args
    return run_seed(config, method, seed)


def run_experiment(config: ExperimentConfig, threads: int = 1) -> list[dict]:
    """All (seed, method) rows, sorted by seed then method order in the config."""
    jobs = [(config, method, seed) for seed in config.seeds for method in config.methods]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(_job, jobs))
    else:
        rows = [_job(j) for j in jobs]
    order = {m: i for i, m in enumerate(config.methods)}
    return sorted(rows, key=lambda r: (r["seed"], order[r["method"]]))


# ---------------------------------------------------------------- CSV output


def _fmt(value) -> str:
    if isinstance(value, float):
        return "nan" if math.isnan(value) else repr(value)
    return str(value)


def rows_to_csv(rows: Iterable[dict], record_timing: bool = False) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for row in rows:
        values = []
        for col in CSV_COLUMNS:
            if col == "wall_time_s" and not record_timing:
                values.append("")
            else:
                values.append(_fmt(row[col]))
        w.writerow(values)
    return buf.getvalue()


def write_rows(path, rows: list[dict], record_timing: bool = False) -> None:
    Path(path).write_text(rows_to_csv(rows, record_timing), encoding="utf-8")


def read_rows(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        for key in ("improvement", "theta_norm", "recon_mse", "pred_mse", "alpha"):
            r[key] = float(r[key])
        for key in ("seed", "m", "n", "n_test"):
            r[key] = int(r[key])
    return rows


# ---------------------------------------------------------------- summaries


@dataclass(frozen=True)
class SummaryRow:
    variant: str
    m: int
    method: str
    n_seeds: int
    n_failed: int
    mean: float
    std: float
    positive_fraction: float


def summarize(rows: list[dict]) -> list[SummaryRow]:
    if not rows:
        raise ValueError("no results to summarize")
    groups: dict[tuple, list[dict]] = {}
    for r in rows:
        groups.setdefault((r["variant"], int(r["m"]), r["method"]), []).append(r)
    out = []
    for (variant, m, method), rs in groups.items():
        vals = np.array([r["improvement"] for r in rs if r["status"] == "ok"], dtype=float)
        failed = len(rs) - len(vals)
        mean = float(np.mean(vals)) if len(vals) else math.nan
        std = float(np.std(vals, ddof=1)) if len(vals) > 1 else math.nan
        pos = float(np.mean(vals > 0)) if len(vals) else math.nan
        out.append(SummaryRow(variant, m, method, len(vals), failed, mean, std, pos))
    return out


def summary_csv(summary: list[SummaryRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    fields = list(SummaryRow.__dataclass_fields__)
    w.writerow(fields)
    for s in summary:
        w.writerow([_fmt(getattr(s, f)) for f in fields])
    return buf.getvalue()


def summary_table(summary: list[SummaryRow]) -> str:
    header = ("variant", "m", "method", "seeds", "failed", "mean +/- std", "positive")
    body = [
        (s.variant, str(s.m), s.method, str(s.n_seeds), str(s.n_failed), f"{s.mean:.4f} +/- {s.std:.4f}", f"{s.positive_fraction:.2f}")
        for s in summary
    ]
    widths = [max(len(r[i]) for r in [header, *body]) for i in range(len(header))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in [header, *body]]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def histogram_csv(rows: list[dict], bins: int = 20) -> str:
    """Per (variant, m) shared bin edges; one row per method and bin."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["variant", "m", "method", "bin_left", "bin_right", "count"])
    groups: dict[tuple, list[dict]] = {}
    for r in rows:
        if r["status"] == "ok":
            groups.setdefault((r["variant"], int(r["m"])), []).append(r)
    for (variant, m), rs in groups.items():
        vals = np.array([r["improvement"] for r in rs])
        edges = np.histogram_bin_edges(vals, bins=bins)
        for method in dict.fromkeys(r["method"] for r in rs):
            mv = np.array([r["improvement"] for r in rs if r["method"] == method])
            counts, _ = np.histogram(mv, bins=edges)
            for lo, hi, c in zip(edges[:-1], edges[1:], counts):
                w.writerow([variant, m, method, _fmt(float(lo)), _fmt(float(hi)), int(c)])
    return buf.getvalue()


def run_bench(configs: list[ExperimentConfig], threads: int = 1) -> tuple[list[dict], list[SummaryRow]]:
    if not configs:
        raise ValueError("bench needs at least one config")
    rows: list[dict] = []
    for cfg in configs:
        rows.extend(run_experiment(cfg, threads))
    return rows, summarize(rows)
