"""Instrument-regularized auto-encoder.

Loss on a batch (X, Z), with e = encoder, f = decoder, latent split
e(X) = (e_D(X), e_V(X)), residual U~ = e_D(X) - Z A^T - c and V~ = e_V(X):

    mean ||X - f(e(X))||^2 + lam * mean ||U~||^2
    + mu1 R(U~, Z) + mu2 R(Z, V~)
    + mu3 (c1 R(e_D, V~) + c2 R(U~, V~) + c3 R(U~, Z, V~))

X is standardized column-wise with training-split statistics before it enters
the network; reconstruction is measured in those standardized units.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass, field, replace
from typing import Mapping

import numpy as np

from .dgp import Dataset
from .independence import LINEAR, KernelSpec, dhsic, hsic, pairwise_hsic
from .ndcore import autodiff as ad
from .ndcore.layers import Dense, RffLayer, dense_forward, rff_forward
from .ndcore.optim import EarlyStopping, RmspropState, rmsprop_step
from .rng import split_indices, stream

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RegWeights:
    lam: float = 1.0
    mu1: float = 1.0
    mu2: float = 1.0
    mu3: float = 1.0
    c1: float = 1.0
    c2: float = 0.0
    c3: float = 0.0

    def __post_init__(self):
        for k, v in asdict(self).items():
            if v < 0:
                raise ValueError(f"regularization weight {k} must be nonnegative")


ABLATIONS = {
    "vanilla_ae": RegWeights(0.0, 0.0, 0.0, 0.0),
    "irae0": RegWeights(1.0, 0.0, 0.0, 0.0),
    "irae1": RegWeights(1.0, 1.0, 0.0, 0.0),
    "irae2": RegWeights(1.0, 1.0, 1.0, 0.0),
    "irae": RegWeights(1.0, 1.0, 1.0, 1.0),
}
# methods whose latent carries a V-part
WIDE_BOTTLENECK = {"irae2", "irae"}


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 5e-4
    alpha: float = 0.9
    eps: float = 1e-8
    weight_decay: float = 1e-6
    epochs: int = 1000
    patience: int = 20
    batch_size: int = 256
    rff_dim: int = 100
    rff_bandwidth: float = 20.0
    encoder_widths: tuple[int, ...] = (100, 50, 20)
    decoder_widths: tuple[int, ...] = (20, 50, 100)
    activation: str = "tanh"
    bottleneck: int | None = None  # defaults to r_D
    r_d: int | None = None  # defaults to the instrument count
    split: tuple[float, float, float] = (0.7, 0.1, 0.2)
    standardize: bool = True  # per-column z-scoring with train-split stats
    seed: int = 0

    def __post_init__(self):
        if abs(sum(self.split) - 1.0) > 1e-9:
            raise ValueError(f"split fractions {self.split} must sum to 1")
        if self.patience > self.epochs:
            raise ValueError("patience cannot exceed epochs")
        if self.batch_size < 2:
            raise ValueError("batch size must be >= 2 for the dependence terms")
        if self.activation not in ad.ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}; choose from {sorted(ad.ACTIVATIONS)}")

    @classmethod
    def from_dict(cls, d: Mapping) -> "TrainConfig":
        d = dict(d)
        for key in ("encoder_widths", "decoder_widths", "split"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


def method_layout(method: str, k: int, wide: int = 10) -> tuple[int, int]:
    """(bottleneck, r_D) for a named method with k instruments."""
    if method not in ABLATIONS:
        raise ValueError(f"unknown autoencoder method {method!r}")
    return (wide, k) if method in WIDE_BOTTLENECK else (k, k)


@dataclass(frozen=True)
class RegularizerSpec:
    kernel: KernelSpec = LINEAR
    pairwise: bool = False

    def pair(self, a, b):
        return pairwise_hsic(a, b, self.kernel) if self.pairwise else hsic(a, b, self.kernel)

    def triple(self, a, b, c):
        return dhsic([a, b, c], self.kernel)


class TrainingDiverged(FloatingPointError):
    def __init__(self, epoch: int, detail: str = ""):
        super().__init__(f"training diverged at epoch {epoch}{': ' + detail if detail else ''}")
        self.epoch = epoch


@dataclass(eq=False)
class IraeModel:
    params: dict[str, np.ndarray]
    rff: RffLayer
    x_mean: np.ndarray  # 1 x m
    x_scale: np.ndarray  # 1 x m
    n_encoder: int
    n_decoder: int
    r_d: int
    r_v: int
    activation: str = "tanh"

    @property
    def bottleneck(self) -> int:
        return self.r_d + self.r_v

    @property
    def head_min_singular_value(self) -> float:
        return float(np.linalg.svd(self.params["head_A"], compute_uv=False).min())

    def standardize(self, X) -> np.ndarray:
        return (np.asarray(X, float) - self.x_mean) / self.x_scale

    def destandardize(self, Xs) -> np.ndarray:
        return np.asarray(Xs, float) * self.x_scale + self.x_mean

    def copy(self) -> "IraeModel":
        return replace(self, params={k: v.copy() for k, v in self.params.items()})


def init_model(
    config: TrainConfig, m: int, k: int, r_d: int, r_v: int, x_mean=None, x_scale=None
) -> IraeModel:
    rng = stream(config.seed, "init")
    rff = RffLayer.init(m, config.rff_dim, config.rff_bandwidth, rng)
    params: dict[str, np.ndarray] = {}
    widths = [config.rff_dim, *config.encoder_widths, r_d + r_v]
    for i, (a, b) in enumerate(zip(widths[:-1], widths[1:])):
        layer = Dense.init(a, b, rng)
        params[f"enc{i}_W"], params[f"enc{i}_b"] = layer.weight, layer.bias
    widths = [r_d + r_v, *config.decoder_widths, m]
    for i, (a, b) in enumerate(zip(widths[:-1], widths[1:])):
        layer = Dense.init(a, b, rng)
        params[f"dec{i}_W"], params[f"dec{i}_b"] = layer.weight, layer.bias
    params["head_A"] = rng.normal(0.0, 1.0 / np.sqrt(k), (r_d, k))
    params["head_c"] = np.zeros((1, r_d))
    return IraeModel(
        params,
        rff,
        np.zeros((1, m)) if x_mean is None else np.asarray(x_mean, float).reshape(1, m),
        np.ones((1, m)) if x_scale is None else np.asarray(x_scale, float).reshape(1, m),
        len(config.encoder_widths) + 1,
        len(config.decoder_widths) + 1,
        r_d,
        r_v,
        config.activation,
    )


# ------------------------------------------------------------------ forward


def _encode_features(model: IraeModel, p, feats):
    h = feats
    for i in range(model.n_encoder):
        act = "identity" if i == model.n_encoder - 1 else model.activation
        h = dense_forward(h, p[f"enc{i}_W"], p[f"enc{i}_b"], act)
    return h


def _decode_latent(model: IraeModel, p, latent):
    h = latent
    for i in range(model.n_decoder):
        act = "identity" if i == model.n_decoder - 1 else model.activation
        h = dense_forward(h, p[f"dec{i}_W"], p[f"dec{i}_b"], act)
    return h


def encode_split(model: IraeModel, X, params=None) -> tuple[np.ndarray, np.ndarray]:
    """(D_tilde, V_tilde) for raw treatments X."""
    X = np.atleast_2d(np.asarray(X, float))
    if X.shape[1] != model.x_mean.shape[1]:
        raise ValueError(f"expected {model.x_mean.shape[1]} treatment columns, got {X.shape[1]}")
    p = model.params if params is None else params
    z = _encode_features(model, p, rff_forward(model.rff, model.standardize(X)))
    return z[:, : model.r_d], z[:, model.r_d :]


def decode(model: IraeModel, D_tilde, V_tilde=None, params=None) -> np.ndarray:
    """Raw-unit treatments from a latent (D-part, V-part)."""
    D_tilde = np.atleast_2d(np.asarray(D_tilde, float))
    if V_tilde is None:
        V_tilde = np.zeros((D_tilde.shape[0], 0))
    V_tilde = np.asarray(V_tilde, float).reshape(D_tilde.shape[0], -1)
    if D_tilde.shape[1] != model.r_d or V_tilde.shape[1] != model.r_v:
        raise ValueError(
            f"latent split ({D_tilde.shape[1]}, {V_tilde.shape[1]}) != model ({model.r_d}, {model.r_v})"
        )
    p = model.params if params is None else params
    latent = np.concatenate([D_tilde, V_tilde], axis=1)
    return model.destandardize(_decode_latent(model, p, latent))


def reconstruction_mse(model: IraeModel, X) -> float:
    """Mean over rows of the squared standardized reconstruction error."""
    D, V = encode_split(model, X)
    diff = model.standardize(decode(model, D, V)) - model.standardize(X)
    return float(np.mean(np.sum(diff * diff, axis=1)))


# ------------------------------------------------------------------ loss


def loss_terms(
    model: IraeModel,
    p,
    feats,
    Xs,
    Z,
    weights: RegWeights,
    reg: RegularizerSpec = RegularizerSpec(),
) -> dict:
    """Individual loss terms (arrays or Vars) on RFF features ``feats`` of standardized ``Xs``.

    Terms whose weight is zero, or which need a V-part when r_V = 0, are absent.
    """
    n = Xs.shape[0]
    if n < 2:
        raise ValueError("loss needs a batch of at least two rows")
    latent = _encode_features(model, p, feats)
    recon = _decode_latent(model, p, latent)
    terms = {"recon": ad.scale(ad.total(ad.square(ad.sub(Xs, recon))), 1.0 / n)}
    e_d = ad.cols(latent, 0, model.r_d) if model.r_v else latent
    e_v = ad.cols(latent, model.r_d, model.bottleneck) if model.r_v else None
    w = weights
    need_u = w.lam > 0 or w.mu1 > 0 or (e_v is not None and w.mu3 > 0 and (w.c2 > 0 or w.c3 > 0))
    if need_u:
        u = ad.sub(ad.sub(e_d, ad.matmul(Z, ad.transpose(p["head_A"]))), p["head_c"])
    if w.lam > 0:
        terms["pred"] = ad.scale(ad.total(ad.square(u)), 1.0 / n)
    if w.mu1 > 0:
        terms["r_u_z"] = reg.pair(u, Z)
    if e_v is not None:
        if w.mu2 > 0:
            terms["r_z_v"] = reg.pair(Z, e_v)
        if w.mu3 > 0:
            if w.c1 > 0:
                terms["r_d_v"] = reg.pair(e_d, e_v)
            if w.c2 > 0:
                terms["r_u_v"] = reg.pair(u, e_v)
            if w.c3 > 0:
                terms["r_u_z_v"] = reg.triple(u, Z, e_v)
    return terms


def term_weights(weights: RegWeights) -> dict[str, float]:
    w = weights
    return {
        "recon": 1.0,
        "pred": w.lam,
        "r_u_z": w.mu1,
        "r_z_v": w.mu2,
        "r_d_v": w.mu3 * w.c1,
        "r_u_v": w.mu3 * w.c2,
        "r_u_z_v": w.mu3 * w.c3,
    }


def combine(terms: dict, weights: RegWeights):
    tw = term_weights(weights)
    total = None
    for name, t in terms.items():
        part = t if tw[name] == 1.0 else ad.scale(t, tw[name])
        total = part if total is None else ad.add(total, part)
    return total


def irae_loss(
    model: IraeModel,
    Z,
    X,
    weights: RegWeights,
    reg: RegularizerSpec = RegularizerSpec(),
    params=None,
) -> float:
    """Total loss on raw treatments X (no gradient)."""
    Xs = model.standardize(X)
    feats = rff_forward(model.rff, Xs)
    p = model.params if params is None else params
    terms = loss_terms(model, p, feats, Xs, np.asarray(Z, float), weights, reg)
    return float(ad._value(combine(terms, weights))[0, 0])


def loss_and_grad(model: IraeModel, feats, Xs, Z, weights, reg=RegularizerSpec(), params=None):
    """(total, per-term values, gradients) for one batch of precomputed RFF features."""
    p0 = model.params if params is None else params
    holder: dict = {}

    def fn(p):
        terms = loss_terms(model, p, feats, Xs, Z, weights, reg)
        holder.update(terms)
        return combine(terms, weights)

    total, grads = ad.value_and_grad(fn, p0)
    return total, {k: float(ad._value(v)[0, 0]) for k, v in holder.items()}, grads


# ------------------------------------------------------------------ training


@dataclass
class TrainResult:
    model: IraeModel
    history: list[dict] = field(default_factory=list)
    split: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None
    best_epoch: int = -1


def _evaluate(model, params, feats, Xs, Z, weights, reg, chunk) -> tuple[float, dict]:
    n = Xs.shape[0]
    totals: dict[str, float] = {}
    loss = 0.0
    count = 0
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        if stop - start < 2:
            break
        terms = loss_terms(model, params, feats[start:stop], Xs[start:stop], Z[start:stop], weights, reg)
        size = stop - start
        loss += size * float(combine(terms, weights)[0, 0])
        for k, v in terms.items():
            totals[k] = totals.get(k, 0.0) + size * float(v[0, 0])
        count += size
    return loss / count, {k: v / count for k, v in totals.items()}


def irae_train(
    config: TrainConfig,
    weights: RegWeights,
    data: Dataset,
    r_d: int | None = None,
    bottleneck: int | None = None,
    reg: RegularizerSpec = RegularizerSpec(),
) -> TrainResult:
    """RMSprop minibatch training with best-validation checkpointing and early stopping."""
    Z_all, X_all = np.asarray(data.Z, float), np.asarray(data.X, float)
    n, m = X_all.shape
    k = Z_all.shape[1]
    train_idx, val_idx, test_idx = split_indices(n, config.split, config.seed)
    if len(val_idx) < 2:
        raise ValueError("validation split needs at least two rows")
    r_d = r_d or config.r_d or k
    bottleneck = bottleneck or config.bottleneck or r_d
    if bottleneck < r_d:
        raise ValueError(f"bottleneck {bottleneck} smaller than r_D {r_d}")

    Xtr = X_all[train_idx]
    if config.standardize:
        center, scale = Xtr.mean(axis=0), Xtr.std(axis=0)
        scale[scale == 0] = 1.0
    else:
        center, scale = np.zeros(m), np.ones(m)
    model = init_model(config, m, k, r_d, bottleneck - r_d, center, scale)

    Xs_tr, Xs_val = model.standardize(Xtr), model.standardize(X_all[val_idx])
    F_tr, F_val = rff_forward(model.rff, Xs_tr), rff_forward(model.rff, Xs_val)
    Z_tr, Z_val = Z_all[train_idx], Z_all[val_idx]

    opt = RmspropState(config.lr, config.alpha, config.eps, config.weight_decay)
    stopper = EarlyStopping(config.patience)
    shuffle = stream(config.seed, "shuffle")
    params = model.params
    best = {k: v.copy() for k, v in params.items()}
    history: list[dict] = []
    bs = config.batch_size
    for epoch in range(config.epochs):
        order = shuffle.permutation(len(train_idx))
        sums: dict[str, float] = {}
        seen = 0
        for start in range(0, len(order), bs):
            idx = order[start : start + bs]
            if len(idx) < 2:
                continue
            try:
                total, terms, grads = loss_and_grad(
                    model, F_tr[idx], Xs_tr[idx], Z_tr[idx], weights, reg, params
                )
            except ad.NonFiniteError as exc:
                raise TrainingDiverged(epoch, str(exc)) from exc
            if not np.isfinite(total):
                raise TrainingDiverged(epoch, "non-finite loss")
            params = rmsprop_step(opt, params, grads)
            sums["loss"] = sums.get("loss", 0.0) + total * len(idx)
            for name, v in terms.items():
                sums[name] = sums.get(name, 0.0) + v * len(idx)
            seen += len(idx)
        val_loss, val_terms = _evaluate(model, params, F_val, Xs_val, Z_val, weights, reg, bs)
        if not np.isfinite(val_loss):
            raise TrainingDiverged(epoch, "non-finite validation loss")
        row = {"epoch": epoch, "train_loss": sums["loss"] / seen}
        row.update({f"train_{k}": v / seen for k, v in sums.items() if k != "loss"})
        row["val_loss"] = val_loss
        row.update({f"val_{k}": v for k, v in val_terms.items()})
        history.append(row)
        if stopper.update(epoch, val_loss):
            best = {k: v.copy() for k, v in params.items()}
        if stopper.should_stop:
            log.debug("early stop at epoch %d (best %d)", epoch, stopper.best_epoch)
            break
    model.params = best
    return TrainResult(model, history, (train_idx, val_idx, test_idx), stopper.best_epoch)


def write_history(history: list[dict], path) -> None:
    if not history:
        raise ValueError("empty training history")
    fields = list(history[0].keys())
    for row in history[1:]:
        fields += [k for k in row if k not in fields]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for row in history:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})


__all__ = [
    "ABLATIONS",
    "IraeModel",
    "RegWeights",
    "RegularizerSpec",
    "TrainConfig",
    "TrainResult",
    "TrainingDiverged",
    "decode",
    "encode_split",
    "init_model",
    "irae_loss",
    "irae_train",
    "loss_terms",
    "method_layout",
    "reconstruction_mse",
    "write_history",
]
