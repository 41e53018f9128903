import numpy as np
import pytest

from ivrepr.dgp import NOISELESS, Dims, generate
from ivrepr.independence import KernelSpec, as_float, dhsic, hsic
from ivrepr.irae import (
    ABLATIONS,
    RegularizerSpec,
    RegWeights,
    TrainConfig,
    combine,
    decode,
    encode_split,
    init_model,
    irae_loss,
    irae_train,
    loss_and_grad,
    loss_terms,
    method_layout,
    reconstruction_mse,
    term_weights,
    write_history,
)
from ivrepr.ivreg import ols_fit
from ivrepr.ndcore.layers import rff_forward
from ivrepr.selftest import check_irae_gradient

TINY = TrainConfig(rff_dim=12, encoder_widths=(10, 8), decoder_widths=(8, 10), rff_bandwidth=3.0)
ALL_ON = RegWeights(1.0, 1.0, 1.0, 1.0, c1=1.0, c2=1.0, c3=1.0)


def _tiny(rng, r_d=2, r_v=2, n=32, m=16, k=4):
    model = init_model(TINY, m, k, r_d, r_v)
    return model, rng.normal(size=(n, m)), rng.normal(size=(n, k))


def test_layouts():
    assert method_layout("vanilla_ae", 4) == (4, 4)
    assert method_layout("irae1", 4) == (4, 4)
    assert method_layout("irae2", 4) == (10, 4)
    assert method_layout("irae", 4, wide=8) == (8, 4)
    with pytest.raises(ValueError):
        method_layout("lirr", 4)


def test_ablation_weights():
    assert ABLATIONS["vanilla_ae"] == RegWeights(0, 0, 0, 0)
    assert ABLATIONS["irae1"].mu1 == 1 and ABLATIONS["irae1"].mu2 == 0
    assert ABLATIONS["irae"].mu3 == 1
    with pytest.raises(ValueError):
        RegWeights(-1.0)


def test_reconstruction_zero_for_exact_decoder(rng):
    model, _, Z = _tiny(rng)
    row = rng.normal(size=(1, 16))
    X = np.repeat(row, 32, axis=0)
    p = dict(model.params)
    last = model.n_decoder - 1
    p[f"dec{last}_W"] = np.zeros_like(p[f"dec{last}_W"])
    p[f"dec{last}_b"] = model.standardize(row)
    assert irae_loss(model, Z, X, RegWeights(0, 0, 0, 0), params=p) == 0.0


def test_prediction_term_zero_when_head_matches(rng):
    model, X, Z = _tiny(rng)
    p = dict(model.params)
    last = model.n_encoder - 1
    bias = rng.normal(size=(1, 4))
    p[f"enc{last}_W"] = np.zeros_like(p[f"enc{last}_W"])
    p[f"enc{last}_b"] = bias
    p["head_A"] = np.zeros((2, 4))
    p["head_c"] = bias[:, :2]
    Xs = model.standardize(X)
    terms = loss_terms(model, p, rff_forward(model.rff, Xs), Xs, Z, RegWeights(1, 0, 0, 0))
    assert float(terms["pred"][0, 0]) == 0.0


def test_total_is_sum_of_independent_terms(rng):
    model, X, Z = _tiny(rng)
    Xs = model.standardize(X)
    enc = np.concatenate(encode_split(model, X), axis=1)
    Xhat = model.standardize(decode(model, enc[:, :2], enc[:, 2:]))
    D, V = enc[:, :2], enc[:, 2:]
    u = D - Z @ model.params["head_A"].T - model.params["head_c"]
    parts = {
        "recon": np.sum((Xs - Xhat) ** 2) / 32,
        "pred": np.sum(u**2) / 32,
        "r_u_z": as_float(hsic(u, Z)),
        "r_z_v": as_float(hsic(Z, V)),
        "r_d_v": as_float(hsic(D, V)),
        "r_u_v": as_float(hsic(u, V)),
        "r_u_z_v": as_float(dhsic([u, Z, V])),
    }
    w = RegWeights(0.5, 2.0, 0.3, 1.5, c1=0.7, c2=0.2, c3=0.1)
    tw = term_weights(w)
    expected = sum(tw[k] * v for k, v in parts.items())
    assert irae_loss(model, Z, X, w) == pytest.approx(expected, abs=1e-12)
    terms = loss_terms(model, model.params, rff_forward(model.rff, Xs), Xs, Z, w)
    for k, v in parts.items():
        assert float(terms[k][0, 0]) == pytest.approx(v, abs=1e-12)


def test_dropping_a_term_never_increases_loss(rng):
    model, X, Z = _tiny(rng)
    full = irae_loss(model, Z, X, ALL_ON)
    for field in ("lam", "mu1", "mu2", "mu3"):
        kw = {**ALL_ON.__dict__, field: 0.0}
        assert irae_loss(model, Z, X, RegWeights(**kw)) <= full + 1e-12


def test_v_terms_absent_without_v(rng):
    model, X, Z = _tiny(rng, r_d=4, r_v=0)
    Xs = model.standardize(X)
    terms = loss_terms(model, model.params, rff_forward(model.rff, Xs), Xs, Z, ALL_ON)
    assert set(terms) == {"recon", "pred", "r_u_z"}


def test_full_loss_gradient():
    res = check_irae_gradient()
    assert res.ok, res.detail


def test_gradient_with_rbf_and_pairwise(rng):
    from ivrepr.ndcore import autodiff as ad

    model, X, Z = _tiny(rng, n=16, m=6)
    Xs = model.standardize(X)
    feats = rff_forward(model.rff, Xs)
    reg = RegularizerSpec(KernelSpec("rbf", 2.0), pairwise=True)

    def fn(p):
        return combine(loss_terms(model, p, feats, Xs, Z, ALL_ON, reg), ALL_ON)

    _, g = ad.value_and_grad(fn, model.params)
    num = ad.numeric_grad(fn, model.params)
    assert max(ad.max_relative_error(g, num).values()) < 1e-4


def test_encode_split_shapes(rng):
    model, X, _ = _tiny(rng, r_d=3, r_v=0)
    D, V = encode_split(model, X)
    assert D.shape == (32, 3) and V.shape == (32, 0)
    assert decode(model, D).shape == (32, 16)
    D2, _ = encode_split(model, np.vstack([X[:1], X[:1]]))
    assert np.array_equal(D2[0], D2[1])
    with pytest.raises(ValueError):
        decode(model, np.zeros((2, 2)))


def test_roundtrip_mse_matches_loss_term(rng):
    model, X, Z = _tiny(rng)
    assert reconstruction_mse(model, X) == pytest.approx(irae_loss(model, Z, X, RegWeights(0, 0, 0, 0)), abs=1e-12)


def test_loss_and_grad_reports_terms(rng):
    model, X, Z = _tiny(rng)
    Xs = model.standardize(X)
    total, terms, grads = loss_and_grad(model, rff_forward(model.rff, Xs), Xs, Z, ALL_ON)
    assert total == pytest.approx(sum(term_weights(ALL_ON)[k] * v for k, v in terms.items()), abs=1e-12)
    assert set(grads) == set(model.params)


@pytest.fixture(scope="module")
def small_run():
    _, data = generate("quad1", Dims(n=600, m=20), 0)
    cfg = TrainConfig(epochs=15, patience=5, batch_size=64, seed=0)
    return cfg, data, irae_train(cfg, ABLATIONS["irae"], data, r_d=4, bottleneck=6)


def test_training_is_deterministic(small_run):
    cfg, data, first = small_run
    again = irae_train(cfg, ABLATIONS["irae"], data, r_d=4, bottleneck=6)
    for k in first.model.params:
        assert first.model.params[k].tobytes() == again.model.params[k].tobytes()
    assert first.history == again.history


def test_history_and_checkpoint(small_run, tmp_path):
    _, _, res = small_run
    assert res.history[0]["epoch"] == 0
    assert {"train_loss", "val_loss", "train_recon", "val_r_d_v"} <= set(res.history[0])
    best = min(range(len(res.history)), key=lambda i: res.history[i]["val_loss"])
    assert res.best_epoch == best
    write_history(res.history, tmp_path / "h.csv")
    assert (tmp_path / "h.csv").read_text().startswith("epoch,")
    assert res.model.r_v == 2 and res.model.head_min_singular_value > 0


def test_runs_all_epochs_when_improving(monkeypatch):
    import ivrepr.irae as irae_mod

    calls = iter(range(1000))
    monkeypatch.setattr(irae_mod, "_evaluate", lambda *a, **k: (100.0 - next(calls), {}))
    _, data = generate("linear1", Dims(n=300, m=10), 0, NOISELESS)
    res = irae_train(TrainConfig(epochs=30, patience=20, batch_size=64), ABLATIONS["vanilla_ae"], data)
    assert len(res.history) == 30 and res.best_epoch == 29


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(split=(0.5, 0.1, 0.1))
    with pytest.raises(ValueError):
        TrainConfig(epochs=5, patience=10)
    with pytest.raises(ValueError):
        TrainConfig(activation="gelu")
    assert TrainConfig.from_dict({"encoder_widths": [4, 3]}).encoder_widths == (4, 3)


@pytest.mark.slow
@pytest.mark.parametrize(
    "activation",
    [
        "relu",
        pytest.param(
            "tanh",
            marks=pytest.mark.xfail(strict=True, reason="tanh plateaus near 6.8x on this run; see decisions ledger"),
        ),
    ],
)
def test_quad1_reconstruction_beats_variance(activation):
    _, data = generate("quad1", Dims(n=4000, m=50), 0)
    res = irae_train(TrainConfig(epochs=200, patience=20, activation=activation), ABLATIONS["vanilla_ae"], data)
    X = data.X[res.split[2]]
    D, V = encode_split(res.model, X)
    mse = np.mean(np.sum((X - decode(res.model, D, V)) ** 2, axis=1))
    assert X.var(axis=0).sum() / mse >= 10.0


@pytest.mark.slow
def test_irae0_latent_is_instrument_driven():
    _, data = generate("linear1", Dims(n=4000, m=50), 0, NOISELESS)
    res = irae_train(TrainConfig(epochs=200, patience=20), ABLATIONS["irae0"], data)
    D, _ = encode_split(res.model, data.X)
    fit = ols_fit(data.Z, D)
    r2 = 1 - fit.residuals.var(axis=0).sum() / D.var(axis=0).sum()
    assert r2 >= 0.9
