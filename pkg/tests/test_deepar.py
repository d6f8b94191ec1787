import dataclasses

import numpy as np
import pytest

from conftest import make_series
from gradcheck import check
from windcast.deepar import (
    DeepARConfig,
    DeepARModel,
    DeepARNetwork,
    ForecastDistribution,
    PredictionInterval,
    forecast,
    forecast_batch,
    path_normals,
    prediction_interval,
    quantiles,
    read_forecast_csv,
    scale_context,
    train,
    unscale,
    write_forecast_csv,
)
from windcast.errors import CovariateHorizonMismatch, DivergedLoss, EmptyDistribution, ModelNotTrained
from windcast.neural import gaussian_nll
from windcast.series import split, window_at

SMALL = DeepARConfig(layers=1, hidden_units=8, dropout=0.0, context_length=12, horizon=6, num_sample_paths=50,
                     max_epochs=3, batches_per_epoch=3, batch_size=8)


def sine_series(n=400, amplitude=20.0, capacity=54.0, channels=()):
    t = np.arange(n)
    return make_series(n, channels=channels, capacity=capacity, target=25.0 + amplitude * np.sin(2 * np.pi * t / 24))


def frozen_model(config=SMALL, series=None, seed=0):
    series = series if series is not None else make_series(200)
    return DeepARModel.for_series(config, series, seed).freeze(), series


def test_config_validation():
    for bad in (dict(cell_kind="rnn"), dict(layers=0), dict(dropout=1.0), dict(learning_rate=0.0),
                dict(num_sample_paths=1), dict(horizon=0), dict(optimizer="rmsprop")):
        with pytest.raises(ValueError):
            DeepARConfig(**bad)
    assert DeepARConfig().window_length == 72


# -- quantiles and intervals ----------------------------------------------------------


def _dist(samples):
    samples = np.asarray(samples, dtype=float)
    return ForecastDistribution(samples, 0, np.arange(samples.shape[1]))


def test_median_of_1_to_100():
    q = quantiles(_dist(np.arange(1, 101)[:, None]), [0.5])
    assert q[0, 0] == 50.5


def test_quantiles_monotone():
    rng = np.random.default_rng(0)
    d = _dist(rng.normal(size=(37, 8)))
    q = quantiles(d, [0.025, 0.5, 0.975])
    assert np.all(np.diff(q, axis=0) >= 0)
    pi = prediction_interval(d, 0.05)
    assert np.all(pi.lower <= pi.median) and np.all(pi.median <= pi.upper)


def test_normal_quantile():
    d = _dist(np.random.default_rng(1).standard_normal((10000, 1)))
    assert abs(quantiles(d, [0.975])[0, 0] - 1.959964) <= 0.08


def test_too_few_paths():
    with pytest.raises(EmptyDistribution):
        quantiles(_dist(np.zeros((1, 3))), [0.5])


def test_interval_order_enforced():
    with pytest.raises(ValueError):
        PredictionInterval(0.05, np.array([2.0]), np.array([1.0]), np.array([3.0]))


# -- scaling -----------------------------------------------------------------------------


def test_scale_context_examples():
    scaled, nu = scale_context(np.zeros(5))
    assert nu == 1.0 and np.array_equal(scaled, np.zeros(5))
    scaled, nu = scale_context(np.full(4, 9.0))
    assert nu == 10.0 and np.allclose(scaled, 0.9)
    x = np.random.default_rng(2).uniform(0, 54, 36)
    s, nu = scale_context(x)
    assert np.max(np.abs(unscale(s, nu) - x)) <= 1e-12


@pytest.mark.parametrize("c", [0.5, 3.0, 17.0])
def test_sampling_is_scale_equivariant(c):
    base = make_series(120, seed=3)
    scaled = type(base)(base.timestamps, base.target * c, base.covariates, base.future_known, base.capacity * c)
    m1 = DeepARModel.for_series(SMALL, base, seed=4).freeze()
    m2 = DeepARModel.for_series(SMALL, scaled, seed=4).freeze()
    d1 = forecast(m1, window_at(base, 60, 12, 6), 20, seed=9)
    d2 = forecast(m2, window_at(scaled, 60, 12, 6), 20, seed=9)
    assert np.max(np.abs(d2.samples - c * d1.samples)) <= 1e-8 * max(1.0, c * np.max(np.abs(d1.samples)))


# -- network -----------------------------------------------------------------------------


@pytest.mark.parametrize("kind", ["lstm", "gru"])
def test_full_model_gradient(kind):
    cfg = dataclasses.replace(SMALL, cell_kind=kind, layers=2, hidden_units=4, dropout=0.2)
    rng = np.random.default_rng(6)
    net = DeepARNetwork(cfg, 3, seed=1)
    x = rng.normal(size=(10, 2, 3))
    y = rng.normal(size=(4, 2))

    def loss():
        mu, sigma = net.forward(x, 4, np.random.default_rng(5), training=True)
        return gaussian_nll(mu, sigma, y)

    assert check(loss, list(net.parameters().values())) < 1e-4


def test_input_features():
    model, series = frozen_model()
    # lag + mws + (mwd sin, cos) + nwp ws + (wd sin, cos) x 2 cells + availability flag + hour sin/cos
    assert model.input_size == 1 + 1 + 2 + 2 * 3 + 1 + 2
    x, y = model.training_inputs([window_at(series, 30, 12, 6)])
    assert x.shape == (17, 1, model.input_size) and y.shape == (6, 1)
    flag = x[:, 0, 1 + 9]
    assert np.all(flag[:11] == 1.0) and np.all(flag[11:] == 0.0)


# -- forecasting ---------------------------------------------------------------------------


def test_forecast_is_deterministic_and_seed_dependent():
    model, series = frozen_model()
    w = window_at(series, 100, 12, 6)
    a = forecast(model, w, 30, seed=1)
    b = forecast(model, w, 30, seed=1)
    c = forecast(model, w, 30, seed=2)
    assert np.array_equal(a.samples, b.samples)
    assert not np.array_equal(a.samples, c.samples)
    assert a.samples.shape == (30, 6)
    assert a.origin_timestamp == series.timestamps[100]


def test_paths_do_not_depend_on_path_count():
    model, series = frozen_model()
    w = window_at(series, 100, 12, 6)
    few = forecast(model, w, 5, seed=3).samples
    many = forecast(model, w, 40, seed=3).samples
    assert np.array_equal(few, many[:5])
    assert np.array_equal(path_normals(3, 2, 6), path_normals(3, 40, 6)[:2])


def test_batched_forecast_matches_single():
    model, series = frozen_model()
    wins = [window_at(series, o, 12, 6) for o in (40, 70, 100)]
    batch = forecast_batch(model, wins, 10, [4, 5, 6])
    for w, s, d in zip(wins, [4, 5, 6], batch):
        # same draws; BLAS blocking can move the last bits with the batch size
        assert np.allclose(forecast(model, w, 10, s).samples, d.samples, rtol=1e-12, atol=1e-12)


def test_degenerate_sigma_collapses_paths():
    model, series = frozen_model()
    model.network.sigma_head.weight.data[...] = 0.0
    model.network.sigma_head.bias.data[...] = -60.0
    d = forecast(model, window_at(series, 100, 12, 6), 25, seed=0)
    assert np.allclose(d.samples, d.samples[0], rtol=0, atol=1e-12)


def test_first_step_sample_mean():
    model, series = frozen_model(dataclasses.replace(SMALL, num_sample_paths=2000))
    w = window_at(series, 100, 12, 6)
    x, _ = model.training_inputs([w])
    mu, sigma = model.network.forward(x, 6)
    nu = scale_context(w.context, model.scale_offset)[1]
    d = forecast(model, w, 2000, seed=11)
    mu1, s1 = mu.data[0, 0] * nu, sigma.data[0, 0] * nu
    assert abs(d.samples[:, 0].mean() - mu1) <= 3 * s1 / np.sqrt(2000)


def test_untrained_model_refuses_to_forecast():
    series = make_series(200)
    model = DeepARModel.for_series(SMALL, series)
    with pytest.raises(ModelNotTrained):
        forecast(model, window_at(series, 100, 12, 6))


def test_short_future_covariates():
    model, series = frozen_model()
    w = window_at(series, 100, 12, 6)
    short = dataclasses.replace(w, future_covariates=w.future_covariates[:5], future_available=w.future_available[:5])
    with pytest.raises(CovariateHorizonMismatch):
        forecast(model, short)


# -- training -------------------------------------------------------------------------------


def test_training_reduces_loss_on_a_sine():
    s = sine_series(600)
    tr, va, _ = split(s, min_length=18)
    cfg = dataclasses.replace(SMALL, max_epochs=25, batches_per_epoch=8, learning_rate=1e-2)
    result = train(cfg, tr, va, seed=0)
    hist = result.history
    assert hist[-1]["train_nll"] < hist[0]["train_nll"]
    assert result.best_val_nll <= min(h["val_nll"] for h in hist)
    assert result.best_val_nll <= result.final_val_nll


def test_constant_target_learns_level():
    c = 10.0
    s = make_series(500, channels=(), target=np.full(500, c))
    tr, va, _ = split(s, min_length=18)
    cfg = dataclasses.replace(SMALL, max_epochs=60, batches_per_epoch=10, learning_rate=1e-2,
                              early_stopping_patience=60, time_features=False)
    result = train(cfg, tr, va, seed=1)
    d = forecast(result.model, window_at(s, 400, 12, 6), 200, seed=0)
    assert abs(np.mean(d.samples[:, 0]) - c) <= 0.05 * c
    # the predicted spread narrows as training proceeds
    nll = [h["train_nll"] for h in result.history]
    assert np.mean(nll[-10:]) < np.mean(nll[:10])


def test_restored_checkpoint_has_best_validation_nll():
    s = sine_series(500)
    tr, va, _ = split(s, min_length=18)
    cfg = dataclasses.replace(SMALL, max_epochs=12, batches_per_epoch=4, learning_rate=3e-2, early_stopping_patience=3)
    result = train(cfg, tr, va, seed=2)
    from windcast.deepar import _nll_np
    from windcast.series import windows

    x, y = result.model.training_inputs(windows(va, 12, 6))
    assert _nll_np(result.model.network, x, y) == pytest.approx(result.best_val_nll, rel=1e-12)
    assert len(result.history) <= 12


def test_huge_learning_rate_diverges():
    s = sine_series(400)
    tr, va, _ = split(s, min_length=18)
    cfg = dataclasses.replace(SMALL, learning_rate=1e3, max_epochs=30)
    with pytest.raises(DivergedLoss):
        train(cfg, tr, va, seed=0)


def test_training_is_deterministic():
    s = sine_series(400, channels=("mws", "nwp_ws_c1"))
    tr, va, _ = split(s, min_length=18)
    cfg = dataclasses.replace(SMALL, dropout=0.2)
    a, b = train(cfg, tr, va, seed=5), train(cfg, tr, va, seed=5)
    assert a.history == b.history


# -- persistence -----------------------------------------------------------------------------


def test_model_save_load(tmp_path):
    model, series = frozen_model()
    p = tmp_path / "m.json"
    model.save(p)
    back = DeepARModel.load(p)
    w = window_at(series, 90, 12, 6)
    assert np.array_equal(forecast(model, w, 10, 1).samples, forecast(back, w, 10, 1).samples)


def test_forecast_csv_round_trip(tmp_path):
    model, series = frozen_model()
    wins = [window_at(series, o, 12, 6) for o in (50, 56)]
    dists = forecast_batch(model, wins, 10, [0, 1])
    pis = [prediction_interval(d) for d in dists]
    p = tmp_path / "f.csv"
    write_forecast_csv(p, pis, dists, origins=[w.origin_timestamp for w in wins])
    header = p.read_text().splitlines()[0].split(",")
    assert header[:5] == ["timestamp", "median", "lower", "upper", "origin"] and len(header) == 15
    table = read_forecast_csv(p)
    assert np.array_equal(table.median, np.concatenate([pi.median for pi in pis]))
    assert np.array_equal(table.origins, np.repeat([series.timestamps[50], series.timestamps[56]], 6))
