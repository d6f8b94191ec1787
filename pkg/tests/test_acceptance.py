"""Acceptance gate: one PASS/FAIL line per criterion, printed even under capture.

Run alone with ``pytest tests/test_acceptance.py -v``. The config-ordering
runs take roughly 20 minutes on one core.
"""

import json
import math
import time

import numpy as np
import pytest

import oracles
from gradcheck import check
from windcast import metrics
from windcast.analysis import acf, pacf
from windcast.cli import main, replay_argv
from windcast.deepar import DeepARConfig, DeepARNetwork, PredictionInterval
from windcast.neural import Dense, GRUCell, LSTMCell, Tensor, gaussian_nll, softplus
from windcast.pipeline import DatasetConfig, clamp_pi, dataset_config, run_experiment
from windcast.series import HOUR, TimeSeries
from windcast.synthetic import generate

GRAD_TOL = 1e-4
DRAWS = 20
SINE_BATCHES = 10


def verdict(capsys, number, name, ok, detail):
    with capsys.disabled():
        print(f"\n{'PASS' if ok else 'FAIL'} [{number}] {name}: {detail}")
    assert ok, detail


def close(a, b, tol=1e-9):
    return abs(a - b) <= tol * max(1.0, abs(b))


# -- 1. metric oracles --------------------------------------------------------------


def test_metric_oracles(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = {}
    for _ in range(100):
        h = int(rng.integers(1, 40))
        y = rng.uniform(0.5, 54.0, h)
        f = y + rng.normal(0.0, 5.0, h)
        lo = f - rng.uniform(0.0, 10.0, h)
        hi = f + rng.uniform(0.0, 10.0, h)
        q = float(rng.uniform(0.01, 0.99))
        alpha = float(rng.uniform(0.01, 0.5))
        m = int(rng.integers(1, 5))
        training = rng.uniform(0.0, 54.0, int(rng.integers(m + 2, 200)))
        pairs = {
            "rmse": (metrics.rmse(y, f), oracles.rmse(y, f)),
            "nrmse": (metrics.nrmse(y, f), oracles.nrmse(y, f)),
            "mape": (metrics.mape(y, f), oracles.mape(y, f)),
            "pinball": (metrics.pinball(y, f, q), oracles.pinball(y, f, q)),
            "wql": (metrics.wql(y, f, q), oracles.wql(y, f, q)),
            "picp": (metrics.picp(y, lo, hi), oracles.picp(y, lo, hi)),
            "msis": (
                metrics.msis(y, lo, hi, metrics.MsisContext(training, m, alpha)),
                oracles.msis(y, lo, hi, training, m, alpha),
            ),
        }
        for k, (a, b) in pairs.items():
            worst[k] = max(worst.get(k, 0.0), abs(a - b) / max(1.0, abs(b)))
    hand = {
        "msis": metrics.msis([5, 12], [0, 0], [10, 10], metrics.MsisContext(np.array([1.0, 2.0, 3.0]), 1, 0.05)) == 50.0,
        "wql": metrics.wql([10, 20], [8, 25], 0.5) == 7.0 / 30.0,
        "rmse": metrics.rmse([0, 0], [3, 4]) == math.sqrt(12.5),
        "nrmse": metrics.nrmse([2, 2], [3, 1]) == 0.5,
        "mape": metrics.mape([10], [9]) == 10.0,
        "pinball": metrics.pinball([10], [8], 0.5) == 1.0 and close(metrics.pinball([5], [7], 0.9), 0.2, 1e-15),
        "picp": metrics.picp([5, 12, 3, 9], [0] * 4, [10] * 4) == 0.75,
    }
    elapsed = time.perf_counter() - t0
    ok = max(worst.values()) <= 1e-9 and all(hand.values()) and elapsed < 5.0
    failed = [k for k, v in hand.items() if not v]
    verdict(capsys, 1, "metric oracles", ok,
            f"max rel diff {max(worst.values()):.1e} over 7 metrics x 100 instances, "
            f"hand examples {'all exact' if not failed else 'failed ' + str(failed)}, {elapsed:.2f}s")


# -- 2. gradient checks ------------------------------------------------------------


def _dense(rng):
    layer = Dense(4, 3, rng)
    x = Tensor(rng.normal(size=(5, 4)), requires_grad=True)
    return check(lambda: (layer(x) ** 2).sum(), [layer.weight, layer.bias, x])


def _softplus(rng):
    x = Tensor(rng.normal(scale=3.0, size=(7,)), requires_grad=True)
    return check(lambda: softplus(x).sum(), [x])


def _nll(rng):
    mu = Tensor(rng.normal(size=(6,)), requires_grad=True)
    pre = Tensor(rng.normal(size=(6,)), requires_grad=True)
    y = rng.normal(size=(6,))
    return check(lambda: gaussian_nll(mu, softplus(pre), y), [mu, pre])


def _cell(cls):
    def run(rng):
        cell = cls(3, 4, rng)
        x = Tensor(rng.normal(size=(2, 3)), requires_grad=True)
        state = tuple(Tensor(rng.normal(scale=0.5, size=(2, 4)), requires_grad=True) for _ in cell.zero_state(2))
        y = rng.normal(size=(2, 4))
        return check(lambda: gaussian_nll(cell.step(x, state)[0], 0.7, y), list(cell.parameters().values()) + [x, *state])

    return run


def _model(rng):
    kind = "lstm" if rng.integers(2) == 0 else "gru"
    cfg = DeepARConfig(cell_kind=kind, layers=2, hidden_units=4, dropout=0.2, context_length=7, horizon=4)
    net = DeepARNetwork(cfg, 3, seed=int(rng.integers(2**31)))
    x = rng.normal(size=(10, 2, 3))
    y = rng.normal(size=(4, 2))
    drop_seed = int(rng.integers(2**31))

    def loss():
        mu, sigma = net.forward(x, 4, np.random.default_rng(drop_seed), training=True)
        return gaussian_nll(mu, sigma, y)

    return check(loss, list(net.parameters().values()))


def test_gradient_checks(capsys):
    t0 = time.perf_counter()
    cases = {"dense": _dense, "softplus": _softplus, "nll": _nll, "lstm step": _cell(LSTMCell),
             "gru step": _cell(GRUCell), "10-step model": _model}
    worst = {name: max(fn(np.random.default_rng([k, d])) for d in range(DRAWS))
             for k, (name, fn) in enumerate(cases.items())}
    elapsed = time.perf_counter() - t0
    ok = max(worst.values()) < GRAD_TOL and elapsed < 60.0
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    verdict(capsys, 2, "gradient checks", ok, f"worst rel err over {DRAWS} draws: {detail}; {elapsed:.1f}s")


# -- 3. learnability ---------------------------------------------------------------


def test_sine_learnability(capsys):
    t0 = time.perf_counter()
    n = 2000
    t = np.arange(n)
    series = TimeSeries(1_577_836_800 + HOUR * t, 27.0 + 20.0 * np.sin(2 * np.pi * t / 24), {}, {}, 54.0)
    cfg = DeepARConfig(cell_kind="lstm", context_length=36, layers=2, hidden_units=64, dropout=0.2,
                       learning_rate=1e-3, max_epochs=200, batches_per_epoch=SINE_BATCHES, time_features=False)
    res = run_experiment(series, DatasetConfig("sine", ()), cfg, seed=0)
    elapsed = time.perf_counter() - t0
    r = res.report
    ok = r.nrmse < 0.10 and 0.85 <= r.picp <= 1.0 and elapsed < 300.0
    verdict(capsys, 3, "sine learnability", ok,
            f"test NRMSE {r.nrmse:.4f}, PICP {r.picp:.3f}, {len(res.trained.history)} epochs, {elapsed:.0f}s")


# -- 4 and 5. configuration ordering and baselines -----------------------------------

LIGHT = DeepARConfig(layers=1, hidden_units=32, max_epochs=100, batches_per_epoch=50, early_stopping_patience=10,
                     num_sample_paths=100)
SEEDS = (0, 1, 2)


@pytest.fixture(scope="module")
def synthetic_runs():
    t0 = time.perf_counter()
    runs = {}
    for seed in SEEDS:
        series = generate(seed=seed)
        for name in ("config1", "config2", "config3"):
            runs[seed, name] = run_experiment(series, dataset_config(name), LIGHT, seed=seed)
    return runs, time.perf_counter() - t0


def test_config_ordering(capsys, synthetic_runs):
    runs, elapsed = synthetic_runs
    wins, lines = 0, []
    for seed in SEEDS:
        r = {c: runs[seed, c].report for c in ("config1", "config2", "config3")}
        won = all(r["config1"].msis < r[c].msis and r["config1"].mean_wql < r[c].mean_wql for c in ("config2", "config3"))
        wins += won
        lines.append(f"seed {seed} MSIS " + "/".join(f"{r[c].msis:.2f}" for c in r)
                     + " wQL " + "/".join(f"{r[c].mean_wql:.4f}" for c in r))
    ok = wins >= 2 and elapsed < 1800.0
    verdict(capsys, 4, "config ordering", ok, f"config1 best in {wins}/3 seeds ({'; '.join(lines)}), {elapsed:.0f}s")


def test_baseline_direction(capsys, synthetic_runs):
    runs, _ = synthetic_runs
    ok, lines = True, []
    for seed in SEEDS:
        res = runs[seed, "config1"]
        deep = res.report.nrmse
        pers = res.baseline_reports["persistence"].nrmse
        mod = res.baseline_reports["modified_persistence"].nrmse
        ok &= deep < mod < pers
        lines.append(f"seed {seed} {deep:.3f} < {mod:.3f} < {pers:.3f}")
    verdict(capsys, 5, "baseline direction", ok, "NRMSE deepar < modified < persistence: " + "; ".join(lines))


# -- 6. clamping ---------------------------------------------------------------------


def test_clamping(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(6)
    cap = 54.0
    ok, strict_cases = True, 0
    for _ in range(1000):
        h = int(rng.integers(1, 37))
        y = np.clip(rng.uniform(-5.0, cap + 5.0, h), 0.0, cap)  # mass at 0 and at capacity
        lower = rng.uniform(-10.0, cap, h)
        median = lower + rng.exponential(8.0, h)
        upper = median + rng.exponential(8.0, h)
        alpha = float(rng.choice([0.05, 0.1, 0.2]))
        ctx = metrics.MsisContext(rng.uniform(0.0, cap, 50), 1, alpha)
        pi = PredictionInterval(alpha, lower, median, upper)
        capped = clamp_pi(pi, cap)
        before = metrics.msis(y, pi.lower, pi.upper, ctx)
        after = metrics.msis(y, capped.lower, capped.upper, ctx)
        ok &= after <= before
        ok &= metrics.picp(y, pi.lower, pi.upper) == metrics.picp(y, capped.lower, capped.upper)
        if np.any(upper > cap):
            strict_cases += 1
            ok &= after < before
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 10.0
    verdict(capsys, 6, "clamping", ok,
            f"1000 instances, {strict_cases} with upper > capacity all strictly improved, PICP unchanged, {elapsed:.2f}s")


# -- 7. determinism ------------------------------------------------------------------

CLI_CONFIG = """
[data]
n_hours = 1200
[model]
layers = 1
hidden_units = 8
context_length = 24
horizon = 12
max_epochs = 3
batches_per_epoch = 5
num_sample_paths = 30
[experiment]
stride = 12
[run]
seed = 11
"""


def test_cli_replay(capsys, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    (tmp_path / "run.cfg").write_text(CLI_CONFIG)
    cfg = ["--config", "run.cfg", "--quiet"]
    steps = [
        ("g", ["generate"]),
        ("a", ["analyze", "--input", "g/data.csv"]),
        ("t", ["train", "--input", "g/data.csv"]),
        ("f", ["forecast", "--model", "t/model.json", "--input", "g/data.csv", "--samples"]),
        ("e", ["evaluate", "--forecast", "f/forecasts.csv", "--input", "g/data.csv"]),
    ]
    ok, compared = True, 0
    for out, argv in steps:
        assert main(cfg + ["--out", out] + argv) == 0
    for out, _ in steps:
        assert main(replay_argv(tmp_path / out / "manifest.json", out + "_replay")) == 0
        first = json.loads((tmp_path / out / "manifest.json").read_text())["outputs"]
        second = json.loads((tmp_path / (out + "_replay") / "manifest.json").read_text())["outputs"]
        ok &= first == second
        for name in first:
            ok &= (tmp_path / out / name).read_bytes() == (tmp_path / (out + "_replay") / name).read_bytes()
            compared += 1
    verdict(capsys, 7, "determinism", ok, f"{compared} output files across {len(steps)} verbs replayed bit-identically")


# -- 8. ACF/PACF ---------------------------------------------------------------------


def test_ar1_correlogram(capsys):
    rng = np.random.default_rng(8)
    e = rng.normal(size=2200)
    x = np.zeros(2200)
    for t in range(1, 2200):
        x[t] = 0.8 * x[t - 1] + e[t]
    x = x[200:]
    r = acf(x, 20)
    p = pacf(x, 20)
    inside = np.abs(p.values[3:21]) <= p.band
    ok = 0.75 <= r.values[1] <= 0.85 and inside.mean() >= 0.8
    verdict(capsys, 8, "ACF/PACF", ok,
            f"acf(1) = {r.values[1]:.4f}, pacf inside band at {int(inside.sum())}/18 lags in 3..20")
