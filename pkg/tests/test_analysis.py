import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from windcast.analysis import acf, durbin_levinson, pacf
from windcast.errors import ConstantSeries, LagTooLarge, NumericalSingularity


def acf_oracle(y, K):
    y = [float(v) for v in y]
    n = len(y)
    m = sum(y) / n
    den = sum((v - m) ** 2 for v in y)
    return [sum((y[t] - m) * (y[t + k] - m) for t in range(n - k)) / den for k in range(K + 1)]


def pacf_oracle(y, K):
    """Last coefficient of the order-k Yule-Walker solution."""
    r = np.array(acf_oracle(y, K))
    out = [1.0]
    for k in range(1, K + 1):
        R = np.array([[r[abs(i - j)] for j in range(k)] for i in range(k)])
        out.append(np.linalg.solve(R, r[1 : k + 1])[-1])
    return np.array(out)


def ar1(phi, n, seed):
    rng = np.random.default_rng(seed)
    e = rng.standard_normal(n)
    y = np.empty(n)
    y[0] = e[0]
    for t in range(1, n):
        y[t] = phi * y[t - 1] + e[t]
    return y


def test_lag_zero_is_one():
    assert acf([1.0, 3.0, 2.0, 5.0], 2).values[0] == 1.0


def test_alternating_series():
    assert acf([1, -1, 1, -1], 1).values[1] == pytest.approx(-0.75, abs=1e-15)


def test_constant_series():
    with pytest.raises(ConstantSeries):
        acf([5, 5, 5, 5], 1)
    with pytest.raises(ConstantSeries):
        pacf([5, 5, 5, 5], 1)


def test_lag_too_large():
    with pytest.raises(LagTooLarge):
        acf([1.0, 2.0, 3.0], 3)


@pytest.mark.parametrize("seed", range(5))
def test_matches_oracles(seed):
    y = np.random.default_rng(seed).normal(size=120).cumsum()
    assert np.allclose(acf(y, 15).values, acf_oracle(y, 15), atol=1e-12)
    assert np.allclose(pacf(y, 15).values, pacf_oracle(y, 15), atol=1e-9)


def test_pacf_first_lag_equals_acf():
    y = ar1(0.5, 300, 3)
    assert pacf(y, 5).values[1] == acf(y, 5).values[1]


def test_white_noise_pacf_mostly_inside_band():
    y = np.random.default_rng(11).standard_normal(2000)
    res = pacf(y, 20)
    inside = np.abs(res.values[1:]) < res.band
    assert inside.mean() >= 0.9


def test_ar1_partial_autocorrelation():
    y = ar1(0.8, 2000, 0)
    res = pacf(y, 20)
    assert abs(res.values[1] - 0.8) <= 0.05
    assert np.mean(np.abs(res.values[3:]) < res.band) >= 0.8


def test_band_value():
    assert acf(np.arange(100.0), 3).band == pytest.approx(1.96 / 10.0)


def test_singular_toeplitz():
    with pytest.raises(NumericalSingularity):
        durbin_levinson(np.array([1.0, 1.0, 1.0]))


def test_write(tmp_path):
    res = acf(ar1(0.5, 100, 1), 4)
    p = tmp_path / "acf.txt"
    res.write(p)
    lines = p.read_text().splitlines()
    assert lines[0].startswith("# acf band=")
    assert len(lines) == 2 + 5
    assert float(lines[2].split()[1]) == 1.0


series_st = arrays(np.float64, st.integers(20, 80), elements=st.floats(-100, 100, allow_nan=False))


@settings(max_examples=60, deadline=None)
@given(series_st)
def test_reversal_and_affine_invariance(y):
    if np.ptp(y) < 1e-3:
        return
    K = 5
    base = acf(y, K).values
    assert np.allclose(acf(y[::-1], K).values, base, atol=1e-10)
    assert np.allclose(acf(-2.5 * y + 7.0, K).values, base, atol=1e-10)
    assert np.all(np.abs(base) <= 1.0 + 1e-12)
