import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from windcast.errors import NegativeWindSpeed
from windcast.series import CSV_COLUMNS
from windcast.synthetic import YEAR_2020_HOURS, FarmSpec, WeatherSpec, generate, power_curve, true_wind


def test_power_curve_examples():
    assert power_curve(2.0) == 0.0
    assert power_curve(20.0) == 3.0
    assert power_curve(26.0) == 0.0
    assert power_curve(12.5) == 3.0
    assert power_curve(8.25) == pytest.approx(3.0 * 0.125)
    with pytest.raises(NegativeWindSpeed):
        power_curve(-1.0)


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 12.5), st.floats(0, 12.5))
def test_power_curve_monotone_on_ramp(a, b):
    lo, hi = sorted((a, b))
    assert power_curve(lo) <= power_curve(hi)


def test_power_curve_regimes():
    w = np.linspace(0, 30, 601)
    p = power_curve(w)
    spec = FarmSpec()
    assert np.all(p[(w >= spec.rated_speed) & (w < spec.cut_off)] == spec.rated_power)
    assert np.all(p[(w < spec.cut_in) | (w >= spec.cut_off)] == 0.0)


def test_farm_spec():
    assert FarmSpec().capacity == 54.0
    with pytest.raises(ValueError):
        FarmSpec(cut_in=13.0)
    with pytest.raises(ValueError):
        FarmSpec(cell_turbines=(10, 6))
    with pytest.raises(ValueError):
        WeatherSpec(phi=1.0)


def test_default_year():
    s = generate(seed=0)
    assert len(s) == YEAR_2020_HOURS
    assert ("timestamp", "power_mw", *s.channel_names) == CSV_COLUMNS
    assert np.all((s.target >= 0) & (s.target <= 54.0))


@pytest.mark.parametrize("seed", range(5))
def test_power_within_capacity(seed):
    s = generate(n_hours=2000, seed=seed)
    assert 0.0 <= s.target.min() and s.target.max() <= s.capacity


def test_noise_free_channels_equal_true_wind():
    weather = WeatherSpec(measurement_noise=0.0, nwp_noise=0.0, nwp_bias=0.0, cell_offset=0.0)
    s = generate(weather=weather, n_hours=500, seed=3)
    w = true_wind(weather=weather, n_hours=500, seed=3)
    assert np.array_equal(s.covariates["mws"], w)
    assert np.array_equal(s.covariates["nwp_ws_c1"], w)


def test_nwp_bias_shows_in_means():
    weather = WeatherSpec()
    n = 8784
    s = generate(weather=weather, n_hours=n, seed=7)
    diff = s.covariates["nwp_ws_c1"].mean() - s.covariates["mws"].mean()
    assert abs(diff - weather.nwp_bias) <= 4 * weather.nwp_noise / np.sqrt(n)


def test_deterministic():
    a, b = generate(n_hours=300, seed=11), generate(n_hours=300, seed=11)
    assert np.array_equal(a.target, b.target)
    for c in a.channel_names:
        assert np.array_equal(a.covariates[c], b.covariates[c])
    assert not np.array_equal(a.target, generate(n_hours=300, seed=12).target)
