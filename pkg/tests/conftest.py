import numpy as np
import pytest

from windcast.series import HOUR, MEASURED_CHANNELS, NWP_CHANNELS, TimeSeries, parse_timestamp

START = parse_timestamp("2020-01-01T00:00:00Z")


def make_series(n, seed=0, channels=MEASURED_CHANNELS + NWP_CHANNELS, capacity=54.0, target=None):
    rng = np.random.default_rng(seed)
    ts = START + HOUR * np.arange(n, dtype=np.int64)
    y = rng.uniform(0.0, capacity, n) if target is None else np.asarray(target, dtype=float)
    covs = {}
    for c in channels:
        covs[c] = rng.uniform(0.0, 360.0, n) if "wd" in c else rng.uniform(0.0, 20.0, n)
    return TimeSeries(ts, y, covs, {}, capacity)


@pytest.fixture
def series_factory():
    return make_series
