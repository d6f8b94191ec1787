"""Synthetic wind-farm data with the same channel layout as the real dataset.

True hub-height wind follows an AR(1) process around a mean level. The
farm is split into two NWP grid cells with a constant wind offset between
them. Measured weather is the true cell-1 wind plus small noise; NWP
channels are the true cell winds plus a systematic bias and larger noise.

All magnitudes here are synthetic tunables, not estimates of any real
site.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NegativeWindSpeed
from .series import HOUR, MEASURED_CHANNELS, NWP_CHANNELS, TimeSeries, parse_timestamp

YEAR_2020_HOURS = 8784


@dataclass(frozen=True)
class FarmSpec:
    n_turbines: int = 18
    rated_power: float = 3.0  # MW per turbine
    cut_in: float = 4.0
    rated_speed: float = 12.5
    cut_off: float = 25.0
    cell_turbines: tuple[int, int] = (12, 6)

    def __post_init__(self):
        if not 0 < self.cut_in < self.rated_speed < self.cut_off:
            raise ValueError("need 0 < cut_in < rated_speed < cut_off")
        if self.rated_power <= 0 or self.n_turbines < 1:
            raise ValueError("rated_power and n_turbines must be positive")
        if sum(self.cell_turbines) != self.n_turbines:
            raise ValueError(f"cell_turbines {self.cell_turbines} must sum to n_turbines={self.n_turbines}")

    @property
    def capacity(self) -> float:
        return self.n_turbines * self.rated_power


@dataclass(frozen=True)
class WeatherSpec:
    phi: float = 0.97
    sigma: float = 0.8  # AR(1) innovation std, m/s
    mean_speed: float = 8.0
    measurement_noise: float = 0.3
    nwp_bias: float = 1.0
    nwp_noise: float = 1.5
    cell_offset: float = 0.6  # cell 2 minus cell 1, m/s
    direction_step: float = 5.0  # random-walk std, degrees per hour
    measured_direction_noise: float = 3.0
    nwp_direction_noise: float = 15.0
    start: str = "2020-01-01T00:00:00Z"

    def __post_init__(self):
        if not abs(self.phi) < 1:
            raise ValueError(f"|phi| must be < 1, got {self.phi}")
        for name in ("sigma", "measurement_noise", "nwp_noise", "direction_step",
                     "measured_direction_noise", "nwp_direction_noise"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


def power_curve(wind_speed, spec: FarmSpec = FarmSpec()):
    """Per-turbine output in MW.

    Zero below cut-in, cubic ramp up to rated speed, flat at rated power
    until cut-off, zero from cut-off on.
    """
    w = np.asarray(wind_speed, dtype=np.float64)
    if np.any(w < 0):
        raise NegativeWindSpeed(f"wind speed must be >= 0, min is {np.min(w)}")
    ramp = spec.rated_power * ((w - spec.cut_in) / (spec.rated_speed - spec.cut_in)) ** 3
    out = np.where(w < spec.cut_in, 0.0, np.where(w < spec.rated_speed, ramp, spec.rated_power))
    out = np.where(w >= spec.cut_off, 0.0, out)
    return out if out.ndim else float(out)


def _ar1(rng, n: int, phi: float, sigma: float) -> np.ndarray:
    eps = rng.standard_normal(n) * sigma
    x = np.empty(n)
    x[0] = eps[0] / np.sqrt(1.0 - phi * phi)  # stationary start
    for t in range(1, n):
        x[t] = phi * x[t - 1] + eps[t]
    return x


def generate(farm: FarmSpec = FarmSpec(), weather: WeatherSpec = WeatherSpec(), n_hours: int = YEAR_2020_HOURS,
             seed: int = 0) -> TimeSeries:
    """Simulate ``n_hours`` of hourly farm output with measured and NWP weather."""
    if n_hours < 1:
        raise ValueError("n_hours must be >= 1")
    rng = np.random.default_rng(seed)
    wind1 = np.maximum(weather.mean_speed + _ar1(rng, n_hours, weather.phi, weather.sigma), 0.0)
    wind2 = np.maximum(wind1 + weather.cell_offset, 0.0)
    direction = (270.0 + np.cumsum(rng.standard_normal(n_hours) * weather.direction_step)) % 360.0

    n1, n2 = farm.cell_turbines
    power = np.clip(n1 * power_curve(wind1, farm) + n2 * power_curve(wind2, farm), 0.0, farm.capacity)

    def noisy(x, sd):
        return x + rng.standard_normal(n_hours) * sd

    mws = np.maximum(noisy(wind1, weather.measurement_noise), 0.0)
    mwd = noisy(direction, weather.measured_direction_noise) % 360.0
    nwp = {
        "nwp_ws_c1": np.maximum(noisy(wind1 + weather.nwp_bias, weather.nwp_noise), 0.0),
        "nwp_wd_c1": noisy(direction, weather.nwp_direction_noise) % 360.0,
        "nwp_ws_c2": np.maximum(noisy(wind2 + weather.nwp_bias, weather.nwp_noise), 0.0),
        "nwp_wd_c2": noisy(direction, weather.nwp_direction_noise) % 360.0,
    }
    start = parse_timestamp(weather.start)
    ts = start + HOUR * np.arange(n_hours, dtype=np.int64)
    covs = dict(zip(MEASURED_CHANNELS, (mws, mwd)))
    covs.update({k: nwp[k] for k in NWP_CHANNELS})
    return TimeSeries(ts, power, covs, {}, farm.capacity)


def true_wind(farm: FarmSpec = FarmSpec(), weather: WeatherSpec = WeatherSpec(), n_hours: int = YEAR_2020_HOURS,
              seed: int = 0) -> np.ndarray:
    """The latent cell-1 wind that :func:`generate` draws for the same seed."""
    rng = np.random.default_rng(seed)
    return np.maximum(weather.mean_speed + _ar1(rng, n_hours, weather.phi, weather.sigma), 0.0)
