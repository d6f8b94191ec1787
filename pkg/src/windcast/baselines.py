"""Persistence reference forecasts."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .analysis import acf
from .errors import ModelNotFitted


def persistence_forecast(last_value: float, H: int) -> np.ndarray:
    """Repeat the value observed at the forecast origin over the horizon."""
    if H < 1:
        raise ValueError("H must be >= 1")
    return np.full(H, float(last_value))


@dataclass
class ModifiedPersistenceModel:
    """Blend of the last value and the training mean, weighted by the training ACF.

    yhat_{t+k} = a_k * y_t + (1 - a_k) * ybar, with a_k the lag-k
    autocorrelation of the training series. Negative a_k are kept.
    """

    lag_correlations: np.ndarray | None = None  # a_1..a_H
    mean: float | None = None

    @property
    def fitted(self) -> bool:
        return self.lag_correlations is not None and self.mean is not None

    def fit(self, training, H: int) -> ModifiedPersistenceModel:
        y = np.asarray(training, dtype=np.float64)
        self.lag_correlations = acf(y, H).values[1:].copy()
        self.mean = float(np.mean(y))
        return self

    def forecast(self, last_value: float, H: int | None = None) -> np.ndarray:
        return modified_persistence_forecast(self, last_value, H)


def modified_persistence_forecast(model: ModifiedPersistenceModel, last_value: float, H: int | None = None) -> np.ndarray:
    if not model.fitted:
        raise ModelNotFitted("modified persistence model has not been fitted")
    a = np.asarray(model.lag_correlations, dtype=np.float64)
    H = len(a) if H is None else H
    if H > len(a):
        raise ValueError(f"model was fitted for {len(a)} steps, asked for {H}")
    a = a[:H]
    return a * float(last_value) + (1.0 - a) * model.mean
