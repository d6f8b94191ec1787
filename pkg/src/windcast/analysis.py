"""Sample autocorrelation and partial autocorrelation with 95% bands."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConstantSeries, LagTooLarge, NumericalSingularity

Z_95 = 1.96


@dataclass(frozen=True)
class CorrelogramResult:
    lags: np.ndarray
    values: np.ndarray
    band: float  # half-width of the +/- z/sqrt(n) band
    kind: str = "acf"

    def outside_band(self) -> np.ndarray:
        """Boolean mask of lags (excluding 0) whose value leaves the band."""
        mask = np.abs(self.values) > self.band
        mask[0] = False
        return mask

    def write(self, path) -> None:
        """Two-column ``lag value`` file with the band in a header comment."""
        with Path(path).open("w", encoding="utf-8") as fh:
            fh.write(f"# {self.kind} band={self.band!r}\n")
            fh.write("lag value\n")
            for k, v in zip(self.lags, self.values):
                fh.write(f"{int(k)} {float(v)!r}\n")


def _check(y, K: int) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    if K < 0:
        raise LagTooLarge(f"max lag must be non-negative, got {K}")
    if len(y) < K + 1:
        raise LagTooLarge(f"need at least {K + 1} samples for lag {K}, got {len(y)}")
    return y


def _acf_values(y: np.ndarray, K: int) -> np.ndarray:
    d = y - y.mean()
    denom = float(d @ d)
    if denom == 0.0 or not np.isfinite(denom):
        raise ConstantSeries("series has zero variance")
    n = len(d)
    r = np.empty(K + 1)
    r[0] = 1.0
    for k in range(1, K + 1):
        r[k] = float(d[: n - k] @ d[k:]) / denom
    return r


def acf(y, K: int = 50) -> CorrelogramResult:
    """Biased sample autocorrelation for lags 0..K.

    r_k = sum_t (y_t - ybar)(y_{t+k} - ybar) / sum_t (y_t - ybar)^2
    """
    y = _check(y, K)
    return CorrelogramResult(np.arange(K + 1), _acf_values(y, K), Z_95 / np.sqrt(len(y)), "acf")


def durbin_levinson(r: np.ndarray) -> np.ndarray:
    """Partial autocorrelations phi_kk from autocorrelations r_0..r_K."""
    K = len(r) - 1
    pac = np.empty(K + 1)
    pac[0] = 1.0
    if K == 0:
        return pac
    phi = np.zeros(K + 1)
    phi[1] = r[1]
    pac[1] = r[1]
    v = 1.0 - r[1] ** 2
    for k in range(2, K + 1):
        if v <= 1e-14:
            raise NumericalSingularity(f"innovation variance vanished at lag {k - 1}")
        num = r[k] - phi[1:k] @ r[k - 1 : 0 : -1]
        a = num / v
        new = phi.copy()
        new[1:k] = phi[1:k] - a * phi[k - 1 : 0 : -1]
        new[k] = a
        phi = new
        pac[k] = a
        v *= 1.0 - a * a
    return pac


def pacf(y, K: int = 50) -> CorrelogramResult:
    y = _check(y, K)
    pac = durbin_levinson(_acf_values(y, K))
    return CorrelogramResult(np.arange(K + 1), pac, Z_95 / np.sqrt(len(y)), "pacf")
