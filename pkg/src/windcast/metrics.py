"""Point and interval scores.

All functions are pure and accept array-likes. Definitions follow the
usual forecasting-competition conventions; notes below only flag the
choices that differ between libraries.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    InvalidQuantile,
    InvertedBounds,
    LengthMismatch,
    ZeroMeanTarget,
    ZeroScalingDenominator,
    ZeroTargetSum,
    ZeroTargetValue,
)

REPORT_LEVELS = (0.025, 0.975)


def _pair(y, yhat):
    y = np.asarray(y, dtype=np.float64).ravel()
    yhat = np.asarray(yhat, dtype=np.float64).ravel()
    if len(y) != len(yhat):
        raise LengthMismatch(f"{len(y)} observations vs {len(yhat)} predictions")
    if len(y) == 0:
        raise LengthMismatch("empty input")
    return y, yhat


def rmse(y, yhat) -> float:
    y, yhat = _pair(y, yhat)
    return float(np.sqrt(np.mean((yhat - y) ** 2)))


def nrmse(y, yhat) -> float:
    """RMSE divided by the mean observation."""
    y, yhat = _pair(y, yhat)
    ybar = float(np.mean(y))
    if ybar == 0.0:
        raise ZeroMeanTarget("mean observation is zero")
    return rmse(y, yhat) / ybar


def mape(y, yhat) -> float:
    """Mean absolute percentage error, in percent.

    Raises on any zero observation instead of skipping it.
    """
    y, yhat = _pair(y, yhat)
    if np.any(y == 0):
        raise ZeroTargetValue(f"{int(np.sum(y == 0))} zero observation(s)")
    return float(100.0 * np.mean(np.abs((y - yhat) / y)))


def _check_q(q):
    if not 0.0 < q < 1.0:
        raise InvalidQuantile(f"quantile level must lie in (0, 1), got {q}")


def pinball_terms(y, yhat, q: float) -> np.ndarray:
    _check_q(q)
    y, yhat = _pair(y, yhat)
    diff = y - yhat
    return np.where(diff >= 0, diff * q, -diff * (1.0 - q))


def pinball(y, yhat, q: float) -> float:
    """Quantile loss averaged over the inputs."""
    return float(np.mean(pinball_terms(y, yhat, q)))


def wql(y, yhat, q: float) -> float:
    """Weighted quantile loss: 2 * sum(pinball) / sum(y)."""
    terms = pinball_terms(y, yhat, q)
    total = float(np.sum(y))
    if total == 0.0:
        raise ZeroTargetSum("sum of observations is zero")
    return 2.0 * float(np.sum(terms)) / total


def mean_wql(y, quantile_forecasts: Mapping[float, Sequence[float]]) -> float:
    return float(np.mean([wql(y, f, q) for q, f in quantile_forecasts.items()]))


def _bounds(y, lower, upper):
    y, lower = _pair(y, lower)
    _, upper = _pair(y, upper)
    if np.any(lower > upper):
        raise InvertedBounds(f"{int(np.sum(lower > upper))} step(s) with lower > upper")
    return y, lower, upper


def picp(y, lower, upper) -> float:
    """Fraction of observations inside the closed interval [lower, upper]."""
    y, lower, upper = _bounds(y, lower, upper)
    return float(np.mean((y >= lower) & (y <= upper)))


def quantile_coverage(y, bound) -> float:
    """Fraction of observations at or below a quantile forecast."""
    y, bound = _pair(y, bound)
    return float(np.mean(y <= bound))


def msis_scale(training, m: int = 1) -> float:
    """Mean absolute m-lag difference of the training series."""
    training = np.asarray(training, dtype=np.float64).ravel()
    if m < 1:
        raise ValueError(f"seasonality must be >= 1, got {m}")
    if len(training) <= m:
        raise ZeroScalingDenominator(f"training series of length {len(training)} too short for m={m}")
    d = float(np.mean(np.abs(training[m:] - training[:-m])))
    if d == 0.0:
        raise ZeroScalingDenominator("training series has no m-lag variation")
    return d


@dataclass(frozen=True)
class MsisContext:
    training: np.ndarray
    m: int = 1
    alpha: float = 0.05

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise InvalidQuantile(f"alpha must lie in (0, 1), got {self.alpha}")

    @property
    def scale(self) -> float:
        return msis_scale(self.training, self.m)


def interval_score_terms(y, lower, upper, alpha: float) -> np.ndarray:
    y, lower, upper = _bounds(y, lower, upper)
    below = np.where(y < lower, lower - y, 0.0)
    above = np.where(y > upper, y - upper, 0.0)
    return (upper - lower) + (2.0 / alpha) * below + (2.0 / alpha) * above


def msis(y, lower, upper, ctx: MsisContext) -> float:
    """Mean scaled interval score of one or more forecast windows."""
    scale = ctx.scale
    return float(np.mean(interval_score_terms(y, lower, upper, ctx.alpha))) / scale


# ---------------------------------------------------------------------------
# reports


@dataclass
class EvaluationReport:
    rmse: float
    nrmse: float
    mape: float | None  # None when the observations contain zeros
    wql: dict[float, float] = field(default_factory=dict)
    mean_wql: float | None = None
    picp: float | None = None  # coverage of the central interval
    picp_lower: float | None = None  # share of observations <= lower bound
    picp_upper: float | None = None  # share of observations <= upper bound
    msis: float | None = None
    metadata: dict = field(default_factory=dict)

    @property
    def probabilistic(self) -> bool:
        return self.msis is not None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["wql"] = {repr(float(k)): v for k, v in self.wql.items()}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> EvaluationReport:
        d = dict(d)
        d["wql"] = {float(k): v for k, v in d.get("wql", {}).items()}
        return cls(**d)

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def from_json(cls, path) -> EvaluationReport:
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def to_text(self) -> str:
        """Flat ``key = value`` listing."""
        lines = []
        for k, v in self.to_dict().items():
            if isinstance(v, dict):
                for kk, vv in v.items():
                    lines.append(f"{k}.{kk} = {vv!r}")
            else:
                lines.append(f"{k} = {v!r}")
        return "\n".join(lines) + "\n"


def evaluate_point(y, yhat, metadata=None) -> EvaluationReport:
    y, yhat = _pair(y, yhat)
    try:
        m = mape(y, yhat)
    except ZeroTargetValue:
        m = None
    return EvaluationReport(rmse=rmse(y, yhat), nrmse=nrmse(y, yhat), mape=m, metadata=dict(metadata or {}))


def evaluate_interval(y, median, lower, upper, ctx: MsisContext, metadata=None) -> EvaluationReport:
    """Full report for a central (1 - alpha) interval plus its median.

    The quantile levels scored by wQL are alpha/2 and 1 - alpha/2.
    """
    report = evaluate_point(y, median, metadata)
    lo_q, hi_q = ctx.alpha / 2.0, 1.0 - ctx.alpha / 2.0
    report.wql = {lo_q: wql(y, lower, lo_q), hi_q: wql(y, upper, hi_q)}
    report.mean_wql = float(np.mean(list(report.wql.values())))
    report.picp = picp(y, lower, upper)
    report.picp_lower = quantile_coverage(y, lower)
    report.picp_upper = quantile_coverage(y, upper)
    report.msis = msis(y, lower, upper, ctx)
    report.metadata.update(alpha=ctx.alpha, m=ctx.m, n_obs=int(np.size(y)), y_max=float(np.max(y)))
    return report


def format_table(rows: Sequence[tuple[str, EvaluationReport]], title: str = "") -> str:
    """Plain-text table with one row per model."""

    def cell(v, fmt):
        width = int(fmt.split(".")[0])
        return f"{'-':>{width}}" if v is None else format(v, fmt)

    head = f"{'Model':<24}{'NRMSE':>8}{'MAPE':>9}{'MSIS':>9}{'PICP2.5':>9}{'PICP97.5':>10}{'PICP':>8}{'mean wQL':>10}"
    out = [title] if title else []
    out += [head, "-" * len(head)]
    for name, r in rows:
        out.append(
            f"{name:<24}{cell(r.nrmse, '8.3f')}{cell(r.mape, '9.2f')}{cell(r.msis, '9.3f')}"
            f"{cell(r.picp_lower, '9.3f')}{cell(r.picp_upper, '10.3f')}{cell(r.picp, '8.3f')}"
            f"{cell(r.mean_wql, '10.4f')}"
        )
    return "\n".join(out) + "\n"
