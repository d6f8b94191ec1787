"""Experiment orchestration: covariate configurations, runs, clamping, grid search."""

from __future__ import annotations

import csv
import itertools
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import metrics
from .baselines import ModifiedPersistenceModel, persistence_forecast
from .deepar import (
    DeepARConfig,
    ForecastDistribution,
    PredictionInterval,
    TrainedModel,
    forecast_batch,
    prediction_interval,
    train,
)
from .errors import ClampInvariantViolated, DivergedLoss, MismatchedRuns, MissingChannel, SeriesTooShort
from .series import MEASURED_CHANNELS, NWP_CHANNELS, SplitSpec, TimeSeries, Window, split, window_at

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DatasetConfig:
    name: str
    channels: tuple[str, ...]

    def select(self, series: TimeSeries) -> TimeSeries:
        missing = [c for c in self.channels if c not in series.covariates]
        if missing:
            raise MissingChannel(f"{self.name} needs channel(s) {missing}")
        return series.select(self.channels)


DATASET_CONFIGS = {
    "config1": DatasetConfig("config1", MEASURED_CHANNELS + NWP_CHANNELS),
    "config2": DatasetConfig("config2", MEASURED_CHANNELS),
    "config3": DatasetConfig("config3", NWP_CHANNELS),
}


def dataset_config(name: str) -> DatasetConfig:
    try:
        return DATASET_CONFIGS[name]
    except KeyError:
        raise ValueError(f"unknown dataset configuration {name!r}; expected one of {sorted(DATASET_CONFIGS)}") from None


def forecast_origins(series: TimeSeries, first_forecast: int, L: int, H: int, stride: int | None = None,
                     origin_hour: int | None = 12) -> list[int]:
    """Origins (index of the last observed hour) whose horizon starts at or after ``first_forecast``.

    The first origin is the first ``origin_hour``:00 stamp that qualifies;
    later origins follow every ``stride`` hours (default H, i.e. disjoint
    horizons) while the horizon fits.
    """
    stride = stride or H
    o = max(first_forecast - 1, L - 1)
    if origin_hour is not None:
        hours = (series.timestamps // 3600) % 24
        while o < len(series) and hours[o] != origin_hour:
            o += 1
    out = []
    while o + H < len(series):
        out.append(o)
        o += stride
    return out


# ---------------------------------------------------------------------------
# clamping


def clamp_pi(pi: PredictionInterval, capacity: float) -> PredictionInterval:
    """Cap every bound at the farm's capacity.

    Only values above ``capacity`` change; lower <= median <= upper is kept.
    """
    if not capacity > 0:
        raise ValueError("capacity must be positive")
    return PredictionInterval(
        pi.alpha,
        np.minimum(pi.lower, capacity),
        np.minimum(pi.median, capacity),
        np.minimum(pi.upper, capacity),
        pi.timestamps,
    )


@dataclass(frozen=True)
class ClampComparison:
    msis_before: float
    msis_after: float
    mean_wql_before: float
    mean_wql_after: float
    picp_before: float
    picp_after: float

    @property
    def msis_delta(self) -> float:
        return self.msis_after - self.msis_before

    @property
    def mean_wql_delta(self) -> float:
        return self.mean_wql_after - self.mean_wql_before

    def to_text(self) -> str:
        return (
            f"{'':<12}{'original':>12}{'adjusted':>12}{'delta':>12}\n"
            f"{'MSIS':<12}{self.msis_before:>12.4f}{self.msis_after:>12.4f}{self.msis_delta:>12.4f}\n"
            f"{'mean wQL':<12}{self.mean_wql_before:>12.5f}{self.mean_wql_after:>12.5f}{self.mean_wql_delta:>12.5f}\n"
            f"{'PICP':<12}{self.picp_before:>12.4f}{self.picp_after:>12.4f}{self.picp_after - self.picp_before:>12.4f}\n"
        )


_RUN_KEYS = ("config", "model", "alpha", "m", "n_obs", "origins")


def compare_clamped(before: metrics.EvaluationReport, after: metrics.EvaluationReport) -> ClampComparison:
    """Before/after scores for the same forecasts with and without clamping."""
    for k in _RUN_KEYS:
        if before.metadata.get(k) != after.metadata.get(k):
            raise MismatchedRuns(f"reports differ in {k!r}: {before.metadata.get(k)!r} vs {after.metadata.get(k)!r}")
    if not before.probabilistic or not after.probabilistic:
        raise MismatchedRuns("both reports need interval scores")
    capacity = after.metadata.get("capacity")
    if capacity is not None and before.metadata["y_max"] <= capacity:
        if (before.picp, before.picp_lower, before.picp_upper) != (after.picp, after.picp_lower, after.picp_upper):
            raise ClampInvariantViolated("coverage changed although no observation exceeds capacity")
    return ClampComparison(before.msis, after.msis, before.mean_wql, after.mean_wql, before.picp, after.picp)


# ---------------------------------------------------------------------------
# experiments


@dataclass
class ExperimentResult:
    report: metrics.EvaluationReport
    clamped_report: metrics.EvaluationReport
    baseline_reports: dict[str, metrics.EvaluationReport]
    windows: list[Window]
    distributions: list[ForecastDistribution]
    intervals: list[PredictionInterval]
    clamped_intervals: list[PredictionInterval]
    trained: TrainedModel

    @property
    def observations(self) -> np.ndarray:
        return np.concatenate([w.future_target for w in self.windows])

    def table_rows(self):
        name = f"DeepAR_{self.trained.model.config.cell_kind.upper()}"
        rows = [(name, self.report), (name + " (capped)", self.clamped_report)]
        rows += [(k.replace("_", " ").title(), r) for k, r in self.baseline_reports.items()]
        return rows


def _window_seed(seed: int, j: int) -> int:
    return int(np.random.SeedSequence([seed, 2, j]).generate_state(1)[0])


def evaluate_windows(model, series: TimeSeries, origins: Sequence[int], training_target: np.ndarray, seed: int,
                     alpha: float = 0.05, m: int = 1, num_paths: int | None = None, metadata=None):
    """Forecast every origin and score the concatenated horizons.

    Returns (report, clamped_report, windows, distributions, intervals, clamped_intervals).
    """
    cfg = model.config
    wins = [window_at(series, o, cfg.context_length, cfg.horizon) for o in origins]
    if not wins:
        raise SeriesTooShort("no forecast origin fits the evaluation segment")
    seeds = [_window_seed(seed, j) for j in range(len(wins))]
    dists = []
    for s in range(0, len(wins), 16):
        dists += forecast_batch(model, wins[s : s + 16], num_paths, seeds[s : s + 16])
    pis = [prediction_interval(d, alpha) for d in dists]
    capped = [clamp_pi(p, series.capacity) for p in pis]
    y = np.concatenate([w.future_target for w in wins])
    ctx = metrics.MsisContext(training_target, m, alpha)
    meta = dict(metadata or {}, origins=len(wins), capacity=series.capacity)

    def score(intervals, label):
        return metrics.evaluate_interval(
            y,
            np.concatenate([p.median for p in intervals]),
            np.concatenate([p.lower for p in intervals]),
            np.concatenate([p.upper for p in intervals]),
            ctx,
            dict(meta, variant=label),
        )

    return score(pis, "original"), score(capped, "clamped"), wins, dists, pis, capped


def baseline_reports(series: TimeSeries, wins: Sequence[Window], training_target: np.ndarray, H: int, metadata=None):
    y = np.concatenate([w.future_target for w in wins])
    mp = ModifiedPersistenceModel().fit(training_target, H)
    pers = np.concatenate([persistence_forecast(w.context[-1], H) for w in wins])
    mod = np.concatenate([mp.forecast(w.context[-1], H) for w in wins])
    meta = dict(metadata or {}, origins=len(wins))
    return {
        "persistence": metrics.evaluate_point(y, pers, dict(meta, model="persistence")),
        "modified_persistence": metrics.evaluate_point(y, mod, dict(meta, model="modified_persistence")),
    }


def run_experiment(series: TimeSeries, config: DatasetConfig, model_config: DeepARConfig, seed: int = 0,
                   split_spec: SplitSpec = SplitSpec(), alpha: float = 0.05, m: int = 1, stride: int | None = None,
                   origin_hour: int | None = 12) -> ExperimentResult:
    """Split, train, forecast every test origin, and score against the persistence baselines."""
    data = config.select(series)
    L, H = model_config.context_length, model_config.horizon
    train_s, val_s, test_s = split(data, split_spec, L + H)
    trained = train(model_config, train_s, val_s, seed)
    test_start = len(train_s) + len(val_s)
    origins = forecast_origins(data, test_start, L, H, stride, origin_hour)
    meta = {"config": config.name, "model": f"deepar_{model_config.cell_kind}", "seed": seed}
    report, capped, wins, dists, pis, cpis = evaluate_windows(
        trained.model, data, origins, train_s.target, seed, alpha, m, metadata=meta
    )
    base = baseline_reports(data, wins, train_s.target, H, {"config": config.name, "seed": seed})
    return ExperimentResult(report, capped, base, wins, dists, pis, cpis, trained)


# ---------------------------------------------------------------------------
# grid search


@dataclass(frozen=True)
class GridSearchSpec:
    context_lengths: tuple[int, ...] = (36, 72)
    layers: tuple[int, ...] = (1, 2, 3)
    hidden_units: tuple[int, ...] = (32, 64)
    dropout: tuple[float, ...] = (0.0, 0.1, 0.2)
    learning_rates: tuple[float, ...] = (1e-4, 1e-3, 1e-2)
    selection: str = "mean_wql"

    def __post_init__(self):
        if self.selection not in ("mean_wql", "nrmse", "msis"):
            raise ValueError(f"unsupported selection metric {self.selection!r}")
        if not all((self.context_lengths, self.layers, self.hidden_units, self.dropout, self.learning_rates)):
            raise ValueError("every grid axis needs at least one value")

    def points(self, base: DeepARConfig) -> list[DeepARConfig]:
        """Cartesian product in declaration order (window, layers, hidden, dropout, lr)."""
        return [
            replace(base, context_length=L, layers=n, hidden_units=h, dropout=d, learning_rate=lr)
            for L, n, h, d, lr in itertools.product(
                self.context_lengths, self.layers, self.hidden_units, self.dropout, self.learning_rates
            )
        ]


@dataclass
class GridSearchResult:
    best: DeepARConfig | None
    leaderboard: list[dict] = field(default_factory=list)

    def write(self, path) -> None:
        keys = ["index", "rank", "status", "score", "n_params", "context_length", "layers", "hidden_units", "dropout",
                "learning_rate", "cell_kind", "best_epoch"]
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, keys, extrasaction="ignore", lineterminator="\n")
            w.writeheader()
            for row in self.leaderboard:
                w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


def _grid_job(args):
    index, cfg, series, split_spec, seed, selection, alpha, m = args
    row = {"index": index, **{k: v for k, v in asdict(cfg).items()
                              if k in ("context_length", "layers", "hidden_units", "dropout", "learning_rate", "cell_kind")}}
    L, H = cfg.context_length, cfg.horizon
    train_s, val_s, _ = split(series, split_spec, L + H)
    point_seed = int(np.random.SeedSequence([seed, 3, index]).generate_state(1)[0])
    try:
        trained = train(cfg, train_s, val_s, point_seed)
    except DivergedLoss as exc:
        row.update(status=f"diverged: {exc}", score=math.inf, n_params=_n_params(cfg, series), best_epoch=0)
        return row
    head = series.slice(0, len(train_s) + len(val_s))
    origins = forecast_origins(head, len(train_s), L, H)
    report = evaluate_windows(trained.model, head, origins, train_s.target, point_seed, alpha, m)[0]
    row.update(status="ok", score=float(getattr(report, selection)), n_params=trained.model.network.num_parameters(),
               best_epoch=trained.best_epoch)
    return row


def _n_params(cfg: DeepARConfig, series: TimeSeries) -> int:
    from .deepar import DeepARModel

    return DeepARModel.for_series(cfg, series).network.num_parameters()


def grid_search(series: TimeSeries, config: DatasetConfig, spec: GridSearchSpec, base: DeepARConfig = DeepARConfig(),
                seed: int = 0, split_spec: SplitSpec = SplitSpec(), workers: int = 1, alpha: float = 0.05,
                m: int = 1) -> GridSearchResult:
    """Train every grid point, score it on the validation segment, return the best.

    Ties go to fewer parameters, then the lower learning rate, then the
    earlier grid position. Diverged points stay on the leaderboard with an
    infinite score.
    """
    data = config.select(series)
    points = spec.points(base)
    jobs = [(i, cfg, data, split_spec, seed, spec.selection, alpha, m) for i, cfg in enumerate(points)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_grid_job, jobs))
    else:
        rows = [_grid_job(j) for j in jobs]
    rows.sort(key=lambda r: r["index"])
    for r in rows:
        if r["status"] != "ok":
            log.warning("grid point %d failed: %s", r["index"], r["status"])
    ranked = rank_rows(rows)
    best = points[ranked[0]["index"]] if ranked and math.isfinite(ranked[0]["score"]) else None
    return GridSearchResult(best, rows)


def rank_rows(rows: list[dict]) -> list[dict]:
    """Order by score, then fewer parameters, lower learning rate, earlier index; sets ``rank``."""
    ranked = sorted(rows, key=lambda r: (r["score"], r["n_params"], r["learning_rate"], r["index"]))
    for rank, r in enumerate(ranked, start=1):
        r["rank"] = rank
    return ranked
