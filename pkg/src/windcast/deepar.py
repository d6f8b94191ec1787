"""Autoregressive recurrent forecaster with a Gaussian output head.

At every step the network sees the previous target value (divided by a
per-window scale) together with the covariates of the current step.
Training uses teacher forcing over the horizon of each window; forecasting
unrolls the horizon by feeding each sampled value back in (ancestral
sampling).
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    CovariateHorizonMismatch,
    DivergedLoss,
    EmptyDistribution,
    ModelNotTrained,
    NonPositiveSigma,
    ParseError,
    SeriesTooShort,
    ShapeMismatch,
)
from .neural import checkpoint
from .neural.autograd import Tensor, dropout, gaussian_nll, softplus, softplus_np
from .neural.layers import Dense, Module, make_cell
from .neural.optim import SGD, Adam, clip_grad_norm
from .series import REFERENCE_CAPACITY, TimeSeries, Window, format_timestamp, windows

log = logging.getLogger(__name__)

VALIDATION_CHUNK = 512


@dataclass(frozen=True)
class DeepARConfig:
    cell_kind: str = "lstm"
    layers: int = 2
    hidden_units: int = 64
    dropout: float = 0.2
    learning_rate: float = 1e-3
    context_length: int = 36
    horizon: int = 36
    num_sample_paths: int = 200
    max_epochs: int = 500
    early_stopping_patience: int = 20
    batch_size: int = 32
    batches_per_epoch: int = 50
    clip_norm: float = 10.0
    optimizer: str = "adam"
    time_features: bool = True

    def __post_init__(self):
        if self.cell_kind not in ("lstm", "gru"):
            raise ValueError(f"cell_kind must be 'lstm' or 'gru', got {self.cell_kind!r}")
        if self.layers < 1 or self.hidden_units < 1:
            raise ValueError("layers and hidden_units must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must lie in [0, 1), got {self.dropout}")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.context_length < 1 or self.horizon < 1:
            raise ValueError("context_length and horizon must be >= 1")
        if self.num_sample_paths < 2:
            raise ValueError("num_sample_paths must be >= 2")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"optimizer must be 'adam' or 'sgd', got {self.optimizer!r}")

    @property
    def window_length(self) -> int:
        return self.context_length + self.horizon


# ---------------------------------------------------------------------------
# distributions and intervals


@dataclass(frozen=True, eq=False)
class ForecastDistribution:
    samples: np.ndarray  # (S, H), MW
    origin_timestamp: int
    timestamps: np.ndarray  # (H,)

    def __post_init__(self):
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("forecast samples must be finite")

    @property
    def num_paths(self) -> int:
        return self.samples.shape[0]

    @property
    def horizon(self) -> int:
        return self.samples.shape[1]


@dataclass(frozen=True, eq=False)
class PredictionInterval:
    alpha: float
    lower: np.ndarray
    median: np.ndarray
    upper: np.ndarray
    timestamps: np.ndarray | None = None

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not (len(self.lower) == len(self.median) == len(self.upper)):
            raise ShapeMismatch("lower, median and upper must have equal length")
        if np.any(self.lower > self.median) or np.any(self.median > self.upper):
            raise ValueError("interval must satisfy lower <= median <= upper")


def quantiles(dist: ForecastDistribution, levels: Sequence[float]) -> np.ndarray:
    """Per-step empirical quantiles, shape (len(levels), H).

    Uses linear interpolation between order statistics, so the result is
    monotone in the level at every step.
    """
    samples = np.asarray(dist.samples)
    if samples.ndim != 2 or samples.shape[0] < 2:
        raise EmptyDistribution(f"need at least two sample paths, got shape {samples.shape}")
    levels = np.asarray(levels, dtype=np.float64)
    if np.any((levels <= 0) | (levels >= 1)) or np.any(np.diff(levels) < 0):
        raise ValueError("levels must be sorted and lie in (0, 1)")
    q = np.quantile(samples, levels, axis=0)
    # linear interpolation can produce 1-ulp inversions between adjacent levels
    return np.maximum.accumulate(q, axis=0)


def prediction_interval(dist: ForecastDistribution, alpha: float = 0.05) -> PredictionInterval:
    lo, med, hi = quantiles(dist, (alpha / 2.0, 0.5, 1.0 - alpha / 2.0))
    return PredictionInterval(alpha, lo, med, hi, np.asarray(dist.timestamps))


# ---------------------------------------------------------------------------
# scaling


def scale_context(context, offset: float = 1.0) -> tuple[np.ndarray, float]:
    """Divide a context by nu = offset + mean(context).

    With non-negative power and ``offset >= 1`` nu is at least 1, so an
    all-zero context passes through unchanged.
    """
    context = np.asarray(context, dtype=np.float64)
    nu = float(offset + np.mean(context))
    return context / nu, nu


def unscale(values, nu: float) -> np.ndarray:
    return np.asarray(values, dtype=np.float64) * nu


# ---------------------------------------------------------------------------
# network


def _is_angular(name: str) -> bool:
    return name.endswith("wd") or "_wd_" in name


class DeepARNetwork(Module):
    def __init__(self, config: DeepARConfig, input_size: int, seed: int):
        rng = np.random.default_rng(seed)
        self.config = config
        self.input_size = input_size
        sizes = [input_size] + [config.hidden_units] * config.layers
        self.cells = [make_cell(config.cell_kind, sizes[i], sizes[i + 1], rng) for i in range(config.layers)]
        bound = 1.0 / math.sqrt(config.hidden_units)
        self.mu_head = Dense(config.hidden_units, 1, rng, init_bound=bound)
        self.sigma_head = Dense(config.hidden_units, 1, rng, init_bound=bound)

    def forward(self, x: np.ndarray, n_out: int, rng: np.random.Generator | None = None, training: bool = False):
        """Teacher-forced pass over x (T, B, F); returns (mu, sigma) Tensors of shape (n_out, B)."""
        h = Tensor(x)
        for cell in self.cells:
            h, _ = cell.sequence(h)
            h = dropout(h, self.config.dropout, rng, training)
        T, B, Hd = h.shape
        tail = h[T - n_out :].reshape(n_out * B, Hd)
        mu = self.mu_head(tail).reshape(n_out, B)
        sigma = softplus(self.sigma_head(tail)).reshape(n_out, B)
        return mu, sigma

    def encode_np(self, x: np.ndarray):
        """Inference-only pass over x (T, B, F); returns the per-layer final states."""
        states = []
        h = x
        for cell in self.cells:
            out, state = _run_np(cell, h, cell.zero_state(h.shape[1]))
            states.append(state)
            h = out
        return states

    def step_np(self, x: np.ndarray, states):
        new = []
        h = x
        for cell, state in zip(self.cells, states):
            h, state = cell.step_np(h, state)
            new.append(state)
        mu = self.mu_head.np(h)[:, 0]
        sigma = softplus_np(self.sigma_head.np(h))[:, 0]
        return mu, sigma, new


def _run_np(cell, x: np.ndarray, state):
    if x.shape[0] == 0:
        return x[:, :, :0].reshape(0, x.shape[1], cell.hidden_size), state
    out, final = cell.sequence(Tensor(x), state)
    return out.data, final


# ---------------------------------------------------------------------------
# model: features + network


class DeepARModel:
    """Network plus everything needed to turn windows into network inputs."""

    def __init__(self, config: DeepARConfig, channels: Sequence[str], future_known: Sequence[bool],
                 cov_mean: Sequence[float], cov_std: Sequence[float], capacity: float = REFERENCE_CAPACITY,
                 seed: int = 0):
        self.config = config
        self.channels = tuple(channels)
        self.future_known = np.asarray(future_known, dtype=bool)
        self.angular = np.array([_is_angular(c) for c in self.channels], dtype=bool)
        self.cov_mean = np.asarray(cov_mean, dtype=np.float64)
        self.cov_std = np.asarray(cov_std, dtype=np.float64)
        self.capacity = float(capacity)
        self.has_flag = bool(np.any(~self.future_known))
        self.seed = seed
        self.network = DeepARNetwork(config, self.input_size, seed)
        self.trained = False

    @classmethod
    def for_series(cls, config: DeepARConfig, series: TimeSeries, seed: int = 0) -> DeepARModel:
        names = series.channel_names
        mean, std = [], []
        for c in names:
            v = series.covariates[c]
            mean.append(float(np.mean(v)))
            s = float(np.std(v))
            std.append(s if s > 0 else 1.0)
        return cls(config, names, [series.future_known[c] for c in names], mean, std, series.capacity, seed)

    @property
    def input_size(self) -> int:
        n_cov = int(np.sum(np.where(self.angular, 2, 1))) if len(self.channels) else 0
        return 1 + n_cov + int(self.has_flag) + (2 if self.config.time_features else 0)

    @property
    def scale_offset(self) -> float:
        # 1 MW for the reference 54 MW farm; proportional to capacity otherwise
        return self.capacity / REFERENCE_CAPACITY

    def freeze(self) -> DeepARModel:
        """Mark the current parameters as final so the model can forecast."""
        self.trained = True
        return self

    # -- features -------------------------------------------------------------

    def _encode_covariates(self, values: np.ndarray, available: np.ndarray) -> np.ndarray:
        """(..., C) raw values -> (..., n_cov) features, zero where unavailable."""
        cols = []
        for j in range(len(self.channels)):
            v = values[..., j]
            a = available[..., j]
            if self.angular[j]:
                rad = np.deg2rad(v)
                cols += [np.sin(rad) * a, np.cos(rad) * a]
            else:
                cols.append((v - self.cov_mean[j]) / self.cov_std[j] * a)
        if not cols:
            return np.zeros(values.shape[:-1] + (0,))
        return np.stack(cols, axis=-1)

    def _check_window(self, w: Window) -> None:
        L, H = self.config.context_length, self.config.horizon
        if tuple(w.channels) != self.channels:
            raise ShapeMismatch(f"window channels {w.channels} != model channels {self.channels}")
        if len(w.context) != L:
            raise ShapeMismatch(f"context length {len(w.context)} != {L}")
        if w.future_covariates.shape[0] != H or len(w.future_timestamps) != H:
            raise CovariateHorizonMismatch(
                f"future covariates cover {w.future_covariates.shape[0]} steps, horizon is {H}"
            )

    def static_features(self, batch: Sequence[Window]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Inputs without the lag column.

        Returns (features (T, B, F-1), scaled targets (L+H, B) with NaN for
        unknown future values, nu (B,)). T = L - 1 + H.
        """
        for w in batch:
            self._check_window(w)
        L, H = self.config.context_length, self.config.horizon
        ctx_cov = np.stack([w.context_covariates for w in batch])  # (B, L, C)
        fut_cov = np.stack([w.future_covariates for w in batch])
        fut_av = np.stack([w.future_available for w in batch])
        ctx_av = np.ones(ctx_cov.shape, dtype=bool)
        cov = np.concatenate([ctx_cov[:, 1:], fut_cov], axis=1)  # (B, T, C)
        av = np.concatenate([ctx_av[:, 1:], fut_av], axis=1)
        parts = [self._encode_covariates(cov, av)]
        if self.has_flag:
            parts.append(np.all(av, axis=-1, keepdims=True).astype(np.float64))
        if self.config.time_features:
            ts = np.stack([np.concatenate([w.context_timestamps[1:], w.future_timestamps]) for w in batch])
            hour = (ts // 3600) % 24
            ang = 2.0 * np.pi * hour / 24.0
            parts += [np.sin(ang)[..., None], np.cos(ang)[..., None]]
        feats = np.concatenate(parts, axis=-1).transpose(1, 0, 2)

        nus = np.empty(len(batch))
        y = np.full((L + H, len(batch)), np.nan)
        for b, w in enumerate(batch):
            scaled, nus[b] = scale_context(w.context, self.scale_offset)
            y[:L, b] = scaled
            if w.future_target is not None:
                y[L:, b] = w.future_target / nus[b]
        return feats, y, nus

    def training_inputs(self, batch: Sequence[Window]) -> tuple[np.ndarray, np.ndarray]:
        """Teacher-forced inputs (T, B, F) and scaled horizon targets (H, B)."""
        feats, y, _ = self.static_features(batch)
        L = self.config.context_length
        lag = y[:-1][..., None]
        if np.any(np.isnan(y[L:])):
            raise ValueError("training windows need future targets")
        return np.concatenate([lag, feats], axis=-1), y[L:]

    # -- persistence ----------------------------------------------------------

    def save(self, path) -> None:
        meta = {
            "config": asdict(self.config),
            "channels": list(self.channels),
            "future_known": self.future_known.tolist(),
            "cov_mean": self.cov_mean.tolist(),
            "cov_std": self.cov_std.tolist(),
            "capacity": self.capacity,
            "seed": self.seed,
            "trained": self.trained,
        }
        checkpoint.save(path, self.network.state_dict(), meta)

    @classmethod
    def load(cls, path) -> DeepARModel:
        params, meta = checkpoint.load(path)
        model = cls(DeepARConfig(**meta["config"]), meta["channels"], meta["future_known"],
                    meta["cov_mean"], meta["cov_std"], meta["capacity"], meta["seed"])
        model.network.load_state_dict(params)
        model.trained = bool(meta["trained"])
        return model


# ---------------------------------------------------------------------------
# training


@dataclass
class TrainedModel:
    model: DeepARModel
    history: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    best_val_nll: float = math.inf

    @property
    def final_val_nll(self) -> float:
        return self.history[-1]["val_nll"] if self.history else math.inf


def _nll_np(network: DeepARNetwork, x: np.ndarray, y: np.ndarray) -> float:
    total, count = 0.0, 0
    for s in range(0, x.shape[1], VALIDATION_CHUNK):
        xb, yb = x[:, s : s + VALIDATION_CHUNK], y[:, s : s + VALIDATION_CHUNK]
        mu, sigma = network.forward(xb, yb.shape[0])
        if not np.all(sigma.data > 0):
            return math.inf
        total += float(gaussian_nll(mu.data, sigma.data, yb, reduction="sum"))
        count += yb.size
    return total / count


def train(config: DeepARConfig, train_series: TimeSeries, validation_series: TimeSeries, seed: int = 0,
          validation_stride: int = 1) -> TrainedModel:
    """Fit by minimising the Gaussian negative log-likelihood of window horizons.

    One epoch is ``batches_per_epoch`` minibatches drawn from a shuffled
    cycle over all stride-1 training windows. The parameters with the best
    validation NLL are restored at the end.

    Raises
    ------
    SeriesTooShort
        If either series cannot hold a single window.
    DivergedLoss
        If a training loss or sigma becomes non-finite or non-positive.
    """
    L, H = config.context_length, config.horizon
    for label, s in (("training", train_series), ("validation", validation_series)):
        if len(s) < L + H:
            raise SeriesTooShort(f"{label} series has {len(s)} samples, need {L + H}")
    model = DeepARModel.for_series(config, train_series, seed)
    net = model.network
    x_tr, y_tr = model.training_inputs(windows(train_series, L, H, 1))
    x_va, y_va = model.training_inputs(windows(validation_series, L, H, validation_stride))

    rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    params = net.parameters()
    opt = Adam(params, config.learning_rate) if config.optimizer == "adam" else SGD(params, config.learning_rate)
    plist = list(params.values())
    n = x_tr.shape[1]
    order, cursor = rng.permutation(n), 0

    result = TrainedModel(model)
    best_state, stale = net.state_dict(), 0
    for epoch in range(1, config.max_epochs + 1):
        losses = []
        for b in range(config.batches_per_epoch):
            if cursor + config.batch_size > n:
                order, cursor = rng.permutation(n), 0
            idx = order[cursor : cursor + config.batch_size]
            cursor += config.batch_size
            mu, sigma = net.forward(x_tr[:, idx], H, rng, training=True)
            try:
                loss = gaussian_nll(mu, sigma, y_tr[:, idx])
            except NonPositiveSigma as exc:
                raise DivergedLoss(f"epoch {epoch} batch {b}: sigma collapsed to zero ({exc})") from exc
            value = loss.item()
            if not math.isfinite(value):
                raise DivergedLoss(f"epoch {epoch} batch {b}: loss is {value}")
            opt.zero_grad()
            loss.backward()
            gnorm = clip_grad_norm(plist, config.clip_norm)
            if not math.isfinite(gnorm):
                raise DivergedLoss(f"epoch {epoch} batch {b}: gradient norm is {gnorm}")
            opt.step()
            losses.append(value)
        val = _nll_np(net, x_va, y_va)
        if not math.isfinite(val):
            raise DivergedLoss(f"epoch {epoch}: validation NLL is {val}")
        result.history.append({"epoch": epoch, "train_nll": float(np.mean(losses)), "val_nll": val})
        log.debug("epoch %d train %.5f val %.5f", epoch, np.mean(losses), val)
        if val < result.best_val_nll:
            result.best_val_nll, result.best_epoch = val, epoch
            best_state, stale = net.state_dict(), 0
        else:
            stale += 1
            if stale >= config.early_stopping_patience:
                log.info("early stop at epoch %d (best %d)", epoch, result.best_epoch)
                break
    net.load_state_dict(best_state)
    model.trained = True
    return result


# ---------------------------------------------------------------------------
# forecasting


def path_normals(seed: int, num_paths: int, horizon: int) -> np.ndarray:
    """Standard normals (S, H); row i comes from its own stream seeded by (seed, i)."""
    out = np.empty((num_paths, horizon))
    for i in range(num_paths):
        out[i] = np.random.default_rng(np.random.SeedSequence([seed, i])).standard_normal(horizon)
    return out


def forecast_batch(model: DeepARModel, batch: Sequence[Window], num_paths: int | None = None,
                   seeds: Sequence[int] = (0,)) -> list[ForecastDistribution]:
    """Ancestral sampling for several windows at once; window b uses ``seeds[b]``."""
    if not model.trained:
        raise ModelNotTrained("model has no trained parameters; train it or call freeze()")
    S = num_paths or model.config.num_sample_paths
    if S < 1:
        raise EmptyDistribution("num_paths must be positive")
    if len(seeds) != len(batch):
        raise ValueError("need one seed per window")
    L, H = model.config.context_length, model.config.horizon
    feats, y, nus = model.static_features(batch)
    B = len(batch)
    net = model.network

    # context encoding: steps 1..L-1 of the context, shared by all paths
    ctx_x = np.concatenate([y[: L - 1][..., None], feats[: L - 1]], axis=-1)
    states = net.encode_np(ctx_x)
    # replicate each window's state S times: row b*S + i
    states = [tuple(np.repeat(s, S, axis=0) for s in st) for st in states]
    fut = np.repeat(feats[L - 1 :], S, axis=1)  # (H, B*S, F-1)
    z = np.concatenate([path_normals(int(sd), S, H) for sd in seeds])  # (B*S, H)
    lag = np.repeat(y[L - 1], S)
    out = np.empty((B * S, H))
    for k in range(H):
        x = np.concatenate([lag[:, None], fut[k]], axis=1)
        mu, sigma, states = net.step_np(x, states)
        lag = mu + sigma * z[:, k]
        out[:, k] = lag
    out *= np.repeat(nus, S)[:, None]
    return [
        ForecastDistribution(out[b * S : (b + 1) * S].copy(), w.origin_timestamp, w.future_timestamps.copy())
        for b, w in enumerate(batch)
    ]


def forecast(model: DeepARModel, window: Window, num_paths: int | None = None, seed: int = 0) -> ForecastDistribution:
    """Sample ``num_paths`` trajectories over the horizon of ``window``."""
    return forecast_batch(model, [window], num_paths, [seed])[0]


# ---------------------------------------------------------------------------
# forecast files


def write_forecast_csv(path, intervals: Sequence[PredictionInterval], samples: Sequence[ForecastDistribution] | None = None,
                       origins: Sequence[int] | None = None) -> None:
    """``timestamp,median,lower,upper,origin`` rows; optional per-sample columns.

    ``origins`` are the epoch seconds of each interval's forecast origin; by
    default the hour before the interval's first step.
    """
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        header = ["timestamp", "median", "lower", "upper", "origin"]
        if samples is not None:
            header += [f"s{i}" for i in range(samples[0].num_paths)]
        w.writerow(header)
        for j, pi in enumerate(intervals):
            origin = int(origins[j]) if origins is not None else int(pi.timestamps[0]) - 3600
            for k in range(len(pi.median)):
                row = [format_timestamp(pi.timestamps[k]), repr(float(pi.median[k])), repr(float(pi.lower[k])),
                       repr(float(pi.upper[k])), format_timestamp(origin)]
                if samples is not None:
                    row += [repr(float(v)) for v in samples[j].samples[:, k]]
                w.writerow(row)


@dataclass(frozen=True)
class ForecastTable:
    origins: np.ndarray
    timestamps: np.ndarray
    median: np.ndarray
    lower: np.ndarray
    upper: np.ndarray


def read_forecast_csv(path) -> ForecastTable:
    from .series import parse_timestamp

    cols = {k: [] for k in ("origin", "timestamp", "median", "lower", "upper")}
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = set(cols) - set(reader.fieldnames or ())
        if missing:
            raise ParseError(f"forecast file lacks column(s) {sorted(missing)}", row=1)
        for i, row in enumerate(reader, start=2):
            try:
                cols["origin"].append(parse_timestamp(row["origin"]))
                cols["timestamp"].append(parse_timestamp(row["timestamp"]))
                for k in ("median", "lower", "upper"):
                    cols[k].append(float(row[k]))
            except (ValueError, TypeError, AttributeError) as exc:
                raise ParseError(f"bad forecast row: {exc}", row=i) from None
    return ForecastTable(
        np.array(cols["origin"], dtype=np.int64),
        np.array(cols["timestamp"], dtype=np.int64),
        np.array(cols["median"]),
        np.array(cols["lower"]),
        np.array(cols["upper"]),
    )


def with_config(config: DeepARConfig, **changes) -> DeepARConfig:
    return replace(config, **changes)
