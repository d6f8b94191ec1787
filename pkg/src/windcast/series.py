"""Hourly time-series container, chronological splits, rolling windows, CSV I/O."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    IrregularSpacing,
    LengthMismatch,
    MissingChannel,
    NonMonotonicTimestamps,
    ParseError,
    SeriesTooShort,
    ValueOutOfRange,
)

HOUR = 3600
REFERENCE_CAPACITY = 54.0  # 18 turbines x 3 MW

TARGET_COLUMN = "power_mw"
MEASURED_CHANNELS = ("mws", "mwd")
NWP_CHANNELS = ("nwp_ws_c1", "nwp_wd_c1", "nwp_ws_c2", "nwp_wd_c2")
CSV_COLUMNS = ("timestamp", TARGET_COLUMN) + MEASURED_CHANNELS + NWP_CHANNELS


def is_future_known(name: str) -> bool:
    """NWP channels are issued ahead of time; everything else is measured."""
    return name.startswith("nwp_")


def _readonly(a) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """Hourly target series with aligned covariate channels.

    Arrays are copied and frozen on construction; slicing returns new
    instances sharing nothing mutable.
    """

    timestamps: np.ndarray  # int64 epoch seconds, UTC
    target: np.ndarray
    covariates: Mapping[str, np.ndarray] = field(default_factory=dict)
    future_known: Mapping[str, bool] = field(default_factory=dict)
    capacity: float = REFERENCE_CAPACITY

    def __post_init__(self):
        ts = np.array(self.timestamps, dtype=np.int64, copy=True)
        ts.setflags(write=False)
        target = _readonly(self.target)
        if ts.ndim != 1 or target.ndim != 1:
            raise LengthMismatch("timestamps and target must be one-dimensional")
        if len(ts) < 1:
            raise SeriesTooShort("series must contain at least one sample")
        if len(ts) != len(target):
            raise LengthMismatch(f"{len(ts)} timestamps but {len(target)} target values")
        steps = np.diff(ts)
        if np.any(steps <= 0):
            i = int(np.argmax(steps <= 0)) + 1
            raise NonMonotonicTimestamps(f"timestamp at position {i} does not increase")
        if np.any(steps != HOUR):
            i = int(np.argmax(steps != HOUR)) + 1
            raise IrregularSpacing(f"step before position {i} is {int(steps[i - 1])} s, expected {HOUR} s")
        if not self.capacity > 0:
            raise ValueOutOfRange(f"capacity must be positive, got {self.capacity}")
        if not np.all(np.isfinite(target)):
            raise ValueOutOfRange("target contains non-finite values")
        bad = (target < 0) | (target > self.capacity)
        if np.any(bad):
            i = int(np.argmax(bad))
            raise ValueOutOfRange(f"target {target[i]} at position {i} outside [0, {self.capacity}]")

        covs = {}
        for name, values in self.covariates.items():
            values = _readonly(values)
            if values.shape != target.shape:
                raise LengthMismatch(f"channel {name!r} has length {len(values)}, expected {len(target)}")
            covs[name] = values
        known = {name: bool(self.future_known.get(name, is_future_known(name))) for name in covs}

        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "target", target)
        object.__setattr__(self, "covariates", covs)
        object.__setattr__(self, "future_known", known)
        object.__setattr__(self, "capacity", float(self.capacity))

    def __len__(self) -> int:
        return len(self.target)

    @property
    def channel_names(self) -> list[str]:
        return list(self.covariates)

    def slice(self, start: int, stop: int) -> TimeSeries:
        return TimeSeries(
            self.timestamps[start:stop],
            self.target[start:stop],
            {k: v[start:stop] for k, v in self.covariates.items()},
            self.future_known,
            self.capacity,
        )

    def select(self, channels: Sequence[str]) -> TimeSeries:
        """Keep only ``channels`` (in the given order)."""
        missing = [c for c in channels if c not in self.covariates]
        if missing:
            raise MissingChannel(f"series lacks channel(s) {missing}")
        return TimeSeries(
            self.timestamps,
            self.target,
            {c: self.covariates[c] for c in channels},
            {c: self.future_known[c] for c in channels},
            self.capacity,
        )

    def covariate_matrix(self) -> np.ndarray:
        if not self.covariates:
            return np.zeros((len(self), 0))
        return np.column_stack([self.covariates[c] for c in self.covariates])


def concat(parts: Sequence[TimeSeries]) -> TimeSeries:
    first = parts[0]
    return TimeSeries(
        np.concatenate([p.timestamps for p in parts]),
        np.concatenate([p.target for p in parts]),
        {c: np.concatenate([p.covariates[c] for p in parts]) for c in first.covariates},
        first.future_known,
        first.capacity,
    )


# ---------------------------------------------------------------------------
# splitting


def _round_half_up(x: float) -> int:
    # guard against 0.15 * n landing a hair under .5
    return int(math.floor(x + 0.5 + 1e-9))


@dataclass(frozen=True)
class SplitSpec:
    test_fraction: float = 0.15
    validation_fraction: float = 0.20

    def __post_init__(self):
        for name in ("test_fraction", "validation_fraction"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must lie in (0, 1), got {v}")

    def sizes(self, n: int) -> tuple[int, int, int]:
        n_test = _round_half_up(self.test_fraction * n)
        rest = n - n_test
        n_val = _round_half_up(self.validation_fraction * rest)
        return rest - n_val, n_val, n_test


def split(series: TimeSeries, spec: SplitSpec = SplitSpec(), min_length: int = 72):
    """Chronological train / validation / test partition.

    The test block is the trailing ``test_fraction`` of the series and the
    validation block is the trailing ``validation_fraction`` of what remains,
    so validation sits directly before test.

    Raises
    ------
    SeriesTooShort
        If any segment is shorter than ``min_length`` (normally L + H).
    """
    n_train, n_val, n_test = spec.sizes(len(series))
    for label, size in (("train", n_train), ("validation", n_val), ("test", n_test)):
        if size < min_length:
            raise SeriesTooShort(f"{label} segment has {size} samples, need at least {min_length}")
    a, b = n_train, n_train + n_val
    return series.slice(0, a), series.slice(a, b), series.slice(b, len(series))


# ---------------------------------------------------------------------------
# windows


@dataclass(frozen=True, eq=False)
class Window:
    """Context of length L followed by a horizon of length H.

    ``future_covariates`` carries zeros wherever a channel is not known in
    advance; ``future_available`` says which entries are real data.
    """

    origin: int  # index of the last context sample in the parent series
    context: np.ndarray  # (L,)
    context_covariates: np.ndarray  # (L, C)
    future_covariates: np.ndarray  # (H, C)
    future_available: np.ndarray  # (H, C) bool
    channels: tuple[str, ...]
    context_timestamps: np.ndarray
    future_timestamps: np.ndarray
    future_target: np.ndarray | None = None

    @property
    def origin_timestamp(self) -> int:
        return int(self.context_timestamps[-1])


def window_at(series: TimeSeries, origin: int, L: int, H: int, with_target: bool = True) -> Window:
    """Window whose context ends at index ``origin``.

    The horizon may run past the end of the series only when
    ``with_target`` is false and no covariates are needed there, which in
    practice means it must fit.
    """
    n = len(series)
    start = origin - L + 1
    stop = origin + 1 + H
    if start < 0 or stop > n:
        raise SeriesTooShort(f"window [{start}, {stop}) does not fit a series of length {n}")
    names = tuple(series.covariates)
    cov = series.covariate_matrix()
    known = np.array([series.future_known[c] for c in names], dtype=bool)
    future = cov[origin + 1 : stop].copy()
    available = np.broadcast_to(known, future.shape).copy()
    future[:, ~known] = 0.0
    return Window(
        origin=origin,
        context=series.target[start : origin + 1].copy(),
        context_covariates=cov[start : origin + 1].copy(),
        future_covariates=future,
        future_available=available,
        channels=names,
        context_timestamps=series.timestamps[start : origin + 1].copy(),
        future_timestamps=series.timestamps[origin + 1 : stop].copy(),
        future_target=series.target[origin + 1 : stop].copy() if with_target else None,
    )


def count_windows(n: int, L: int, H: int, stride: int = 1) -> int:
    if n < L + H:
        return 0
    return (n - L - H) // stride + 1


def windows(series: TimeSeries, L: int, H: int, stride: int = 1) -> list[Window]:
    """Every window whose context and horizon fit inside ``series``."""
    if min(L, H, stride) < 1:
        raise ValueError("L, H and stride must all be >= 1")
    n = len(series)
    if n < L + H:
        raise SeriesTooShort(f"series of length {n} cannot hold a window of {L} + {H}")
    return [window_at(series, s + L - 1, L, H) for s in range(0, n - L - H + 1, stride)]


# ---------------------------------------------------------------------------
# CSV


def format_timestamp(epoch: int) -> str:
    return datetime.fromtimestamp(int(epoch), tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def parse_timestamp(text: str) -> int:
    text = text.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


def read_csv(path, capacity: float = REFERENCE_CAPACITY, future_known: Mapping[str, bool] | None = None) -> TimeSeries:
    """Load a series written in the ``timestamp,power_mw,...`` layout.

    Any extra columns become covariate channels. Missing or unparsable
    cells raise :class:`ParseError` with the 1-based file row.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError("empty file", row=1) from None
        for required in ("timestamp", TARGET_COLUMN):
            if required not in header:
                raise ParseError(f"missing column {required!r}", row=1)
        if len(set(header)) != len(header):
            raise ParseError("duplicate column names", row=1)
        ts, cols = [], {h: [] for h in header if h != "timestamp"}
        for rowno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} cells, found {len(row)}", row=rowno)
            for name, cell in zip(header, row):
                if cell.strip() == "":
                    raise ParseError("missing value", row=rowno, column=name)
                if name == "timestamp":
                    try:
                        ts.append(parse_timestamp(cell))
                    except ValueError:
                        raise ParseError(f"bad timestamp {cell!r}", row=rowno, column=name) from None
                else:
                    try:
                        cols[name].append(float(cell))
                    except ValueError:
                        raise ParseError(f"bad number {cell!r}", row=rowno, column=name) from None
    if not ts:
        raise ParseError("no data rows", row=2)
    target = cols.pop(TARGET_COLUMN)
    return TimeSeries(ts, target, cols, dict(future_known or {}), capacity)


def write_csv(series: TimeSeries, path) -> None:
    path = Path(path)
    names = series.channel_names
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp", TARGET_COLUMN, *names])
        cov = series.covariate_matrix()
        for i in range(len(series)):
            w.writerow([format_timestamp(series.timestamps[i]), repr(float(series.target[i]))]
                       + [repr(float(v)) for v in cov[i]])
