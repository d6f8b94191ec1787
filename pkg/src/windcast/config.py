"""INI run configuration shared by the pipeline and the command line.

Example::

    [data]
    source = synthetic        ; or a path to a CSV file
    n_hours = 8784
    capacity = 54

    [farm]
    n_turbines = 18
    cell_turbines = 12, 6

    [experiment]
    config = config1
    alpha = 0.05

    [model]
    cell_kind = lstm
    layers = 2

    [grid]
    layers = 1, 2, 3

    [run]
    seed = 0
"""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

from .deepar import DeepARConfig
from .errors import ConfigError
from .pipeline import GridSearchSpec
from .series import SplitSpec
from .synthetic import YEAR_2020_HOURS, FarmSpec, WeatherSpec

SECTIONS = ("data", "farm", "weather", "experiment", "model", "grid", "run")


@dataclass(frozen=True)
class ExperimentSpec:
    config: str = "config1"
    alpha: float = 0.05
    m: int = 1
    test_fraction: float = 0.15
    validation_fraction: float = 0.20
    origin_hour: int = 12
    stride: int = 36

    @property
    def split(self) -> SplitSpec:
        return SplitSpec(self.test_fraction, self.validation_fraction)


@dataclass(frozen=True)
class DataSpec:
    source: str = "synthetic"
    n_hours: int = YEAR_2020_HOURS
    capacity: float = 54.0

    @property
    def synthetic(self) -> bool:
        return self.source == "synthetic"


@dataclass(frozen=True)
class RunSpec:
    seed: int = 0
    workers: int = 1


@dataclass(frozen=True)
class RunConfig:
    data: DataSpec = field(default_factory=DataSpec)
    farm: FarmSpec = field(default_factory=FarmSpec)
    weather: WeatherSpec = field(default_factory=WeatherSpec)
    experiment: ExperimentSpec = field(default_factory=ExperimentSpec)
    model: DeepARConfig = field(default_factory=DeepARConfig)
    grid: GridSearchSpec = field(default_factory=GridSearchSpec)
    run: RunSpec = field(default_factory=RunSpec)
    sha256: str = ""
    base_dir: Path = Path(".")

    def data_path(self) -> Path:
        p = Path(self.data.source)
        return p if p.is_absolute() else self.base_dir / p


def _convert(raw: str, default: Any, key: str, section: str):
    try:
        if isinstance(default, bool):
            v = raw.strip().lower()
            if v in ("1", "true", "yes", "on"):
                return True
            if v in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, tuple):
            items = [s.strip() for s in raw.split(",") if s.strip()]
            kind = type(default[0]) if default else str
            return tuple(kind(s) for s in items)
        if isinstance(default, (int, float, str)):
            return type(default)(raw.strip())
    except ValueError:
        raise ConfigError(f"[{section}] {key} = {raw!r} is not a valid {type(default).__name__}") from None
    raise ConfigError(f"[{section}] {key}: unsupported field type")


def _build(cls, section: str, values: dict[str, str]):
    defaults = cls()
    known = {f.name for f in fields(cls)}
    kwargs = {}
    for key, raw in values.items():
        if key not in known:
            raise ConfigError(f"unknown key [{section}] {key}")
        kwargs[key] = _convert(raw, getattr(defaults, key), key, section)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{section}] {exc}") from None


_GRID_KEYS = {"context_length": "context_lengths", "learning_rate": "learning_rates"}


def parse_config(text: str, base_dir: Path = Path(".")) -> RunConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc).splitlines()[0]) from None
    unknown = [s for s in parser.sections() if s not in SECTIONS]
    if unknown:
        raise ConfigError(f"unknown section(s) {unknown}")

    def sec(name):
        return dict(parser[name]) if parser.has_section(name) else {}

    grid_values = {_GRID_KEYS.get(k, k): v for k, v in sec("grid").items()}
    return RunConfig(
        data=_build(DataSpec, "data", sec("data")),
        farm=_build(FarmSpec, "farm", sec("farm")),
        weather=_build(WeatherSpec, "weather", sec("weather")),
        experiment=_build(ExperimentSpec, "experiment", sec("experiment")),
        model=_build(DeepARConfig, "model", sec("model")),
        grid=_build(GridSearchSpec, "grid", grid_values),
        run=_build(RunSpec, "run", sec("run")),
        sha256=hashlib.sha256(text.encode("utf-8")).hexdigest(),
        base_dir=base_dir,
    )


def load_config(path) -> RunConfig:
    if path is None:
        return parse_config("")
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {p}: {exc.strerror}") from None
    return parse_config(text, p.parent)
