"""Probabilistic day-ahead wind power forecasting with an autoregressive recurrent network."""

__version__ = "0.1.0"

from .analysis import CorrelogramResult, acf, pacf
from .baselines import ModifiedPersistenceModel, modified_persistence_forecast, persistence_forecast
from .deepar import (
    DeepARConfig,
    DeepARModel,
    ForecastDistribution,
    PredictionInterval,
    TrainedModel,
    forecast,
    prediction_interval,
    quantiles,
    train,
)
from .metrics import EvaluationReport, MsisContext, mape, mean_wql, msis, nrmse, picp, pinball, rmse, wql
from .pipeline import DATASET_CONFIGS, DatasetConfig, GridSearchSpec, clamp_pi, compare_clamped, grid_search, run_experiment
from .series import SplitSpec, TimeSeries, Window, read_csv, split, windows, write_csv
from .synthetic import FarmSpec, WeatherSpec, generate, power_curve
