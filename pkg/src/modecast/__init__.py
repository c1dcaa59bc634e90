"""Decomposition-ensemble forecasting toolkit.

Decomposes a univariate price series into band-limited modes, forecasts each
mode with a patch-based attention model trained under an adaptive
scale-weighted loss, and aggregates per-mode forecasts with full backtest and
metrics reporting.
"""

from .autodiff import Adam, Tape, Tensor
from .config import ExperimentConfig, load_config
from .forecaster import ForecasterConfig, PatchForecaster
from .metrics import MetricPair, mse, smape
from .pipeline import ExperimentReport, run_backtest, run_period
from .series_io import PriceSeries, load_csv, make_windows, split_periods
from .vmd import VmdConfig, VmdResult, decompose

__version__ = "0.1.0"

__all__ = [
    "Adam",
    "Tape",
    "Tensor",
    "ExperimentConfig",
    "load_config",
    "ForecasterConfig",
    "PatchForecaster",
    "MetricPair",
    "mse",
    "smape",
    "ExperimentReport",
    "run_backtest",
    "run_period",
    "PriceSeries",
    "load_csv",
    "make_windows",
    "split_periods",
    "VmdConfig",
    "VmdResult",
    "decompose",
    "__version__",
]
