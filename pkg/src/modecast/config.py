"""Experiment configuration: nested dataclasses, YAML loading, dotted overrides.

A single structured file drives every command.  Command-line overrides use
dotted paths (``vmd.alpha=500``) and must reference keys that already exist;
values are coerced to the type of the default they replace.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .forecaster import ForecasterConfig
from .vmd import VmdConfig

__all__ = [
    "DataConfig",
    "AswlConfig",
    "SplitConfig",
    "TrainingConfig",
    "BaselineConfig",
    "BacktestConfig",
    "ExperimentConfig",
    "load_config",
    "apply_overrides",
]


class ConfigError(ValueError):
    """Bad configuration file or override."""


@dataclass(frozen=True)
class DataConfig:
    path: str | None = None
    column: str = "close"
    date_column: str = "date"
    generator: dict | None = None   # e.g. {"name": "trend_two_tone", "n": 3000, "seed": 7}

    def __post_init__(self) -> None:
        if (self.path is None) == (self.generator is None):
            raise ConfigError("data: set exactly one of 'path' or 'generator'")


@dataclass(frozen=True)
class AswlConfig:
    enabled: bool = True
    train_theta: bool = True
    init: str = "ranges"   # ranges | uniform
    aggregate: str = "sum"

    def __post_init__(self) -> None:
        if self.init not in ("ranges", "uniform"):
            raise ConfigError(f"aswl.init must be 'ranges' or 'uniform', got {self.init!r}")
        if self.aggregate != "sum":
            raise ConfigError("aswl.aggregate supports only 'sum'")


@dataclass(frozen=True)
class SplitConfig:
    n_periods: int = 5
    train_fraction: float = 0.8


@dataclass(frozen=True)
class TrainingConfig:
    epochs: int = 20
    batch_size: int = 32
    learning_rate: float = 0.001
    seeds: tuple[int, ...] = (0,)

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ConfigError("training.epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("training.batch_size must be >= 1")
        if not self.seeds:
            raise ConfigError("training.seeds must be nonempty")


@dataclass(frozen=True)
class BaselineConfig:
    names: tuple[str, ...] = ("naive", "linear_ar")
    ar_order: int = 8

    def __post_init__(self) -> None:
        for name in self.names:
            if name not in ("naive", "linear_ar"):
                raise ConfigError(f"unknown baseline {name!r}")


@dataclass(frozen=True)
class BacktestConfig:
    strict_causal: bool = False
    workers: int = 1

    def __post_init__(self) -> None:
        if self.workers < 1:
            raise ConfigError("backtest.workers must be >= 1")


@dataclass(frozen=True)
class ExperimentConfig:
    data: DataConfig
    vmd: VmdConfig = field(default_factory=lambda: VmdConfig(n_modes=10))
    model: ForecasterConfig = field(default_factory=ForecasterConfig)
    aswl: AswlConfig = field(default_factory=AswlConfig)
    split: SplitConfig = field(default_factory=SplitConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    baselines: BaselineConfig = field(default_factory=BaselineConfig)
    backtest: BacktestConfig = field(default_factory=BacktestConfig)

    def to_dict(self) -> dict:
        return {
            "data": {
                "path": self.data.path,
                "column": self.data.column,
                "date_column": self.data.date_column,
                "generator": self.data.generator,
            },
            "vmd": self.vmd.to_dict(),
            "model": self.model.to_dict(),
            "aswl": {
                "enabled": self.aswl.enabled,
                "train_theta": self.aswl.train_theta,
                "init": self.aswl.init,
                "aggregate": self.aswl.aggregate,
            },
            "split": {
                "n_periods": self.split.n_periods,
                "train_fraction": self.split.train_fraction,
            },
            "training": {
                "epochs": self.training.epochs,
                "batch_size": self.training.batch_size,
                "learning_rate": self.training.learning_rate,
                "seeds": list(self.training.seeds),
            },
            "baselines": {
                "names": list(self.baselines.names),
                "ar_order": self.baselines.ar_order,
            },
            "backtest": {
                "strict_causal": self.backtest.strict_causal,
                "workers": self.backtest.workers,
            },
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        known = {
            "data", "vmd", "model", "aswl", "split", "training", "baselines", "backtest",
        }
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        if "data" not in raw:
            raise ConfigError("config must have a 'data' section")

        def build(section: str, factory, defaults: dict):
            merged = dict(defaults)
            merged.update(raw.get(section) or {})
            extra = set(merged) - set(defaults)
            if extra:
                raise ConfigError(f"unknown keys in '{section}': {sorted(extra)}")
            try:
                return factory(**merged)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad '{section}' section: {exc}") from exc

        data = build("data", DataConfig, {
            "path": None, "column": "close", "date_column": "date", "generator": None,
        })
        vmd = build("vmd", VmdConfig, {
            "n_modes": 10, "alpha": 2000.0, "tau": 0.0, "tol": 1e-7,
            "max_iter": 500, "omega_init": "uniform", "seed": 0, "sort_modes": True,
        })
        model = build("model", ForecasterConfig, ForecasterConfig().to_dict())
        aswl = build("aswl", AswlConfig, {
            "enabled": True, "train_theta": True, "init": "ranges", "aggregate": "sum",
        })
        split = build("split", SplitConfig, {"n_periods": 5, "train_fraction": 0.8})

        training_defaults = {
            "epochs": 20, "batch_size": 32, "learning_rate": 0.001, "seeds": (0,),
        }
        training_raw = dict(training_defaults)
        training_raw.update(raw.get("training") or {})
        extra = set(training_raw) - set(training_defaults)
        if extra:
            raise ConfigError(f"unknown keys in 'training': {sorted(extra)}")
        training_raw["seeds"] = tuple(int(s) for s in training_raw["seeds"])
        training = TrainingConfig(**training_raw)

        baseline_defaults = {"names": ("naive", "linear_ar"), "ar_order": 8}
        baseline_raw = dict(baseline_defaults)
        baseline_raw.update(raw.get("baselines") or {})
        extra = set(baseline_raw) - set(baseline_defaults)
        if extra:
            raise ConfigError(f"unknown keys in 'baselines': {sorted(extra)}")
        baseline_raw["names"] = tuple(baseline_raw["names"])
        baselines = BaselineConfig(**baseline_raw)

        backtest = build("backtest", BacktestConfig, {"strict_causal": False, "workers": 1})
        return cls(
            data=data, vmd=vmd, model=model, aswl=aswl, split=split,
            training=training, baselines=baselines, backtest=backtest,
        )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    raw = yaml.safe_load(path.read_text())
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: config must be a mapping")
    return ExperimentConfig.from_dict(raw)


def _coerce(text: str, like) -> object:
    if isinstance(like, bool):
        lowered = text.strip().lower()
        if lowered in ("true", "1", "yes", "on"):
            return True
        if lowered in ("false", "0", "no", "off"):
            return False
        raise ConfigError(f"cannot parse boolean from {text!r}")
    if isinstance(like, int) and not isinstance(like, bool):
        return int(text)
    if isinstance(like, float):
        return float(text)
    if isinstance(like, (list, tuple)):
        return yaml.safe_load(text)
    if like is None:
        return yaml.safe_load(text)
    return text


def apply_overrides(config: ExperimentConfig, overrides: list[str]) -> ExperimentConfig:
    """Apply ``section.key=value`` overrides on top of a parsed config."""
    tree = config.to_dict()
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} must look like section.key=value")
        dotted, text = item.split("=", 1)
        keys = dotted.strip().split(".")
        node = tree
        for key in keys[:-1]:
            if not isinstance(node, dict) or key not in node:
                raise ConfigError(f"override {dotted!r}: no such config key")
            node = node[key]
        leaf = keys[-1]
        if not isinstance(node, dict) or leaf not in node:
            raise ConfigError(f"override {dotted!r}: no such config key")
        node[leaf] = _coerce(text, node[leaf])
    return ExperimentConfig.from_dict(tree)
