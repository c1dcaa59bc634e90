"""End-to-end orchestration: decompose, normalize, window, train, forecast,
aggregate, score, and backtest across periods and seeds.

The default protocol decomposes each full period (train plus test) before
splitting, which mirrors how decomposition-ensemble results are usually
presented but leaks future samples into the training modes.  A
``strict_causal`` switch instead decomposes only the train portion for
training and re-decomposes the train-plus-observed prefix at every test step;
reports label which protocol produced them.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import scale_weights as swmod
from .autodiff import Adam, Tape, Tensor, load_checkpoint, save_checkpoint
from .baselines import baseline_linear_ar, baseline_naive
from .config import ExperimentConfig
from .forecaster import PatchForecaster
from .metrics import MetricPair, metric_pair
from .series_io import (
    NormalizationParams,
    PeriodSplit,
    load_csv,
    make_windows,
    minmax_apply,
    minmax_fit,
    minmax_invert,
    split_periods,
)
from .synthetic import generate
from .vmd import decompose, write_decomposition_csv, write_decomposition_metadata

__all__ = [
    "PeriodCell",
    "FailedCell",
    "ExperimentReport",
    "PipelineStageError",
    "load_series",
    "run_period",
    "run_backtest",
    "train_period_to_dir",
    "forecast_from_dir",
    "render_report_text",
    "report_to_dict",
    "write_forecast_csv",
    "read_forecast_csv",
]

SMAPE_NOTE = (
    "smape uses the symmetric denominator (|actual| + |predicted|) with factor 2 "
    "and is bounded in [0, 2]; zero/zero points contribute 0."
)


class PipelineStageError(RuntimeError):
    """A pipeline stage failed; carries the stage name for diagnostics."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[stage {stage}] {message}")
        self.stage = stage


@dataclass
class PeriodCell:
    """Everything one (period, seed) run produced."""

    period_index: int
    seed: int
    global_start: int
    train_size: int
    decomposition_label: str
    overall: MetricPair
    per_channel: list[MetricPair] | None
    baselines: dict[str, MetricPair]
    aswl_enabled: bool
    aswl_weights_initial: list[float] | None
    aswl_weights_final: list[float] | None
    weight_sum_history: list[float]
    epoch_losses: list[float]
    vmd_iterations: int
    vmd_converged: bool
    vmd_omegas: list[float]
    runtime_s: float
    test_index: np.ndarray = field(repr=False)
    actual: np.ndarray = field(repr=False)
    predicted: np.ndarray = field(repr=False)
    channel_actual: np.ndarray | None = field(repr=False, default=None)
    channel_predicted: np.ndarray | None = field(repr=False, default=None)
    modes: np.ndarray | None = field(repr=False, default=None)

    @property
    def ok(self) -> bool:
        return True


@dataclass
class FailedCell:
    period_index: int
    seed: int
    stage: str
    message: str

    @property
    def ok(self) -> bool:
        return False


@dataclass
class ExperimentReport:
    config: dict
    splits: list[PeriodSplit]
    cells: list[PeriodCell | FailedCell]
    total_runtime_s: float = 0.0

    @property
    def succeeded(self) -> list[PeriodCell]:
        return [c for c in self.cells if c.ok]

    @property
    def failed(self) -> list[FailedCell]:
        return [c for c in self.cells if not c.ok]

    def period_mean(self, period_index: int) -> MetricPair | None:
        cells = [c for c in self.succeeded if c.period_index == period_index]
        if not cells:
            return None
        return MetricPair(
            mse=float(np.mean([c.overall.mse for c in cells])),
            smape=float(np.mean([c.overall.smape for c in cells])),
        )

    def overall_mean(self) -> MetricPair | None:
        cells = self.succeeded
        if not cells:
            return None
        return MetricPair(
            mse=float(np.mean([c.overall.mse for c in cells])),
            smape=float(np.mean([c.overall.smape for c in cells])),
        )


def load_series(config: ExperimentConfig) -> np.ndarray:
    """Materialize the configured input series (CSV file or generator)."""
    if config.data.path is not None:
        series = load_csv(config.data.path, config.data.column, config.data.date_column)
        return series.values
    return np.asarray(generate(config.data.generator), dtype=np.float64)


# -- single-period pipeline ---------------------------------------------------


def _stage(name: str):
    """Decorator that tags any stage failure with the stage name."""

    def wrap(fn):
        def inner(*args, **kwargs):
            try:
                return fn(*args, **kwargs)
            except PipelineStageError:
                raise
            except Exception as exc:
                raise PipelineStageError(name, str(exc)) from exc

        return inner

    return wrap


@_stage("decompose")
def _decompose_stage(values: np.ndarray, train_size: int, config: ExperimentConfig):
    if config.backtest.strict_causal:
        result = decompose(values[:train_size], config.vmd)
        return result, "strict_causal"
    result = decompose(values, config.vmd)
    return result, "full_period"


@_stage("normalize")
def _normalize_stage(modes: np.ndarray, train_size: int):
    """Fit min-max on each mode's train portion only; reuse for test."""
    params: list[NormalizationParams] = []
    ranges = np.empty(modes.shape[0])
    normed = np.empty_like(modes)
    for m, mode in enumerate(modes):
        p = minmax_fit(mode[:train_size])
        params.append(p)
        ranges[m] = p.range
        normed[m] = minmax_apply(mode, p)
    return params, ranges, normed


@_stage("train")
def _train_stage(
    train_norm: np.ndarray,  # [K, train_size]
    ranges: np.ndarray,
    config: ExperimentConfig,
    seed: int,
):
    k = train_norm.shape[0]
    cfg_m = config.model
    batch = make_windows(train_norm.T, cfg_m.lookback, cfg_m.horizon)
    children = np.random.SeedSequence(seed).spawn(k + 1)
    models = [PatchForecaster(cfg_m, np.random.default_rng(children[m])) for m in range(k)]
    shuffle_rng = np.random.default_rng(children[k])

    sw = None
    if config.aswl.enabled:
        sw = (
            swmod.init_from_scales(ranges)
            if config.aswl.init == "ranges"
            else swmod.uniform(k)
        )
    params = [p for model in models for p in model.parameters()]
    if sw is not None and config.aswl.train_theta:
        params.append(sw.theta)
    optimizer = Adam(params, lr=config.training.learning_rate)

    weights_initial = swmod.weights(sw).tolist() if sw is not None else None
    weight_sum_history: list[float] = []
    epoch_losses: list[float] = []
    n_windows = batch.n_windows
    for _epoch in range(config.training.epochs):
        order = shuffle_rng.permutation(n_windows)
        batch_losses = []
        for start in range(0, n_windows, config.training.batch_size):
            idx = order[start: start + config.training.batch_size]
            tape = Tape()
            losses = []
            for m in range(k):
                pred = models[m].forward_on_tape(tape, batch.inputs[idx, :, m], training=True)
                losses.append(tape.mse(pred, Tensor(batch.targets[idx, :, m])))
            total = swmod.weighted_loss(tape, losses, sw)
            value = float(total.values)
            if not math.isfinite(value):
                raise FloatingPointError(f"non-finite training loss {value}")
            optimizer.zero_grad()
            if sw is not None:
                sw.theta.zero_grad()
            tape.backward(total)
            optimizer.step()
            batch_losses.append(value)
            if sw is not None:
                weight_sum_history.append(float(swmod.weights(sw).sum()))
        epoch_losses.append(float(np.mean(batch_losses)))

    weights_final = swmod.weights(sw).tolist() if sw is not None else None
    return models, sw, weights_initial, weights_final, weight_sum_history, epoch_losses


def _block_starts(train_size: int, n: int, horizon: int) -> np.ndarray:
    return np.arange(train_size, n, horizon)


@_stage("forecast")
def _forecast_full_period(
    modes_norm: np.ndarray,   # [K, n]
    params: list[NormalizationParams],
    models: list[PatchForecaster],
    train_size: int,
    config: ExperimentConfig,
):
    """Rolling forecast with true history: horizon-sized blocks whose lookback
    windows are built from the actual (decomposed) series."""
    k, n = modes_norm.shape
    lookback, horizon = config.model.lookback, config.model.horizon
    starts = _block_starts(train_size, n, horizon)
    n_test = n - train_size
    channel_pred = np.empty((k, n_test))
    for m in range(k):
        windows = np.stack([modes_norm[m, s - lookback: s] for s in starts])
        preds = models[m].predict(windows)            # [blocks, horizon]
        flat = preds.reshape(-1)[:n_test]
        channel_pred[m] = minmax_invert(flat, params[m])
    return channel_pred


@_stage("forecast")
def _forecast_strict_causal(
    values: np.ndarray,
    params: list[NormalizationParams],
    models: list[PatchForecaster],
    train_size: int,
    config: ExperimentConfig,
):
    """Re-decompose the observed prefix at every forecast block; no test-range
    samples ever enter the decomposition."""
    k = len(models)
    n = values.shape[0]
    lookback, horizon = config.model.lookback, config.model.horizon
    starts = _block_starts(train_size, n, horizon)
    n_test = n - train_size
    channel_pred = np.empty((k, n_test))
    for s in starts:
        prefix = decompose(values[:s], config.vmd)
        for m in range(k):
            window = minmax_apply(prefix.modes[m, s - lookback: s], params[m])
            pred = models[m].predict(window[None, :]).reshape(-1)
            chunk = minmax_invert(pred, params[m])
            stop = min(s + horizon, n)
            channel_pred[m, s - train_size: stop - train_size] = chunk[: stop - s]
    return channel_pred


def run_period(
    values: np.ndarray,
    train_size: int,
    config: ExperimentConfig,
    seed: int,
    period_index: int = 0,
    global_start: int = 0,
) -> PeriodCell:
    """Run the full per-period flow and score it against the raw prices."""
    cell, _artifacts = _run_period_full(
        values, train_size, config, seed, period_index, global_start
    )
    return cell


def _run_period_full(
    values: np.ndarray,
    train_size: int,
    config: ExperimentConfig,
    seed: int,
    period_index: int = 0,
    global_start: int = 0,
) -> tuple[PeriodCell, dict]:
    t_begin = time.perf_counter()
    values = np.asarray(values, dtype=np.float64)
    n = values.shape[0]
    lookback, horizon = config.model.lookback, config.model.horizon
    if train_size < lookback + horizon:
        raise PipelineStageError(
            "window", f"train portion ({train_size}) shorter than lookback+horizon"
        )

    vmd_result, label = _decompose_stage(values, train_size, config)
    modes = vmd_result.modes
    params, ranges, modes_norm = _normalize_stage(modes, train_size)
    (
        models,
        sw,
        weights_initial,
        weights_final,
        weight_sum_history,
        epoch_losses,
    ) = _train_stage(modes_norm[:, :train_size], ranges, config, seed)

    if label == "strict_causal":
        channel_pred = _forecast_strict_causal(values, params, models, train_size, config)
        channel_actual = None
        per_channel = None
    else:
        channel_pred = _forecast_full_period(modes_norm, params, models, train_size, config)
        channel_actual = modes[:, train_size:]
        per_channel = [
            metric_pair(channel_actual[m], channel_pred[m]) for m in range(len(models))
        ]

    predicted = channel_pred.sum(axis=0)
    actual = values[train_size:]
    overall = metric_pair(actual, predicted)

    baseline_scores: dict[str, MetricPair] = {}
    train_values = values[:train_size]
    if "naive" in config.baselines.names:
        baseline_scores["naive"] = metric_pair(actual, baseline_naive(train_values, actual))
    if "linear_ar" in config.baselines.names:
        baseline_scores["linear_ar"] = metric_pair(
            actual, baseline_linear_ar(train_values, config.baselines.ar_order, actual)
        )

    cell = PeriodCell(
        period_index=period_index,
        seed=seed,
        global_start=global_start,
        train_size=train_size,
        decomposition_label=label,
        overall=overall,
        per_channel=per_channel,
        baselines=baseline_scores,
        aswl_enabled=config.aswl.enabled,
        aswl_weights_initial=weights_initial,
        aswl_weights_final=weights_final,
        weight_sum_history=weight_sum_history,
        epoch_losses=epoch_losses,
        vmd_iterations=vmd_result.iterations,
        vmd_converged=vmd_result.converged,
        vmd_omegas=[float(w) for w in vmd_result.omegas],
        runtime_s=time.perf_counter() - t_begin,
        test_index=np.arange(global_start + train_size, global_start + n),
        actual=actual,
        predicted=predicted,
        channel_actual=channel_actual,
        channel_predicted=channel_pred,
        modes=modes,
    )
    artifacts = {
        "models": models,
        "scale_weights": sw,
        "vmd_result": vmd_result,
        "params": params,
        "ranges": ranges,
    }
    return cell, artifacts


# -- backtest across periods and seeds ---------------------------------------


def _run_cell(args) -> PeriodCell | FailedCell:
    values, split, config, seed = args
    try:
        return run_period(
            values[split.start: split.stop],
            split.train_size,
            config,
            seed,
            period_index=split.period_index,
            global_start=split.start,
        )
    except PipelineStageError as exc:
        return FailedCell(split.period_index, seed, exc.stage, str(exc))
    except Exception as exc:  # pragma: no cover - defensive
        return FailedCell(split.period_index, seed, "unknown", str(exc))


def run_backtest(config: ExperimentConfig, outdir=None) -> ExperimentReport:
    """Every period x seed cell, aggregated; failures are recorded per cell and
    do not stop the remaining cells.  ``outdir`` (optional) receives forecast
    CSVs, decomposition CSVs, plot data, the report, and a manifest."""
    t_begin = time.perf_counter()
    values = load_series(config)
    splits = split_periods(len(values), config.split.n_periods, config.split.train_fraction)
    jobs = [(values, split, config, seed) for split in splits for seed in config.training.seeds]

    if config.backtest.workers > 1:
        with ProcessPoolExecutor(max_workers=config.backtest.workers) as pool:
            cells = list(pool.map(_run_cell, jobs))
    else:
        cells = [_run_cell(job) for job in jobs]

    report = ExperimentReport(
        config=config.to_dict(),
        splits=splits,
        cells=cells,
        total_runtime_s=time.perf_counter() - t_begin,
    )
    if outdir is not None:
        write_backtest_artifacts(report, outdir)
    return report


# -- artifact emission --------------------------------------------------------


def write_forecast_csv(path, t: np.ndarray, actual: np.ndarray, predicted: np.ndarray) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "actual", "predicted"])
        for ti, a, p in zip(t, actual, predicted):
            writer.writerow([int(ti), repr(float(a)), repr(float(p))])


def read_forecast_csv(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    path = Path(path)
    t, actual, predicted = [], [], []
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            t.append(int(row["t"]))
            actual.append(float(row["actual"]))
            predicted.append(float(row["predicted"]))
    return np.asarray(t), np.asarray(actual), np.asarray(predicted)


def _cell_dict(cell: PeriodCell | FailedCell) -> dict:
    if not cell.ok:
        return {
            "period": cell.period_index,
            "seed": cell.seed,
            "ok": False,
            "stage": cell.stage,
            "message": cell.message,
        }
    out = {
        "period": cell.period_index,
        "seed": cell.seed,
        "ok": True,
        "decomposition": cell.decomposition_label,
        "mse": cell.overall.mse,
        "smape": cell.overall.smape,
        "baselines": {
            name: {"mse": mp.mse, "smape": mp.smape} for name, mp in cell.baselines.items()
        },
        "per_channel": (
            None
            if cell.per_channel is None
            else [{"mse": mp.mse, "smape": mp.smape} for mp in cell.per_channel]
        ),
        "aswl": {
            "enabled": cell.aswl_enabled,
            "weights_initial": cell.aswl_weights_initial,
            "weights_final": cell.aswl_weights_final,
        },
        "vmd": {
            "iterations": cell.vmd_iterations,
            "converged": cell.vmd_converged,
            "omegas": cell.vmd_omegas,
        },
        "epoch_losses": cell.epoch_losses,
    }
    return out


def report_to_dict(report: ExperimentReport) -> dict:
    """Machine-readable report; deterministic (no wall-clock content)."""
    aggregate: dict = {"periods": {}}
    for split in report.splits:
        mean = report.period_mean(split.period_index)
        aggregate["periods"][str(split.period_index)] = (
            None if mean is None else {"mse": mean.mse, "smape": mean.smape}
        )
    overall = report.overall_mean()
    aggregate["overall"] = None if overall is None else {
        "mse": overall.mse, "smape": overall.smape,
    }
    return {
        "config": report.config,
        "splits": [
            {
                "period": s.period_index,
                "train": list(s.train),
                "test": list(s.test),
            }
            for s in report.splits
        ],
        "cells": [_cell_dict(c) for c in report.cells],
        "aggregate": aggregate,
        "n_failed": len(report.failed),
        "notes": [SMAPE_NOTE],
    }


def _fmt(x: float) -> str:
    return format(x, ".8g")


def render_report_text(report: ExperimentReport) -> str:
    """Human-readable report body.  Deterministic: no timestamps or runtimes
    (those live in timing.json)."""
    lines: list[str] = []
    cfg_json = json.dumps(report.config, sort_keys=True)
    cfg_hash = hashlib.sha256(cfg_json.encode()).hexdigest()[:16]
    lines.append("# modecast backtest report")
    lines.append(f"config_hash: {cfg_hash}")
    lines.append(f"periods: {len(report.splits)}")
    seeds = report.config.get("training", {}).get("seeds", [])
    lines.append(f"seeds: {seeds}")
    lines.append("")
    for cell in report.cells:
        if not cell.ok:
            lines.append(f"## period {cell.period_index} seed {cell.seed}: FAILED")
            lines.append(f"stage: {cell.stage}")
            lines.append(f"message: {cell.message}")
            lines.append("")
            continue
        lines.append(f"## period {cell.period_index} seed {cell.seed}")
        lines.append(f"decomposition: {cell.decomposition_label}")
        lines.append(f"overall: mse={_fmt(cell.overall.mse)} smape={_fmt(cell.overall.smape)}")
        for name in sorted(cell.baselines):
            mp = cell.baselines[name]
            lines.append(f"baseline {name}: mse={_fmt(mp.mse)} smape={_fmt(mp.smape)}")
        if cell.aswl_enabled:
            init_w = " ".join(_fmt(w) for w in cell.aswl_weights_initial)
            final_w = " ".join(_fmt(w) for w in cell.aswl_weights_final)
            lines.append(f"aswl weights initial: {init_w}")
            lines.append(f"aswl weights final:   {final_w}")
        else:
            lines.append("aswl: off")
        omegas = " ".join(_fmt(w) for w in cell.vmd_omegas)
        lines.append(
            f"vmd: iterations={cell.vmd_iterations} converged={cell.vmd_converged} omegas=[{omegas}]"
        )
        if cell.per_channel is not None:
            for m, mp in enumerate(cell.per_channel):
                lines.append(f"  imf{m}: mse={_fmt(mp.mse)} smape={_fmt(mp.smape)}")
        lines.append("")
    lines.append("## aggregate")
    for split in report.splits:
        mean = report.period_mean(split.period_index)
        text = "no successful cells" if mean is None else (
            f"mse={_fmt(mean.mse)} smape={_fmt(mean.smape)}"
        )
        lines.append(f"period {split.period_index} mean: {text}")
    overall = report.overall_mean()
    text = "no successful cells" if overall is None else (
        f"mse={_fmt(overall.mse)} smape={_fmt(overall.smape)}"
    )
    lines.append(f"overall mean: {text}")
    if report.failed:
        lines.append(f"failed cells: {len(report.failed)}")
    lines.append("")
    lines.append(f"note: {SMAPE_NOTE}")
    lines.append("")
    return "\n".join(lines)


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    digest.update(path.read_bytes())
    return digest.hexdigest()


def write_manifest(outdir, config: dict, seeds, paths: list[Path]) -> None:
    """Config snapshot, seeds, and content hashes of every emitted artifact;
    enough to check a rerun reproduced byte-identical outputs."""
    outdir = Path(outdir)
    manifest = {
        "config": config,
        "seeds": list(seeds),
        "artifacts": {str(p.relative_to(outdir)): _sha256(p) for p in sorted(paths)},
    }
    (outdir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def write_backtest_artifacts(report: ExperimentReport, outdir) -> None:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    emitted: list[Path] = []

    decomposition_written: set[int] = set()
    for cell in report.cells:
        if not cell.ok:
            continue
        period_dir = outdir / f"period{cell.period_index}"
        period_dir.mkdir(exist_ok=True)
        if cell.period_index not in decomposition_written and cell.modes is not None:
            decomp = period_dir / "decomposition.csv"
            write_decomposition_csv(decomp, cell.modes)
            emitted.append(decomp)
            decomposition_written.add(cell.period_index)
        cell_dir = period_dir / f"seed{cell.seed}"
        cell_dir.mkdir(exist_ok=True)
        forecast = cell_dir / "forecast.csv"
        write_forecast_csv(forecast, cell.test_index, cell.actual, cell.predicted)
        emitted.append(forecast)
        if cell.channel_actual is not None and cell.channel_predicted is not None:
            for m in range(cell.channel_predicted.shape[0]):
                path = cell_dir / f"imf{m}_forecast.csv"
                write_forecast_csv(
                    path, cell.test_index, cell.channel_actual[m], cell.channel_predicted[m]
                )
                emitted.append(path)

    report_txt = outdir / "report.txt"
    report_txt.write_text(render_report_text(report))
    emitted.append(report_txt)

    report_json = outdir / "report.json"
    report_json.write_text(json.dumps(report_to_dict(report), indent=2, sort_keys=True) + "\n")
    emitted.append(report_json)

    timing = {
        "total_s": report.total_runtime_s,
        "cells": {
            f"period{c.period_index}_seed{c.seed}": c.runtime_s for c in report.succeeded
        },
    }
    (outdir / "timing.json").write_text(json.dumps(timing, indent=2, sort_keys=True) + "\n")

    write_manifest(
        outdir,
        report.config,
        report.config.get("training", {}).get("seeds", []),
        emitted,
    )


# -- single-period persistence (train / forecast commands) --------------------


def train_period_to_dir(
    config: ExperimentConfig, period_index: int, seed: int, outdir
) -> PeriodCell:
    """Train one (period, seed) cell and persist models plus the state needed
    to forecast later: decomposition, normalization, weights, config."""
    values = load_series(config)
    splits = split_periods(len(values), config.split.n_periods, config.split.train_fraction)
    if not 0 <= period_index < len(splits):
        raise ValueError(f"period_index {period_index} out of range [0, {len(splits)})")
    split = splits[period_index]
    slice_values = values[split.start: split.stop]
    cell, artifacts = _run_period_full(
        slice_values,
        split.train_size,
        config,
        seed,
        period_index=period_index,
        global_start=split.start,
    )
    models = artifacts["models"]
    sw = artifacts["scale_weights"]
    vmd_result = artifacts["vmd_result"]
    params = artifacts["params"]
    ranges = artifacts["ranges"]

    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    for m, model in enumerate(models):
        save_checkpoint(
            outdir / f"channel{m}.npz",
            model.param_arrays(),
            meta={
                "model": config.model.to_dict(),
                "channel": m,
                "seed": seed,
                "epochs_trained": config.training.epochs,
            },
        )
    state = {
        "values": slice_values,
        "modes": vmd_result.modes,
        "mins": np.array([p.min for p in params]),
        "maxs": np.array([p.max for p in params]),
        "ranges": ranges,
        "theta": sw.theta.values if sw is not None else np.zeros(len(models)),
        "train_size": np.array(split.train_size),
        "period_index": np.array(period_index),
        "global_start": np.array(split.start),
    }
    save_checkpoint(
        outdir / "state.npz",
        state,
        meta={
            "config": config.to_dict(),
            "seed": seed,
            "decomposition": cell.decomposition_label,
            "aswl_enabled": config.aswl.enabled,
        },
    )
    write_decomposition_csv(outdir / "decomposition.csv", vmd_result.modes)
    write_decomposition_metadata(outdir / "decomposition_meta.json", config.vmd, vmd_result)
    return cell


def forecast_from_dir(run_dir) -> dict:
    """Load a trained run directory and produce the test-segment forecast.

    Pure function of the persisted state: repeated calls are bit-identical.
    """
    run_dir = Path(run_dir)
    state, meta = load_checkpoint(run_dir / "state.npz")
    config = ExperimentConfig.from_dict(meta["config"])
    values = state["values"]
    modes = state["modes"]
    train_size = int(np.asarray(state["train_size"]).reshape(-1)[0])
    global_start = int(np.asarray(state["global_start"]).reshape(-1)[0])
    k = modes.shape[0]
    params = [
        NormalizationParams(min=float(state["mins"][m]), max=float(state["maxs"][m]))
        for m in range(k)
    ]
    models = []
    for m in range(k):
        arrays, _ = load_checkpoint(run_dir / f"channel{m}.npz")
        model = PatchForecaster(config.model, np.random.default_rng(0))
        model.load_param_arrays(arrays)
        models.append(model)

    modes_norm = np.stack([minmax_apply(modes[m], params[m]) for m in range(k)])
    if meta["decomposition"] == "strict_causal":
        channel_pred = _forecast_strict_causal(values, params, models, train_size, config)
        channel_actual = None
    else:
        channel_pred = _forecast_full_period(modes_norm, params, models, train_size, config)
        channel_actual = modes[:, train_size:]

    predicted = channel_pred.sum(axis=0)
    actual = values[train_size:]
    return {
        "test_index": np.arange(global_start + train_size, global_start + values.shape[0]),
        "actual": actual,
        "predicted": predicted,
        "channel_actual": channel_actual,
        "channel_predicted": channel_pred,
        "metrics": metric_pair(actual, predicted),
        "decomposition": meta["decomposition"],
    }
