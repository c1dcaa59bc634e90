"""Command-line front end.

Six subcommands share one structured YAML config plus dotted-path overrides:

    modecast decompose -c cfg.yaml [--period N]
    modecast train     -c cfg.yaml [--period N] [--seed S]
    modecast forecast  --run-dir DIR
    modecast evaluate  --forecast pred.csv --actual act.csv
    modecast backtest  -c cfg.yaml
    modecast report    --run-dir DIR

Exit codes: 0 success, 1 internal failure, 2 user/input error.  The default
output directory comes from ``--outdir``, else ``$MODECAST_OUTDIR``, else
``./modecast_out``.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .autodiff import load_checkpoint
from .config import ConfigError, ExperimentConfig, apply_overrides, load_config
from .metrics import metric_pair
from .pipeline import (
    forecast_from_dir,
    load_series,
    run_backtest,
    train_period_to_dir,
    write_forecast_csv,
    write_manifest,
)
from .series_io import split_periods
from .vmd import decompose, write_decomposition_csv, write_decomposition_metadata

log = logging.getLogger("modecast")

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USER = 2


class UserError(Exception):
    """Bad invocation or unusable input; maps to exit code 2."""


def _default_outdir() -> str:
    return os.environ.get("MODECAST_OUTDIR", "modecast_out")


def _load_config(args) -> ExperimentConfig:
    if not args.config:
        raise UserError("this command needs --config")
    try:
        config = load_config(args.config)
        if args.override:
            config = apply_overrides(config, args.override)
    except FileNotFoundError as exc:
        raise UserError(str(exc)) from exc
    except ConfigError as exc:
        raise UserError(str(exc)) from exc
    if getattr(args, "seed", None) is not None:
        config = apply_overrides(
            config,
            [f"training.seeds=[{args.seed}]", f"vmd.seed={args.seed}"],
        )
    return config


def _outdir(args) -> Path:
    out = Path(args.outdir or _default_outdir())
    out.mkdir(parents=True, exist_ok=True)
    return out


def _period_slice(config: ExperimentConfig, values: np.ndarray, period: int | None):
    if period is None:
        return values, None
    splits = split_periods(len(values), config.split.n_periods, config.split.train_fraction)
    if not 0 <= period < len(splits):
        raise UserError(f"--period {period} out of range [0, {len(splits)})")
    split = splits[period]
    return values[split.start: split.stop], split


def cmd_decompose(args) -> int:
    config = _load_config(args)
    try:
        values = load_series(config)
    except FileNotFoundError as exc:
        raise UserError(str(exc)) from exc
    values, _split = _period_slice(config, values, args.period)
    result = decompose(values, config.vmd)
    outdir = _outdir(args)
    csv_path = outdir / "decomposition.csv"
    meta_path = outdir / "decomposition_meta.json"
    write_decomposition_csv(csv_path, result.modes)
    write_decomposition_metadata(meta_path, config.vmd, result)
    write_manifest(outdir, config.to_dict(), list(config.training.seeds), [csv_path, meta_path])
    omegas = " ".join(format(w, ".6g") for w in result.omegas)
    print(f"decomposed {values.shape[0]} samples into {config.vmd.n_modes} modes")
    print(f"omegas: [{omegas}]  converged={result.converged} iterations={result.iterations}")
    print(f"wrote {csv_path} and {meta_path}")
    return EXIT_OK


def cmd_train(args) -> int:
    config = _load_config(args)
    seed = args.seed if args.seed is not None else config.training.seeds[0]
    outdir = _outdir(args)
    try:
        cell = train_period_to_dir(config, args.period, seed, outdir)
    except FileNotFoundError as exc:
        raise UserError(str(exc)) from exc
    emitted = sorted(p for p in outdir.glob("*") if p.is_file() and p.name != "manifest.json")
    write_manifest(outdir, config.to_dict(), [seed], emitted)
    print(
        f"trained period {args.period} seed {seed}: "
        f"test mse={cell.overall.mse:.6g} smape={cell.overall.smape:.6g}"
    )
    print(f"checkpoints and state written to {outdir}")
    return EXIT_OK


def cmd_forecast(args) -> int:
    run_dir = Path(args.run_dir)
    if not (run_dir / "state.npz").exists():
        raise UserError(f"{run_dir} does not contain a trained run (state.npz missing)")
    result = forecast_from_dir(run_dir)
    outdir = Path(args.outdir) if args.outdir else run_dir
    outdir.mkdir(parents=True, exist_ok=True)
    forecast_path = outdir / "forecast.csv"
    write_forecast_csv(forecast_path, result["test_index"], result["actual"], result["predicted"])
    emitted = [forecast_path]
    if result["channel_actual"] is not None:
        for m in range(result["channel_predicted"].shape[0]):
            path = outdir / f"imf{m}_forecast.csv"
            write_forecast_csv(
                path, result["test_index"], result["channel_actual"][m],
                result["channel_predicted"][m],
            )
            emitted.append(path)
    mp = result["metrics"]
    _, meta = load_checkpoint(run_dir / "state.npz")
    _merge_manifest(outdir, meta["config"], [meta["seed"]], emitted)
    print(f"forecast ({result['decomposition']}): mse={mp.mse:.6g} smape={mp.smape:.6g}")
    print(f"wrote {forecast_path}")
    return EXIT_OK


def _merge_manifest(outdir: Path, config: dict, seeds, new_paths) -> None:
    """Write the manifest, folding new artifacts into an existing one (the
    forecast command usually writes into the directory that 'train' filled)."""
    manifest_path = outdir / "manifest.json"
    if manifest_path.exists():
        existing = json.loads(manifest_path.read_text())
        config = existing.get("config", config)
        seeds = existing.get("seeds", seeds)
        artifacts = existing.get("artifacts", {})
        for p in new_paths:
            artifacts[str(p.relative_to(outdir))] = hashlib.sha256(p.read_bytes()).hexdigest()
        existing = {"config": config, "seeds": seeds, "artifacts": artifacts}
        manifest_path.write_text(json.dumps(existing, indent=2, sort_keys=True) + "\n")
    else:
        write_manifest(outdir, config, seeds, list(new_paths))


def _read_metric_column(path: Path, preferred: str) -> np.ndarray:
    if not path.exists():
        raise UserError(f"input file not found: {path}")
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if not reader.fieldnames:
            raise UserError(f"{path}: empty CSV")
        if preferred in reader.fieldnames:
            column = preferred
        else:
            candidates = [c for c in reader.fieldnames if c != "t"]
            if not candidates:
                raise UserError(f"{path}: no value column")
            column = candidates[-1]
        try:
            values = [float(row[column]) for row in reader]
        except (TypeError, ValueError) as exc:
            raise UserError(f"{path}: unparseable value in column {column!r}") from exc
    if not values:
        raise UserError(f"{path}: no data rows")
    return np.asarray(values)


def cmd_evaluate(args) -> int:
    predicted = _read_metric_column(Path(args.forecast), "predicted")
    actual = _read_metric_column(Path(args.actual), "actual")
    if predicted.shape != actual.shape:
        raise UserError(
            f"length mismatch: {args.forecast} has {predicted.size} rows, "
            f"{args.actual} has {actual.size}"
        )
    mp = metric_pair(actual, predicted)
    outdir = _outdir(args)
    payload = {"mse": mp.mse, "smape": mp.smape, "n": int(actual.size)}
    metrics_path = outdir / "metrics.json"
    metrics_path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    _merge_manifest(
        outdir,
        {"forecast": str(args.forecast), "actual": str(args.actual)},
        [],
        [metrics_path],
    )
    print(f"mse={mp.mse!r}")
    print(f"smape={mp.smape!r}")
    return EXIT_OK


def cmd_backtest(args) -> int:
    config = _load_config(args)
    outdir = _outdir(args)
    try:
        report = run_backtest(config, outdir)
    except FileNotFoundError as exc:
        raise UserError(str(exc)) from exc
    overall = report.overall_mean()
    for split in report.splits:
        mean = report.period_mean(split.period_index)
        if mean is None:
            print(f"period {split.period_index}: FAILED")
        else:
            print(f"period {split.period_index}: mse={mean.mse:.6g} smape={mean.smape:.6g}")
    if overall is not None:
        print(f"overall: mse={overall.mse:.6g} smape={overall.smape:.6g}")
    print(f"report written to {outdir}")
    if report.failed:
        for cell in report.failed:
            log.error(
                "period %d seed %d failed at stage %s: %s",
                cell.period_index, cell.seed, cell.stage, cell.message,
            )
        print(f"{len(report.failed)} cell(s) failed", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


def cmd_report(args) -> int:
    run_dir = Path(args.run_dir)
    text = run_dir / "report.txt"
    data = run_dir / "report.json"
    if text.exists():
        print(text.read_text(), end="")
        return EXIT_OK
    if not data.exists():
        raise UserError(f"{run_dir} has neither report.txt nor report.json")
    payload = json.loads(data.read_text())
    aggregate = payload.get("aggregate", {})
    for period, mean in sorted(aggregate.get("periods", {}).items()):
        if mean is None:
            print(f"period {period}: no successful cells")
        else:
            print(f"period {period}: mse={mean['mse']:.6g} smape={mean['smape']:.6g}")
    overall = aggregate.get("overall")
    if overall:
        print(f"overall: mse={overall['mse']:.6g} smape={overall['smape']:.6g}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="modecast",
        description="Decomposition-ensemble forecasting toolkit",
    )
    parser.add_argument("-v", "--verbose", action="count", default=0,
                        help="increase log verbosity (repeatable)")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_config=True):
        if needs_config:
            p.add_argument("-c", "--config", help="YAML experiment config")
            p.add_argument(
                "-o", "--override", action="append", default=[],
                metavar="KEY=VALUE", help="dotted config override, e.g. vmd.alpha=500",
            )
            p.add_argument("--seed", type=int, help="override the experiment seed")
        p.add_argument("--outdir", help="output directory (default $MODECAST_OUTDIR or ./modecast_out)")

    p = sub.add_parser("decompose", help="run the mode decomposition and export it")
    common(p)
    p.add_argument("--period", type=int, help="decompose one split period instead of the whole series")
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("train", help="train one period's models and persist them")
    common(p)
    p.add_argument("--period", type=int, default=0, help="period index to train (default 0)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("forecast", help="forecast from a trained run directory")
    p.add_argument("--run-dir", required=True, help="directory written by 'train'")
    p.add_argument("--outdir", help="where to write forecast CSVs (default: run dir)")
    p.set_defaults(func=cmd_forecast)

    p = sub.add_parser("evaluate", help="score a forecast CSV against an actual CSV")
    p.add_argument("--forecast", required=True, help="CSV with the predictions")
    p.add_argument("--actual", required=True, help="CSV with the actual values")
    p.add_argument("--outdir", help="where to write metrics.json")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("backtest", help="full multi-period, multi-seed experiment")
    common(p)
    p.set_defaults(func=cmd_backtest)

    p = sub.add_parser("report", help="print the report of a finished run")
    p.add_argument("--run-dir", required=True, help="backtest output directory")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UserError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER
    except Exception as exc:  # internal failure
        log.exception("internal failure")
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
