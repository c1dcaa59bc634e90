"""Command-line interface: subcommands, exit codes, file contracts."""

import csv
import json

import numpy as np
import yaml

from modecast.cli import main
from modecast.synthetic import two_tone, write_series_csv


def write_config(tmp_path, raw, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(raw))
    return path


def backtest_raw(n=700, seeds=(0,)):
    return {
        "data": {"generator": {"name": "trend_two_tone", "n": n, "seed": 4,
                               "noise_std": 0.2}},
        "vmd": {"n_modes": 2},
        "model": {"lookback": 24, "patch_len": 6, "stride": 3, "d_model": 8,
                  "n_heads": 2, "n_layers": 1, "d_ff": 16},
        "split": {"n_periods": 2, "train_fraction": 0.8},
        "training": {"epochs": 2, "seeds": list(seeds)},
    }


# -- decompose -------------------------------------------------------------------


def test_decompose_two_tone_fixture(tmp_path, capsys):
    data = tmp_path / "two_tone.csv"
    write_series_csv(data, two_tone(2000))
    cfg = write_config(tmp_path, {
        "data": {"path": str(data)},
        "vmd": {"n_modes": 2},
    })
    out = tmp_path / "out"
    assert main(["decompose", "-c", str(cfg), "--outdir", str(out)]) == 0
    meta = json.loads((out / "decomposition_meta.json").read_text())
    omegas = sorted(meta["omegas"])
    assert abs(omegas[0] - 0.01) / 0.01 < 0.10
    assert abs(omegas[1] - 0.1) / 0.1 < 0.10
    with (out / "decomposition.csv").open() as fh:
        header = next(csv.reader(fh))
    assert header == ["t", "imf0", "imf1"]
    assert (out / "manifest.json").exists()


def test_decompose_constant_fixture(tmp_path):
    data = tmp_path / "constant.csv"
    write_series_csv(data, np.full(100, 7.25))
    cfg = write_config(tmp_path, {
        "data": {"path": str(data)},
        "vmd": {"n_modes": 2},
    })
    out = tmp_path / "out"
    assert main(["decompose", "-c", str(cfg), "--outdir", str(out)]) == 0
    rows = list(csv.DictReader((out / "decomposition.csv").open()))
    imf0 = np.array([float(r["imf0"]) for r in rows])
    assert np.max(np.abs(imf0 - 7.25)) < 1e-6


def test_decompose_missing_input_exits_2(tmp_path, capsys):
    cfg = write_config(tmp_path, {
        "data": {"path": str(tmp_path / "missing.csv")},
        "vmd": {"n_modes": 2},
    })
    assert main(["decompose", "-c", str(cfg), "--outdir", str(tmp_path / "o")]) == 2
    assert "missing.csv" in capsys.readouterr().err


# -- evaluate --------------------------------------------------------------------


def write_two_column(path, column, values):
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", column])
        for i, v in enumerate(values):
            writer.writerow([i, repr(float(v))])


def test_evaluate_identity(tmp_path, capsys):
    f = tmp_path / "pred.csv"
    a = tmp_path / "act.csv"
    write_two_column(f, "predicted", [1.0, 2.0, 3.0])
    write_two_column(a, "actual", [1.0, 2.0, 3.0])
    assert main(["evaluate", "--forecast", str(f), "--actual", str(a),
                 "--outdir", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "mse=0.0" in out
    assert "smape=0.0" in out


def test_evaluate_hand_computed_mse(tmp_path, capsys):
    f = tmp_path / "pred.csv"
    a = tmp_path / "act.csv"
    write_two_column(f, "predicted", [3.0, 4.0, 5.0])
    write_two_column(a, "actual", [1.0, 2.0, 3.0])
    assert main(["evaluate", "--forecast", str(f), "--actual", str(a),
                 "--outdir", str(tmp_path)]) == 0
    assert "mse=4.0" in capsys.readouterr().out
    metrics = json.loads((tmp_path / "metrics.json").read_text())
    assert metrics["mse"] == 4.0


def test_evaluate_length_mismatch_exits_2(tmp_path, capsys):
    f = tmp_path / "pred.csv"
    a = tmp_path / "act.csv"
    write_two_column(f, "predicted", [1.0, 2.0])
    write_two_column(a, "actual", [1.0, 2.0, 3.0])
    assert main(["evaluate", "--forecast", str(f), "--actual", str(a),
                 "--outdir", str(tmp_path)]) == 2
    assert "mismatch" in capsys.readouterr().err


# -- backtest --------------------------------------------------------------------


def test_backtest_smoke_and_rerun_identical(tmp_path, capsys):
    cfg = write_config(tmp_path, backtest_raw())
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    assert main(["backtest", "-c", str(cfg), "--outdir", str(out_a)]) == 0
    assert main(["backtest", "-c", str(cfg), "--outdir", str(out_b)]) == 0
    assert (out_a / "report.txt").read_bytes() == (out_b / "report.txt").read_bytes()
    assert (out_a / "manifest.json").read_bytes() == (out_b / "manifest.json").read_bytes()


def test_backtest_override_plumbing(tmp_path):
    cfg = write_config(tmp_path, backtest_raw())
    out = tmp_path / "o"
    assert main(["backtest", "-c", str(cfg), "--outdir", str(out),
                 "-o", "aswl.enabled=false"]) == 0
    text = (out / "report.txt").read_text()
    assert "aswl: off" in text
    payload = json.loads((out / "report.json").read_text())
    assert payload["config"]["aswl"]["enabled"] is False


def test_backtest_failed_cells_exit_nonzero(tmp_path, capsys):
    raw = backtest_raw()
    raw["model"]["lookback"] = 500  # longer than any train split
    cfg = write_config(tmp_path, raw)
    assert main(["backtest", "-c", str(cfg), "--outdir", str(tmp_path / "o")]) == 1
    assert "failed" in capsys.readouterr().err


# -- train / forecast / report ------------------------------------------------------


def test_train_forecast_report_round_trip(tmp_path, capsys):
    cfg = write_config(tmp_path, backtest_raw())
    run_dir = tmp_path / "run"
    assert main(["train", "-c", str(cfg), "--period", "0", "--outdir", str(run_dir)]) == 0
    assert (run_dir / "state.npz").exists()
    assert (run_dir / "channel0.npz").exists()

    assert main(["forecast", "--run-dir", str(run_dir)]) == 0
    first = (run_dir / "forecast.csv").read_bytes()
    assert main(["forecast", "--run-dir", str(run_dir)]) == 0
    assert (run_dir / "forecast.csv").read_bytes() == first

    backtest_out = tmp_path / "bt"
    assert main(["backtest", "-c", str(cfg), "--outdir", str(backtest_out)]) == 0
    assert main(["report", "--run-dir", str(backtest_out)]) == 0
    out = capsys.readouterr().out
    assert "modecast backtest report" in out


def test_forecast_without_state_exits_2(tmp_path, capsys):
    assert main(["forecast", "--run-dir", str(tmp_path)]) == 2
    assert "state.npz" in capsys.readouterr().err


def test_seed_flag_overrides_training_seed(tmp_path):
    cfg = write_config(tmp_path, backtest_raw())
    out = tmp_path / "o"
    assert main(["backtest", "-c", str(cfg), "--outdir", str(out), "--seed", "9"]) == 0
    payload = json.loads((out / "report.json").read_text())
    assert payload["config"]["training"]["seeds"] == [9]
    assert payload["cells"][0]["seed"] == 9


def test_outdir_env_default(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("MODECAST_OUTDIR", str(tmp_path / "envout"))
    f = tmp_path / "pred.csv"
    a = tmp_path / "act.csv"
    write_two_column(f, "predicted", [1.0])
    write_two_column(a, "actual", [1.0])
    assert main(["evaluate", "--forecast", str(f), "--actual", str(a)]) == 0
    assert (tmp_path / "envout" / "metrics.json").exists()
