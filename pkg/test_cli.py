import csv
import os

import numpy as np
import pytest

from main import build_parser, cli_main
from utils import config_utils, experiment_utils
from utils.experiment_utils import VarianceReport

SLOW = os.getenv("PMIS_SLOW_TESTS") == "1"


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    monkeypatch.delenv(config_utils.CONFIG_ENV, raising=False)
    monkeypatch.delenv(config_utils.WORKERS_ENV, raising=False)


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_parser_accepts_shared_flags():
    args = build_parser().parse_args(["sweep", "--runs", "3", "--quick", "--no-cross-check"])
    assert args.command == "sweep"
    assert args.runs == "3"
    assert args.quick is True
    assert args.cross_check is False


def test_sweep_writes_csv_and_plot_data(tmp_path, capsys):
    out = tmp_path / "r.csv"
    code = cli_main(["sweep", "--runs", "2", "--seed", "1", "--n-proposals", "64", "--workers", "2",
                     "--no-cross-check", "--out", str(out), "--plot", str(tmp_path / "r.svg")])
    assert code == 0
    rows = read_rows(out)
    assert [int(r["P"]) for r in rows] == [64, 32, 16, 8, 4, 2, 1]
    assert [int(r["evaluations"]) for r in rows] == [64, 128, 256, 512, 1024, 2048, 4096]
    assert (tmp_path / "r_plot.txt").exists()
    assert (tmp_path / "r.svg").exists()
    assert "evaluations" in capsys.readouterr().out


def test_select_p_prints_choice(capsys):
    code = cli_main(["select-p", "--threshold", "0.01", "--n-proposals", "128", "--seed", "3"])
    assert code == 0
    assert "chosen P=" in capsys.readouterr().out


def test_variance_check(capsys):
    code = cli_main(["variance-check", "--reps", "2000", "--seed", "11"])
    out = capsys.readouterr().out
    assert code == 0
    assert "P=8" in out and "P=1" in out
    assert "ordering holds over 2000 replications" in out


def test_variance_violation_exits_nonzero(monkeypatch, capsys):
    report = VarianceReport((8, 1), np.array([1.0, 2.0]), False, 10)
    monkeypatch.setattr(experiment_utils, "variance_check", lambda seed, reps: report)
    assert cli_main(["variance-check", "--reps", "10"]) == 1
    assert "ordering VIOLATED over 10 replications" in capsys.readouterr().out


def test_unknown_flag_is_usage_error(capsys):
    assert cli_main(["sweep", "--bogus"]) == 2
    assert "usage" in capsys.readouterr().err


def test_missing_subcommand_is_usage_error():
    assert cli_main([]) == 2


def test_invalid_value_is_reported(capsys):
    assert cli_main(["sweep", "--runs", "0", "--no-cross-check"]) == 1
    assert "error:" in capsys.readouterr().err


def test_bad_config_file_is_reported(tmp_path, capsys):
    path = tmp_path / "bad.conf"
    path.write_text("runs = lots\n")
    assert cli_main(["sweep", "--config", str(path)]) == 1
    assert "line 1" in capsys.readouterr().err


@pytest.mark.slow
@pytest.mark.skipif(not SLOW, reason="set PMIS_SLOW_TESTS=1 for the full-scale sweep")
def test_full_sweep_reproduces_benchmark(tmp_path):
    out = tmp_path / "r.csv"
    assert cli_main(["sweep", "--runs", "500", "--seed", "1", "--out", str(out)]) == 0
    rows = read_rows(out)
    assert [int(r["evaluations"]) for r in rows] == [4096 * 2 ** k for k in range(13)]
    mse = {int(r["P"]): float(r["mse_mean"]) for r in rows}
    mse_z = {int(r["P"]): float(r["mse_z"]) for r in rows}
    assert 4.5 <= mse[4096] <= 9.5
    assert 0.50 <= mse[1] <= 1.00
    assert 0.045 <= mse_z[4096] <= 0.110
    assert 0.0040 <= mse_z[1] <= 0.0080
    assert 6 <= mse[4096] / mse[1] <= 13
    assert mse[64] <= 1.10 * mse[1]
    column = [float(r["mse_mean"]) for r in rows]
    assert all(b <= 1.05 * a for a, b in zip(column, column[1:]))


@pytest.mark.slow
@pytest.mark.skipif(not SLOW, reason="set PMIS_SLOW_TESTS=1 for the full-scale sweep")
def test_quick_sweep_row_count(tmp_path):
    out = tmp_path / "r.csv"
    assert cli_main(["sweep", "--quick", "--runs", "10", "--seed", "1", "--out", str(out)]) == 0
    assert len(read_rows(out)) == 11
