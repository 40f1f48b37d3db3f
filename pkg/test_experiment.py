import os

import numpy as np
import pytest

from utils import config_utils
from utils.config_utils import ExperimentConfig, load_config, validate_config
from utils.density_utils import FIVE_MODE_TRUE_MEAN, five_mode_target
from utils.errors import InvalidConfig, InvalidSize, ParseError
from utils.experiment_utils import (
    ResultRow,
    cross_check_reference,
    draw_proposals,
    run_experiment,
    run_replication,
    run_selection,
)
from utils.helpers import default_p_values, relative_change
from utils.partition_utils import random_block_partition
from utils.report_utils import CSV_HEADER, read_csv, write_csv, write_plot_data


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    monkeypatch.delenv(config_utils.CONFIG_ENV, raising=False)
    monkeypatch.delenv(config_utils.WORKERS_ENV, raising=False)


def small_config(**changes):
    base = ExperimentConfig(n_proposals=64, n_runs=4, seed=7, workers=1)
    return base.replace(**changes)


# ---------------------------------------------------------------- config


def test_defaults():
    cfg = load_config()
    assert cfg.n_proposals == 4096
    assert cfg.sigma == 5.0
    assert cfg.mean_box == (-20.0, 20.0)
    assert cfg.n_runs == 500
    assert cfg.dim == 2
    assert cfg.p_sweep == (4096, 2048, 1024, 512, 256, 128, 64, 32, 16, 8, 4, 2, 1)


def test_default_p_values():
    assert default_p_values(4096)[:3] == [4096, 2048, 1024]
    assert default_p_values(1) == [1]
    assert default_p_values(6) == [6, 4, 2, 1]


def test_flag_overrides_one_field():
    cfg = load_config(flags={"runs": "10"})
    assert cfg.n_runs == 10
    assert cfg.n_proposals == 4096


def test_p_value_beyond_n_rejected():
    with pytest.raises(InvalidConfig):
        load_config(flags={"p-values": "5000"})


@pytest.mark.parametrize("changes", [
    {"n_proposals": 0},
    {"sigma": 0.0},
    {"mean_box": (3.0, 3.0)},
    {"n_runs": 0},
    {"p_values": ()},
    {"workers": 0},
    {"threshold": -1.0},
])
def test_invalid_config(changes):
    with pytest.raises(InvalidConfig):
        validate_config(ExperimentConfig(workers=1).replace(**changes))


def test_config_file_and_precedence(tmp_path):
    path = tmp_path / "bench.conf"
    path.write_text("# benchmark settings\nn-proposals = 512\nruns = 20\n\nsigma=3.5\n")
    cfg = load_config(str(path), {"runs": "7"})
    assert cfg.n_proposals == 512
    assert cfg.sigma == 3.5
    assert cfg.n_runs == 7
    assert cfg.p_sweep[0] == 512


def test_config_file_from_environment(tmp_path, monkeypatch):
    path = tmp_path / "env.conf"
    path.write_text("seed = 99\n")
    monkeypatch.setenv(config_utils.CONFIG_ENV, str(path))
    assert load_config().seed == 99


def test_quick_preset_sits_between_file_and_flags(tmp_path):
    path = tmp_path / "q.conf"
    path.write_text("n-proposals = 512\nquick = true\n")
    cfg = load_config(str(path))
    assert cfg.n_proposals == 1024
    assert cfg.n_runs == 200
    cfg = load_config(str(path), {"runs": "3"})
    assert cfg.n_runs == 3
    cfg = load_config(flags={"quick": True, "n-proposals": "256"})
    assert (cfg.n_proposals, cfg.n_runs) == (256, 200)


@pytest.mark.parametrize("text, line", [
    ("runs = 10\n# fine\nsigma = wide\n", 3),
    ("runs = 10\n\nsigma = wide\n", 3),
    ("\n\n# header\n\nruns = 10\n\n\nsigma = wide\n", 8),
    ("runs = 10\n   \n\ncolour = blue\n", 4),
])
def test_bad_config_line_reports_line(tmp_path, text, line):
    path = tmp_path / "bad.conf"
    path.write_text(text)
    with pytest.raises(ParseError) as exc:
        load_config(str(path))
    assert exc.value.line == line
    assert f"line {line}:" in str(exc.value)


def test_unknown_config_key(tmp_path):
    path = tmp_path / "bad.conf"
    path.write_text("colour = blue\n")
    with pytest.raises(ParseError) as exc:
        load_config(str(path))
    assert exc.value.line == 1


def test_bad_flag_value():
    with pytest.raises(ParseError) as exc:
        load_config(flags={"runs": "many"})
    assert exc.value.flag == "runs"


def test_workers_from_environment(monkeypatch):
    monkeypatch.setenv(config_utils.WORKERS_ENV, "3")
    assert ExperimentConfig().workers == 3


def test_relative_change():
    assert relative_change([1.0, 2.0], [1.01, 2.0]) == pytest.approx(0.01)
    assert relative_change([0.0], [0.5]) == pytest.approx(0.5)


# ---------------------------------------------------------------- replications


def test_replication_is_reproducible():
    cfg = small_config()
    a = run_replication(cfg, 3)
    b = run_replication(cfg, 3)
    for x, y in zip(a, b):
        assert np.array_equal(x.moment, y.moment)
        assert x.z_hat == y.z_hat
    c = run_replication(cfg, 4)
    assert not np.array_equal(a[0].moment, c[0].moment)


def test_fixed_means_share_proposals():
    cfg = small_config(fixed_means=True)
    assert np.array_equal(draw_proposals(cfg, 0).means, draw_proposals(cfg, 5).means)
    cfg = small_config()
    assert not np.array_equal(draw_proposals(cfg, 0).means, draw_proposals(cfg, 5).means)


def test_proposal_means_inside_box():
    means = draw_proposals(small_config(n_proposals=500), 0).means
    assert np.all(means >= -20.0) and np.all(means <= 20.0)


def test_dimension_mismatch_rejected():
    with pytest.raises(InvalidConfig):
        run_replication(small_config(dim=3), 0, five_mode_target())
    with pytest.raises(InvalidConfig):
        run_experiment(small_config(dim=3))


def test_full_mixture_beats_standard_weights_on_the_same_samples():
    cfg = small_config(n_proposals=128, n_runs=30, p_values=(128, 1))
    truth = np.asarray(FIVE_MODE_TRUE_MEAN)
    standard, full = [], []
    for r in range(cfg.n_runs):
        res = run_replication(cfg, r)
        standard.append(np.mean((res[0].moment - truth) ** 2))
        full.append(np.mean((res[1].moment - truth) ** 2))
    assert np.mean(full) < np.mean(standard)


def test_estimates_center_on_true_mean():
    cfg = small_config(n_proposals=512, n_runs=40, p_values=(1,))
    moments = np.array([run_replication(cfg, r)[0].moment for r in range(cfg.n_runs)])
    se = moments.std(axis=0, ddof=1) / np.sqrt(cfg.n_runs)
    assert np.all(np.abs(moments.mean(axis=0) - FIVE_MODE_TRUE_MEAN) < 4 * se)


def test_experiment_rows():
    cfg = small_config()
    rows = run_experiment(cfg)
    assert [r.p for r in rows] == [64, 32, 16, 8, 4, 2, 1]
    assert [r.m_nominal for r in rows] == [1, 2, 4, 8, 16, 32, 64]
    assert [r.evals for r in rows] == [64 * m for m in (1, 2, 4, 8, 16, 32, 64)]
    assert all(r.mse_mean >= 0 and r.mse_z >= 0 for r in rows)


def test_experiment_independent_of_worker_count():
    one = run_experiment(small_config(workers=1))
    three = run_experiment(small_config(workers=3))
    assert one == three


def test_non_dividing_p_has_no_nominal_size():
    rows = run_experiment(small_config(n_proposals=10, p_values=(10, 3, 1), n_runs=2))
    assert [r.m_nominal for r in rows] == [1, None, 10]
    assert rows[1].evals == 4 * 4 + 3 * 3 + 3 * 3


def test_benchmark_evaluation_column():
    rng = np.random.default_rng(0)
    costs = [random_block_partition(4096, p, rng).eval_cost for p in default_p_values(4096)]
    assert costs == [4096 * 2 ** k for k in range(13)]


def test_cross_check_is_close_to_reference():
    check = cross_check_reference(small_config())
    assert np.all(np.abs(check.mean - FIVE_MODE_TRUE_MEAN) < 1.5)
    assert abs(check.z_hat - 1.0) < 0.15
    assert np.all(check.mean_se > 0) and check.z_se > 0
    assert isinstance(check.ok, bool)


def test_selection_on_benchmark_setup():
    cfg = small_config(n_proposals=128)
    part, trace = run_selection(cfg)
    assert trace[0].p == 128
    assert part.n_subsets == trace[-1].p
    assert trace[-1].distinct_evaluations <= 128 * 128


# ---------------------------------------------------------------- reports


def sample_rows():
    return [
        ResultRow(p=4, m_nominal=2, mse_mean=0.125, mse_z=0.01, evals=16),
        ResultRow(p=3, m_nominal=None, mse_mean=0.2, mse_z=1e-20, evals=12),
        ResultRow(p=1, m_nominal=8, mse_mean=1 / 3, mse_z=0.0, evals=64),
    ]


def test_csv_header_only_for_no_rows(tmp_path):
    path = tmp_path / "empty.csv"
    write_csv([], str(path))
    assert path.read_text() == ",".join(CSV_HEADER) + "\n"


def test_csv_round_trip(tmp_path):
    path = tmp_path / "rows.csv"
    rows = sample_rows()
    write_csv(rows, str(path))
    assert read_csv(str(path)) == rows
    lines = path.read_text().splitlines()
    assert len(lines) == 1 + len(rows)
    assert lines[2].startswith("3,,")


def test_plot_data_sorted(tmp_path):
    path = tmp_path / "plot.txt"
    write_plot_data(sample_rows(), str(path))
    lines = path.read_text().splitlines()
    assert lines[0].startswith("#")
    assert [int(line.split()[0]) for line in lines[1:]] == [12, 16, 64]


def test_plot_single_row_with_svg(tmp_path):
    path, svg = tmp_path / "plot.txt", tmp_path / "plot.svg"
    write_plot_data(sample_rows()[:1], str(path), str(svg))
    assert len(path.read_text().splitlines()) == 2
    assert "<svg" in svg.read_text()


def test_plot_needs_rows(tmp_path):
    with pytest.raises(InvalidSize):
        write_plot_data([], str(tmp_path / "plot.txt"))
    assert not os.path.exists(tmp_path / "plot.txt")
