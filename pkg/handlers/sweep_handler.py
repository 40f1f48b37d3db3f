import logging
import os
from typing import List, Sequence

from utils import experiment_utils, report_utils
from utils.config_utils import ExperimentConfig
from utils.experiment_utils import ResultRow

logger = logging.getLogger(__name__)


def plot_data_path(output_path: str) -> str:
    root, _ = os.path.splitext(output_path)
    return f"{root}_plot.txt"


def format_rows(rows: Sequence[ResultRow]) -> str:
    lines = [f"{'P':>6} {'M':>6} {'MSE(E[X])':>12} {'MSE(Z)':>12} {'evaluations':>12}"]
    for r in rows:
        m = "-" if r.m_nominal is None else str(r.m_nominal)
        lines.append(f"{r.p:>6} {m:>6} {r.mse_mean:>12.6g} {r.mse_z:>12.6g} {r.evals:>12}")
    return "\n".join(lines)


def handle_sweep(cfg: ExperimentConfig) -> List[ResultRow]:
    """
    sweep: MSE of E[X] and Z against proposal evaluations over the P sweep.
    Writes the CSV, the plot data next to it and, if configured, the SVG.
    """
    if cfg.cross_check:
        check = experiment_utils.cross_check_reference(cfg)
        if not check.ok:
            logger.warning("Continuing with hard-coded reference values despite failed cross-check")

    rows = experiment_utils.run_experiment(cfg)
    report_utils.write_csv(rows, cfg.output_path)
    report_utils.write_plot_data(rows, plot_data_path(cfg.output_path), cfg.plot_path)
    print(format_rows(rows))
    return rows
