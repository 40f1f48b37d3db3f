import csv
import logging
from typing import List, Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from utils.errors import InvalidSize  # noqa: E402
from utils.experiment_utils import ResultRow  # noqa: E402
from utils.helpers import format_float  # noqa: E402

logger = logging.getLogger(__name__)

CSV_HEADER = ["P", "M", "mse_mean", "mse_z", "evaluations"]


def write_csv(rows: Sequence[ResultRow], path: str) -> None:
    """One line per row in the given order; M is blank when P does not divide N."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for row in rows:
            writer.writerow([
                row.p,
                "" if row.m_nominal is None else row.m_nominal,
                format_float(row.mse_mean),
                format_float(row.mse_z),
                row.evals,
            ])
    logger.info("Wrote %d rows to %s", len(rows), path)


def read_csv(path: str) -> List[ResultRow]:
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        return [
            ResultRow(
                p=int(rec["P"]),
                m_nominal=int(rec["M"]) if rec["M"] else None,
                mse_mean=float(rec["mse_mean"]),
                mse_z=float(rec["mse_z"]),
                evals=int(rec["evaluations"]),
            )
            for rec in reader
        ]


def write_plot_data(rows: Sequence[ResultRow], path: str, svg_path: Optional[str] = None) -> None:
    """
    Two-column text (evaluations, mse_mean) sorted by evaluations, plus an optional
    log-log SVG of the same curve.
    """
    if not rows:
        raise InvalidSize("no rows to plot")
    points = sorted(((r.evals, r.mse_mean) for r in rows), key=lambda t: t[0])
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# evaluations mse_mean\n")
        for evals, mse in points:
            fh.write(f"{evals} {format_float(mse)}\n")
    logger.info("Wrote %d plot points to %s", len(points), path)

    if svg_path:
        _render_svg(points, svg_path)


def _render_svg(points, svg_path: str):
    xs = [p[0] for p in points]
    ys = [p[1] for p in points]
    fig, ax = plt.subplots(figsize=(5.5, 4.0))
    try:
        ax.plot(xs, ys, marker="o")
        ax.set_xscale("log")
        if all(y > 0 for y in ys):
            ax.set_yscale("log")
        if len(xs) == 1:
            ax.set_xlim(xs[0] / 2.0, xs[0] * 2.0)
        ax.set_xlabel("proposal evaluations")
        ax.set_ylabel("MSE of E[X]")
        ax.grid(True, which="both", alpha=0.3)
        fig.tight_layout()
        fig.savefig(svg_path, format="svg")
    finally:
        plt.close(fig)
    logger.info("Rendered plot to %s", svg_path)
