import argparse
import logging
import os
import sys

from dotenv import load_dotenv

from handlers import select_handler, sweep_handler, variance_handler
from utils import config_utils
from utils.errors import PmisError

load_dotenv()

logging.basicConfig(
    format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    level=getattr(logging, os.getenv("LOG_LEVEL", "INFO").upper(), logging.INFO),
)
logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value config file (default: $PMIS_CONFIG)")
    common.add_argument("--n-proposals", help="number of proposals N (default 4096)")
    common.add_argument("--sigma", help="proposal scale (default 5)")
    common.add_argument("--mean-box", help="proposal mean interval per dimension, e.g. --mean-box=-20,20")
    common.add_argument("--runs", help="replications (default 500)")
    common.add_argument("--seed", help="master seed")
    common.add_argument("--p-values", help="comma-separated P values, starting at N for select-p")
    common.add_argument("--dim", help="problem dimension (the benchmark target is 2-D)")
    common.add_argument("--out", help="CSV output path (default results.csv)")
    common.add_argument("--plot", help="also render the MSE curve to this SVG file")
    common.add_argument("--workers", help="replication threads (default: $PMIS_WORKERS or CPU count)")
    common.add_argument("--quick", action="store_true", default=None, help="CI preset: N=1024, 200 runs")
    common.add_argument("--fixed-means", action="store_true", default=None,
                        help="draw the proposal means once and reuse them in every run")
    common.add_argument("--no-cross-check", dest="cross_check", action="store_const", const=False, default=None,
                        help="skip the Monte Carlo check of the reference values")

    parser = argparse.ArgumentParser(
        prog="pmis",
        description="Partial deterministic-mixture multiple importance sampling benchmark",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("sweep", parents=[common], help="MSE vs proposal evaluations over the P sweep")
    select = sub.add_parser("select-p", parents=[common], help="choose P by iteratively merging mixtures")
    select.add_argument("--threshold", help="relative change that counts as converged (default 0.01)")
    variance = sub.add_parser("variance-check", parents=[common], help="empirical variance ordering over P")
    variance.add_argument("--reps", help="paired replications (default 2000)")
    return parser


def _flags_from_args(args: argparse.Namespace):
    flags = {}
    for key in config_utils.KEYS:
        dest = key.replace("-", "_")
        if hasattr(args, dest):
            flags[key] = getattr(args, dest)
    return flags


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    try:
        cfg = config_utils.load_config(args.config, _flags_from_args(args))
        if args.command == "sweep":
            sweep_handler.handle_sweep(cfg)
            return 0
        if args.command == "select-p":
            select_handler.handle_select(cfg)
            return 0
        report = variance_handler.handle_variance_check(cfg)
        return 0 if report.ordered else 1
    except (PmisError, OSError) as e:
        logger.exception("Command %s failed", args.command)
        print(f"error: {e}", file=sys.stderr)
        return 1


def main():
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
