import logging

from utils import experiment_utils
from utils.config_utils import ExperimentConfig
from utils.experiment_utils import VarianceReport

logger = logging.getLogger(__name__)


def handle_variance_check(cfg: ExperimentConfig) -> VarianceReport:
    """
    variance-check: paired replications on the small 1-D problem; the variance of the
    unnormalized estimator should not grow as P shrinks (5% slack per step).
    """
    report = experiment_utils.variance_check(cfg.seed, cfg.reps)
    for p, var in zip(report.p_values, report.variances):
        print(f"P={p:<3} variance={var:.6g}")
    if report.ordered:
        print(f"ordering holds over {report.reps} replications")
    else:
        logger.warning("Variance ordering violated: %s", report.variances.tolist())
        print(f"ordering VIOLATED over {report.reps} replications")
    return report
