import numpy as np

from utils import experiment_utils
from utils.config_utils import ExperimentConfig
from utils.partition_utils import Partition


def handle_select(cfg: ExperimentConfig) -> Partition:
    """
    select-p: walk P down the configured sweep on one realization and stop once the
    estimate stops moving by more than the threshold. Prints the trace and the choice.
    """
    partition, trace = experiment_utils.run_selection(cfg)
    print(f"{'P':>6} {'E[X]':>28} {'Z':>10} {'evaluations':>12} {'distinct':>12}")
    for step in trace:
        moment = np.array2string(step.result.moment, precision=4, separator=", ")
        print(f"{step.p:>6} {moment:>28} {step.result.z_hat:>10.4f} "
              f"{step.result.proposal_evals:>12} {step.distinct_evaluations:>12}")
    print(f"chosen P={partition.n_subsets} (threshold {cfg.threshold})")
    return partition
