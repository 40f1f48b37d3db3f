"""
MSE-vs-cost benchmark on the five-mode target: random Gaussian proposals, one
sample each, re-weighted under random-block partitions for every P in the sweep.
"""
import asyncio
import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from utils.config_utils import ExperimentConfig, validate_config
from utils.density_utils import (
    FIVE_MODE_TRUE_MEAN,
    FIVE_MODE_TRUE_Z,
    Gaussian,
    MixtureDensity,
    ProposalSet,
    TargetDensity,
    five_mode_target,
)
from utils.errors import InvalidConfig
from utils.estimator_utils import (
    EstimateResult,
    SelectionStep,
    compute_weights,
    draw_samples,
    estimate_moment,
    estimate_unnormalized,
    identity_moment,
    select_num_mixtures,
)
from utils.partition_utils import Partition, block_partition, full_partition, random_block_partition
from utils.rng_utils import (
    SHARED_RUN,
    STAGE_CROSS_CHECK,
    STAGE_MEANS,
    STAGE_PARTITION,
    STAGE_SAMPLES,
    STAGE_SELECTION,
    STAGE_VARIANCE,
    run_stream,
)

logger = logging.getLogger(__name__)

# 1-D problem for the variance ordering check. Proposal sigma must exceed the
# target mode width so pi / q_j stays bounded for every proposal.
VARIANCE_TARGET_MEANS = (-3.0, 3.0)
VARIANCE_PROPOSAL_MEANS = tuple(np.linspace(-5.0, 5.0, 8))
VARIANCE_PROPOSAL_SIGMA = 4.0
VARIANCE_P_VALUES = (8, 4, 2, 1)
VARIANCE_SLACK = 0.05


@dataclass(frozen=True)
class ResultRow:
    p: int
    m_nominal: Optional[int]  # N / P when P divides N
    mse_mean: float
    mse_z: float
    evals: int


@dataclass(frozen=True)
class CrossCheck:
    mean: np.ndarray
    mean_se: np.ndarray
    z_hat: float
    z_se: float
    ok: bool


@dataclass(frozen=True)
class VarianceReport:
    p_values: Tuple[int, ...]
    variances: np.ndarray
    ordered: bool
    reps: int


def _check_target(cfg: ExperimentConfig, target: TargetDensity):
    if target.dim != cfg.dim:
        raise InvalidConfig(f"config dim {cfg.dim} does not match target dimension {target.dim}")


def draw_proposals(cfg: ExperimentConfig, run_index: int) -> ProposalSet:
    """N isotropic proposals sigma^2 I with means uniform in mean_box^dim."""
    run = SHARED_RUN if cfg.fixed_means else run_index
    rng = run_stream(cfg.seed, run, STAGE_MEANS)
    lo, hi = cfg.mean_box
    means = rng.uniform(lo, hi, size=(cfg.n_proposals, cfg.dim))
    return ProposalSet.isotropic(means, cfg.sigma)


def run_replication(cfg: ExperimentConfig, run_index: int,
                    target: Optional[TargetDensity] = None) -> List[EstimateResult]:
    """
    One run: draw proposals and one sample per proposal, then estimate E[X] under a
    random-block partition for each P in the sweep. All P values share the samples.
    """
    target = target or five_mode_target()
    _check_target(cfg, target)
    proposals = draw_proposals(cfg, run_index)
    samples = draw_samples(proposals, run_stream(cfg.seed, run_index, STAGE_SAMPLES))
    results = []
    for k, p in enumerate(cfg.p_sweep):
        part = random_block_partition(cfg.n_proposals, p, run_stream(cfg.seed, run_index, STAGE_PARTITION, k))
        ws = compute_weights(target, proposals, part, samples)
        results.append(estimate_moment(ws, identity_moment))
    return results


class ExperimentRunner:
    """
    Runs replications on a thread pool from an asyncio loop.
    Results are gathered in run-index order whatever the worker count.
    """

    def __init__(self, cfg: ExperimentConfig, target: Optional[TargetDensity] = None):
        self.cfg = cfg
        self.target = target or five_mode_target()
        self._executor = ThreadPoolExecutor(max_workers=cfg.workers)
        self._lock = threading.Lock()
        self.completed = 0

    def _run_one(self, run_index: int) -> List[EstimateResult]:
        results = run_replication(self.cfg, run_index, self.target)
        with self._lock:
            self.completed += 1
            done = self.completed
        every = max(1, self.cfg.n_runs // 10)
        if done % every == 0 or done == self.cfg.n_runs:
            logger.info("Completed %d/%d replications", done, self.cfg.n_runs)
        return results

    async def run_all(self) -> List[List[EstimateResult]]:
        loop = asyncio.get_running_loop()
        futures = [loop.run_in_executor(self._executor, self._run_one, r) for r in range(self.cfg.n_runs)]
        return list(await asyncio.gather(*futures))

    def close(self):
        self._executor.shutdown(wait=True)


def aggregate(cfg: ExperimentConfig, per_run: Sequence[Sequence[EstimateResult]],
              true_mean=FIVE_MODE_TRUE_MEAN, true_z: float = FIVE_MODE_TRUE_Z) -> List[ResultRow]:
    """Per-P MSE over runs, summed in run-index order."""
    truth = np.asarray(true_mean, dtype=float)
    rows = []
    n = cfg.n_proposals
    for k, p in enumerate(cfg.p_sweep):
        sq_mean = np.array([np.mean((run[k].moment - truth) ** 2) for run in per_run])
        sq_z = np.array([(run[k].z_hat - true_z) ** 2 for run in per_run])
        rows.append(ResultRow(
            p=p,
            m_nominal=n // p if n % p == 0 else None,
            mse_mean=float(np.mean(sq_mean)),
            mse_z=float(np.mean(sq_z)),
            evals=per_run[0][k].proposal_evals,
        ))
    return rows


def run_experiment(cfg: ExperimentConfig, target: Optional[TargetDensity] = None,
                   true_mean=FIVE_MODE_TRUE_MEAN, true_z: float = FIVE_MODE_TRUE_Z) -> List[ResultRow]:
    validate_config(cfg)
    target = target or five_mode_target()
    _check_target(cfg, target)
    logger.info("Running %d replications, N=%d, P in %s, %d workers",
                cfg.n_runs, cfg.n_proposals, list(cfg.p_sweep), cfg.workers)
    runner = ExperimentRunner(cfg, target)
    try:
        per_run = asyncio.run(runner.run_all())
    finally:
        runner.close()
    return aggregate(cfg, per_run, true_mean, true_z)


def cross_check_reference(cfg: ExperimentConfig, batches: int = 32, batch_size: int = 1024,
                          target: Optional[TargetDensity] = None,
                          true_mean=FIVE_MODE_TRUE_MEAN, true_z: float = FIVE_MODE_TRUE_Z) -> CrossCheck:
    """
    Independent full-mixture estimates of E[X] and Z over `batches` fresh proposal
    sets; the hard-coded reference values must lie within 4 standard errors.
    """
    target = target or five_mode_target()
    _check_target(cfg, target)
    lo, hi = cfg.mean_box
    means, zs = [], []
    for b in range(batches):
        rng = run_stream(cfg.seed, b, STAGE_CROSS_CHECK)
        proposals = ProposalSet.isotropic(rng.uniform(lo, hi, size=(batch_size, cfg.dim)), cfg.sigma)
        samples = draw_samples(proposals, rng)
        result = estimate_moment(compute_weights(target, proposals, full_partition(batch_size), samples),
                                 identity_moment)
        means.append(result.moment)
        zs.append(result.z_hat)
    means, zs = np.array(means), np.array(zs)
    mean, mean_se = means.mean(axis=0), means.std(axis=0, ddof=1) / np.sqrt(batches)
    z_hat, z_se = float(zs.mean()), float(zs.std(ddof=1) / np.sqrt(batches))
    ok = bool(np.all(np.abs(mean - np.asarray(true_mean)) <= 4 * mean_se) and abs(z_hat - true_z) <= 4 * z_se)
    if ok:
        logger.info("Reference check passed: E[X] ~ %s (se %s), Z ~ %.4f (se %.4f)",
                    np.round(mean, 4).tolist(), np.round(mean_se, 4).tolist(), z_hat, z_se)
    else:
        logger.warning("Reference values disagree with Monte Carlo: E[X] ~ %s (se %s), Z ~ %.4f (se %.4f)",
                       np.round(mean, 4).tolist(), np.round(mean_se, 4).tolist(), z_hat, z_se)
    return CrossCheck(mean, mean_se, z_hat, z_se, ok)


def run_selection(cfg: ExperimentConfig, run_index: int = 0,
                  target: Optional[TargetDensity] = None) -> Tuple[Partition, List[SelectionStep]]:
    """Pick P on one realization of the benchmark setup."""
    validate_config(cfg)
    target = target or five_mode_target()
    _check_target(cfg, target)
    proposals = draw_proposals(cfg, run_index)
    samples = draw_samples(proposals, run_stream(cfg.seed, run_index, STAGE_SAMPLES))
    return select_num_mixtures(target, proposals, samples, identity_moment, cfg.p_sweep, cfg.threshold,
                               run_stream(cfg.seed, run_index, STAGE_SELECTION))


def variance_problem() -> Tuple[TargetDensity, ProposalSet]:
    """Normalized 1-D two-mode target and eight spread-out proposals."""
    target = TargetDensity.from_mixture(MixtureDensity([Gaussian([m], [[1.0]]) for m in VARIANCE_TARGET_MEANS]))
    sigma2 = VARIANCE_PROPOSAL_SIGMA ** 2
    proposals = ProposalSet([Gaussian([m], [[sigma2]]) for m in VARIANCE_PROPOSAL_MEANS])
    return target, proposals


def variance_check(seed: int, reps: int, p_values: Sequence[int] = VARIANCE_P_VALUES,
                   slack: float = VARIANCE_SLACK) -> VarianceReport:
    """
    Paired replications of the unnormalized estimator of E[X] under each P. Every
    replication draws one sample set and one permutation; cutting that permutation into
    P blocks gives nested partitions, so only the weighting differs between P values.
    """
    target, proposals = variance_problem()
    n = len(proposals)
    p_values = tuple(p_values)
    estimates = np.empty((reps, len(p_values)))
    for r in range(reps):
        rng = run_stream(seed, r, STAGE_VARIANCE)
        samples = draw_samples(proposals, rng)
        order = rng.permutation(n)
        for k, p in enumerate(p_values):
            ws = compute_weights(target, proposals, block_partition(order, p), samples)
            estimates[r, k] = estimate_unnormalized(ws, identity_moment)[0]
    variances = estimates.var(axis=0, ddof=1)
    ordered = all(variances[k + 1] <= variances[k] * (1 + slack) for k in range(len(p_values) - 1))
    logger.info("Variance check over %d replications: %s -> ordered=%s",
                reps, dict(zip(p_values, np.round(variances, 6).tolist())), ordered)
    return VarianceReport(p_values, variances, ordered, reps)
