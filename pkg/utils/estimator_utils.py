"""
Partial deterministic-mixture importance weights and the estimators built on them.

For a partition S_1..S_P and x_i ~ q_i, the weight of sample i in S_p is
    w_i = pi(x_i) / psi_p(x_i),   psi_p(x) = (1/|S_p|) sum_{j in S_p} q_j(x).
Everything is kept in log domain; linear weights only appear after a max shift.
"""
import logging
import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import logsumexp

from utils.density_utils import PAIR_CHUNK, Gaussian, ProposalSet, TargetDensity, as_points
from utils.errors import (
    AllWeightsZero,
    DimensionMismatch,
    NonFiniteWeight,
    ScheduleInvalid,
)
from utils.helpers import relative_change
from utils.partition_utils import Partition, random_block_partition, validate_partition

logger = logging.getLogger(__name__)

Proposals = Union[ProposalSet, Sequence[Gaussian]]
MomentFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class WeightedSamples:
    samples: np.ndarray       # (N, n), x_i ~ q_i
    log_weights: np.ndarray   # (N,), finite or -inf
    partition: Partition
    proposal_evals: int
    target_evals: int

    @property
    def n(self) -> int:
        return self.samples.shape[0]


@dataclass(frozen=True)
class EstimateResult:
    moment: np.ndarray
    z_hat: float
    proposal_evals: int
    target_evals: int


@dataclass(frozen=True)
class SelectionStep:
    p: int
    partition: Partition
    result: EstimateResult
    distinct_evaluations: int  # cumulative (sample, proposal) pairs evaluated so far


def identity_moment(x: np.ndarray) -> np.ndarray:
    return x


def unit_moment(x: np.ndarray) -> np.ndarray:
    return np.ones((x.shape[0], 1))


def as_proposal_set(proposals: Proposals) -> ProposalSet:
    if isinstance(proposals, ProposalSet):
        return proposals
    return ProposalSet(proposals)


def draw_samples(proposals: Proposals, rng: np.random.Generator) -> np.ndarray:
    """One sample per proposal, streams consumed in index order. Returns (N, n)."""
    return as_proposal_set(proposals).sample(rng)


def proposal_eval_cost(part: Partition) -> int:
    return part.eval_cost


class EvaluationCache:
    """
    Table of log q_j(x_i) keyed by (sample i, proposal j) plus the target values.
    Each pair is evaluated at most once; `evaluations` counts distinct pairs.
    """

    def __init__(self, target: TargetDensity, proposals: Proposals, samples):
        self.proposals = as_proposal_set(proposals)
        self.samples, _ = as_points(samples, self.proposals.dim)
        n = len(self.proposals)
        if self.samples.shape[0] != n:
            raise DimensionMismatch(f"{self.samples.shape[0]} samples for {n} proposals")
        self._target = target
        self._table = np.zeros((n, n))
        self._known = np.zeros((n, n), dtype=bool)
        self._log_target = None
        self.evaluations = 0

    def log_target(self) -> np.ndarray:
        if self._log_target is None:
            self._log_target = self._target.logpdf_many(self.samples)
        return self._log_target

    def block(self, idx: np.ndarray) -> np.ndarray:
        """(|idx|, |idx|) matrix [r, c] = log q_{idx[c]}(x_{idx[r]}), filling gaps first."""
        step = max(1, PAIR_CHUNK // max(idx.size, 1))
        for start in range(0, idx.size, step):
            rows = idx[start:start + step]
            missing = ~self._known[np.ix_(rows, idx)]
            if not missing.any():
                continue
            r, c = np.nonzero(missing)
            si, pj = rows[r], idx[c]
            self._table[si, pj] = self.proposals.pair_logpdf(self.samples[si], pj)
            self._known[si, pj] = True
            self.evaluations += si.size
        return self._table[np.ix_(idx, idx)]


def _log_ratio(log_num: np.ndarray, log_den: np.ndarray, idx: np.ndarray) -> np.ndarray:
    # 0/0 is a zero weight (sample outside everyone's support); x/0 is an error
    num_zero = np.isneginf(log_num)
    den_zero = np.isneginf(log_den)
    bad = den_zero & ~num_zero
    if bad.any():
        i = int(idx.reshape(-1)[np.argmax(bad.reshape(-1))])
        raise NonFiniteWeight(f"sample {i}: target is positive but its mixture density underflows to zero")
    with np.errstate(invalid="ignore"):
        out = log_num - log_den
    out[num_zero] = -np.inf
    return out


def _size_classes(part: Partition):
    """Subsets grouped by size: [(M, (G, M) index array), ...] in order of first appearance."""
    by_size = {}
    for s in part.subsets:
        by_size.setdefault(len(s), []).append(s)
    return [(m, np.asarray(subsets, dtype=np.intp)) for m, subsets in by_size.items()]


def compute_weights(target: TargetDensity, proposals: Proposals, part: Partition, samples,
                    cache: Optional[EvaluationCache] = None) -> WeightedSamples:
    """
    log w_i = log pi(x_i) - log psi_p(x_i) for every i in S_p. The singleton partition
    gives standard MIS weights, the full partition the deterministic mixture weights.
    """
    validate_partition(part)
    ps = cache.proposals if cache is not None else as_proposal_set(proposals)
    pts, _ = as_points(samples, ps.dim)
    if cache is not None and pts is not cache.samples and not np.array_equal(pts, cache.samples):
        raise DimensionMismatch("samples differ from the ones the evaluation cache was built on")
    n = pts.shape[0]
    if n != len(ps) or n != part.n_total:
        raise DimensionMismatch(f"{n} samples, {len(ps)} proposals, partition over {part.n_total}")
    if target.dim != ps.dim:
        raise DimensionMismatch(f"target dimension {target.dim} != proposal dimension {ps.dim}")

    log_target = cache.log_target() if cache is not None else target.logpdf_many(pts)
    log_w = np.empty(n)
    evals = 0
    for m, groups in _size_classes(part):
        if cache is None and m * m <= PAIR_CHUNK:
            blocks = ps.group_logpdf(pts, groups)
            evals += blocks.size
            log_psi = logsumexp(blocks, axis=2) - math.log(m)
            log_w[groups] = _log_ratio(log_target[groups], log_psi, groups)
            continue
        for idx in groups:
            block = cache.block(idx) if cache is not None else ps.cross_logpdf(pts[idx], idx)
            evals += block.size
            log_psi = logsumexp(block, axis=1) - math.log(m)
            log_w[idx] = _log_ratio(log_target[idx], log_psi, idx)

    logger.debug("weighted %d samples over P=%d mixtures (%d proposal evaluations)", n, part.n_subsets, evals)
    return WeightedSamples(pts, log_w, part, evals, n)


def _moment_values(f: MomentFn, samples: np.ndarray) -> np.ndarray:
    values = np.asarray(f(samples), dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    if values.ndim != 2 or values.shape[0] != samples.shape[0]:
        raise DimensionMismatch(f"moment function returned shape {values.shape} for {samples.shape[0]} samples")
    return values


def _weighted_sums(ws: WeightedSamples, f: MomentFn):
    """Return (shift, shifted total weight, shifted weighted sums of f) or None if all weights are zero."""
    shift = float(np.max(ws.log_weights))
    if shift == -np.inf:
        return None
    w = np.exp(ws.log_weights - shift)
    fx = _moment_values(f, ws.samples)
    total = float(np.sum(w))
    # one contiguous column at a time so f == 1 reproduces `total` bit for bit
    sums = np.array([np.sum(w * np.ascontiguousarray(fx[:, c])) for c in range(fx.shape[1])])
    return shift, total, sums


def estimate_moment(ws: WeightedSamples, f: MomentFn) -> EstimateResult:
    """Self-normalized estimate sum w_i f(x_i) / sum w_j, and Z-hat = mean weight."""
    sums = _weighted_sums(ws, f)
    if sums is None:
        raise AllWeightsZero("every importance weight is zero")
    shift, total, weighted = sums
    z_hat = float(np.exp(shift) * total / ws.n)
    return EstimateResult(weighted / total, z_hat, ws.proposal_evals, ws.target_evals)


def estimate_unnormalized(ws: WeightedSamples, f: MomentFn) -> np.ndarray:
    """(1/N) sum w_i f(x_i); unbiased for the moment when the target is normalized."""
    sums = _weighted_sums(ws, f)
    if sums is None:
        return np.zeros(_moment_values(f, ws.samples).shape[1])
    shift, _, weighted = sums
    return np.exp(shift) * weighted / ws.n


def select_num_mixtures(target: TargetDensity, proposals: Proposals, samples, f: MomentFn,
                        schedule: Sequence[int], threshold: float,
                        rng: np.random.Generator) -> Tuple[Partition, List[SelectionStep]]:
    """
    Walk P down the schedule (starting at P = N), re-weighting the same samples with a
    fresh random-block partition at each step, and stop at the first step whose
    estimate (moment components and Z-hat) moves by less than `threshold` relative to
    the previous one. Proposal evaluations are cached across steps.

    Returns the chosen partition and the full trace.
    """
    ps = as_proposal_set(proposals)
    n = len(ps)
    schedule = [int(p) for p in schedule]
    if not schedule:
        raise ScheduleInvalid("schedule is empty")
    if schedule[0] != n:
        raise ScheduleInvalid(f"schedule must start at P=N={n}, got {schedule[0]}")
    if any(b >= a for a, b in zip(schedule, schedule[1:])):
        raise ScheduleInvalid(f"schedule must be strictly decreasing: {schedule}")
    if schedule[-1] < 1:
        raise ScheduleInvalid(f"schedule values must be >= 1: {schedule}")
    if not threshold > 0:
        raise ScheduleInvalid(f"threshold must be > 0, got {threshold}")

    cache = EvaluationCache(target, ps, samples)
    trace: List[SelectionStep] = []
    previous = None
    for p in schedule:
        part = random_block_partition(n, p, rng)
        result = estimate_moment(compute_weights(target, ps, part, cache.samples, cache=cache), f)
        trace.append(SelectionStep(p, part, result, cache.evaluations))
        current = np.append(result.moment, result.z_hat)
        if previous is not None:
            change = relative_change(previous, current)
            logger.info("P=%d: relative change %.6g (threshold %.6g)", p, change, threshold)
            if change < threshold:
                logger.info("selected P=%d after %d steps, %d distinct proposal evaluations",
                            p, len(trace), cache.evaluations)
                return part, trace
        previous = current

    logger.info("no step changed by less than %.6g; keeping smallest P=%d", threshold, schedule[-1])
    return trace[-1].partition, trace
