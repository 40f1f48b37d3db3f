"""
Log-domain densities: multivariate Gaussians, equal-weight Gaussian mixtures,
evaluation-counted targets and the stacked proposal set used for weighting.
"""
import logging
import math
import threading
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import linalg
from scipy.special import logsumexp

from utils.errors import (
    DimensionMismatch,
    InvalidPoint,
    InvalidSize,
    NonFiniteDensity,
    NotPositiveDefinite,
)

logger = logging.getLogger(__name__)

SYMMETRY_RTOL = 1e-12
LOG_2PI = math.log(2.0 * math.pi)
PAIR_CHUNK = 1 << 18  # (sample, proposal) pairs per kernel call

# Five-component bivariate target with equal weights
FIVE_MODE_MEANS = (
    (-10.0, -10.0),
    (0.0, 16.0),
    (13.0, 8.0),
    (-9.0, 7.0),
    (14.0, -14.0),
)
FIVE_MODE_COVS = (
    ((2.0, 0.6), (0.6, 1.0)),
    ((2.0, -0.4), (-0.4, 2.0)),
    ((2.0, 0.8), (0.8, 2.0)),
    ((3.0, 0.0), (0.0, 0.5)),
    ((2.0, -0.1), (-0.1, 2.0)),
)
FIVE_MODE_TRUE_MEAN = (1.6, 1.4)
FIVE_MODE_TRUE_Z = 1.0


def as_points(x, dim: int):
    """
    Coerce x to a (k, dim) float array. Returns (points, single) where single
    tells whether x was one point of shape (dim,).
    """
    arr = np.asarray(x, dtype=float)
    single = arr.ndim == 1
    pts = arr.reshape(1, -1) if single else arr
    if pts.ndim != 2 or pts.shape[1] != dim:
        raise DimensionMismatch(f"expected points of dimension {dim}, got shape {arr.shape}")
    return pts, single


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


class Gaussian:
    """
    Multivariate normal N(mean, cov). The Cholesky factor, its inverse and the
    log-normalizer are computed once here and reused by evaluation and sampling.
    """

    def __init__(self, mean, cov):
        mean = np.array(mean, dtype=float)
        if mean.ndim != 1 or mean.size < 1:
            raise DimensionMismatch(f"mean must be a non-empty vector, got shape {mean.shape}")
        if not np.all(np.isfinite(mean)):
            raise InvalidPoint("mean has non-finite entries")
        n = mean.size
        cov = np.array(cov, dtype=float)
        if cov.shape != (n, n):
            raise DimensionMismatch(f"covariance shape {cov.shape} does not match dimension {n}")
        if not np.all(np.isfinite(cov)):
            raise NotPositiveDefinite("covariance has non-finite entries")

        scale = float(np.max(np.abs(cov)))
        if np.max(np.abs(cov - cov.T)) > SYMMETRY_RTOL * scale:
            raise NotPositiveDefinite("covariance is not symmetric")
        cov = 0.5 * (cov + cov.T)

        try:
            chol = linalg.cholesky(cov, lower=True)
        except linalg.LinAlgError as e:
            raise NotPositiveDefinite(f"cholesky factorization failed: {e}") from e
        if not np.all(np.diag(chol) > 0.0):
            raise NotPositiveDefinite("cholesky factor has a non-positive diagonal")

        self._set(mean, cov, chol)

    def _set(self, mean, cov, chol, chol_inv=None, log_norm=None):
        n = mean.size
        self.mean = _readonly(mean)
        self.cov = _readonly(cov)
        self.chol = _readonly(chol)
        if chol_inv is None:
            chol_inv = linalg.solve_triangular(chol, np.eye(n), lower=True)
        self.chol_inv = _readonly(chol_inv)
        if log_norm is None:
            log_norm = -0.5 * n * LOG_2PI - float(np.sum(np.log(np.diag(chol))))
        self.log_norm = log_norm

    @property
    def dim(self) -> int:
        return self.mean.size

    def with_mean(self, mean) -> "Gaussian":
        """Same covariance (and factorization) centred elsewhere."""
        mean = np.array(mean, dtype=float)
        if mean.shape != self.mean.shape:
            raise DimensionMismatch(f"mean shape {mean.shape} does not match {self.mean.shape}")
        if not np.all(np.isfinite(mean)):
            raise InvalidPoint("mean has non-finite entries")
        g = object.__new__(Gaussian)
        g._set(mean, self.cov, self.chol, self.chol_inv, self.log_norm)
        return g

    def logpdf(self, x):
        """log N(x; mean, cov) for one point (returns float) or a (k, n) batch."""
        pts, single = as_points(x, self.dim)
        z = linalg.solve_triangular(self.chol, (pts - self.mean).T, lower=True)
        out = self.log_norm - 0.5 * np.sum(z * z, axis=0)
        return float(out[0]) if single else out

    def sample(self, rng: np.random.Generator, size: Optional[int] = None) -> np.ndarray:
        if size is None:
            z = rng.standard_normal(self.dim)
            return self.mean + self.chol @ z
        z = rng.standard_normal((size, self.dim))
        return self.mean + z @ self.chol.T

    def __repr__(self):
        return f"Gaussian(mean={self.mean.tolist()}, cov={self.cov.tolist()})"


class MixtureDensity:
    """Equal-weight mixture (1/M) sum_j N(x; mean_j, cov_j)."""

    def __init__(self, components: Sequence[Gaussian]):
        components = list(components)
        if not components:
            raise InvalidSize("a mixture needs at least one component")
        dim = components[0].dim
        for g in components:
            if g.dim != dim:
                raise DimensionMismatch(f"mixture components mix dimensions {dim} and {g.dim}")
        self.components = tuple(components)
        self.dim = dim

    def __len__(self):
        return len(self.components)

    def logpdf(self, x):
        pts, single = as_points(x, self.dim)
        per_component = np.stack([g.logpdf(pts) for g in self.components])
        out = logsumexp(per_component, axis=0) - math.log(len(self.components))
        return float(out[0]) if single else out

    def sample_random(self, count: int, rng: np.random.Generator) -> np.ndarray:
        """
        Classical mixture sampling: pick a component uniformly for every draw, then
        sample it. Returns a (count, n) array.
        """
        if count < 1:
            raise InvalidSize(f"count must be >= 1, got {count}")
        picks = rng.integers(len(self.components), size=count)
        z = rng.standard_normal((count, self.dim))
        means = np.stack([g.mean for g in self.components])
        chols = np.stack([g.chol for g in self.components])
        return means[picks] + np.einsum("kij,kj->ki", chols[picks], z)

    def sample_deterministic(self, rng: np.random.Generator) -> np.ndarray:
        """One draw per component, in component order. Returns an (M, n) array."""
        return np.stack([g.sample(rng) for g in self.components])

    def mean(self) -> np.ndarray:
        return np.mean([g.mean for g in self.components], axis=0)

    def covariance(self) -> np.ndarray:
        mu = self.mean()
        second = np.mean([g.cov + np.outer(g.mean, g.mean) for g in self.components], axis=0)
        return second - np.outer(mu, mu)


class TargetDensity:
    """
    Unnormalized log target log pi(x) with an evaluation counter.

    log_eval takes one point; log_eval_many, if given, takes a (k, n) batch and is
    used by logpdf_many. Either way every evaluated point counts once.
    """

    def __init__(self, log_eval: Callable, dim: int, log_eval_many: Optional[Callable] = None):
        if dim < 1:
            raise DimensionMismatch(f"dimension must be >= 1, got {dim}")
        self._log_eval = log_eval
        self._log_eval_many = log_eval_many
        self.dim = dim
        self._count = 0
        self._lock = threading.Lock()

    @classmethod
    def from_mixture(cls, mixture: MixtureDensity) -> "TargetDensity":
        return cls(mixture.logpdf, mixture.dim, log_eval_many=mixture.logpdf)

    @property
    def eval_count(self) -> int:
        return self._count

    def _bump(self, k: int):
        with self._lock:
            self._count += k

    def logpdf(self, x) -> float:
        pts, _ = as_points(x, self.dim)
        if pts.shape[0] != 1:
            raise DimensionMismatch("logpdf takes a single point; use logpdf_many for batches")
        value = float(self._log_eval(pts[0]))
        self._bump(1)
        if math.isnan(value) or value == math.inf:
            raise NonFiniteDensity(f"target returned {value}")
        return value

    def logpdf_many(self, xs) -> np.ndarray:
        pts, _ = as_points(xs, self.dim)
        if self._log_eval_many is not None:
            values = np.asarray(self._log_eval_many(pts), dtype=float).reshape(-1)
        else:
            values = np.array([float(self._log_eval(p)) for p in pts])
        self._bump(pts.shape[0])
        if values.shape[0] != pts.shape[0]:
            raise DimensionMismatch(f"target returned {values.shape[0]} values for {pts.shape[0]} points")
        if np.any(np.isnan(values)) or np.any(values == np.inf):
            raise NonFiniteDensity("target returned NaN or +inf")
        return values


def five_mode_mixture() -> MixtureDensity:
    return MixtureDensity([Gaussian(m, c) for m, c in zip(FIVE_MODE_MEANS, FIVE_MODE_COVS)])


def five_mode_target() -> TargetDensity:
    """The normalized five-component benchmark target (true Z = 1)."""
    return TargetDensity.from_mixture(five_mode_mixture())


class ProposalSet:
    """
    N Gaussian proposals stacked for batched cross evaluation log q_j(x_i).

    Both the plain weighting path and the cached one go through _kernel, element
    by element, so a given (sample, proposal) pair always yields the same bits.
    """

    def __init__(self, components: Sequence[Gaussian]):
        components = list(components)
        if not components:
            raise InvalidSize("need at least one proposal")
        dim = components[0].dim
        for g in components:
            if g.dim != dim:
                raise DimensionMismatch(f"proposals mix dimensions {dim} and {g.dim}")
        self.components = tuple(components)
        self.dim = dim
        self.means = _readonly(np.stack([g.mean for g in components]))
        self.log_norm = _readonly(np.array([g.log_norm for g in components]))
        first = components[0].chol_inv
        if all(g.chol_inv is first or np.array_equal(g.chol_inv, first) for g in components):
            self._shared_inv = first
            self.chol_inv = None
        else:
            self._shared_inv = None
            self.chol_inv = _readonly(np.stack([g.chol_inv for g in components]))
        logger.debug("stacked %d proposals of dimension %d (shared covariance: %s)",
                     len(components), dim, self._shared_inv is not None)

    @classmethod
    def isotropic(cls, means, sigma: float) -> "ProposalSet":
        means = np.asarray(means, dtype=float)
        if means.ndim != 2:
            raise DimensionMismatch(f"means must be (N, n), got shape {means.shape}")
        template = Gaussian(np.zeros(means.shape[1]), sigma ** 2 * np.eye(means.shape[1]))
        return cls([template.with_mean(m) for m in means])

    def __len__(self):
        return len(self.components)

    def __getitem__(self, i) -> Gaussian:
        return self.components[i]

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        """x_i ~ q_i for i in index order, one Gaussian.sample call each."""
        return np.stack([g.sample(rng) for g in self.components])

    def _kernel(self, pts: np.ndarray, cols: np.ndarray) -> np.ndarray:
        diff = pts - self.means[cols]
        inv = self._shared_inv[None, :, :] if self._shared_inv is not None else self.chol_inv[cols]
        z = (diff[:, None, :] * inv).sum(axis=-1)
        return self.log_norm[cols] - 0.5 * (z * z).sum(axis=-1)

    def pair_logpdf(self, points, cols) -> np.ndarray:
        """log q_{cols[k]}(points[k]) for each k."""
        pts, _ = as_points(points, self.dim)
        cols = np.asarray(cols, dtype=np.intp)
        if cols.shape != (pts.shape[0],):
            raise DimensionMismatch(f"{pts.shape[0]} points but {cols.shape} proposal indices")
        out = np.empty(pts.shape[0])
        for start in range(0, pts.shape[0], PAIR_CHUNK):
            stop = start + PAIR_CHUNK
            out[start:stop] = self._kernel(pts[start:stop], cols[start:stop])
        return out

    def group_logpdf(self, points, groups) -> np.ndarray:
        """
        groups is a (G, M) array of proposal indices. Returns (G, M, M) with
        [g, r, c] = log q_{groups[g, c]}(points[groups[g, r]]).
        """
        pts, _ = as_points(points, self.dim)
        groups = np.asarray(groups, dtype=np.intp)
        if groups.ndim != 2:
            raise DimensionMismatch(f"groups must be (G, M), got shape {groups.shape}")
        g_count, m = groups.shape
        out = np.empty((g_count, m, m))
        step = max(1, PAIR_CHUNK // max(m * m, 1))
        for start in range(0, g_count, step):
            block = groups[start:start + step]
            b = block.shape[0]
            rows = np.repeat(block, m, axis=1).reshape(-1)
            cols = np.tile(block, (1, m)).reshape(-1)
            out[start:start + b] = self._kernel(pts[rows], cols).reshape(b, m, m)
        return out

    def cross_logpdf(self, points, cols) -> np.ndarray:
        """(a, b) matrix with entry [r, c] = log q_{cols[c]}(points[r])."""
        pts, _ = as_points(points, self.dim)
        cols = np.asarray(cols, dtype=np.intp).reshape(-1)
        a, b = pts.shape[0], cols.size
        out = np.empty((a, b))
        if a == 0 or b == 0:
            return out
        step = max(1, PAIR_CHUNK // b)
        for start in range(0, a, step):
            block = pts[start:start + step]
            r = block.shape[0]
            values = self._kernel(np.repeat(block, b, axis=0), np.tile(cols, r))
            out[start:start + r] = values.reshape(r, b)
        return out
