"""
Partitions S_1..S_P of the proposal index set {0, ..., N-1}.

Each subset becomes one equal-weight mixture in the partial deterministic-mixture
weights. P = N gives standard MIS, P = 1 the full deterministic mixture.
"""
from typing import Iterable, Optional, Sequence

import numpy as np

from utils.errors import InvalidConfig, InvalidSize, NotAPartition

SCHEMES = ("pmc", "apis", "p-dm", "amis", "f-dm")


class Partition:
    """
    Disjoint index subsets with an inverse map index -> subset number.

    The constructor does not validate (validate_partition does); use from_subsets
    or the constructors below for checked, canonical partitions. Canonical means
    every subset sorted ascending and subsets ordered by their smallest index.
    """

    def __init__(self, subsets: Iterable[Iterable[int]], n_total: int, group_of: Optional[Sequence[int]] = None):
        self.subsets = tuple(tuple(int(i) for i in s) for s in subsets)
        self.n_total = int(n_total)
        if group_of is None:
            group_of = [-1] * max(self.n_total, 0)
            for p, s in enumerate(self.subsets):
                for i in s:
                    if 0 <= i < self.n_total:
                        group_of[i] = p
        self.group_of = tuple(int(g) for g in group_of)

    @classmethod
    def from_subsets(cls, subsets: Iterable[Iterable[int]], n_total: int) -> "Partition":
        ordered = sorted((sorted(int(i) for i in s) for s in subsets), key=lambda s: s[0] if s else -1)
        part = cls(ordered, n_total)
        validate_partition(part)
        return part

    @property
    def n_subsets(self) -> int:
        return len(self.subsets)

    @property
    def sizes(self):
        return [len(s) for s in self.subsets]

    @property
    def eval_cost(self) -> int:
        """Proposal evaluations needed to weight every sample: sum_p |S_p|^2."""
        return sum(len(s) ** 2 for s in self.subsets)

    def index_arrays(self):
        return [np.asarray(s, dtype=np.intp) for s in self.subsets]

    def to_text(self) -> str:
        return "[" + ", ".join("[" + ", ".join(str(i) for i in s) + "]" for s in self.subsets) + "]"

    def __eq__(self, other):
        if not isinstance(other, Partition):
            return NotImplemented
        return self.n_total == other.n_total and self.subsets == other.subsets

    def __hash__(self):
        return hash((self.n_total, self.subsets))

    def __repr__(self):
        return f"Partition(n_total={self.n_total}, P={self.n_subsets})"


def validate_partition(part: Partition) -> None:
    """Raise NotAPartition naming the first violated property; return None if ok."""
    n = part.n_total
    seen = [False] * max(n, 0)
    for p, s in enumerate(part.subsets):
        if not s:
            raise NotAPartition("empty subset", f"subset {p} is empty")
        for i in s:
            if not 0 <= i < n:
                raise NotAPartition("out of range", f"index {i} not in [0, {n})")
            if seen[i]:
                raise NotAPartition("overlap", f"index {i} appears more than once")
            seen[i] = True
    missing = [i for i, hit in enumerate(seen) if not hit]
    if missing or n < 1:
        raise NotAPartition("coverage gap", f"indices {missing[:10]} not covered")
    if len(part.group_of) != n:
        raise NotAPartition("group_of mismatch", f"group_of has {len(part.group_of)} entries for N={n}")
    for p, s in enumerate(part.subsets):
        for i in s:
            if part.group_of[i] != p:
                raise NotAPartition("group_of mismatch", f"group_of[{i}] = {part.group_of[i]}, expected {p}")


def _check_size(name: str, value: int):
    if value < 1:
        raise InvalidSize(f"{name} must be >= 1, got {value}")


def singleton_partition(n: int) -> Partition:
    _check_size("N", n)
    return Partition([[i] for i in range(n)], n)


def full_partition(n: int) -> Partition:
    _check_size("N", n)
    return Partition([list(range(n))], n)


def block_partition(order: Sequence[int], p: int) -> Partition:
    """
    Split an ordering of {0..N-1} into p contiguous blocks. The first N mod p blocks
    get ceil(N/p) indices, the rest floor(N/p).
    """
    order = [int(i) for i in order]
    n = len(order)
    _check_size("N", n)
    _check_size("P", p)
    if p > n:
        raise InvalidSize(f"P={p} exceeds N={n}")
    base, extra = divmod(n, p)
    blocks, start = [], 0
    for k in range(p):
        size = base + (1 if k < extra else 0)
        blocks.append(order[start:start + size])
        start += size
    return Partition.from_subsets(blocks, n)


def random_block_partition(n: int, p: int, rng: np.random.Generator) -> Partition:
    """Uniformly random permutation of {0..N-1} cut into p near-equal blocks."""
    _check_size("N", n)
    _check_size("P", p)
    if p > n:
        raise InvalidSize(f"P={p} exceeds N={n}")
    return block_partition(rng.permutation(n), p)


def grid_spatial_partition(j: int, t: int) -> Partition:
    """One subset per iteration t holding its J proposals; index i = t*J + j."""
    _check_size("J", j)
    _check_size("T", t)
    return Partition([[tt * j + jj for jj in range(j)] for tt in range(t)], j * t)


def grid_temporal_partition(j: int, t: int) -> Partition:
    """One subset per chain j holding its T proposals over time; index i = t*J + j."""
    _check_size("J", j)
    _check_size("T", t)
    return Partition([[tt * j + jj for tt in range(t)] for jj in range(j)], j * t)


def scheme_partition(scheme: str, j: int, t: int, p: Optional[int] = None,
                     rng: Optional[np.random.Generator] = None) -> Partition:
    """
    Weight-denominator schemes for J proposals adapted over T iterations:
    pmc (own proposal only), apis (same-iteration mixture), amis (same-chain mixture
    over time), p-dm (random blocks, needs p and rng), f-dm (all JT proposals).
    """
    if scheme not in SCHEMES:
        raise InvalidConfig(f"unknown weighting scheme {scheme!r}; expected one of {SCHEMES}")
    _check_size("J", j)
    _check_size("T", t)
    if scheme == "pmc":
        return singleton_partition(j * t)
    if scheme == "apis":
        return grid_spatial_partition(j, t)
    if scheme == "amis":
        return grid_temporal_partition(j, t)
    if scheme == "f-dm":
        return full_partition(j * t)
    if p is None or rng is None:
        raise InvalidConfig("scheme p-dm needs both p and rng")
    return random_block_partition(j * t, p, rng)
