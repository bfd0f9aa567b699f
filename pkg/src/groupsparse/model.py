"""Group structure, l_{p,q} norms and the regularized least-squares objective.

Group indices are 0-based throughout. Groups are contiguous index ranges; a
scattered grouping is turned into a contiguous one with
:meth:`GroupPartition.from_groups`, which records the column permutation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import ConfigurationError
from .linalg import as_matrix, as_vector

ZERO_TOL = 1e-10
HALF = 0.5
TWO_THIRDS = 2.0 / 3.0
_Q_MATCH_TOL = 1e-12


@dataclass(frozen=True)
class GroupPartition:
    """Ordered, disjoint, contiguous groups covering ``range(n)``."""

    sizes: tuple[int, ...]
    permutation: tuple[int, ...] | None = None
    bounds: tuple[tuple[int, int], ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sizes)
        if not sizes:
            raise ValueError("a partition needs at least one group")
        if any(s < 1 for s in sizes):
            raise ValueError("every group must be nonempty")
        object.__setattr__(self, "sizes", sizes)
        ends = np.cumsum(sizes)
        starts = ends - np.asarray(sizes)
        object.__setattr__(
            self, "bounds", tuple((int(a), int(b)) for a, b in zip(starts, ends))
        )
        if self.permutation is not None:
            perm = tuple(int(i) for i in self.permutation)
            if sorted(perm) != list(range(self.n)):
                raise ValueError("permutation must be a rearrangement of range(n)")
            object.__setattr__(self, "permutation", perm)

    @classmethod
    def from_sizes(cls, sizes: Sequence[int]) -> "GroupPartition":
        return cls(tuple(sizes))

    @classmethod
    def singletons(cls, n: int) -> "GroupPartition":
        return cls((1,) * n)

    @classmethod
    def equal(cls, n: int, r: int) -> "GroupPartition":
        if r < 1 or n % r:
            raise ValueError(f"{r} groups do not divide n={n}")
        return cls((n // r,) * r)

    @classmethod
    def from_groups(cls, groups: Sequence[Sequence[int]]) -> "GroupPartition":
        """Build a partition from arbitrary index lists.

        The returned partition is contiguous in the permuted coordinates
        ``x[partition.permutation]``; use :meth:`to_contiguous` and
        :meth:`from_contiguous` to move between the two orderings.
        """
        perm = [int(i) for g in groups for i in g]
        return cls(tuple(len(g) for g in groups), permutation=tuple(perm))

    @property
    def r(self) -> int:
        return len(self.sizes)

    @property
    def n(self) -> int:
        return self.bounds[-1][1]

    @property
    def n_max(self) -> int:
        return max(self.sizes)

    def slices(self) -> list[slice]:
        return [slice(a, b) for a, b in self.bounds]

    def group_ids(self) -> np.ndarray:
        """Group index of each coordinate."""
        return np.repeat(np.arange(self.r), self.sizes)

    def to_contiguous(self, x):
        """Reorder coordinates (or matrix columns) into contiguous group order."""
        x = np.asarray(x)
        if self.permutation is None:
            return x
        return x[..., list(self.permutation)]

    def from_contiguous(self, x):
        x = np.asarray(x)
        if self.permutation is None:
            return x
        out = np.empty_like(x)
        out[..., list(self.permutation)] = x
        return out

    def check(self, x) -> np.ndarray:
        x = as_vector(x)
        if x.shape[0] != self.n:
            raise ValueError(f"vector of length {x.shape[0]} does not match partition of n={self.n}")
        return x


def is_q(q: float, target: float) -> bool:
    return abs(q - target) <= _Q_MATCH_TOL


@dataclass(frozen=True)
class Regularizer:
    """The penalty ``lam * ||x||_{p,q}^q``.

    ``lam = 0`` is allowed (plain least squares); it makes every proximal
    operator the identity.
    """

    p: float
    q: float
    lam: float

    ANALYTIC = ((2.0, 1.0), (2.0, 0.0), (2.0, HALF), (1.0, HALF), (2.0, TWO_THIRDS), (1.0, TWO_THIRDS))

    def __post_init__(self):
        p, q, lam = float(self.p), float(self.q), float(self.lam)
        if not (1.0 <= p <= 2.0):
            raise ConfigurationError(f"p={p} outside [1, 2]")
        if not (0.0 <= q <= 1.0):
            raise ConfigurationError(f"q={q} outside [0, 1]")
        if not math.isfinite(lam) or lam < 0:
            raise ConfigurationError(f"lambda={lam} must be finite and nonnegative")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "lam", lam)

    @property
    def is_analytic(self) -> bool:
        return any(self.p == a and is_q(self.q, b) for a, b in self.ANALYTIC)

    @property
    def is_generic(self) -> bool:
        return not self.is_analytic and 0.0 < self.q < 1.0

    def with_lambda(self, lam: float) -> "Regularizer":
        return replace(self, lam=lam)


@dataclass(frozen=True)
class Problem:
    """``min ||Ax - b||_2^2 + lam * ||x||_{p,q}^q`` over the given grouping."""

    A: np.ndarray
    b: np.ndarray
    partition: GroupPartition
    reg: Regularizer

    def __post_init__(self):
        A = as_matrix(self.A, "A")
        b = as_vector(self.b, "b")
        if A.shape[1] != self.partition.n:
            raise ValueError(f"A has {A.shape[1]} columns, partition covers n={self.partition.n}")
        if A.shape[0] != b.shape[0]:
            raise ValueError(f"A has {A.shape[0]} rows, b has length {b.shape[0]}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    def with_lambda(self, lam: float) -> "Problem":
        return replace(self, reg=self.reg.with_lambda(lam))


def group_norms(x, partition: GroupPartition, p: float = 2.0) -> np.ndarray:
    """Per-group l_p norms (``p = inf`` gives the max norm)."""
    x = partition.check(x)
    out = np.empty(partition.r)
    for i, (a, b) in enumerate(partition.bounds):
        g = np.abs(x[a:b])
        if math.isinf(p):
            out[i] = g.max()
        elif p == 2.0:
            out[i] = math.sqrt(float(g @ g))
        elif p == 1.0:
            out[i] = float(g.sum())
        else:
            out[i] = float(np.sum(g**p)) ** (1.0 / p)
    return out


def nonzero_groups(x, partition: GroupPartition, tol: float = ZERO_TOL) -> np.ndarray:
    """Boolean mask of groups whose max-magnitude entry exceeds ``tol``."""
    return group_norms(x, partition, math.inf) > tol


def support(x, partition: GroupPartition, tol: float = ZERO_TOL) -> frozenset[int]:
    return frozenset(int(i) for i in np.flatnonzero(nonzero_groups(x, partition, tol)))


def penalty(x, partition: GroupPartition, p: float, q: float) -> float:
    """``||x||_{p,q}^q``; for ``q = 0`` the number of nonzero groups."""
    if q < 0 or p <= 0:
        raise ValueError("need p > 0 and q >= 0")
    if q == 0:
        return float(np.count_nonzero(nonzero_groups(x, partition)))
    return float(np.sum(group_norms(x, partition, p) ** q))


def lpq_norm(x, partition: GroupPartition, p: float, q: float) -> float:
    if q == 0:
        return penalty(x, partition, p, 0.0)
    return penalty(x, partition, p, q) ** (1.0 / q)


def residual_sq(problem: Problem, x) -> float:
    r = problem.A @ x - problem.b
    return float(r @ r)


def objective(problem: Problem, x) -> float:
    x = problem.partition.check(x)
    reg = problem.reg
    return residual_sq(problem, x) + reg.lam * penalty(x, problem.partition, reg.p, reg.q)


def smallest_k(q: float) -> int:
    """Smallest integer ``K >= 1`` with ``2**(K-1) * q >= 1``."""
    if not (0 < q <= 1):
        raise ValueError(f"q={q} must lie in (0, 1]")
    k = 1
    while 2.0 ** (k - 1) * q < 1.0:
        k += 1
    return k
