"""Numerical checks of restricted eigenvalue conditions and recovery bounds.

``grec_estimate`` samples the restricted cone and returns an upper bound on
the restricted eigenvalue constant. The bound functions evaluate closed-form
right-hand sides, and ``global_min_small`` is a brute-force minimizer for
problems with at most four unknowns, used as a reference solution.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigurationError, PreconditionError
from .linalg import as_matrix, gram_inverse_norm
from .model import GroupPartition, Problem, group_norms, objective, smallest_k, support
from .solver import SolverConfig, pgm_solve

FEAS_RTOL = 1e-12
MAX_GRID_NODES = 10**8
COARSE_BUDGET = 200_000
MAX_REDRAWS = 16


# ---------------------------------------------------------------- cones and ratios


def _pq(norms: np.ndarray, q: float) -> float:
    """``(sum norms^q)^(1/q)`` from precomputed group norms."""
    if norms.size == 0:
        return 0.0
    return float(np.sum(norms**q)) ** (1.0 / q)


def _top(norms: np.ndarray, k: int) -> np.ndarray:
    """Indices of the ``k`` largest entries, ties broken by lowest index."""
    order = np.lexsort((np.arange(norms.size), -norms))
    return order[:k]


def cone_membership(x, partition: GroupPartition, p: float, q: float, s: int) -> bool:
    """Whether ``x`` lies in the restricted cone of size ``s``.

    That is, whether some set ``J`` of at most ``s`` groups has
    ``||x_{J^c}||_{p,q} <= ||x_J||_{p,q}``. Only the ``s`` largest groups need
    checking: moving mass into ``J`` can only help.
    """
    norms = group_norms(x, partition, p)
    if not 1 <= s < partition.r:
        raise ValueError(f"need 1 <= s < r={partition.r}")
    J = _top(norms, s)
    mask = np.zeros(norms.size, bool)
    mask[J] = True
    inside, outside = _pq(norms[mask], q), _pq(norms[~mask], q)
    return outside <= inside * (1.0 + FEAS_RTOL)


def grec_ratio(A, x, partition: GroupPartition, p: float, S: int, N: int):
    """Return ``(ratio, J, Nset)`` for ``x`` with ``J`` its ``S`` largest groups.

    ``Nset`` is ``J`` together with the ``N`` largest remaining groups, and
    ``ratio = ||A x|| / ||x_{Nset}||_{p,2}``.
    """
    norms = group_norms(x, partition, p)
    order = _top(norms, min(S + N, norms.size))
    J, Nset = order[:S], order
    den = math.sqrt(float(np.sum(norms[Nset] ** 2)))
    Ax = A @ x
    num = math.sqrt(float(Ax @ Ax))
    return (num / den if den > 0 else math.inf), frozenset(int(i) for i in J), frozenset(int(i) for i in Nset)


@dataclass(frozen=True)
class GrecEstimate:
    phi_upper: float
    witness: np.ndarray
    witness_index_set: frozenset
    n_evaluated: int


def _project(x, partition, p, q, J_mask_coords, J_groups_mask):
    """Scale the J-block up so the cone constraint holds (with equality if it was violated)."""
    norms = group_norms(x, partition, p)
    inside = _pq(norms[J_groups_mask], q)
    outside = _pq(norms[~J_groups_mask], q)
    if inside == 0.0:
        return None
    if outside > inside:
        x = x.copy()
        x[J_mask_coords] *= outside / inside
    return x


def _feasible(x, partition, p, q, S) -> bool:
    return cone_membership(x, partition, p, q, S)


def _refine(A, x, partition, p, q, S, N, steps):
    """Pattern search on the ratio, one coordinate at a time, staying in the cone."""
    best, _, _ = grec_ratio(A, x, partition, p, S, N)
    delta = 0.25 * float(np.max(np.abs(x)))
    for _ in range(steps):
        improved = False
        for i in range(x.size):
            for sgn in (1.0, -1.0):
                y = x.copy()
                y[i] += sgn * delta
                if not np.any(y) or not _feasible(y, partition, p, q, S):
                    continue
                val, _, _ = grec_ratio(A, y, partition, p, S, N)
                if val < best:
                    x, best, improved = y, val, True
                    break
        if not improved:
            delta *= 0.5
            if delta < 1e-14 * float(np.max(np.abs(x))):
                break
    return x, best


def grec_estimate(
    A,
    partition: GroupPartition,
    p: float,
    q: float,
    S: int,
    N: int,
    samples: int = 64,
    refine_steps: int = 50,
    seed: int = 0,
    candidates: Optional[Sequence] = None,
) -> GrecEstimate:
    """Sampled upper bound on the group restricted eigenvalue constant.

    For every set ``J`` of at most ``S`` groups, ``samples`` Gaussian
    directions are drawn and pushed into the cone by enlarging their J-block.
    Null-space directions of ``A`` and any user ``candidates`` are tried as
    well. The best point found for each ``J`` is polished by
    ``refine_steps`` sweeps of coordinate pattern search. The minimum ratio
    over everything tried is returned with the point that attains it.

    Draws come from one substream per ``J`` so the result does not depend on
    evaluation order.
    """
    A = as_matrix(A)
    if A.shape[1] != partition.n:
        raise ValueError("A and partition disagree on n")
    r = partition.r
    if not 1 <= S <= N or S + N > r:
        raise ValueError(f"need 1 <= S <= N and S + N <= r, got S={S}, N={N}, r={r}")
    if samples < 1:
        raise ValueError("samples must be positive")
    if not 0 < q <= 1:
        raise ValueError("q must lie in (0, 1]")

    extra = [np.asarray(c, dtype=float) for c in (candidates or [])]
    _, sv, Vt = np.linalg.svd(A)
    rank = int(np.sum(sv > 1e-12 * (sv[0] if sv.size else 1.0)))
    extra.extend(Vt[rank:])

    gid = partition.group_ids()
    best_val, best_x, n_eval = math.inf, None, 0

    def consider(x):
        nonlocal best_val, best_x, n_eval
        if x is None or not np.any(x) or not _feasible(x, partition, p, q, S):
            return math.inf
        n_eval += 1
        val, _, _ = grec_ratio(A, x, partition, p, S, N)
        if val < best_val:
            best_val, best_x = val, x
        return val

    # seeded directions first, in their natural cone
    for c in extra:
        if c.shape != (partition.n,):
            raise ValueError("candidate directions must have length n")
        consider(c)
        norms = group_norms(c, partition, p) if np.any(c) else None
        if norms is not None:
            Jm = np.zeros(r, bool)
            Jm[_top(norms, S)] = True
            consider(_project(c, partition, p, q, Jm[gid], Jm))

    for size in range(1, S + 1):
        for J in itertools.combinations(range(r), size):
            Jm = np.zeros(r, bool)
            Jm[list(J)] = True
            coords = Jm[gid]
            rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=J)))
            local_best, local_x = math.inf, None
            for _ in range(samples):
                x = None
                for _ in range(MAX_REDRAWS):
                    x = _project(rng.standard_normal(partition.n), partition, p, q, coords, Jm)
                    if x is not None:
                        break
                val = consider(x)
                if val < local_best:
                    local_best, local_x = val, x
            if local_x is not None and refine_steps > 0:
                consider(_refine(A, local_x, partition, p, q, S, N, refine_steps)[0])

    if best_x is None:
        raise PreconditionError("no feasible direction found")
    val, J, _ = grec_ratio(A, best_x, partition, p, S, N)
    return GrecEstimate(val, best_x, J, n_eval)


# ---------------------------------------------------------------- bounds


def oracle_inequality_gap(prob: Problem, xbar, x, phi: float) -> float:
    """Right side minus left side of the oracle inequality at ``x``.

    The left side is ``||A x - A xbar||^2 + lam ||x_{S^c}||_{p,q}^q`` where
    ``S`` is the group support of ``xbar``; the right side is
    ``lam^(2/(2-q)) S^((1-2^-K) 2/(2-q)) / phi^(2q/(2-q))``.

    Raises
    ------
    PreconditionError
        If ``x`` is not in the level set ``F(x) <= F(xbar)``.
    """
    part, reg = prob.partition, prob.reg
    if not phi > 0:
        raise ValueError("phi must be positive")
    if not 0 < reg.q <= 1:
        raise ValueError("oracle inequality needs 0 < q <= 1")
    xbar = part.check(xbar)
    x = part.check(x)
    f_x, f_bar = objective(prob, x), objective(prob, xbar)
    if f_x > f_bar * (1.0 + 1e-12) + 1e-15:
        raise PreconditionError(f"x is outside the level set: F(x)={f_x} > F(xbar)={f_bar}")
    supp = support(xbar, part)
    S = len(supp)
    d = prob.A @ (x - xbar)
    norms = group_norms(x, part, reg.p)
    off = np.array([i not in supp for i in range(part.r)])
    lhs = float(d @ d) + reg.lam * float(np.sum(norms[off] ** reg.q))
    q, lam = reg.q, reg.lam
    K = smallest_k(q)
    rhs = lam ** (2 / (2 - q)) * S ** ((1 - 2.0**-K) * 2 / (2 - q)) / phi ** (2 * q / (2 - q))
    return rhs - lhs


def global_recovery_bound(lam: float, S: int, q: float, phi: float, K: Optional[int] = None) -> float:
    """``2 lam^(2/(2-q)) S^((q-2)/q + (1-2^-K) 4/(q(2-q))) / phi^(4/(2-q))``."""
    if not phi > 0:
        raise ValueError("phi must be positive")
    if not 0 < q <= 1:
        raise ValueError("q must lie in (0, 1]")
    K = smallest_k(q) if K is None else K
    expo = (q - 2) / q + (1 - 2.0**-K) * 4 / (q * (2 - q))
    return 2.0 * lam ** (2 / (2 - q)) * S**expo / phi ** (4 / (2 - q))


def local_recovery_bound(lam: float, q: float, p: float, B, xbar_groups: Sequence) -> float:
    """``lam^2 q^2 S ||(B^T B)^-1||^2 max_i ||g_i||_p^(2(q-p)) sum_j |g_ij|^(2p-2)``.

    ``B`` holds the columns of the active coordinates and ``xbar_groups``
    the nonzero groups of the true solution (all entries nonzero).
    """
    groups = [np.asarray(g, dtype=float) for g in xbar_groups]
    if not groups:
        raise ValueError("need at least one nonzero group")
    if any(np.any(g == 0) for g in groups):
        raise PreconditionError("every listed group must be fully active")
    gi = gram_inverse_norm(B)
    S = len(groups)
    factors = []
    for g in groups:
        a = np.abs(g)
        gp = float(np.sum(a**p)) ** (1.0 / p)
        factors.append(gp ** (2 * (q - p)) * float(np.sum(a ** (2 * p - 2))))
    return lam * lam * q * q * S * gi * gi * max(factors)


# ---------------------------------------------------------------- small brute force


def _grid_objective(prob: Problem, X: np.ndarray) -> np.ndarray:
    """Objective at every row of ``X``."""
    R = X @ prob.A.T - prob.b
    F = np.einsum("ij,ij->i", R, R)
    reg = prob.reg
    if reg.lam == 0:
        return F
    pen = np.zeros(X.shape[0])
    for a, b in prob.partition.bounds:
        blk = np.abs(X[:, a:b])
        if reg.q == 0:
            pen += np.max(blk, axis=1) > 1e-10
        else:
            if reg.p == 2.0:
                nrm = np.sqrt(np.sum(blk * blk, axis=1))
            else:
                nrm = np.sum(blk**reg.p, axis=1) ** (1.0 / reg.p)
            pen += nrm**reg.q
    return F + reg.lam * pen


def _axis(center: float, half: float, step: float) -> np.ndarray:
    k = int(round(half / step))
    return center + step * np.arange(-k, k + 1)


def global_min_small(
    prob: Problem,
    grid_step: float = 0.01,
    refine: int = 200,
    xbar=None,
    keep: int = 8,
) -> np.ndarray:
    """Brute-force global minimizer for ``n <= 4``.

    The box is ``[-R, R]^n`` with ``R = 2 (||xbar||_inf + ||b||_2)``
    (``xbar`` defaults to the least-norm solution of ``A x = b``). A coarse
    grid covers the box; the ``keep`` best nodes are re-gridded at one third
    of the spacing until the spacing reaches ``grid_step``. Every grid
    contains the coordinate zeros of its centre, so sparse minimizers are
    hit exactly. Each survivor is then polished by ``refine`` proximal
    gradient steps and the best point overall is returned.
    """
    n = prob.partition.n
    if n > 4:
        raise ConfigurationError(f"global_min_small supports n <= 4, got n={n}")
    if not grid_step > 0:
        raise ConfigurationError("grid_step must be positive")
    if xbar is None:
        xbar = np.linalg.lstsq(prob.A, prob.b, rcond=None)[0]
    R = 2.0 * (float(np.max(np.abs(xbar))) + float(np.linalg.norm(prob.b)))
    if R == 0.0:
        return np.zeros(n)

    # coarsest spacing: grid_step * 3^L, as fine as the node budget allows
    step = grid_step
    while (2 * int(round(R / step)) + 1) ** n > COARSE_BUDGET:
        step *= 3.0
    per_axis = 2 * int(round(R / step)) + 1
    window = 2 * 13**n if step > grid_step else 0
    levels = max(0, int(round(math.log(step / grid_step, 3))))
    if per_axis**n + levels * keep * window > MAX_GRID_NODES:
        raise ConfigurationError("grid would exceed 1e8 nodes")

    axis = _axis(0.0, R, step)
    X = np.array(list(itertools.product(axis, repeat=n)))
    F = _grid_objective(prob, X)
    cand = X[np.argsort(F, kind="stable")[:keep]]
    while step > grid_step * (1 + 1e-9):
        half, step = 2.0 * step, step / 3.0
        pts = []
        for c in cand:
            axes = [_axis(ci, half, step) for ci in c]
            pts.append(np.array(list(itertools.product(*axes))))
        X = np.unique(np.vstack(pts), axis=0)
        F = _grid_objective(prob, X)
        cand = X[np.argsort(F, kind="stable")[:keep]]

    best_x, best_f = cand[0], float(_grid_objective(prob, cand[:1])[0])
    if refine > 0 and np.any(prob.A):
        for c in cand:
            rep = pgm_solve(prob, SolverConfig(max_iter=refine, x0=c, record_history=False, x_tol=0.0, f_tol=0.0))
            f = objective(prob, rep.x)
            if f < best_f:
                best_x, best_f = rep.x, f
    return np.asarray(best_x, dtype=float)


__all__ = [
    "GrecEstimate",
    "cone_membership",
    "global_min_small",
    "global_recovery_bound",
    "grec_estimate",
    "grec_ratio",
    "local_recovery_bound",
    "oracle_inequality_gap",
]
