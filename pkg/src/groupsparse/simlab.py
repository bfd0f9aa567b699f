"""Simulated recovery experiments and path scoring.

Every random draw comes from its own counter-based stream keyed by
``(master_seed, trial, purpose)``, so a trial is a pure function of its
index and trials can run in any order or in parallel.
"""
from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.stats import rankdata

from .errors import GroupSparseError, NumericalError
from .linalg import orthonormalize_rows
from .model import GroupPartition, Problem, Regularizer, support
from .solver import SolverConfig, pgm_solve

SUCCESS_TOL = 0.005
ORTHO_RETRIES = 3
DESK = dict(n=256, m=64, r=32, noise_sigma=0.001, trials=50)
DEFAULT_KINDS = ((2.0, 1.0), (2.0, 0.0), (2.0, 0.5), (1.0, 0.5), (2.0, 2.0 / 3.0), (1.0, 2.0 / 3.0))

# stream purposes
_MATRIX, _SUPPORT, _VALUES, _NOISE = range(4)


@dataclass(frozen=True)
class SimSpec:
    n: int = DESK["n"]
    m: int = DESK["m"]
    r: int = DESK["r"]
    active_groups: int = 1
    noise_sigma: float = DESK["noise_sigma"]
    trials: int = DESK["trials"]
    master_seed: int = 0

    def __post_init__(self):
        if self.n < 1 or self.m < 1 or self.r < 1:
            raise ValueError("n, m and r must be positive")
        if self.n % self.r:
            raise ValueError(f"r={self.r} does not divide n={self.n}")
        if self.m > self.n:
            raise ValueError("need m <= n for orthonormal rows")
        if not 0 <= self.active_groups <= self.r:
            raise ValueError("active_groups must lie in [0, r]")
        if self.trials < 1:
            raise ValueError("trials must be positive")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be nonnegative")

    @property
    def group_size(self) -> int:
        return self.n // self.r

    def partition(self) -> GroupPartition:
        return GroupPartition.equal(self.n, self.r)


@dataclass(frozen=True)
class Instance:
    A: np.ndarray
    b: np.ndarray
    partition: GroupPartition
    xbar: np.ndarray

    def problem(self, reg: Regularizer) -> Problem:
        return Problem(self.A, self.b, self.partition, reg)


@dataclass(frozen=True)
class TrialResult:
    relative_error: float
    success: bool
    iterations: int
    runtime: float
    error: Optional[str] = None


def stream(master_seed: int, trial: int, purpose: int, attempt: int = 0) -> np.random.Generator:
    key = (trial, purpose) if attempt == 0 else (trial, purpose, attempt)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(master_seed, spawn_key=key)))


def generate_instance(spec: SimSpec, trial: int) -> Instance:
    """Row-orthonormal Gaussian ``A``, group-sparse Gaussian ``xbar``, ``b = A xbar + sigma * noise``."""
    A = None
    for attempt in range(ORTHO_RETRIES + 1):
        G = stream(spec.master_seed, trial, _MATRIX, attempt).standard_normal((spec.m, spec.n))
        try:
            A = orthonormalize_rows(G)
            break
        except NumericalError:
            continue
    if A is None:
        raise NumericalError(f"could not draw a full-rank matrix for trial {trial}")
    part = spec.partition()
    xbar = np.zeros(spec.n)
    active = stream(spec.master_seed, trial, _SUPPORT).choice(spec.r, size=spec.active_groups, replace=False)
    vals = stream(spec.master_seed, trial, _VALUES).standard_normal(spec.active_groups * spec.group_size)
    gsz = spec.group_size
    for k, g in enumerate(np.sort(active)):
        xbar[g * gsz : (g + 1) * gsz] = vals[k * gsz : (k + 1) * gsz]
    noise = stream(spec.master_seed, trial, _NOISE).standard_normal(spec.m)
    b = A @ xbar + spec.noise_sigma * noise
    return Instance(A, b, part, xbar)


def relative_error(x, xbar) -> float:
    nb = float(np.linalg.norm(xbar))
    d = float(np.linalg.norm(np.asarray(x) - xbar))
    if nb == 0.0:
        return 0.0 if d == 0.0 else math.inf
    return d / nb


def run_trial(
    spec: SimSpec,
    trial: int,
    p: float,
    q: float,
    S_target: Optional[int] = None,
    max_iter: int = 1000,
    lambda_rule: str = "next",
) -> TrialResult:
    """Solve one simulated instance in target-sparsity mode and score it."""
    t0 = time.perf_counter()
    S = spec.active_groups if S_target is None else S_target
    try:
        inst = generate_instance(spec, trial)
        reg = Regularizer(p, q, 0.0)
        if S < 1:
            x, iters = np.zeros(spec.n), 0
        else:
            cfg = SolverConfig(max_iter=max_iter, target_sparsity=S, lambda_rule=lambda_rule, record_history=False)
            rep = pgm_solve(inst.problem(reg), cfg)
            x, iters = rep.x, rep.iterations
        err = relative_error(x, inst.xbar)
        return TrialResult(err, err < SUCCESS_TOL, iters, time.perf_counter() - t0)
    except (GroupSparseError, ValueError, ArithmeticError) as exc:
        return TrialResult(math.inf, False, 0, time.perf_counter() - t0, f"{type(exc).__name__}: {exc}")


def _run_trial_args(args):
    return run_trial(*args)


def _map(fn, jobs: list, threads: int):
    if threads <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, jobs, chunksize=max(1, len(jobs) // (4 * threads))))


def _summarize(spec: SimSpec, p: float, q: float, results: Sequence[TrialResult]) -> dict:
    errs = np.array([t.relative_error for t in results])
    finite = errs[np.isfinite(errs)]
    succ = sum(t.success for t in results)
    return {
        "p": p,
        "q": q,
        "n": spec.n,
        "m": spec.m,
        "r": spec.r,
        "group_size": spec.group_size,
        "active_groups": spec.active_groups,
        "trials": len(results),
        "successes": succ,
        "success_rate": succ / len(results),
        "mean_relative_error": float(finite.mean()) if finite.size else math.inf,
        "failed_trials": sum(t.error is not None for t in results),
        "mean_iterations": float(np.mean([t.iterations for t in results])),
    }


def recovery_rate_experiment(
    spec: SimSpec,
    kinds: Iterable = DEFAULT_KINDS,
    S_target: Optional[int] = None,
    max_iter: int = 1000,
    lambda_rule: str = "next",
    threads: int = 1,
) -> list:
    """Success rate and mean relative error per ``(p, q)`` kind.

    ``S_target`` defaults to the true number of active groups. Solver
    failures count as unsuccessful trials and are tallied in
    ``failed_trials``.
    """
    rows = []
    for p, q in kinds:
        jobs = [(spec, t, float(p), float(q), S_target, max_iter, lambda_rule) for t in range(spec.trials)]
        rows.append(_summarize(spec, float(p), float(q), _map(_run_trial_args, jobs, threads)))
    return rows


def sparsity_sweep(spec: SimSpec, levels: Sequence[int], kinds: Iterable = DEFAULT_KINDS, **kw) -> list:
    """Recovery rates across numbers of active groups."""
    rows = []
    for s in levels:
        rows.extend(recovery_rate_experiment(_replace(spec, active_groups=int(s)), kinds, **kw))
    return rows


def group_size_sweep(
    spec: SimSpec,
    sizes: Sequence[int],
    kinds: Iterable = DEFAULT_KINDS,
    active_entries: Optional[int] = None,
    **kw,
) -> list:
    """Recovery rates for several group sizes.

    With ``active_entries`` the number of nonzero entries is held fixed, so
    the number of active groups is ``active_entries / size``; otherwise the
    ``spec.active_groups`` is used for every size.
    """
    rows = []
    for size in sizes:
        if spec.n % size:
            raise ValueError(f"group size {size} does not divide n={spec.n}")
        active = spec.active_groups
        if active_entries is not None:
            if active_entries % size:
                raise ValueError(f"{active_entries} active entries do not split into groups of {size}")
            active = active_entries // size
        sub = _replace(spec, r=spec.n // size, active_groups=active)
        rows.extend(recovery_rate_experiment(sub, kinds, **kw))
    return rows


def q_sweep(spec: SimSpec, p: float, q_grid: Sequence[float], S_target: Optional[int] = None, **kw) -> list:
    """Recovery rates over a grid of ``q``; non-closed-form ``q`` use the Newton prox."""
    for q in q_grid:
        if not 0 <= q <= 1:
            raise ValueError(f"q={q} outside [0, 1]")
    return recovery_rate_experiment(spec, [(p, q) for q in q_grid], S_target=S_target, **kw)


def _replace(spec: SimSpec, **changes) -> SimSpec:
    d = asdict(spec)
    d.update(changes)
    return SimSpec(**d)


# ---------------------------------------------------------------- path scores and AUC


def solution_path_scores(
    A,
    B,
    partition: GroupPartition,
    p: float,
    q: float,
    k_max: int,
    max_iter: int = 1000,
    lambda_rule: str = "next",
) -> np.ndarray:
    """Score each group by how early it enters the sparsity path.

    For ``k = 1..k_max`` the problem is solved keeping ``k`` groups. A group
    scores ``1/k`` for the smallest ``k`` at which it is nonzero, and 0 if it
    never is. ``B`` may be one right-hand side or a matrix of them (one per
    column); the result has shape ``(r,)`` or ``(r, columns)``. A failed
    solve contributes nothing for that ``k``.
    """
    B = np.asarray(B, dtype=float)
    single = B.ndim == 1
    cols = B[:, None] if single else B
    if k_max < 1:
        raise ValueError("k_max must be at least 1")
    k_max = min(k_max, partition.r - 1)
    reg = Regularizer(p, q, 0.0)
    scores = np.zeros((partition.r, cols.shape[1]))
    for j in range(cols.shape[1]):
        prob = Problem(A, cols[:, j], partition, reg)
        for k in range(1, k_max + 1):
            try:
                rep = pgm_solve(prob, SolverConfig(max_iter=max_iter, target_sparsity=k, lambda_rule=lambda_rule, record_history=False))
            except (GroupSparseError, ValueError, ArithmeticError):
                continue
            for g in support(rep.x, partition):
                scores[g, j] = max(scores[g, j], 1.0 / k)
    return scores[:, 0] if single else scores


def roc_auc(scores, labels) -> float:
    """Area under the ROC curve via the rank-sum statistic (ties count one half)."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels).astype(bool)
    if s.shape != y.shape or s.ndim != 1:
        raise ValueError("scores and labels must be 1-D of equal length")
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("roc_auc needs both classes")
    ranks = rankdata(s)
    # ranks are multiples of 1/2, so this is exact in floating point for any realistic size
    u = float(ranks[y].sum()) - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)
