"""Proximal gradient iteration for group-sparse least squares.

Each step takes a gradient step on ``||Ax - b||^2`` and then applies the
group proximal operator:

    z = x - 2 v A^T (A x - b)
    x <- prox_{v lam ||.||_{p,q}^q}(z)

``lam`` is either fixed or re-chosen at every step so that exactly ``S``
groups survive the prox (target-sparsity mode).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigurationError, NumericalError, PreconditionError
from .linalg import spectral_norm
from .model import (
    ZERO_TOL,
    GroupPartition,
    Problem,
    Regularizer,
    group_norms,
    is_q,
    HALF,
    TWO_THIRDS,
)
from .prox import prox_group_apply

STEP_FACTOR = 0.99
ROUNDOFF = 1e-13
RATE_FLOOR = 1e-15
TIE_REL = 1e-14
NEXT_MARGIN = 1e-9


@dataclass(frozen=True)
class SolverConfig:
    """Iteration controls.

    ``stepsize=None`` picks ``0.99 / (2 ||A||_2^2)``. ``target_sparsity=None``
    keeps ``lam`` fixed at the problem's value; an integer ``S`` re-solves
    ``lam`` every iteration so the prox keeps ``S`` groups.

    ``lambda_rule`` places ``lam`` between the kill thresholds of the S-th and
    (S+1)-th strongest groups: ``"midpoint"`` halfway (in group-norm units
    for ``p = 2``), ``"next"`` just above the (S+1)-th threshold, which gives
    the smallest ``lam`` that still removes every other group.
    """

    stepsize: Optional[float] = None
    max_iter: int = 10_000
    x_tol: float = 1e-8
    f_tol: float = 1e-12
    target_sparsity: Optional[int] = None
    lambda_rule: str = "next"
    record_history: bool = True
    x0: Optional[np.ndarray] = field(default=None, compare=False)

    def __post_init__(self):
        if self.max_iter < 1:
            raise ConfigurationError("max_iter must be at least 1")
        if self.x_tol < 0 or self.f_tol < 0:
            raise ConfigurationError("tolerances must be nonnegative")
        if self.stepsize is not None and not self.stepsize > 0:
            raise ConfigurationError("stepsize must be positive")
        if self.target_sparsity is not None and self.target_sparsity < 1:
            raise ConfigurationError("target sparsity must be at least 1")
        if self.lambda_rule not in ("midpoint", "next"):
            raise ConfigurationError(f"unknown lambda rule {self.lambda_rule!r}")


@dataclass
class SolveReport:
    x: np.ndarray
    objective_trace: list
    support_trace: list
    norm_trace: Optional[np.ndarray]
    iterations: int
    status: str
    lambda_used: float
    stepsize: float

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    @property
    def final_objective(self) -> float:
        return self.objective_trace[-1]


# ---------------------------------------------------------------- lambda rule


def _mu_from_threshold(tau: float, q: float) -> float:
    """``v * lam`` at which the ``p = 2`` prox zero threshold equals ``tau``."""
    if q == 1.0:
        return tau
    if q == 0.0:
        return tau * tau / 2.0
    if is_q(q, HALF):
        return (2.0 * tau / 3.0) ** 1.5
    if is_q(q, TWO_THIRDS):
        return 1.5 * (tau / 2.0) ** (4.0 / 3.0)
    return (tau * 2.0 * (1.0 - q) / (2.0 - q)) ** (2.0 - q) / (2.0 * (1.0 - q))


def _l1_kill_mu(Z: np.ndarray, q: float) -> np.ndarray:
    """Largest ``v * lam`` for which the ``p = 1`` prox keeps each row of ``Z``.

    A row (one group, zero-padded) survives iff ``mu < max_{s>0} G(s) / s^q``
    where ``G(s) = max {a.y - |y|^2/2 : y >= 0, sum(y) = s}`` and ``a = |z|``.
    On the piece where the top ``k`` entries are active, with shrinkage
    ``c = (P_k - s)/k``, ``G = (Q_k - k c^2)/2`` (``P_k``, ``Q_k`` partial sums
    of ``a`` and ``a^2``). The ratio is stationary where
    ``k (2-q) c^2 - 2 P_k c + q Q_k = 0``, so the maximum sits at one of those
    roots or at a piece boundary. Zero padding only repeats a boundary point.
    """
    a = -np.sort(-np.abs(Z), axis=1)
    if q == 0.0:
        return 0.5 * np.sum(a * a, axis=1)
    if q == 1.0:
        return a[:, 0].copy()
    k = np.arange(1, a.shape[1] + 1, dtype=float)
    P = np.cumsum(a, axis=1)
    Qs = np.cumsum(a * a, axis=1)
    nxt = np.concatenate([a[:, 1:], np.zeros((a.shape[0], 1))], axis=1)
    disc = P * P - k * (2.0 - q) * q * Qs
    root = np.sqrt(np.maximum(disc, 0.0))
    best = np.zeros(a.shape[0])
    for c in (nxt, (P + root) / (k * (2.0 - q)), (P - root) / (k * (2.0 - q))):
        c = np.where((disc >= 0) & (c >= nxt) & (c <= a), c, nxt)
        s = P - k * c
        G = 0.5 * (Qs - k * c * c)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(s > 0, G / np.where(s > 0, s, 1.0) ** q, 0.0)
        best = np.maximum(best, ratio.max(axis=1))
    return best


def kill_lambdas(z, partition: GroupPartition, v: float, p: float, q: float) -> np.ndarray:
    """Per-group ``lam`` at and above which the prox zeroes that group."""
    z = partition.check(z)
    if p == 2.0 or q == 0.0:
        return np.array([_mu_from_threshold(nz, q) / v for nz in group_norms(z, partition, 2.0)])
    if p != 1.0:
        raise ConfigurationError(f"target-sparsity rule needs p in {{1, 2}}, got p={p}")
    Z = np.zeros((partition.r, partition.n_max))
    for i, (a, b) in enumerate(partition.bounds):
        Z[i, : b - a] = z[a:b]
    return _l1_kill_mu(Z, q) / v


def lambda_from_target_sparsity(
    z, partition: GroupPartition, v: float, reg: Regularizer, S: int, rule: str = "next"
) -> float:
    """Choose ``lam`` so that the prox at ``z`` keeps exactly ``S`` groups.

    Groups tied with the S-th at the boundary are all kept.

    Groups are ranked by the ``lam`` that would zero them. For ``p = 2`` this
    ranking is the ranking by group l2 norm and ``"midpoint"`` takes the
    threshold halfway between the S-th and (S+1)-th norms; for ``p = 1`` it
    takes the midpoint of the two kill values of ``lam``. ``"next"`` takes a
    value just above the (S+1)-th kill value instead.
    """
    if not 1 <= S < partition.r:
        raise ValueError(f"need 1 <= S < r={partition.r}, got S={S}")
    p, q = reg.p, reg.q
    z = partition.check(z)
    if p == 2.0 or q == 0.0:
        tau = _pick_between(np.sort(group_norms(z, partition, 2.0))[::-1], S, rule)
        return _mu_from_threshold(tau, q) / v
    return _pick_between(np.sort(kill_lambdas(z, partition, v, p, q))[::-1], S, rule)


def _pick_between(desc: np.ndarray, S: int, rule: str) -> float:
    """Value between the S-th entry of ``desc`` and the next strictly smaller one.

    Entries tied with the S-th are kept, so an exact tie at the boundary
    selects more than ``S`` groups for one step instead of none.
    """
    hi = float(desc[S - 1])
    below = desc[S:][desc[S:] < hi - TIE_REL * hi]
    lo = float(below[0]) if below.size else 0.0
    if rule == "next":
        return min(lo * (1.0 + NEXT_MARGIN), 0.5 * (hi + lo)) if lo > 0 else 0.0
    return 0.5 * (hi + lo)


# ---------------------------------------------------------------- iteration


def default_stepsize(A) -> float:
    sigma = spectral_norm(A)
    return STEP_FACTOR / (2.0 * sigma * sigma)


def _penalty_from_norms(norms: np.ndarray, x: np.ndarray, partition: GroupPartition, q: float) -> float:
    if q == 0.0:
        inf_norms = np.array([np.max(np.abs(x[a:b])) for a, b in partition.bounds])
        return float(np.count_nonzero(inf_norms > ZERO_TOL))
    return float(np.sum(norms**q))


def pgm_solve(prob: Problem, cfg: SolverConfig = SolverConfig()) -> SolveReport:
    """Run the proximal gradient iteration from ``cfg.x0`` (default 0).

    Stops when both ``||x_{k+1} - x_k|| <= x_tol * max(1, ||x_k||)`` and
    ``|F_{k+1} - F_k| <= f_tol * max(1, |F_k|)``, or after ``max_iter`` steps.
    In target-sparsity mode the recorded objective uses the ``lam`` chosen at
    that step, so it need not decrease monotonically.

    Raises
    ------
    ConfigurationError
        If a supplied stepsize is not below ``1 / (2 ||A||_2^2)``.
    NumericalError
        If an iterate becomes non-finite.
    """
    A, b, part, reg = prob.A, prob.b, prob.partition, prob.reg
    S = cfg.target_sparsity
    if S is not None and S >= part.r:
        raise ConfigurationError(f"target sparsity {S} must be below the group count {part.r}")
    if cfg.stepsize is None:
        v = default_stepsize(A) if np.any(A) else 1.0
    else:
        v = float(cfg.stepsize)
        if np.any(A):
            sigma = spectral_norm(A)
            if v >= 1.0 / (2.0 * sigma * sigma):
                raise ConfigurationError(
                    f"stepsize {v} violates v < 1/(2||A||^2) = {1.0 / (2.0 * sigma * sigma)}"
                )

    x = np.zeros(part.n) if cfg.x0 is None else part.check(cfg.x0).copy()
    Ax = A @ x
    res = Ax - b
    lam = reg.lam
    cur = reg

    def measure(x, res, lam):
        norms = group_norms(x, part, reg.p)
        F = float(res @ res) + lam * _penalty_from_norms(norms, x, part, reg.q)
        return F, norms

    z = x - 2.0 * v * (A.T @ res)
    if S is not None:
        lam = lambda_from_target_sparsity(z, part, v, reg, S, cfg.lambda_rule)
        cur = reg.with_lambda(lam)
    F, norms = measure(x, res, lam)

    obj_trace = [F]
    supp_trace = [_support_from(x, part)]
    norm_rows = [norms] if cfg.record_history else None

    status = "max_iter"
    it = 0
    for it in range(1, cfg.max_iter + 1):
        x_new = prox_group_apply(z, part, v, cur)
        if not np.all(np.isfinite(x_new)):
            raise NumericalError(f"non-finite iterate at iteration {it}")
        Ax = A @ x_new
        res = Ax - b
        F_new, norms = measure(x_new, res, lam)
        if cfg.record_history:
            obj_trace.append(F_new)
            supp_trace.append(_support_from(x_new, part))
            norm_rows.append(norms)
        else:
            obj_trace = [F_new]
            supp_trace = [_support_from(x_new, part)]
        dx = float(np.linalg.norm(x_new - x))
        done = dx <= cfg.x_tol * max(1.0, float(np.linalg.norm(x))) and abs(F_new - F) <= cfg.f_tol * max(
            1.0, abs(F)
        )
        x, F = x_new, F_new
        if done:
            status = "converged"
            break
        z = x - 2.0 * v * (A.T @ res)
        if S is not None:
            lam = lambda_from_target_sparsity(z, part, v, reg, S, cfg.lambda_rule)
            cur = reg.with_lambda(lam)

    return SolveReport(
        x=x,
        objective_trace=obj_trace,
        support_trace=supp_trace,
        norm_trace=np.array(norm_rows) if norm_rows is not None else None,
        iterations=it,
        status=status,
        lambda_used=lam,
        stepsize=v,
    )


def _support_from(x, part: GroupPartition) -> frozenset:
    return frozenset(
        i for i, (a, b) in enumerate(part.bounds) if np.max(np.abs(x[a:b])) > ZERO_TOL
    )


# ---------------------------------------------------------------- diagnostics


def support_stabilization_iter(report_or_trace) -> int:
    """First index after which the recorded group support never changes."""
    trace = getattr(report_or_trace, "support_trace", report_or_trace)
    last = 0
    for i in range(1, len(trace)):
        if trace[i] != trace[i - 1]:
            last = i
    return last


def linear_rate_fit(objective_trace, tail_fraction: float = 0.5, f_min: Optional[float] = None):
    """Fit ``F_k - F_min ~ C eta^k`` on the tail of a trace.

    Returns ``(eta, r_squared)``. ``F_min`` defaults to the last entry, which
    is then left out of the fit (its gap is zero by construction). The fit
    stops at the first gap below the rounding floor ``ROUNDOFF * max(1, |F_min|)``,
    since later gaps are noise. A constant trace gives ``eta = 1`` and
    ``r_squared = 0``.
    """
    F = np.asarray(objective_trace, dtype=float)
    if F.ndim != 1 or F.size < 20:
        raise ValueError("linear_rate_fit needs a trace of length >= 20")
    if not np.all(np.isfinite(F)):
        raise ValueError("objective trace contains non-finite values")
    if not 0 < tail_fraction <= 1:
        raise ValueError("tail_fraction must lie in (0, 1]")
    if f_min is None:
        f_min = float(F[-1])
        F = F[:-1]
    floor = np.flatnonzero(F - f_min <= ROUNDOFF * max(1.0, abs(f_min)))
    if floor.size and floor[0] >= 3:
        F = F[: floor[0]]
    start = F.size - max(3, int(math.ceil(tail_fraction * F.size)))
    k = np.arange(F.size, dtype=float)[start:]
    y = np.log(np.maximum(F[start:] - f_min, 0.0) + RATE_FLOOR)
    if np.ptp(y) == 0.0:
        return 1.0, 0.0
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    slope, icpt = np.polyfit(k, y, 1)
    ss_res = float(np.sum((y - (slope * k + icpt)) ** 2))
    return float(math.exp(slope)), 1.0 - ss_res / ss_tot


def nonzero_lower_bound(v: float, lam: float, q: float) -> float:
    """``(v lam q (1-q))^(1/(2-q))``: floor on the l1 norm of any nonzero group of a p = 1 iterate."""
    return (v * lam * q * (1.0 - q)) ** (1.0 / (2.0 - q))


def nonzero_group_lower_bound_check(report: SolveReport, prob: Problem, v: Optional[float] = None) -> bool:
    """True iff every nonzero group in every recorded iterate clears :func:`nonzero_lower_bound`."""
    reg = prob.reg
    if reg.p != 1.0 or not 0.0 < reg.q < 1.0:
        raise PreconditionError(f"lower-bound check needs p = 1 and 0 < q < 1, got p={reg.p}, q={reg.q}")
    if report.norm_trace is None:
        raise PreconditionError("report has no recorded history")
    v = report.stepsize if v is None else v
    floor = nonzero_lower_bound(v, reg.lam, reg.q) - 1e-10
    for supp, norms in zip(report.support_trace, report.norm_trace):
        for g in supp:
            if norms[g] < floor:
                return False
    return True
