"""Proximal operators of ``x -> lam * ||x||_p^q`` on a single group.

Every operator returns the minimizer of

    Q(x) = lam * ||x||_p^q + ||x - z||_2^2 / (2 v)

over ``x`` of the same length as ``z``. When the best nonzero stationary
point ties with ``x = 0`` the operator returns 0 (the sparser choice), which
makes every operator single-valued.

Closed forms exist for ``(p, q)`` in {(2,1), (2,0), (2,1/2), (1,1/2),
(2,2/3), (1,2/3)}. Any other ``0 < q < 1`` with ``p`` in {1, 2} goes through
:func:`prox_generic`, which solves the first-order condition with a
safeguarded Newton iteration.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ConfigurationError, NumericalError
from .model import GroupPartition, Regularizer, is_q, HALF, TWO_THIRDS

TIE_TOL = 1e-12
DOMAIN_CLAMP = 1e-15
NEWTON_MAX_ITER = 200
NEWTON_TOL = 1e-12

_SQRT3 = math.sqrt(3.0)


@dataclass(frozen=True)
class ProxResult:
    x: np.ndarray
    value: float
    zeroed: bool


def prox_value(x, z, v: float, lam: float, p: float, q: float) -> float:
    """Evaluate ``Q(x)`` for one group."""
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    d = x - z
    fit = float(d @ d) / (2.0 * v)
    if not np.any(x):
        return fit
    if q == 0:
        return lam + fit
    ax = np.abs(x)
    if p == 2.0:
        nrm = math.sqrt(float(ax @ ax))
    elif p == 1.0:
        nrm = float(ax.sum())
    else:
        nrm = float(np.sum(ax**p)) ** (1.0 / p)
    return lam * nrm**q + fit


def _check(z, v, lam):
    z = np.asarray(z, dtype=float)
    if z.ndim == 0:
        z = z.reshape(1)
    if z.ndim != 1 or z.size == 0:
        raise ValueError("z must be a nonempty 1-D vector")
    if not v > 0:
        raise ValueError("stepsize v must be positive")
    if not lam >= 0:
        raise ValueError("lambda must be nonnegative")
    return z


def _zero(z, v) -> ProxResult:
    return ProxResult(np.zeros_like(z), float(z @ z) / (2.0 * v), True)


def _result(x, z, v, lam, p, q) -> ProxResult:
    return ProxResult(x, prox_value(x, z, v, lam, p, q), not np.any(x))


def _select(candidate, z, v, lam, p, q) -> ProxResult:
    """Keep ``candidate`` only if it beats ``x = 0`` by more than the tie tolerance."""
    if candidate is None:
        return _zero(z, v)
    q_cand = prox_value(candidate, z, v, lam, p, q)
    q_zero = float(z @ z) / (2.0 * v)
    if q_cand < q_zero - TIE_TOL * max(1.0, abs(q_zero)):
        return ProxResult(candidate, q_cand, False)
    return _zero(z, v)


def _norm2(z: np.ndarray) -> float:
    return math.sqrt(float(z @ z))


def _clamped(arg: float, lo: float, hi: float) -> Optional[float]:
    """Clamp a value that may have drifted just past a domain edge; None if well outside."""
    if arg < lo - DOMAIN_CLAMP or arg > hi + DOMAIN_CLAMP:
        return None
    return min(max(arg, lo), hi)


# ---------------------------------------------------------------- p = 2 closed forms


def zero_threshold(v: float, lam: float, q: float) -> float:
    """Group norm at or below which the ``p = 2`` operator returns 0."""
    mu = v * lam
    if q == 1.0:
        return mu
    if q == 0.0:
        return math.sqrt(2.0 * mu)
    if is_q(q, HALF):
        return 1.5 * mu ** (2.0 / 3.0)
    if is_q(q, TWO_THIRDS):
        return 2.0 * (2.0 * mu / 3.0) ** 0.75
    t_star = (2.0 * mu * (1.0 - q)) ** (1.0 / (2.0 - q))
    return t_star + mu * q * t_star ** (q - 1.0)


def _scale_2_half(nz: float, mu: float) -> float:
    arg = _clamped(mu / 4.0 * (3.0 / nz) ** 1.5, -1.0, 1.0)
    if arg is None:
        return 0.0
    psi = math.acos(arg)
    w = 16.0 * nz**1.5 * math.cos(math.pi / 3.0 - psi / 3.0) ** 3
    return w / (3.0 * _SQRT3 * mu + w)


def _scale_2_twothirds(nz: float, mu: float) -> float:
    arg = 27.0 * nz * nz / (16.0 * (2.0 * mu) ** 1.5)
    if arg < 1.0 - DOMAIN_CLAMP:
        return 0.0
    phi = math.acosh(max(arg, 1.0))
    a = 2.0 / _SQRT3 * (2.0 * mu) ** 0.25 * math.sqrt(math.cosh(phi / 3.0))
    w = a**1.5 + math.sqrt(max(2.0 * nz - a**3, 0.0))
    w4 = w**4
    return 3.0 * w4 / (32.0 * mu * a * a + 3.0 * w4)


def prox_2_1(z, v: float, lam: float) -> ProxResult:
    """Group soft thresholding."""
    z = _check(z, v, lam)
    nz = _norm2(z)
    mu = v * lam
    if nz <= mu:
        return _zero(z, v)
    return _result((1.0 - mu / nz) * z, z, v, lam, 2.0, 1.0)


def prox_2_0(z, v: float, lam: float) -> ProxResult:
    """Group hard thresholding; the boundary ``||z|| = sqrt(2 v lam)`` maps to 0."""
    z = _check(z, v, lam)
    if _norm2(z) <= math.sqrt(2.0 * v * lam):
        return _zero(z, v)
    return _result(z.copy(), z, v, lam, 2.0, 0.0)


def prox_2_half(z, v: float, lam: float) -> ProxResult:
    """Group half thresholding (trigonometric root of the cubic in ``||x||^{1/2}``)."""
    z = _check(z, v, lam)
    if lam == 0:
        return _result(z.copy(), z, v, lam, 2.0, HALF)
    nz = _norm2(z)
    mu = v * lam
    if nz <= 1.5 * mu ** (2.0 / 3.0):
        return _zero(z, v)
    s = _scale_2_half(nz, mu)
    if s == 0.0:
        return _zero(z, v)
    return _result(s * z, z, v, lam, 2.0, HALF)


def prox_2_twothirds(z, v: float, lam: float) -> ProxResult:
    """Group 2/3 thresholding (hyperbolic root of the resolvent cubic)."""
    z = _check(z, v, lam)
    if lam == 0:
        return _result(z.copy(), z, v, lam, 2.0, TWO_THIRDS)
    nz = _norm2(z)
    mu = v * lam
    if nz <= 2.0 * (2.0 * mu / 3.0) ** 0.75:
        return _zero(z, v)
    s = _scale_2_twothirds(nz, mu)
    if s == 0.0:
        return _zero(z, v)
    return _result(s * z, z, v, lam, 2.0, TWO_THIRDS)


# ---------------------------------------------------------------- p = 1 family


ShrinkFn = Callable[[float, int, float], Optional[float]]


def _l1_prox(z, v, lam, q, shrink: ShrinkFn) -> ProxResult:
    """Shared support search for ``p = 1``.

    On a support ``T`` with signs of ``z`` the stationary point is
    ``x_T = z_T - c * sign(z_T)`` where ``c = v lam q ||x||_1^{q-1}``. The
    global minimizer zeroes exactly the entries with ``|z_j| <= c``, so its
    support is a prefix of ``|z|`` sorted in decreasing order. Each prefix
    gives at most one local-minimum candidate; the best one is compared
    against 0.

    ``shrink(P, k, mu)`` returns the per-coordinate shrinkage ``c`` for a
    prefix of size ``k`` with l1 mass ``P``, or None if no nonzero
    stationary point exists.
    """
    if lam == 0:
        return _result(z.copy(), z, v, lam, 1.0, q)
    mu = v * lam
    mags = np.abs(z)
    order = np.argsort(-mags, kind="stable")
    a = mags[order]
    partial = np.cumsum(a)
    sgn = np.sign(z)
    best = None
    best_val = math.inf
    for k in range(1, z.size + 1):
        if a[k - 1] == 0.0:
            break
        c = shrink(float(partial[k - 1]), k, mu)
        if c is None or c > a[k - 1]:
            continue
        idx = order[:k]
        x = np.zeros_like(z)
        x[idx] = sgn[idx] * (a[:k] - c)
        val = prox_value(x, z, v, lam, 1.0, q)
        if val < best_val:
            best, best_val = x, val
    return _select(best, z, v, lam, 1.0, q)


def _shrink_1_half(P: float, k: int, mu: float) -> Optional[float]:
    arg = _clamped(mu * k / 4.0 * (3.0 / P) ** 1.5, -1.0, 1.0)
    if arg is None:
        return None
    xi = math.acos(arg)
    return _SQRT3 * mu / (4.0 * math.sqrt(P) * math.cos(math.pi / 3.0 - xi / 3.0))


def _shrink_1_twothirds(P: float, k: int, mu: float) -> Optional[float]:
    arg = 27.0 * P * P / (16.0 * (2.0 * mu * k) ** 1.5)
    if arg < 1.0 - DOMAIN_CLAMP:
        return None
    zeta = math.acosh(max(arg, 1.0))
    a = 2.0 / _SQRT3 * (2.0 * mu * k) ** 0.25 * math.sqrt(math.cosh(zeta / 3.0))
    w = a**1.5 + math.sqrt(max(2.0 * P - a**3, 0.0))
    return 4.0 * mu * math.sqrt(a) / (3.0 * w)


def prox_1_half(z, v: float, lam: float) -> ProxResult:
    z = _check(z, v, lam)
    return _l1_prox(z, v, lam, HALF, _shrink_1_half)


def prox_1_twothirds(z, v: float, lam: float) -> ProxResult:
    z = _check(z, v, lam)
    return _l1_prox(z, v, lam, TWO_THIRDS, _shrink_1_twothirds)


def prox_1_1(z, v: float, lam: float) -> ProxResult:
    """Coordinatewise soft thresholding (the l1 norm inside a group)."""
    z = _check(z, v, lam)
    x = np.sign(z) * np.maximum(np.abs(z) - v * lam, 0.0)
    return _result(x, z, v, lam, 1.0, 1.0)


# ---------------------------------------------------------------- generic q


def largest_root(target: float, c: float, q: float) -> Optional[float]:
    """Largest positive root of ``t + c t^(q-1) = target`` for ``0 < q < 1``.

    ``g(t) = t + c t^(q-1) - target`` is convex on ``t > 0`` with its minimum
    at ``t* = (c (1-q))^(1/(2-q))``. The larger root (the one that is a local
    minimizer of the prox objective) lies in ``[t*, target]``. Newton steps
    start from ``target``; any step leaving the bracket is replaced by
    bisection.

    Returns None when ``g(t*) > 0`` (no positive root).
    """
    if target <= 0:
        return None
    if c == 0:
        return target

    def g(t):
        return t + c * t ** (q - 1.0) - target

    lo = (c * (1.0 - q)) ** (1.0 / (2.0 - q))
    g_lo = g(lo)
    if g_lo > 0:
        return None
    if g_lo == 0 or lo >= target:
        return lo
    hi = target
    t = hi
    for _ in range(NEWTON_MAX_ITER):
        gt = g(t)
        if abs(gt) <= NEWTON_TOL:
            return t
        if gt > 0:
            hi = t
        else:
            lo = t
        dg = 1.0 + c * (q - 1.0) * t ** (q - 2.0)
        step = t - gt / dg if dg > 0 else math.nan
        if not (lo < step < hi):
            step = 0.5 * (lo + hi)
        if step == t or hi - lo <= 4.0 * math.ulp(hi):
            return step
        t = step
    raise NumericalError(f"safeguarded Newton did not converge (target={target}, c={c}, q={q})")


def prox_generic(z, v: float, lam: float, p: float, q: float) -> ProxResult:
    """Prox for any ``0 < q < 1`` and ``p`` in {1, 2} via scalar root finding."""
    z = _check(z, v, lam)
    if not 0.0 < q < 1.0:
        raise ConfigurationError(f"prox_generic needs 0 < q < 1, got q={q}")
    if lam == 0:
        return _result(z.copy(), z, v, lam, p, q)
    mu = v * lam
    if p == 2.0:
        nz = _norm2(z)
        t = largest_root(nz, mu * q, q)
        if t is None:
            return _zero(z, v)
        return _select((t / nz) * z, z, v, lam, 2.0, q)
    if p == 1.0:
        def shrink(P, k, mu_):
            s = largest_root(P, k * mu_ * q, q)
            return None if s is None else mu_ * q * s ** (q - 1.0)

        return _l1_prox(z, v, lam, q, shrink)
    raise ConfigurationError(f"prox_generic supports p in {{1, 2}}, got p={p}")


# ---------------------------------------------------------------- dispatch


def prox_group(z, v: float, lam: float, p: float, q: float) -> ProxResult:
    """Apply the operator matching ``(p, q)`` to one group."""
    if q == 0.0:
        # the group l_{p,0} penalty does not depend on p
        return prox_2_0(z, v, lam)
    if q == 1.0:
        if p == 2.0:
            return prox_2_1(z, v, lam)
        if p == 1.0:
            return prox_1_1(z, v, lam)
    elif is_q(q, HALF):
        if p == 2.0:
            return prox_2_half(z, v, lam)
        if p == 1.0:
            return prox_1_half(z, v, lam)
    elif is_q(q, TWO_THIRDS):
        if p == 2.0:
            return prox_2_twothirds(z, v, lam)
        if p == 1.0:
            return prox_1_twothirds(z, v, lam)
    elif 0.0 < q < 1.0 and p in (1.0, 2.0):
        return prox_generic(z, v, lam, p, q)
    raise ConfigurationError(f"no proximal operator for p={p}, q={q}")


def prox_group_apply(z, partition: GroupPartition, v: float, reg: Regularizer) -> np.ndarray:
    """Apply the group operator independently to every group of ``z``."""
    z = partition.check(z)
    out = np.empty_like(z)
    for a, b in partition.bounds:
        out[a:b] = prox_group(z[a:b], v, reg.lam, reg.p, reg.q).x
    return out
