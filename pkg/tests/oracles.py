"""Brute-force reference computations that share no code with the package."""
import itertools

import numpy as np
from scipy.optimize import minimize, minimize_scalar


def q_value(x, z, v, lam, p, q):
    x = np.asarray(x, float)
    z = np.asarray(z, float)
    fit = np.sum((x - z) ** 2) / (2 * v)
    if not np.any(x):
        return fit
    if q == 0:
        return lam + fit
    return lam * np.sum(np.abs(x) ** p) ** (q / p) + fit


def prox_oracle_p2(z, v, lam, q, grid=4001):
    """Search along the ray ``t z / ||z||``, ``t in [0, ||z||]``, then polish."""
    z = np.asarray(z, float)
    nz = np.linalg.norm(z)
    if nz == 0:
        return np.zeros_like(z)
    u = z / nz
    t = np.linspace(0.0, nz, grid)
    pen = lam * t**q if q > 0 else lam * (t > 0)
    vals = pen + (t - nz) ** 2 / (2 * v)
    vals[0] = nz**2 / (2 * v)
    best_t, best_v = 0.0, vals[0]
    h = t[1] - t[0]
    for i in np.argsort(vals)[:3]:
        lo, hi = max(t[i] - h, 1e-300), min(t[i] + h, nz)
        res = minimize_scalar(lambda s: lam * s**q + (s - nz) ** 2 / (2 * v) if q > 0 else lam + (s - nz) ** 2 / (2 * v),
                              bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
        for cand in (res.x, t[i]):
            val = q_value(cand * u, z, v, lam, 2, q) if cand > 0 else nz**2 / (2 * v)
            if val < best_v:
                best_t, best_v = cand, val
    return best_t * u


def prox_oracle_p1(z, v, lam, q, grid=31, starts=3):
    """Grid over the box between 0 and z on every coordinate, then Nelder-Mead on each sign face."""
    z = np.asarray(z, float)
    axes = [np.linspace(0.0, zi, grid) for zi in z]
    X = np.array(list(itertools.product(*axes)))
    l1 = np.sum(np.abs(X), axis=1)
    vals = lam * l1**q + np.sum((X - z) ** 2, axis=1) / (2 * v)
    vals[l1 == 0] = np.sum(z**2) / (2 * v)
    best = np.zeros_like(z)
    best_v = np.sum(z**2) / (2 * v)
    for i in np.argsort(vals)[:starts]:
        x0 = X[i]
        mask = x0 != 0
        if not mask.any():
            continue

        def f(y, mask=mask):
            x = np.zeros_like(z)
            x[mask] = y
            return q_value(x, z, v, lam, 1, q)

        res = minimize(f, x0[mask], method="Nelder-Mead", options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 4000})
        x = np.zeros_like(z)
        x[mask] = res.x
        for cand in (x, x0):
            val = q_value(cand, z, v, lam, 1, q)
            if val < best_v:
                best, best_v = cand.copy(), val
    return best


def auc_pairs(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y]
    neg = [s for s, y in zip(scores, labels) if not y]
    wins = 0.0
    for a in pos:
        for b in neg:
            wins += 1.0 if a > b else 0.5 if a == b else 0.0
    return wins / (len(pos) * len(neg))
