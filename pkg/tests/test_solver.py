import numpy as np
import pytest
from hypothesis import given, strategies as st

import groupsparse.solver as solver_mod
from groupsparse.errors import ConfigurationError, NumericalError, PreconditionError
from groupsparse.model import GroupPartition, Problem, Regularizer, objective, support
from groupsparse.prox import prox_group, prox_group_apply
from groupsparse.simlab import SimSpec, generate_instance, relative_error
from groupsparse.solver import (
    SolveReport,
    SolverConfig,
    kill_lambdas,
    lambda_from_target_sparsity,
    linear_rate_fit,
    nonzero_group_lower_bound_check,
    pgm_solve,
    support_stabilization_iter,
)

T23 = 2 / 3
PAIRS = [(2, 1), (2, 0), (2, 0.5), (1, 0.5), (2, T23), (1, T23)]
A22 = np.array([[2.0, 3, 1], [2, 1, 3]])
B22 = np.array([2.0, 2.0])


def _random_problem(seed, p, q, lam=None, m=12, n=24, r=6):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((m, n)) / np.sqrt(m)
    b = rng.standard_normal(m) * 2
    lam = rng.uniform(0.05, 2.0) if lam is None else lam
    return Problem(A, b, GroupPartition.equal(n, r), Regularizer(p, q, lam))


def test_worked_example_l1_optimum():
    lam = 0.5
    prob = Problem(A22, B22, GroupPartition.singletons(3), Regularizer(2, 1, lam))
    rep = pgm_solve(prob, SolverConfig(stepsize=0.01))
    assert rep.converged
    assert rep.final_objective == pytest.approx(lam - lam**2 / 32, abs=1e-6)
    assert objective(prob, rep.x) == pytest.approx(0.4921875, abs=1e-6)
    assert support_stabilization_iter(rep) < rep.iterations


def test_zero_rhs_stops_after_one_step():
    prob = Problem(A22, np.zeros(2), GroupPartition.singletons(3), Regularizer(2, 0.5, 0.3))
    rep = pgm_solve(prob)
    assert rep.iterations == 1 and rep.converged
    assert not np.any(rep.x)


def test_default_stepsize_below_limit():
    prob = Problem(A22, B22, GroupPartition.singletons(3), Regularizer(2, 1, 0.5))
    rep = pgm_solve(prob, SolverConfig(max_iter=1))
    assert rep.stepsize == pytest.approx(0.99 / 48)


def test_stepsize_too_large():
    prob = Problem(A22, B22, GroupPartition.singletons(3), Regularizer(2, 1, 0.5))
    with pytest.raises(ConfigurationError):
        pgm_solve(prob, SolverConfig(stepsize=1 / 48))


@pytest.mark.parametrize("kw", [dict(max_iter=0), dict(x_tol=-1), dict(stepsize=-0.1), dict(lambda_rule="x"), dict(target_sparsity=0)])
def test_config_validation(kw):
    with pytest.raises(ConfigurationError):
        SolverConfig(**kw)


def test_nan_iterate_raises(monkeypatch):
    monkeypatch.setattr(solver_mod, "prox_group_apply", lambda z, *a: np.full_like(z, np.nan))
    prob = Problem(A22, B22, GroupPartition.singletons(3), Regularizer(2, 1, 0.5))
    with pytest.raises(NumericalError):
        pgm_solve(prob)


def test_small_target_sparsity_recovery():
    spec = SimSpec(n=16, m=8, r=4, active_groups=1, noise_sigma=0.0, trials=1, master_seed=11)
    inst = generate_instance(spec, 0)
    rep = pgm_solve(inst.problem(Regularizer(2, 0.5, 0.0)), SolverConfig(target_sparsity=1))
    assert relative_error(rep.x, inst.xbar) < 0.005
    assert rep.lambda_used > 0


# ---------------------------------------------------------------- lambda rule


def test_lambda_rule_midpoint_examples():
    part = GroupPartition.singletons(3)
    z = np.array([5.0, 3.0, 1.0])
    # S = 1: threshold halfway between 5 and 3
    lam = lambda_from_target_sparsity(z, part, 0.5, Regularizer(2, 0, 1), 1, rule="midpoint")
    assert lam == pytest.approx(16.0)
    np.testing.assert_array_equal(prox_group_apply(z, part, 0.5, Regularizer(2, 0, lam)), [5, 0, 0])
    # S = 2: threshold 2, so sqrt(2 v lam) = 2 gives lam = 4
    lam = lambda_from_target_sparsity(z, part, 0.5, Regularizer(2, 0, 1), 2, rule="midpoint")
    assert lam == pytest.approx(4.0)
    np.testing.assert_array_equal(prox_group_apply(z, part, 0.5, Regularizer(2, 0, lam)), [5, 3, 0])
    lam = lambda_from_target_sparsity(z, part, 1.0, Regularizer(2, 1, 1), 2, rule="midpoint")
    assert lam == pytest.approx(2.0)
    np.testing.assert_allclose(prox_group_apply(z, part, 1.0, Regularizer(2, 1, lam)), [3, 1, 0])


def test_lambda_rule_inverse_formulas():
    part = GroupPartition.singletons(3)
    z = np.array([5.0, 3.0, 1.0])
    v, tau = 0.7, 2.0
    expected = {0.5: (2 * tau / 3) ** 1.5 / v, T23: 1.5 / v * (tau / 2) ** (4 / 3)}
    for q, lam in expected.items():
        got = lambda_from_target_sparsity(z, part, v, Regularizer(2, q, 1), 2, rule="midpoint")
        assert got == pytest.approx(lam, rel=1e-12)


def test_lambda_rule_zero_group():
    part = GroupPartition.equal(6, 3)
    z = np.array([1.0, 2, 0.5, 0.1, 0, 0])
    for p, q in PAIRS:
        lam = lambda_from_target_sparsity(z, part, 1.0, Regularizer(p, q, 1), 2)
        out = prox_group_apply(z, part, 1.0, Regularizer(p, q, lam))
        assert np.count_nonzero([np.any(out[a:b]) for a, b in part.bounds]) == 2


def test_lambda_rule_tie_is_broken_upward():
    part = GroupPartition.singletons(3)
    z = np.array([3.0, 2.0, 2.0])
    lam = lambda_from_target_sparsity(z, part, 1.0, Regularizer(2, 1, 1), 1)
    assert lam > 2.0
    with pytest.raises(ValueError):
        lambda_from_target_sparsity(z, part, 1.0, Regularizer(2, 1, 1), 3)


@pytest.mark.parametrize("pq", PAIRS)
def test_lambda_rule_keeps_groups_tied_at_boundary(pq):
    part = GroupPartition.singletons(3)
    z = np.array([2.0, 2.0, 1.0])
    reg = Regularizer(pq[0], pq[1], 1)
    for rule in ("next", "midpoint"):
        lam = lambda_from_target_sparsity(z, part, 1.0, reg, 1, rule)
        out = prox_group_apply(z, part, 1.0, reg.with_lambda(lam))
        assert np.count_nonzero(out) == 2


def test_target_sparsity_exact_symmetry_keeps_tied_groups():
    # every iterate is a multiple of (1, 1, 1), so no single group can be preferred
    A = np.array([[2.0, 3, 1], [2, 1, 3]])
    prob = Problem(A, A @ np.array([1.0, 0, 0]), GroupPartition.singletons(3), Regularizer(2, 0.5, 0))
    rep = pgm_solve(prob, SolverConfig(target_sparsity=1))
    assert len(support(rep.x, prob.partition)) == 3
    assert rep.final_objective < 1e-12


@given(st.integers(0, 2**31), st.sampled_from(PAIRS + [(2, 0.3), (1, 0.3), (1, 1)]), st.sampled_from(["next", "midpoint"]))
def test_lambda_rule_keeps_exactly_S(seed, pq, rule):
    rng = np.random.default_rng(seed)
    part = GroupPartition.equal(30, 10)
    z = rng.standard_normal(30) * rng.uniform(0.1, 5, size=30)
    S = int(rng.integers(1, 10))
    p, q = pq
    v = rng.uniform(0.2, 1.0)
    lam = lambda_from_target_sparsity(z, part, v, Regularizer(p, q, 1), S, rule=rule)
    out = prox_group_apply(z, part, v, Regularizer(p, q, lam))
    assert np.count_nonzero([np.any(out[a:b]) for a, b in part.bounds]) == S


@given(st.integers(0, 2**31), st.sampled_from([0.3, 0.5, T23, 0.9]))
def test_l1_kill_lambda_matches_prox_switch(seed, q):
    rng = np.random.default_rng(seed)
    l = int(rng.integers(1, 6))
    z = rng.standard_normal(l) * rng.uniform(0.1, 5)
    v = 0.8
    lam_k = kill_lambdas(z, GroupPartition.from_sizes([l]), v, 1, q)[0]
    assert not prox_group(z, v, lam_k * (1 - 1e-6), 1, q).zeroed
    assert prox_group(z, v, lam_k * (1 + 1e-6), 1, q).zeroed


# ---------------------------------------------------------------- diagnostics


def test_support_stabilization_examples():
    assert support_stabilization_iter([frozenset({1})] * 4) == 0
    assert support_stabilization_iter([frozenset({1, 2}), frozenset({1}), frozenset({1}), frozenset({1})]) == 1
    assert support_stabilization_iter([frozenset(), frozenset({0})]) == 1


def test_linear_rate_fit_geometric():
    k = np.arange(30)
    eta, r2 = linear_rate_fit(2 * 0.5**k, 0.5, f_min=0.0)
    assert eta == pytest.approx(0.5, rel=1e-6)
    assert r2 == pytest.approx(1.0, abs=1e-9)
    eta, r2 = linear_rate_fit(2 * 0.8**k + 1.0, 0.5)
    assert eta < 1 and r2 > 0.9


def test_linear_rate_fit_constant_and_errors():
    assert linear_rate_fit(np.ones(30), 0.5) == (1.0, 0.0)
    with pytest.raises(ValueError):
        linear_rate_fit(np.ones(10), 0.5)
    with pytest.raises(ValueError):
        linear_rate_fit(np.r_[np.ones(25), np.nan], 0.5)
    with pytest.raises(ValueError):
        linear_rate_fit(np.ones(30), 0.0)


def _report(norms, supports, v=1.0):
    return SolveReport(np.zeros(2), [0.0] * len(norms), supports, np.array(norms), len(norms) - 1, "converged", 1.0, v)


def test_lower_bound_check_controls():
    prob = Problem(np.eye(2), np.ones(2), GroupPartition.singletons(2), Regularizer(1, 0.5, 1.0))
    floor = (1.0 * 1.0 * 0.5 * 0.5) ** (1 / 1.5)
    assert nonzero_group_lower_bound_check(_report([[0, 0], [0, 0]], [frozenset(), frozenset()]), prob)
    assert nonzero_group_lower_bound_check(_report([[floor, 0]], [frozenset({0})]), prob)
    assert not nonzero_group_lower_bound_check(_report([[floor / 2, 0]], [frozenset({0})]), prob)
    with pytest.raises(PreconditionError):
        nonzero_group_lower_bound_check(_report([[0, 0]], [frozenset()]), prob.with_lambda(1).__class__(
            prob.A, prob.b, prob.partition, Regularizer(2, 0.5, 1.0)))


@pytest.mark.parametrize("p,q", PAIRS + [(2, 0.3), (1, 0.3)])
def test_descent_random_instances(p, q):
    for seed in range(5):
        rep = pgm_solve(_random_problem(seed, p, q), SolverConfig(max_iter=300))
        F = np.array(rep.objective_trace)
        assert np.all(np.diff(F) <= 1e-10)


@pytest.mark.parametrize("p,q", [(2, 0.5), (1, 0.5), (2, 1)])
def test_converged_point_is_fixed(p, q):
    prob = _random_problem(3, p, q, lam=0.5, m=36)
    cfg = SolverConfig()
    rep = pgm_solve(prob, cfg)
    assert rep.converged
    z = rep.x - 2 * rep.stepsize * prob.A.T @ (prob.A @ rep.x - prob.b)
    x_next = prox_group_apply(z, prob.partition, rep.stepsize, prob.reg)
    assert np.linalg.norm(x_next - rep.x) <= 10 * cfg.x_tol * max(1.0, np.linalg.norm(rep.x))


@pytest.mark.parametrize("p,q", [(2, 0.5), (2, T23), (1, 0.5), (1, T23), (2, 0.3)])
def test_stationarity_at_limit(p, q):
    prob = _random_problem(4, p, q, lam=0.5, m=36)
    rep = pgm_solve(prob)
    x = rep.x
    grad = 2 * prob.A.T @ (prob.A @ x - prob.b)
    for a, b in prob.partition.bounds:
        g = x[a:b]
        if not np.any(g):
            continue
        if p == 2:
            res = prob.reg.lam * q * np.linalg.norm(g) ** (q - 2) * g + grad[a:b]
        else:
            on = g != 0
            res = (prob.reg.lam * q * np.sum(np.abs(g)) ** (q - 1) * np.sign(g) + grad[a:b])[on]
        assert np.max(np.abs(res)) <= 1e-6


def test_history_off_keeps_last_only():
    prob = _random_problem(5, 2, 0.5)
    rep = pgm_solve(prob, SolverConfig(record_history=False, max_iter=50))
    assert len(rep.objective_trace) == 1 and rep.norm_trace is None


def test_rate_fit_ignores_rounding_noise_tail():
    rng = np.random.default_rng(0)
    clean = 1.0 + 0.5 ** np.arange(40)
    noisy = np.concatenate([clean, 1.0 + 1e-16 * rng.random(200)])
    eta, r2 = linear_rate_fit(noisy, f_min=1.0)
    # cancellation in (1 + 0.5**k) - 1 limits the accuracy
    assert eta == pytest.approx(0.5, rel=1e-3)
    assert r2 > 0.9999
