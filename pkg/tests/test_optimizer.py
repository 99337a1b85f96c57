import math

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from fbsched.cost import CostFunction
from fbsched.errors import ConfigurationError, InfeasibleError
from fbsched.optimizer import (
    OptimizationProblem,
    brute_force_oracle,
    check_kkt,
    solve_closed_form,
    solve_dual_bisection,
)

GAMMAS = (43.0, 67.0, 95.0)


def _problem(c, u, gammas=GAMMAS, bounds=None):
    return OptimizationProblem([CostFunction.reciprocal(g) for g in gammas], list(c), u, bounds)


def _unbounded_optimum(gammas, weights, c, u):
    root = [math.sqrt(w * g / ci) for g, w, ci in zip(gammas, weights, c)]
    denom = math.fsum(math.sqrt(w * g * ci) for g, w, ci in zip(gammas, weights, c))
    return [u * r / denom for r in root]


@st.composite
def instances(draw, max_n=5):
    n = draw(st.integers(1, max_n))
    c = [draw(st.floats(1e-3, 1e-2)) for _ in range(n)]
    g = [draw(st.floats(10.0, 100.0)) for _ in range(n)]
    u = draw(st.floats(0.3, 0.8))
    return _problem(c, u, g)


def test_overload_instance_matches_square_root_rule():
    c = (0.004, 0.0046, 0.0057)
    u = 0.75 - 0.002 / 0.01
    p = _problem(c, u)
    expect = _unbounded_optimum(GAMMAS, (1, 1, 1), c, u)
    for solve in (solve_closed_form, solve_dual_bisection):
        sol = solve(p)
        assert sol.frequencies == pytest.approx(expect, rel=1e-8)
        assert p.load(sol.frequencies) == pytest.approx(u, abs=1e-9)
        assert sol.periods == pytest.approx([1 / f for f in expect], rel=1e-8)
    # the square-root rule also fixes the multiplier: lambda = (sum sqrt(g c) / U)^2
    lam = (math.fsum(math.sqrt(g * ci) for g, ci in zip(GAMMAS, c)) / u) ** 2
    assert solve_closed_form(p).multiplier == pytest.approx(lam, rel=1e-8)


def test_weights_shift_bandwidth():
    c, u = (0.004, 0.004), 0.4
    p = OptimizationProblem([CostFunction.reciprocal(50.0, weight=4.0),
                             CostFunction.reciprocal(50.0)], list(c), u)
    f = solve_closed_form(p).frequencies
    assert f[0] / f[1] == pytest.approx(2.0)


def test_upper_bound_binds_and_budget_slack_is_allowed():
    # tiny execution times: every loop hits 200 Hz and budget is not exhausted
    p = _problem((1e-4, 1e-4, 1e-4), 0.75)
    for solve in (solve_closed_form, solve_dual_bisection):
        sol = solve(p)
        assert sol.frequencies == pytest.approx([200.0] * 3)
        assert check_kkt(p, sol) <= 1e-8


def test_lower_bound_binds_for_one_loop():
    p = OptimizationProblem([CostFunction.reciprocal(1.0), CostFunction.reciprocal(1000.0)],
                            [0.05, 0.001], 0.3)
    a, b = solve_closed_form(p), solve_dual_bisection(p)
    assert a.frequencies[0] == pytest.approx(5.0)
    assert b.frequencies == pytest.approx(a.frequencies, rel=1e-6)
    assert p.load(a.frequencies) == pytest.approx(0.3, abs=1e-9)


def test_infeasible_budget_raises():
    with pytest.raises(InfeasibleError):
        solve_closed_form(_problem((0.05, 0.05, 0.05), 0.5))
    with pytest.raises(InfeasibleError):
        solve_dual_bisection(_problem((0.05, 0.05, 0.05), 0.5))


@pytest.mark.parametrize("kw", [dict(c=(0.0, 1e-3, 1e-3), u=0.5), dict(c=(1e-3,) * 3, u=0.0),
                                dict(c=(1e-3,) * 2, u=0.5)])
def test_problem_validation(kw):
    with pytest.raises(ConfigurationError):
        _problem(kw["c"], kw["u"])


def test_custom_cost_dual_solver():
    # J = 1/f^2 for one loop: optimum sits on the budget, f = U / c
    j = CostFunction.custom(lambda f: f ** -2, lambda f: -2 * f ** -3)
    p = OptimizationProblem([j], [0.01], 0.5)
    sol = solve_dual_bisection(p)
    assert sol.frequencies[0] == pytest.approx(50.0, rel=1e-7)
    assert check_kkt(p, sol) <= 1e-8


def test_custom_cost_with_second_derivative_uses_newton():
    j = CostFunction.custom(lambda f: math.exp(-f / 50), lambda f: -math.exp(-f / 50) / 50,
                            lambda f: math.exp(-f / 50) / 2500)
    p = OptimizationProblem([j, CostFunction.reciprocal(40.0)], [0.004, 0.003], 0.5)
    sol = solve_dual_bisection(p)
    assert check_kkt(p, sol) <= 1e-8
    grid = brute_force_oracle(p, 0.5)
    assert p.objective(sol.frequencies) <= p.objective(grid.frequencies) + 1e-12


@settings(max_examples=150, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(instances())
def test_solvers_agree_and_certify(p):
    a, b = solve_closed_form(p), solve_dual_bisection(p)
    assert b.frequencies == pytest.approx(a.frequencies, rel=1e-6)
    for sol in (a, b):
        assert check_kkt(p, sol) <= 1e-8
        assert p.load(sol.frequencies) <= p.u_budget + 1e-9
        assert all(5.0 - 1e-12 <= f <= 200.0 + 1e-12 for f in sol.frequencies)


@settings(max_examples=60, deadline=None)
@given(instances(max_n=5), st.floats(1.01, 2.0))
def test_more_budget_never_hurts(p, scale):
    richer = OptimizationProblem(p.costs, p.exec_times, p.u_budget * scale)
    assert richer.objective(solve_closed_form(richer).frequencies) <= \
        p.objective(solve_closed_form(p).frequencies) * (1 + 1e-12)


@settings(max_examples=40, deadline=None)
@given(instances(max_n=3))
def test_never_worse_than_grid(p):
    sol = solve_closed_form(p)
    grid = brute_force_oracle(p, 0.5)
    assert p.load(grid.frequencies) <= p.u_budget + 1e-12
    assert p.objective(sol.frequencies) <= p.objective(grid.frequencies) * (1 + 1e-12)


def test_oracle_single_loop_exact_grid():
    p = _problem((0.01,), 0.5, gammas=(50.0,))
    grid = brute_force_oracle(p, 0.05)
    assert grid.frequencies[0] == pytest.approx(50.0, abs=0.05)
    assert math.isnan(grid.multiplier)


def test_kkt_flags_suboptimal_point():
    p = _problem((0.004, 0.0046, 0.0057), 0.55)
    sol = solve_closed_form(p)
    bad = type(sol)(frequencies=[f * 0.9 for f in sol.frequencies], multiplier=sol.multiplier,
                    kkt_residual=0.0, iterations=0, solve_time=0.0)
    assert check_kkt(p, bad) > 1e-3


def test_oracle_refuses_huge_grid():
    from fbsched.errors import ResourceError
    with pytest.raises(ResourceError):
        brute_force_oracle(_problem((0.001,) * 3, 0.5), 1e-4)


def test_single_loop_active_budget():
    p = _problem((0.004,), 0.55, gammas=(43.0,))
    for solve in (solve_closed_form, solve_dual_bisection):
        sol = solve(p)
        assert sol.frequencies[0] == pytest.approx(137.5, rel=1e-9)
    sol = solve_closed_form(p)
    assert sol.multiplier == pytest.approx(43.0 / 0.004 / 137.5 ** 2, rel=1e-9)
    assert check_kkt(p, sol) <= 1e-10
    grid = brute_force_oracle(p, 0.05)
    assert abs(grid.frequencies[0] - 137.5) <= 0.05


def test_symmetric_instance_splits_evenly():
    p = _problem((0.003,) * 3, 0.6, gammas=(50.0,) * 3)
    assert solve_closed_form(p).frequencies == pytest.approx([0.6 / (3 * 0.003)] * 3)


def test_overload_instance_against_coarse_oracle():
    p = _problem((0.004, 0.0046, 0.0057), 0.55)
    sol = solve_closed_form(p)
    assert sol.frequencies == pytest.approx([33.43, 38.91, 41.63], abs=0.01)
    grid = brute_force_oracle(p, 0.1)
    slack = sum(g / (f - 0.1) ** 2 * 0.1 for g, f in zip(GAMMAS, sol.frequencies))
    assert p.objective(sol.frequencies) <= p.objective(grid.frequencies) <= p.objective(sol.frequencies) + slack


def test_perturbed_solution_fails_kkt():
    p = _problem((0.004, 0.0046, 0.0057), 0.55)
    sol = solve_closed_form(p)
    f = list(sol.frequencies)
    f[1] *= 1.1
    bad = type(sol)(frequencies=f, multiplier=sol.multiplier, kkt_residual=0.0,
                    iterations=0, solve_time=0.0)
    assert check_kkt(p, bad) > 1e-3


@settings(max_examples=40, deadline=None)
@given(instances(), st.floats(0.1, 10.0))
def test_weight_scaling_leaves_argmin(p, k):
    scaled = OptimizationProblem([CostFunction.reciprocal(j.gamma, weight=k * j.weight) for j in p.costs],
                                 p.exec_times, p.u_budget)
    a, b = solve_closed_form(p), solve_closed_form(scaled)
    assert b.frequencies == pytest.approx(a.frequencies, rel=1e-9)
    assert b.multiplier == pytest.approx(k * a.multiplier, rel=1e-9)


@settings(max_examples=40, deadline=None)
@given(instances(), st.floats(1.0, 1.5))
def test_frequencies_monotone_in_budget(p, scale):
    richer = OptimizationProblem(p.costs, p.exec_times, p.u_budget * scale)
    lo, hi = solve_closed_form(p).frequencies, solve_closed_form(richer).frequencies
    assert all(b >= a * (1 - 1e-12) for a, b in zip(lo, hi))


def test_oracle_reports_infeasible():
    with pytest.raises(InfeasibleError):
        brute_force_oracle(_problem((0.05, 0.05), 0.3, gammas=(1.0, 1.0)), 1.0)


def test_zero_gamma_with_unbounded_frequency_is_degenerate():
    from fbsched.errors import DegenerateProblemError
    p = OptimizationProblem([CostFunction.reciprocal(0.0), CostFunction.reciprocal(40.0)],
                            [0.004, 0.004], 0.5, [(5.0, math.inf), (5.0, 200.0)])
    with pytest.raises(DegenerateProblemError):
        solve_closed_form(p)
