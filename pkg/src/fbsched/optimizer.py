"""Optimal sampling-frequency assignment under a utilization budget.

Problem::

    minimize    sum_i w_i J_i(f_i)
    subject to  sum_i c_i f_i <= U_R,   f_min_i <= f_i <= f_max_i

Costs are convex and (normally) decreasing in f, so the budget constraint
is active at the optimum unless every loop sits on its upper bound.  The
problem is separable with a single coupling constraint, which is why a
one-dimensional search over the Lagrange multiplier solves it exactly.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .cost import CostFunction
from .errors import (
    ConfigurationError,
    ConvergenceError,
    DegenerateProblemError,
    InfeasibleError,
    ResourceError,
    SolverAssumptionError,
)

DEFAULT_F_BOUNDS = (5.0, 200.0)
BUDGET_TOL = 1e-9
MAX_BISECTIONS = 200
MAX_GRID_POINTS = 10**8


@dataclass
class OptimizationProblem:
    costs: Sequence[CostFunction]
    exec_times: Sequence[float]
    u_budget: float
    f_bounds: Optional[Sequence] = None   # per-task (lo, hi) pairs or one shared pair

    def __post_init__(self):
        n = len(self.costs)
        if n < 1:
            raise ConfigurationError("need at least one loop")
        if len(self.exec_times) != n:
            raise ConfigurationError(f"{n} costs but {len(self.exec_times)} execution times")
        if any(not c > 0 for c in self.exec_times):
            raise ConfigurationError(f"execution times must be > 0: {list(self.exec_times)}")
        if not self.u_budget > 0:
            raise ConfigurationError(f"utilization budget must be > 0, got {self.u_budget}")
        if self.f_bounds is None:
            self.f_bounds = [DEFAULT_F_BOUNDS] * n
        elif len(self.f_bounds) == 2 and all(isinstance(v, (int, float)) for v in self.f_bounds):
            self.f_bounds = [tuple(self.f_bounds)] * n   # one pair shared by every task
        if len(self.f_bounds) != n:
            raise ConfigurationError("f_bounds length mismatch")
        for lo, hi in self.f_bounds:
            if not (0 < lo <= hi):
                raise ConfigurationError(f"bad frequency bounds ({lo}, {hi})")

    @property
    def n(self) -> int:
        return len(self.costs)

    def min_load(self) -> float:
        return math.fsum(c * lo for c, (lo, _) in zip(self.exec_times, self.f_bounds))

    def max_load(self) -> float:
        return math.fsum(c * hi for c, (_, hi) in zip(self.exec_times, self.f_bounds))

    def objective(self, freqs) -> float:
        return math.fsum(j.weight * j.value(f) for j, f in zip(self.costs, freqs))

    def load(self, freqs) -> float:
        return math.fsum(c * f for c, f in zip(self.exec_times, freqs))

    def check_feasible(self) -> None:
        if self.min_load() > self.u_budget * (1 + 1e-12):
            raise InfeasibleError(
                f"sum c_i f_min_i = {self.min_load():.6g} exceeds budget {self.u_budget:.6g}")


@dataclass
class OptimalAssignment:
    frequencies: list[float]
    multiplier: float
    kkt_residual: float = float("nan")
    iterations: int = 0
    solve_time: float = 0.0
    periods: list[float] = field(init=False)

    def __post_init__(self):
        self.periods = [1.0 / f for f in self.frequencies]


def solve_closed_form(problem: OptimizationProblem) -> OptimalAssignment:
    """Exact KKT solution for reciprocal costs alpha + gamma/f.

    Unclipped, f_i = mu * sqrt(w_i gamma_i / c_i) with mu = 1/sqrt(lambda),
    which gives the familiar U_R sqrt(w_i gamma_i / c_i) / sum_j sqrt(w_j gamma_j c_j).
    With bounds, each f_i(mu) is clipped and the budget load becomes a
    piecewise-linear nondecreasing function of mu; the crossing segment is
    located among the clip breakpoints and solved exactly there.
    """
    t0 = time.perf_counter()
    costs, c, U = problem.costs, problem.exec_times, problem.u_budget
    if any(j.form != "reciprocal" for j in costs):
        raise ConfigurationError("solve_closed_form needs reciprocal costs")
    problem.check_feasible()
    lo = [b[0] for b in problem.f_bounds]
    hi = [b[1] for b in problem.f_bounds]
    for j, h in zip(costs, hi):
        if j.gamma == 0 and math.isinf(h):
            raise DegenerateProblemError("gamma = 0 with an unbounded frequency")
    n = problem.n
    slope = [math.sqrt(j.weight * j.gamma / ci) for j, ci in zip(costs, c)]

    if problem.max_load() <= U:
        freqs = list(hi)
        lam = 0.0
        iters = 0
    else:
        def freqs_at(mu):
            return [min(max(a * mu, l), h) for a, l, h in zip(slope, lo, hi)]

        breaks = sorted({b for a, l, h in zip(slope, lo, hi) if a > 0
                         for b in (l / a, h / a) if math.isfinite(b)})
        # the crossing lies right of the last breakpoint whose load is still <= U
        mu_lo = 0.0
        iters = 0
        for b in breaks:
            iters += 1
            if problem.load(freqs_at(b)) <= U:
                mu_lo = b
            else:
                break
        base = freqs_at(mu_lo)
        # coordinates whose lower clip is passed and upper clip not yet reached at mu_lo
        # stay free on (mu_lo, next breakpoint)
        free = [i for i in range(n)
                if slope[i] > 0 and slope[i] * mu_lo >= lo[i] * (1 - 1e-12)
                and slope[i] * mu_lo < hi[i] * (1 - 1e-12)]
        fixed_load = math.fsum(c[i] * base[i] for i in range(n) if i not in free)
        rate = math.fsum(c[i] * slope[i] for i in free)
        if rate == 0:
            mu = mu_lo
        else:
            mu = (U - fixed_load) / rate
        freqs = freqs_at(mu)
        lam = 1.0 / (mu * mu) if mu > 0 else math.inf
    out = OptimalAssignment(freqs, lam, iterations=iters)
    out.solve_time = time.perf_counter() - t0
    out.kkt_residual = check_kkt(problem, out)
    return out


def _coordinate_solve(cost: CostFunction, ci: float, lam: float, lo: float, hi: float,
                      guess: Optional[float] = None) -> float:
    """Solve w J'(f) + lam c = 0 on [lo, hi] by safeguarded Newton.

    g(f) = w J'(f) + lam c is nondecreasing for convex J.  Newton steps use
    the analytic second derivative when the cost provides it, secant steps
    otherwise; any step leaving the current bracket is replaced by bisection.
    """
    w = cost.weight

    def g(f):
        return w * cost.deriv(f) + lam * ci

    g_lo = g(lo)
    if g_lo >= 0:
        return lo
    if math.isinf(hi):
        b = max(2.0 * lo, guess or 0.0)
        for _ in range(200):
            if g(b) > 0:
                break
            b *= 2.0
        else:
            raise DegenerateProblemError("no finite stationary point: raise f_max or lambda")
        hi = b
    g_hi = g(hi)
    if g_hi <= 0:
        return hi
    if g_hi < g_lo:
        raise SolverAssumptionError("cost derivative is decreasing: cost is not convex")

    a, b, ga, gb = lo, hi, g_lo, g_hi
    x = guess if guess is not None and a < guess < b else 0.5 * (a + b)
    gx = g(x)
    for it in range(200):
        if gx == 0:
            return x
        if gx < 0:
            a, ga = x, gx
        else:
            b, gb = x, gx
        if b - a <= 4e-16 * b:
            break
        d2 = cost.deriv2(x)
        if d2 is not None and d2 > 0:
            xn = x - gx / (w * d2)
        elif it % 2 == 0:
            # regula falsi, alternated with bisection so one stale end cannot stall it
            xn = a - ga * (b - a) / (gb - ga)
        else:
            xn = 0.5 * (a + b)
        if not (a < xn < b):
            xn = 0.5 * (a + b)
        if abs(xn - x) <= 1e-15 * x:
            return xn
        x = xn
        gx = g(x)
    return x


def solve_dual_bisection(problem: OptimizationProblem) -> OptimalAssignment:
    """Generic convex solver: bisection on the budget multiplier lambda.

    For a trial lambda every coordinate minimizes w_i J_i(f) + lambda c_i f
    independently; the resulting load is nonincreasing in lambda, so
    bisection finds the lambda whose load meets the budget.
    """
    t0 = time.perf_counter()
    costs, c, U = problem.costs, problem.exec_times, problem.u_budget
    problem.check_feasible()
    bounds = problem.f_bounds
    n = problem.n

    guesses: list[Optional[float]] = [None] * n

    def freqs_at(lam):
        fs = [_coordinate_solve(costs[i], c[i], lam, bounds[i][0], bounds[i][1], guesses[i])
              for i in range(n)]
        guesses[:] = fs
        return fs

    if all(math.isfinite(hi) for _, hi in bounds) and problem.max_load() <= U + BUDGET_TOL:
        # lambda = 0 already feasible: every loop runs at its fastest rate
        fs = freqs_at(0.0)
        out = OptimalAssignment(fs, 0.0, iterations=0)
    else:
        lam_lo = 0.0
        lam_hi = max(max(0.0, -costs[i].weight * costs[i].deriv(bounds[i][0])) / c[i]
                     for i in range(n))
        if lam_hi == 0:
            raise DegenerateProblemError("all cost slopes vanish at f_min")
        s_lo, s_hi = math.inf, problem.load(freqs_at(lam_hi))
        fs = None
        lam = lam_hi
        for it in range(1, MAX_BISECTIONS + 1):
            lam = 0.5 * (lam_lo + lam_hi)
            fs = freqs_at(lam)
            s = problem.load(fs)
            if s > s_lo + BUDGET_TOL or s < s_hi - BUDGET_TOL:
                raise SolverAssumptionError("budget load is not monotone in lambda")
            if abs(s - U) <= BUDGET_TOL:
                break
            if s > U:
                lam_lo, s_lo = lam, s
            else:
                lam_hi, s_hi = lam, s
            if lam_hi - lam_lo <= 1e-16 * lam_hi:
                lam = lam_hi
                fs = freqs_at(lam)
                break
        else:
            raise ConvergenceError(f"dual bisection did not converge in {MAX_BISECTIONS} steps")
        out = OptimalAssignment(fs, lam, iterations=it)
    out.solve_time = time.perf_counter() - t0
    out.kkt_residual = check_kkt(problem, out)
    return out


def check_kkt(problem: OptimizationProblem, assignment: OptimalAssignment) -> float:
    """Largest scaled violation of the KKT conditions (0 at an exact KKT point).

    Stationarity terms are divided by the magnitude of the competing terms
    (cost slope vs. price lambda c_i); feasibility and complementary slackness
    are relative to U_R, so the residual is dimensionless.
    """
    lam = assignment.multiplier
    U = problem.u_budget
    if not math.isfinite(lam):
        return math.inf
    worst = max(0.0, -lam)
    for j, ci, f, (lo, hi) in zip(problem.costs, problem.exec_times,
                                   assignment.frequencies, problem.f_bounds):
        slope = j.weight * j.deriv(f)
        g = slope + lam * ci
        scale = max(abs(slope), lam * ci, 1e-300)
        at_lo = f <= lo * (1 + 1e-12)
        at_hi = f >= hi * (1 - 1e-12)
        if at_lo and at_hi:
            r = 0.0
        elif at_lo:
            r = max(0.0, -g) / scale
        elif at_hi:
            r = max(0.0, g) / scale
        else:
            r = abs(g) / scale
        worst = max(worst, r, max(0.0, lo - f, f - hi) / hi)
    load = problem.load(assignment.frequencies)
    worst = max(worst, max(0.0, load - U) / U)
    if lam > 0:
        worst = max(worst, abs(U - load) / U)
    return worst


def brute_force_oracle(problem: OptimizationProblem, grid_step: float) -> OptimalAssignment:
    """Exhaustive grid search, independent of the KKT machinery.

    The first N-1 coordinates are enumerated on the grid f_min + k*step; for
    each of those tuples the best feasible grid value of the last coordinate
    is read from a running minimum of its cost over grid index, which is the
    same answer as enumerating it.  ``multiplier`` is not estimated (NaN).
    """
    t0 = time.perf_counter()
    n = problem.n
    if n > 3:
        raise ConfigurationError("brute-force oracle supports N <= 3")
    if not grid_step > 0:
        raise ConfigurationError("grid_step must be > 0")
    problem.check_feasible()
    c = np.asarray(problem.exec_times, dtype=float)
    U = problem.u_budget
    spare = U - problem.min_load()
    grids, costs = [], []
    for i, (j, (lo, hi)) in enumerate(zip(problem.costs, problem.f_bounds)):
        top = min(hi, lo + spare / c[i])
        if math.isinf(top):
            raise ConfigurationError("oracle needs bounded frequency ranges")
        k = int(math.floor((top - lo) / grid_step + 1e-9))
        g = lo + grid_step * np.arange(k + 1)
        grids.append(g)
        costs.append(j.weight * np.array([j.value(float(f)) for f in g]))
    enumerated = math.prod(len(g) for g in grids[:-1])
    if enumerated > MAX_GRID_POINTS:
        raise ResourceError(f"grid has {enumerated:.3g} tuples (> {MAX_GRID_POINTS:.0e})")

    last_g, last_c = grids[-1], costs[-1]
    pref = np.minimum.accumulate(last_c)
    pref_arg = np.zeros(len(last_c), dtype=np.int64)
    best = 0
    for k in range(1, len(last_c)):
        if last_c[k] < last_c[best]:
            best = k
        pref_arg[k] = best
    lo_last = problem.f_bounds[-1][0]

    def last_index(remaining):
        k = np.floor((remaining / c[-1] - lo_last) / grid_step + 1e-9).astype(np.int64)
        return np.minimum(k, len(last_g) - 1)

    if n == 1:
        k = int(last_index(np.array([U]))[0])
        if k < 0:
            raise InfeasibleError("no feasible grid point")
        freqs = [float(last_g[pref_arg[k]])]
    elif n == 2:
        rem = U - c[0] * grids[0]
        k = last_index(rem)
        ok = k >= 0
        tot = np.where(ok, costs[0] + pref[np.maximum(k, 0)], np.inf)
        a = int(np.argmin(tot))
        freqs = [float(grids[0][a]), float(last_g[pref_arg[k[a]]])]
    else:
        best_val, best_t = np.inf, None
        g0, g1 = grids[0], grids[1]
        chunk = max(1, 2_000_000 // max(1, len(g1)))
        for s in range(0, len(g0), chunk):
            f0 = g0[s:s + chunk, None]
            rem = U - c[0] * f0 - c[1] * g1[None, :]
            k = last_index(rem)
            ok = k >= 0
            tot = np.where(ok, costs[0][s:s + chunk, None] + costs[1][None, :]
                           + pref[np.maximum(k, 0)], np.inf)
            flat = int(np.argmin(tot))
            v = tot.flat[flat]
            if v < best_val:
                r, q = divmod(flat, len(g1))
                best_val, best_t = v, (s + r, q, int(k[r, q]))
        if best_t is None:
            raise InfeasibleError("no feasible grid point")
        a, b, k = best_t
        freqs = [float(g0[a]), float(g1[b]), float(last_g[pref_arg[k]])]
    out = OptimalAssignment(freqs, float("nan"), iterations=enumerated)
    out.solve_time = time.perf_counter() - t0
    return out
