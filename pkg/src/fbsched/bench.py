"""Per-invocation wall-clock cost of the feedback-scheduler decision."""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .cost import CostFunction
from .errors import ConfigurationError
from .neural.network import forward
from .optimizer import OptimizationProblem, solve_closed_form, solve_dual_bisection


@dataclass
class OverheadStats:
    mode: str
    samples: list          # seconds, in run order
    instances: list        # the c vectors that were timed

    @property
    def mean(self) -> float:
        return float(np.mean(self.samples))

    @property
    def median(self) -> float:
        return float(np.median(self.samples))

    @property
    def q1(self) -> float:
        return float(np.percentile(self.samples, 25))

    @property
    def q3(self) -> float:
        return float(np.percentile(self.samples, 75))

    @property
    def min(self) -> float:
        return float(np.min(self.samples))

    @property
    def max(self) -> float:
        return float(np.max(self.samples))

    def summary(self) -> dict:
        return {"mode": self.mode, "n": len(self.samples), "mean": self.mean,
                "median": self.median, "q1": self.q1, "q3": self.q3,
                "min": self.min, "max": self.max}


def value_set_sampler(value_sets: Sequence[Sequence[float]]) -> Callable:
    """Draw each task's execution time independently from its value set."""
    sets = [list(v) for v in value_sets]

    def sample(rng):
        return tuple(float(s[rng.integers(len(s))]) for s in sets)

    return sample


def measure_overhead(mode: str, n_runs: int, instance_sampler: Callable, seed: int, *,
                     costs: Sequence[CostFunction], model=None, u_target: float = 0.75,
                     disturbance_period: float = 0.01, solver: str = "dual",
                     f_bounds=None) -> OverheadStats:
    """Time ``n_runs`` decisions on seeded random instances.

    Only the decision itself is inside the timed region: the solver call for
    OFS (``solver="dual"`` is the generic solver, ``"closed"`` the closed
    form) or the forward pass for NFS.
    """
    if n_runs < 1:
        raise ConfigurationError("n_runs must be >= 1")
    if mode not in ("OFS", "NFS"):
        raise ConfigurationError(f"overhead is measured for OFS or NFS, not {mode!r}")
    if mode == "NFS" and model is None:
        raise ConfigurationError("NFS benchmark needs a model")
    solve = {"dual": solve_dual_bisection, "closed": solve_closed_form}[solver]
    n = len(costs)
    rng = np.random.default_rng(seed)
    instances = [instance_sampler(rng) for _ in range(n_runs)]
    samples = []
    clock = time.perf_counter
    for inst in instances:
        c = list(inst[:n])
        u_r = u_target - inst[n] / disturbance_period
        if mode == "OFS":
            problem = OptimizationProblem(costs, c, u_r, f_bounds)
            t0 = clock()
            solve(problem)
            dt = clock() - t0
        else:
            x = np.array(c + [u_r])
            t0 = clock()
            forward(model, x, warn=False)
            dt = clock() - t0
        samples.append(dt)
    return OverheadStats(mode, samples, instances)
