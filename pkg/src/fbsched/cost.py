"""Per-loop control cost functions and runtime quadratic cost accumulation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

from .errors import ConfigurationError, DomainError


@dataclass(frozen=True)
class CostFunction:
    """J(f) of one loop, as a function of its sampling frequency.

    ``form="reciprocal"`` is alpha + gamma/f.  ``form="custom-convex"``
    takes ``fn`` and its derivative ``dfn``; ``d2fn`` is optional and only
    speeds up the per-coordinate Newton iteration of the dual solver.
    """

    form: str = "reciprocal"
    alpha: float = 0.0
    gamma: float = 0.0
    weight: float = 1.0
    fn: Optional[Callable[[float], float]] = None
    dfn: Optional[Callable[[float], float]] = None
    d2fn: Optional[Callable[[float], float]] = None

    def __post_init__(self):
        if self.form not in ("reciprocal", "custom-convex"):
            raise ConfigurationError(f"unknown cost form {self.form!r}")
        if self.gamma < 0:
            raise ConfigurationError("gamma must be >= 0")
        if not self.weight > 0:
            raise ConfigurationError("weight must be > 0")
        if self.form == "custom-convex" and (self.fn is None or self.dfn is None):
            raise ConfigurationError("custom-convex cost needs fn and its derivative dfn")

    @classmethod
    def reciprocal(cls, gamma: float, alpha: float = 0.0, weight: float = 1.0) -> "CostFunction":
        return cls("reciprocal", alpha=alpha, gamma=gamma, weight=weight)

    @classmethod
    def custom(cls, fn, dfn, d2fn=None, weight: float = 1.0) -> "CostFunction":
        return cls("custom-convex", weight=weight, fn=fn, dfn=dfn, d2fn=d2fn)

    def value(self, f: float) -> float:
        if self.form == "reciprocal":
            return self.alpha + self.gamma / f
        return self.fn(f)

    def deriv(self, f: float) -> float:
        if self.form == "reciprocal":
            return -self.gamma / (f * f)
        return self.dfn(f)

    def deriv2(self, f: float) -> Optional[float]:
        if self.form == "reciprocal":
            return 2.0 * self.gamma / (f * f * f)
        return None if self.d2fn is None else self.d2fn(f)


def cost_at(costfn: CostFunction, f: float) -> float:
    """Unweighted J_i(f)."""
    if not f > 0:
        raise DomainError(f"frequency must be > 0, got {f}")
    return costfn.value(f)


@dataclass(frozen=True)
class CostAccumulator:
    total: float = 0.0
    last_time: float = 0.0


def accumulate(acc: CostAccumulator, y: float, u: float, dt: float) -> CostAccumulator:
    # left-rectangle rule: the sample pair is held over [last_time, last_time + dt)
    if dt < 0:
        raise DomainError(f"negative dt {dt}")
    return CostAccumulator(acc.total + (y * y + u * u) * dt, acc.last_time + dt)


def total_cost(accumulators: Sequence[CostAccumulator | float], weights: Sequence[float]) -> float:
    if len(accumulators) != len(weights):
        raise ConfigurationError(
            f"{len(accumulators)} accumulators but {len(weights)} weights")
    totals = [a.total if isinstance(a, CostAccumulator) else float(a) for a in accumulators]
    return sum(w * t for w, t in zip(weights, totals))
