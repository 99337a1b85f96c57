"""Task set representation, rate-monotonic priorities and utilization bounds."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable, Optional, Sequence

from .errors import ConfigurationError, DomainError

KINDS = ("control", "disturbance", "fbs")


@dataclass(frozen=True)
class TaskSpec:
    id: int
    kind: str
    period: float
    execution_time: float
    priority: int = -1
    loop_index: Optional[int] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"task {self.id}: unknown kind {self.kind!r}")
        if not self.period > 0:
            raise DomainError(f"task {self.id}: period must be > 0, got {self.period}")
        if self.execution_time < 0:
            raise DomainError(f"task {self.id}: negative execution time")

    @property
    def utilization(self) -> float:
        return self.execution_time / self.period


TaskSet = Sequence[TaskSpec]


def _check_ids(tasks: TaskSet) -> None:
    ids = [t.id for t in tasks]
    if len(set(ids)) != len(ids):
        raise ConfigurationError(f"duplicate task ids in {ids}")


def assign_rm_priorities(tasks: TaskSet) -> list[TaskSpec]:
    """Return the tasks (in input order) with rate-monotonic priorities.

    The feedback-scheduler task always gets priority 0; the others are
    ranked by ascending period, ties broken by ascending id.
    """
    _check_ids(tasks)
    fbs = [t for t in tasks if t.kind == "fbs"]
    if len(fbs) > 1:
        raise ConfigurationError("more than one fbs task")
    rest = sorted((t for t in tasks if t.kind != "fbs"), key=lambda t: (t.period, t.id))
    order = fbs + rest
    prio = {t.id: p for p, t in enumerate(order)}
    return [replace(t, priority=prio[t.id]) for t in tasks]


def requested_utilization(tasks: Iterable[TaskSpec]) -> float:
    """Sum of c_i/h_i, deliberately not clamped at 1."""
    return math.fsum(t.execution_time / t.period for t in tasks)


def ll_bound(n: int) -> float:
    """Liu-Layland RM utilization bound n(2^(1/n) - 1)."""
    if n < 1:
        raise DomainError(f"ll_bound needs n >= 1, got {n}")
    return n * math.expm1(math.log(2.0) / n)
