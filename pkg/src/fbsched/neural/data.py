"""Offline sample generation, min-max normalization and dataset CSV I/O."""

from __future__ import annotations

import csv
import itertools
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from ..cost import CostFunction
from ..errors import ConfigurationError, InfeasibleError, ModelParseError
from ..optimizer import OptimizationProblem, solve_closed_form

log = logging.getLogger(__name__)

MS = 1e-3


class DegenerateRangeError(ConfigurationError):
    pass


@dataclass
class TrainingSet:
    inputs: np.ndarray    # rows of (c_1..c_N, U_R)
    targets: np.ndarray   # rows of (h_1..h_N)
    normalized: bool = False
    skipped: list = field(default_factory=list)

    def __post_init__(self):
        self.inputs = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        self.targets = np.atleast_2d(np.asarray(self.targets, dtype=float))
        if len(self.inputs) != len(self.targets):
            raise ConfigurationError("inputs and targets have different row counts")

    def __len__(self):
        return len(self.inputs)

    @property
    def n_loops(self) -> int:
        return self.targets.shape[1]


def paper_ranges() -> list[list[float]]:
    """c_1 in 2..9, c_2 in 2..7, c_3 in 1..7 (1 ms steps), disturbance 0.5..3 (0.5 ms)."""
    return [
        [k * MS for k in range(2, 10)],
        [k * MS for k in range(2, 8)],
        [k * MS for k in range(1, 8)],
        [0.5 * k * MS for k in range(1, 7)],
    ]


def paper_costs() -> list[CostFunction]:
    return [CostFunction.reciprocal(g) for g in (43.0, 67.0, 95.0)]


def gen_dataset(ranges: Sequence[Sequence[float]], costs: Sequence[CostFunction],
                solver: Callable = solve_closed_form, u_target: float = 0.75,
                disturbance_period: float = 0.01, f_bounds=None) -> TrainingSet:
    """Solve the period assignment for every grid combination.

    ``ranges`` holds one value list per control task plus, last, the list of
    disturbance-task execution times; the control budget for a grid point is
    u_target - c_dist / disturbance_period.  Infeasible points are skipped
    and reported in ``TrainingSet.skipped``.
    """
    n = len(costs)
    if len(ranges) != n + 1:
        raise ConfigurationError(f"need {n + 1} value lists (N control + disturbance)")
    xs, ys, skipped = [], [], []
    for combo in itertools.product(*ranges):
        c = list(combo[:n])
        u_r = u_target - combo[n] / disturbance_period
        try:
            if u_r <= 0:
                raise InfeasibleError("non-positive control budget")
            sol = solver(OptimizationProblem(costs, c, u_r, f_bounds))
        except InfeasibleError as exc:
            skipped.append((combo, str(exc)))
            continue
        xs.append(c + [u_r])
        ys.append(sol.periods)
    if skipped:
        log.warning("skipped %d infeasible grid points", len(skipped))
    return TrainingSet(np.array(xs).reshape(-1, n + 1), np.array(ys).reshape(-1, n),
                       skipped=skipped)


def column_ranges(a: np.ndarray, names: Sequence[str]) -> np.ndarray:
    lo, hi = a.min(axis=0), a.max(axis=0)
    for k, name in enumerate(names):
        if not hi[k] > lo[k]:
            raise DegenerateRangeError(f"column {name} is constant ({lo[k]!r})")
    return np.column_stack([lo, hi])


def apply_norm(a, rng):
    return (np.asarray(a, dtype=float) - rng[:, 0]) / (rng[:, 1] - rng[:, 0])


def invert_norm(a, rng):
    return np.asarray(a, dtype=float) * (rng[:, 1] - rng[:, 0]) + rng[:, 0]


def normalize(ts: TrainingSet, in_norm: Optional[np.ndarray] = None,
              out_norm: Optional[np.ndarray] = None):
    """Per-column min-max scaling; returns (normalized set, in_norm, out_norm)."""
    n = ts.n_loops
    if in_norm is None:
        in_norm = column_ranges(ts.inputs, input_names(n))
    if out_norm is None:
        out_norm = column_ranges(ts.targets, target_names(n))
    out = TrainingSet(apply_norm(ts.inputs, in_norm), apply_norm(ts.targets, out_norm),
                      normalized=True, skipped=ts.skipped)
    return out, in_norm, out_norm


def input_names(n: int) -> list[str]:
    return [f"c_{i + 1}" for i in range(n)] + ["U_R"]


def target_names(n: int) -> list[str]:
    return [f"h_{i + 1}" for i in range(n)]


def write_dataset(ts: TrainingSet, path) -> None:
    n = ts.n_loops
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(input_names(n) + target_names(n))
        for x, y in zip(ts.inputs, ts.targets):
            w.writerow([repr(float(v)) for v in (*x, *y)])


def read_dataset(path) -> TrainingSet:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ModelParseError(f"{path}: empty dataset file")
    header = rows[0]
    n = (len(header) - 1) // 2
    if n < 1 or header != input_names(n) + target_names(n):
        raise ModelParseError(f"{path}: unexpected header {header}")
    data = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise ModelParseError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
        try:
            data.append([float(v) for v in row])
        except ValueError as exc:
            raise ModelParseError(f"{path}:{lineno}: {exc}") from None
    a = np.array(data).reshape(-1, len(header))
    return TrainingSet(a[:, :n + 1], a[:, n + 1:])
