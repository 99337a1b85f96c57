"""Single-CPU fixed-priority preemptive co-simulation of control tasks.

Time is kept in integer nanoseconds so that coincident events (trace
changes, feedback-scheduler releases, task releases) compare exactly.  The
plants are integrated on a fixed micro-step grid; process noise is drawn
once per grid step, so two runs that differ only in scheduling see the same
disturbance realization.
"""

from __future__ import annotations

import bisect
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .cost import CostFunction
from .errors import ConfigurationError
from .optimizer import (
    DEFAULT_F_BOUNDS,
    OptimizationProblem,
    solve_closed_form,
    solve_dual_bisection,
)
from .plant import FALL_ANGLE, cached_design, controller_step, pendulum_model
from .tasks import TaskSpec, assign_rm_priorities, requested_utilization

log = logging.getLogger(__name__)

NS = 1_000_000_000
MODES = ("OLS", "OFS", "NFS")


def to_ns(t: float) -> int:
    return int(round(t * NS))


@dataclass
class ExecTrace:
    """Piecewise-constant execution times.

    ``segments`` is a time-ordered list of (start_time, values) where values
    holds one execution time per task: the N control tasks, then the
    disturbance task.
    """

    segments: list

    def __post_init__(self):
        if not self.segments:
            raise ConfigurationError("empty execution-time trace")
        starts = [s for s, _ in self.segments]
        if starts[0] != 0 or any(b <= a for a, b in zip(starts, starts[1:])):
            raise ConfigurationError("trace segments must start at 0 and be time-ordered")
        width = {len(v) for _, v in self.segments}
        if len(width) != 1:
            raise ConfigurationError("trace segments have different task counts")
        self.segments = [(float(s), tuple(float(x) for x in v)) for s, v in self.segments]
        self._starts = [s for s, _ in self.segments]

    @property
    def n_tasks(self) -> int:
        return len(self.segments[0][1])

    def value_at(self, t: float) -> tuple:
        k = bisect.bisect_right(self._starts, t + 1e-12) - 1
        return self.segments[max(k, 0)][1]

    def change_points(self) -> list[float]:
        return self._starts[1:]

    def value_sets(self) -> list[list[float]]:
        """Distinct values taken by each task, for randomized sampling."""
        return [sorted({v[i] for _, v in self.segments}) for i in range(self.n_tasks)]


def default_paper_trace() -> ExecTrace:
    """Synthetic 12 s trace (ms values below) with changes every 2 s.

    The [6, 8) s segment carries the published values (4, 4.6, 5.7, 2) ms.
    Earlier segments are RM-schedulable under the initial periods
    (17, 14, 12, 10) ms; from 6 s on they are overloaded (U_req > 1).
    """
    ms = 1e-3
    table = [
        (0.0, (2.0, 2.0, 2.0, 1.0)),
        (2.0, (3.0, 3.0, 2.5, 1.0)),
        (4.0, (3.5, 3.5, 3.0, 1.0)),
        (6.0, (4.0, 4.6, 5.7, 2.0)),
        (8.0, (5.0, 5.0, 6.0, 2.5)),
        (10.0, (4.5, 5.0, 5.0, 2.0)),
    ]
    return ExecTrace([(t, tuple(v * ms for v in vals)) for t, vals in table])


@dataclass
class LoopSpec:
    omega0: float
    f0: float
    gamma: float
    weight: float = 1.0


def paper_loops() -> list[LoopSpec]:
    return [LoopSpec(10.0, 58.8, 43.0), LoopSpec(13.3, 71.4, 67.0), LoopSpec(16.6, 83.3, 95.0)]


@dataclass
class SimConfig:
    duration: float = 12.0
    mode: str = "OFS"
    t_fs: float = 0.4
    u_target: float = 0.75
    loops: list = field(default_factory=paper_loops)
    disturbance_period: float = 0.01
    exec_trace: ExecTrace = field(default_factory=default_paper_trace)
    micro_step: float = 5e-4
    seed: int = 0
    model: object = None          # MlpParams for NFS
    model_path: Optional[str] = None
    f_bounds: tuple = DEFAULT_F_BOUNDS
    c_fbs: float = 0.0
    period_tick: float = 5e-4
    log_interval: float = 0.01
    noise: bool = True
    record_jobs: bool = False

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigurationError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.duration < 0:
            raise ConfigurationError("duration must be >= 0")
        if not self.loops:
            raise ConfigurationError("at least one control loop is required")
        if self.exec_trace.n_tasks != len(self.loops) + 1:
            raise ConfigurationError(
                f"trace has {self.exec_trace.n_tasks} tasks, expected {len(self.loops) + 1}")
        ms_ns, log_ns = to_ns(self.micro_step), to_ns(self.log_interval)
        if not 0 < self.micro_step <= 1e-3:
            raise ConfigurationError("micro_step must lie in (0, 1 ms]")
        if log_ns <= 0 or log_ns % ms_ns:
            raise ConfigurationError("log_interval must be a positive multiple of micro_step")
        if self.period_tick < 0:
            raise ConfigurationError("period_tick must be >= 0")
        if self.t_fs <= 0 or self.disturbance_period <= 0:
            raise ConfigurationError("periods must be > 0")
        if self.mode == "NFS" and self.model is None:
            if not self.model_path:
                raise ConfigurationError("NFS mode needs a trained model (model_path)")
            from .neural.modelio import load_model
            self.model = load_model(self.model_path)
        if self.mode == "NFS" and self.model.n_outputs != len(self.loops):
            raise ConfigurationError("model output count does not match the loop count")

    def costs(self) -> list[CostFunction]:
        return [CostFunction.reciprocal(lp.gamma, weight=lp.weight) for lp in self.loops]


@dataclass
class SimLog:
    n_loops: int
    mode: str = ""
    times: list = field(default_factory=list)
    j_sum: list = field(default_factory=list)
    j_loops: list = field(default_factory=list)
    periods: list = field(default_factory=list)
    u_req: list = field(default_factory=list)
    events: list = field(default_factory=list)
    decisions: list = field(default_factory=list)  # dicts: time, inputs, periods, latency, event
    unstable: dict = field(default_factory=dict)   # loop index (1-based) -> first fall time
    drops: int = 0
    jobs: list = field(default_factory=list)       # (task id, release, start, finish) when recorded

    def final_j_sum(self) -> float:
        return self.j_sum[-1] if self.j_sum else 0.0

    def rows(self):
        for k in range(len(self.times)):
            yield (self.times[k], self.j_sum[k], self.j_loops[k], self.periods[k],
                   self.u_req[k], self.events[k])


def fbs_invoke(mode: str, c_measured: Sequence[float], u_target: float, *,
               current_periods: Sequence[float], costs: Sequence[CostFunction],
               disturbance_period: float, model=None, f_bounds=DEFAULT_F_BOUNDS,
               tick: float = 0.0):
    """One feedback-scheduler decision; returns (periods, event or None).

    ``c_measured`` holds the N control execution times followed by the
    disturbance task's.  Periods come back clamped to [1/f_max, 1/f_min]
    and, when ``tick`` > 0, rounded up to a multiple of it (rounding up never
    breaks the budget).
    """
    n = len(costs)
    c = [float(v) for v in c_measured[:n]]
    if any(not v > 0 for v in c_measured):
        raise ConfigurationError("measured execution times must be > 0")
    if mode == "OLS":
        return list(current_periods), None
    u_r = u_target - c_measured[n] / disturbance_period
    f_lo, f_hi = f_bounds
    h_lo, h_hi = 1.0 / f_hi, 1.0 / f_lo
    if u_r <= math.fsum(ci * f_lo for ci in c):
        return [h_hi] * n, "infeasible"
    if mode == "OFS":
        problem = OptimizationProblem(costs, c, u_r, [f_bounds] * n)
        if all(j.form == "reciprocal" for j in costs):
            sol = solve_closed_form(problem)
        else:
            sol = solve_dual_bisection(problem)
        periods = sol.periods
    elif mode == "NFS":
        from .neural.network import forward
        periods = [float(h) for h in forward(model, c + [u_r])]
    else:
        raise ConfigurationError(f"unknown mode {mode!r}")
    periods = [min(max(h, h_lo), h_hi) for h in periods]
    load = math.fsum(ci / h for ci, h in zip(c, periods))
    if load > u_r:
        # approximate outputs may over-request; stretch periods back onto the budget
        scale = load / u_r
        periods = [min(h * scale, h_hi) for h in periods]
    if tick > 0:
        periods = [min(math.ceil(h / tick - 1e-9) * tick, max(h, h_hi)) for h in periods]
    return periods, None


class _Loop:
    __slots__ = ("spec", "model", "state", "u", "u_pending", "ctrl", "period", "cost",
                 "noise", "meas", "n_samples", "fallen", "w2", "nd0", "nd1", "sig")

    def __init__(self, spec: LoopSpec, period: float, noise, meas, micro_dt):
        self.spec = spec
        self.model = pendulum_model(spec.omega0)
        self.state = [0.0, 0.0]
        self.u = 0.0
        self.u_pending = 0.0
        self.period = period
        self.ctrl = cached_design(spec.omega0, period)
        self.cost = 0.0
        self.noise = noise
        self.meas = meas
        self.n_samples = 0
        self.fallen = False
        self.w2 = spec.omega0 ** 2
        d = self.model.noise_direction
        self.nd0, self.nd1 = float(d[0]), float(d[1])
        self.sig = math.sqrt(self.model.v_variance * micro_dt)

    def integrate(self, dt: float) -> None:
        x1, x2 = self.state
        u = self.u
        self.cost += (x1 * x1 + u * u) * dt
        if self.fallen:
            return
        w2 = self.w2
        k1a, k1b = x2, w2 * (x1 + u)
        k2a, k2b = x2 + 0.5 * dt * k1b, w2 * (x1 + 0.5 * dt * k1a + u)
        k3a, k3b = x2 + 0.5 * dt * k2b, w2 * (x1 + 0.5 * dt * k2a + u)
        k4a, k4b = x2 + dt * k3b, w2 * (x1 + dt * k3a + u)
        self.state = [x1 + dt / 6.0 * (k1a + 2 * k2a + 2 * k3a + k4a),
                      x2 + dt / 6.0 * (k1b + 2 * k2b + 2 * k3b + k4b)]

    def kick(self, k: int) -> None:
        if self.noise is None or self.fallen:
            return
        z = self.sig * self.noise[k]
        self.state[0] += self.nd0 * z
        self.state[1] += self.nd1 * z

    def check_fall(self) -> bool:
        if not self.fallen and abs(self.state[0]) > FALL_ANGLE:
            self.fallen = True
            self.state = [math.copysign(FALL_ANGLE, self.state[0]), 0.0]
            return True
        return False


@dataclass
class _Job:
    task: int
    remaining: int
    release: int = 0
    start: int = -1
    started: bool = False


def _streams(seed: int, n_loops: int):
    root = np.random.SeedSequence(seed)
    children = root.spawn(2 * n_loops)
    return children[:n_loops], children[n_loops:]


def run_simulation(config: SimConfig) -> SimLog:
    """Run one scenario; deterministic for a fixed config (including seed)."""
    config.validate()
    n = len(config.loops)
    out = SimLog(n_loops=n, mode=config.mode)
    end = to_ns(config.duration)
    if end == 0:
        return out
    ms_ns = to_ns(config.micro_step)
    micro_dt = ms_ns / NS
    log_ns = to_ns(config.log_interval)
    n_grid = end // ms_ns + 1
    costs = config.costs()
    trace = config.exec_trace

    proc_seeds, meas_seeds = _streams(config.seed, n)
    loops = []
    for i, spec in enumerate(config.loops):
        noise = meas = None
        if config.noise:
            noise = np.random.default_rng(proc_seeds[i]).standard_normal(n_grid)
            meas = np.random.default_rng(meas_seeds[i]).standard_normal(n_grid)
        loops.append(_Loop(spec, 1.0 / spec.f0, noise, meas, micro_dt))

    # task ids: 0 = fbs, 1..n = control loops, n+1 = disturbance
    fbs_id, dist_id = 0, n + 1
    assigned = [1.0 / lp.f0 for lp in config.loops]

    def task_specs():
        cur = trace.value_at(0.0)
        specs = [TaskSpec(0, "fbs", config.t_fs, config.c_fbs)]
        specs += [TaskSpec(i + 1, "control", assigned[i], cur[i], loop_index=i) for i in range(n)]
        specs.append(TaskSpec(dist_id, "disturbance", config.disturbance_period, cur[n]))
        return assign_rm_priorities(specs)

    prio = {t.id: t.priority for t in task_specs()}
    period_ns = {fbs_id: to_ns(config.t_fs), dist_id: to_ns(config.disturbance_period)}
    for i in range(n):
        period_ns[i + 1] = to_ns(assigned[i])
    next_release = {tid: 0 for tid in period_ns}
    change_ns = [to_ns(t) for t in trace.change_points()]
    ci = 0
    current_c = list(trace.value_at(0.0))
    pending: dict[int, _Job] = {}
    running: Optional[_Job] = None
    fbs_result = None
    pending_events: list[str] = []
    grid_k = 0
    now = 0
    next_log = 0
    fbs_k = 0

    def advance(t_to: int) -> None:
        nonlocal grid_k
        t = now
        while t < t_to:
            g_end = (grid_k + 1) * ms_ns
            seg = min(g_end, t_to)
            dt = (seg - t) / NS
            for lp in loops:
                lp.integrate(dt)
            if seg == g_end:
                grid_k += 1
                for i, lp in enumerate(loops):
                    lp.kick(grid_k)
                    if lp.check_fall():
                        out.unstable.setdefault(i + 1, seg / NS)
                        pending_events.append(f"fall:{i + 1}")
            t = seg

    def u_req() -> float:
        tasks = [TaskSpec(i + 1, "control", assigned[i], current_c[i]) for i in range(n)]
        tasks.append(TaskSpec(dist_id, "disturbance", config.disturbance_period, current_c[n]))
        return requested_utilization(tasks)

    def decide():
        t0 = time.perf_counter()
        periods, event = fbs_invoke(
            config.mode, current_c, config.u_target, current_periods=assigned, costs=costs,
            disturbance_period=config.disturbance_period, model=config.model,
            f_bounds=config.f_bounds, tick=config.period_tick)
        return periods, event, time.perf_counter() - t0, list(current_c)

    def apply_decision(result) -> None:
        nonlocal prio
        periods, event, latency, inputs = result
        assigned[:] = periods
        prio = {t.id: t.priority for t in task_specs()}
        out.decisions.append({"time": now / NS, "inputs": inputs, "periods": list(periods),
                              "latency": latency, "event": event})
        pending_events.append("fbs" if event is None else f"fbs:{event}")

    def start(job: _Job) -> None:
        nonlocal fbs_result
        job.started = True
        job.start = now
        if job.task == fbs_id:
            fbs_result = decide()
        elif job.task != dist_id:
            lp = loops[job.task - 1]
            y = lp.state[0]
            if lp.meas is not None:
                # k-th sample of a loop always sees the k-th draw of its stream
                y += math.sqrt(lp.model.e_variance) * lp.meas[lp.n_samples % len(lp.meas)]
            lp.n_samples += 1
            lp.u_pending = controller_step(lp.ctrl, y)

    def complete(job: _Job) -> None:
        nonlocal running, fbs_result
        del pending[job.task]
        if running is job:
            running = None
        if config.record_jobs:
            out.jobs.append((job.task, job.release / NS, job.start / NS, now / NS))
        if job.task == fbs_id:
            apply_decision(fbs_result)
            fbs_result = None
        elif job.task != dist_id:
            lp = loops[job.task - 1]
            lp.u = lp.u_pending

    def release(tid: int) -> None:
        nonlocal fbs_k
        if tid == fbs_id:
            fbs_k += 1
            next_release[tid] = fbs_k * period_ns[tid]
            c_ns = to_ns(config.c_fbs)
        elif tid == dist_id:
            next_release[tid] += period_ns[tid]
            c_ns = to_ns(current_c[n])
        else:
            i = tid - 1
            new_ns = to_ns(assigned[i])
            if new_ns != period_ns[tid]:
                period_ns[tid] = new_ns
                lp = loops[i]
                xhat = lp.ctrl.xhat
                lp.ctrl = cached_design(lp.spec.omega0, assigned[i])
                lp.ctrl.xhat = xhat.copy()
            next_release[tid] += period_ns[tid]
            c_ns = to_ns(current_c[i])
        if tid in pending:
            out.drops += 1
            pending_events.append(f"drop:{tid}")
            return
        pending[tid] = _Job(tid, c_ns, now)

    def dispatch() -> None:
        nonlocal running
        while True:
            if not pending:
                running = None
                return
            job = min(pending.values(), key=lambda j: prio[j.task])
            running = job
            if not job.started:
                start(job)
            if job.remaining == 0:
                complete(job)
                continue
            return

    def log_row() -> None:
        out.times.append(now / NS)
        out.j_loops.append(tuple(lp.cost for lp in loops))
        out.j_sum.append(math.fsum(lp.spec.weight * lp.cost for lp in loops))
        out.periods.append(tuple(assigned))
        out.u_req.append(u_req())
        out.events.append(";".join(pending_events))
        pending_events.clear()

    while True:
        # events at `now`: trace change, then releases (fbs first), then dispatch
        while ci < len(change_ns) and change_ns[ci] <= now:
            current_c = list(trace.segments[ci + 1][1])
            ci += 1
            pending_events.append("trace")
        for tid in sorted(next_release, key=lambda t: prio[t]):
            if next_release[tid] <= now:
                release(tid)
        dispatch()
        if now >= next_log:
            log_row()
            next_log += log_ns
        if now >= end:
            break
        t_next = min(min(next_release.values()), next_log, end)
        if ci < len(change_ns):
            t_next = min(t_next, change_ns[ci])
        if running is not None:
            t_next = min(t_next, now + running.remaining)
        advance(t_next)
        if running is not None:
            running.remaining -= t_next - now
        now = t_next
        if running is not None and running.remaining == 0:
            complete(running)
    return out
