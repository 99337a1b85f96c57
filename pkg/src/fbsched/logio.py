"""CSV formats shared by the CLI writers and the report reader."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

from .errors import ModelParseError

BENCH_HEADER = ["run_index", "mode", "seconds"]
SUMMARY_HEADER = ["mode", "n", "mean", "median", "q1", "q3", "min", "max"]


def sim_header(n: int) -> list[str]:
    return (["time_s", "mode", "J_sum"] + [f"J_{i + 1}" for i in range(n)]
            + [f"h_{i + 1}" for i in range(n)] + ["U_req", "events"])


def _f(v) -> str:
    return repr(float(v))


def write_sim_log(log, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(sim_header(log.n_loops))
    for t, js, jl, hs, u, ev in log.rows():
        w.writerow([_f(t), log.mode, _f(js), *map(_f, jl), *map(_f, hs), _f(u), ev])


@dataclass
class SimTable:
    mode: str
    n_loops: int
    time: list = field(default_factory=list)
    j_sum: list = field(default_factory=list)
    j_loops: list = field(default_factory=list)
    periods: list = field(default_factory=list)
    u_req: list = field(default_factory=list)
    events: list = field(default_factory=list)

    @property
    def final_j_sum(self) -> float:
        return self.j_sum[-1] if self.j_sum else 0.0

    def unstable_loops(self) -> dict:
        """Loop index -> time of its first fall."""
        out = {}
        for t, ev in zip(self.time, self.events):
            for e in filter(None, ev.split(";")):
                if e.startswith("fall:"):
                    out.setdefault(int(e[5:]), t)
        return out

    def post_adaptation_mask(self) -> list[bool]:
        """True for rows after the scheduler has reacted to the latest trace change.

        A row counts once an ``fbs`` event has been logged at or after the
        most recent ``trace`` event.  Under OLS no row qualifies after a change.
        """
        mask, adapted = [], True
        for ev in self.events:
            tags = [e.split(":")[0] for e in ev.split(";") if e]
            if "trace" in tags:
                adapted = False
            if "fbs" in tags:
                adapted = True
            mask.append(adapted)
        return mask

    def utilization_envelope(self) -> tuple[float, float]:
        """(max, mean) of U_req over post-adaptation rows."""
        vals = [u for u, ok in zip(self.u_req, self.post_adaptation_mask()) if ok]
        if not vals:
            return math.nan, math.nan
        return max(vals), math.fsum(vals) / len(vals)


def _rows(path, header=None):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ModelParseError(f"{path}: empty file")
    if header is not None and rows[0] != header:
        raise ModelParseError(f"{path}: expected header {','.join(header)}")
    return rows


def read_sim_log(path) -> SimTable:
    rows = _rows(path)
    head = rows[0]
    n = (len(head) - 5) // 2
    if n < 1 or head != sim_header(n):
        raise ModelParseError(f"{path}: not a simulation log (header {','.join(head)})")
    table = None
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(head):
            raise ModelParseError(f"{path}:{lineno}: expected {len(head)} fields, got {len(row)}")
        try:
            nums = [float(v) for v in (row[0], *row[2:-1])]
        except ValueError as exc:
            raise ModelParseError(f"{path}:{lineno}: {exc}") from None
        if table is None:
            table = SimTable(row[1], n)
        elif row[1] != table.mode:
            raise ModelParseError(f"{path}:{lineno}: mixed modes in one log")
        table.time.append(nums[0])
        table.j_sum.append(nums[1])
        table.j_loops.append(tuple(nums[2:2 + n]))
        table.periods.append(tuple(nums[2 + n:2 + 2 * n]))
        table.u_req.append(nums[-1])
        table.events.append(row[-1])
    return table or SimTable("", n)


def write_bench(stats_list, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(BENCH_HEADER)
    for st in stats_list:
        for k, s in enumerate(st.samples):
            w.writerow([k, st.mode, _f(s)])


def write_bench_summary(stats_list, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(SUMMARY_HEADER)
    for st in stats_list:
        d = st.summary()
        w.writerow([d["mode"], d["n"]] + [_f(d[k]) for k in SUMMARY_HEADER[2:]])


def read_bench(path) -> dict:
    """Mode -> list of per-run seconds, in run order."""
    out: dict = {}
    for lineno, row in enumerate(_rows(path, BENCH_HEADER)[1:], start=2):
        if len(row) != 3:
            raise ModelParseError(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
        try:
            k, sec = int(row[0]), float(row[2])
        except ValueError as exc:
            raise ModelParseError(f"{path}:{lineno}: {exc}") from None
        runs = out.setdefault(row[1], [])
        if k != len(runs):
            raise ModelParseError(f"{path}:{lineno}: run_index {k} out of sequence")
        runs.append(sec)
    return out


def read_bench_summary(path) -> dict:
    out = {}
    for lineno, row in enumerate(_rows(path, SUMMARY_HEADER)[1:], start=2):
        if len(row) != len(SUMMARY_HEADER):
            raise ModelParseError(f"{path}:{lineno}: expected {len(SUMMARY_HEADER)} fields")
        try:
            out[row[0]] = {"n": int(row[1]),
                           **{k: float(v) for k, v in zip(SUMMARY_HEADER[2:], row[2:])}}
        except ValueError as exc:
            raise ModelParseError(f"{path}:{lineno}: {exc}") from None
    return out
