"""``fbsched`` command line: data generation, training, simulation, benchmarks, reports."""

from __future__ import annotations

import argparse
import contextlib
import glob
import logging
import os
import sys

import numpy as np

from . import logio
from .bench import measure_overhead, value_set_sampler
from .errors import ConfigurationError, FbsError, ModelParseError
from .kernel import MODES, run_simulation
from .neural import flop_count, gen_dataset, holdout_errors, load_model, read_dataset, save_model
from .neural.lm import train_lm
from .scenario import derive_seed, load_scenario

log = logging.getLogger("fbsched")

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2


class MissingFileError(FbsError):
    def __init__(self, path, what="file"):
        super().__init__(f"missing {what}: {path}")
        self.path = path


class Staging:
    """Collects outputs as ``.partial`` files and publishes them only on success."""

    def __init__(self):
        self.items = []

    def path(self, final: str) -> str:
        tmp = final + ".partial"
        self.items.append((tmp, final))
        return tmp

    @contextlib.contextmanager
    def open(self, final: str):
        with open(self.path(final), "w", newline="") as fh:
            yield fh

    def commit(self):
        for tmp, final in self.items:
            os.replace(tmp, final)
        self.items = []

    def discard(self):
        for tmp, _ in self.items:
            with contextlib.suppress(FileNotFoundError):
                os.remove(tmp)
        self.items = []


def _require(path: str, what: str) -> str:
    if not os.path.exists(path):
        raise MissingFileError(path, what)
    return path


def _model_path(sc, out):
    return sc.resolve(sc.sim.get("model_path") or "model.txt", out)


def _parse_hidden(text: str) -> list[int]:
    """``"2,4,8"`` or ``"2:12"`` (inclusive) or ``"2:12:2"``."""
    try:
        if ":" in text:
            parts = [int(v) for v in text.split(":")]
            if len(parts) not in (2, 3):
                raise ValueError
            step = parts[2] if len(parts) == 3 else 1
            vals = list(range(parts[0], parts[1] + 1, step))
        else:
            vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigurationError(f"bad --hidden value {text!r}") from None
    if not vals or min(vals) < 1:
        raise ConfigurationError(f"--hidden needs positive sizes, got {text!r}")
    return vals


def cmd_gen_data(sc, args, stage):
    if not sc.ranges:
        raise ConfigurationError(f"{sc.source}: no dataset.ranges")
    s = sc.sim
    ts = gen_dataset(sc.ranges, sc.costs(), u_target=float(s.get("u_target", 0.75)),
                     disturbance_period=sc.disturbance_period,
                     f_bounds=tuple(s.get("f_bounds", (5.0, 200.0))))
    from .neural.data import write_dataset
    write_dataset(ts, stage.path(sc.resolve(sc.dataset_path, args.out)))
    print(f"{len(ts)} rows" + (f" ({len(ts.skipped)} infeasible skipped)" if ts.skipped else ""))


def _train_set(sc, args):
    return read_dataset(_require(sc.resolve(sc.dataset_path, args.out), "dataset"))


def cmd_train(sc, args, stage):
    ts = _train_set(sc, args)
    m = int(args.hidden) if args.hidden else sc.hidden
    params, rep = train_lm(ts, m, sc.lm_config())
    save_model(params, stage.path(_model_path(sc, args.out)))
    with stage.open(os.path.join(args.out, "training.csv")) as fh:
        fh.write("epoch,train_mse,holdout_mse,mu\n")
        for ep, tr, ho, mu in rep.epochs:
            fh.write(f"{ep},{tr!r},{ho!r},{mu!r}\n")
    err = holdout_errors(params, ts, rep)
    print(f"M={m} epochs={len(rep.epochs)} stop={rep.stop_reason} "
          f"holdout_mse={rep.final_holdout_mse:.3e} "
          f"rel_err mean={err.mean():.4f} max={err.max():.4f}")


def cmd_sweep_hidden(sc, args, stage):
    ts = _train_set(sc, args)
    hidden = _parse_hidden(args.hidden or "2:16")
    cfg = sc.lm_config()
    with stage.open(os.path.join(args.out, "sweep_hidden.csv")) as fh:
        fh.write("M,holdout_mse,holdout_error,flop_count\n")
        for m in hidden:
            params, rep = train_lm(ts, m, cfg)
            err = float(holdout_errors(params, ts, rep).mean())
            fh.write(f"{m},{rep.final_holdout_mse!r},{err!r},{flop_count(ts.n_loops, m)}\n")
            print(f"M={m:3d} holdout_error={err:.4f} flops={flop_count(ts.n_loops, m)}")


def cmd_simulate(sc, args, stage):
    mode = args.mode or sc.sim.get("mode", "OFS")
    if mode not in MODES:
        raise ConfigurationError(f"--mode must be one of {', '.join(MODES)}")
    cfg = sc.sim_config(mode, args.out)
    if mode == "NFS":
        _require(cfg.model_path, "NFS model")
    result = run_simulation(cfg)
    with stage.open(os.path.join(args.out, f"sim_{mode}.csv")) as fh:
        logio.write_sim_log(result, fh)
    falls = ", ".join(f"loop {i} at {t:.3f} s" for i, t in sorted(result.unstable.items()))
    print(f"{mode}: J_sum={result.final_j_sum():.6g}" + (f" unstable: {falls}" if falls else ""))


def cmd_bench(sc, args, stage):
    runs = int(args.runs or sc.bench.get("runs", 500))
    model = load_model(_require(_model_path(sc, args.out), "NFS model"))
    value_sets = sc.ranges or sc.trace.value_sets()
    seed = derive_seed(sc.require_seed(), "bench")
    common = dict(costs=sc.costs(), u_target=float(sc.sim.get("u_target", 0.75)),
                  disturbance_period=sc.disturbance_period,
                  f_bounds=tuple(sc.sim.get("f_bounds", (5.0, 200.0))))
    stats = [measure_overhead("OFS", runs, value_set_sampler(value_sets), seed,
                              solver=sc.bench.get("solver", "dual"), **common),
             measure_overhead("NFS", runs, value_set_sampler(value_sets), seed,
                              model=model, **common)]
    with stage.open(os.path.join(args.out, "bench.csv")) as fh:
        logio.write_bench(stats, fh)
    with stage.open(os.path.join(args.out, "bench_summary.csv")) as fh:
        logio.write_bench_summary(stats, fh)
    for st in stats:
        print(f"{st.mode}: median={st.median * 1e6:.2f} us q1={st.q1 * 1e6:.2f} q3={st.q3 * 1e6:.2f}")
    print(f"ratio OFS/NFS (median) = {stats[0].median / stats[1].median:.2f}")


def cmd_report(sc, args, stage):
    paths = sorted(glob.glob(os.path.join(args.out, "sim_*.csv")))
    bench_path = os.path.join(args.out, "bench.csv")
    if not paths and not os.path.exists(bench_path):
        raise MissingFileError(os.path.join(args.out, "sim_<MODE>.csv"), "simulation log")
    tables = [logio.read_sim_log(p) for p in paths]
    order = {m: k for k, m in enumerate(MODES)}
    tables.sort(key=lambda t: order.get(t.mode, len(order)))
    if tables:
        n = tables[0].n_loops
        print("mode  J_sum        " + "  ".join(f"J_{i + 1:<9d}" for i in range(n))
              + "  U_req max  U_req mean  unstable")
        for t in tables:
            umax, umean = t.utilization_envelope()
            unstable = ",".join(f"{i}@{v:.2f}s" for i, v in sorted(t.unstable_loops().items()))
            jl = t.j_loops[-1] if t.j_loops else (0.0,) * n
            print(f"{t.mode:<5s} {t.final_j_sum:<12.5g} " + "  ".join(f"{v:<11.4g}" for v in jl)
                  + f"  {umax:<9.4f}  {umean:<10.4f}  {unstable or '-'}")
        by = {t.mode: t.final_j_sum for t in tables}
        if "OFS" in by and by["OFS"] > 0:
            for m in ("OLS", "NFS"):
                if m in by:
                    print(f"J_sum({m}) / J_sum(OFS) = {by[m] / by['OFS']:.4f}")
    if os.path.exists(bench_path):
        runs = logio.read_bench(bench_path)
        med = {m: float(np.median(v)) for m, v in runs.items()}
        for m, v in runs.items():
            q1, q3 = np.percentile(v, [25, 75])
            print(f"overhead {m}: n={len(v)} median={med[m] * 1e6:.2f} us "
                  f"q1={q1 * 1e6:.2f} q3={q3 * 1e6:.2f}")
        if "OFS" in med and "NFS" in med:
            print(f"overhead ratio OFS/NFS = {med['OFS'] / med['NFS']:.2f}")


COMMANDS = {
    "gen-data": (cmd_gen_data, "generate the training dataset"),
    "train": (cmd_train, "train the scheduler network"),
    "simulate": (cmd_simulate, "run one closed-loop simulation"),
    "bench-overhead": (cmd_bench, "time OFS and NFS decisions"),
    "report": (cmd_report, "summarize logs and benchmarks in --out"),
    "sweep-hidden": (cmd_sweep_hidden, "holdout error against hidden-layer size"),
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fbsched", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name, (_, helptext) in COMMANDS.items():
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("--scenario", default=None,
                        help="scenario YAML (default: built-in reference scenario)")
        sp.add_argument("--out", default=".", help="output directory (default: .)")
        sp.add_argument("--seed", type=int, default=None, help="override the scenario seed")
        sp.add_argument("-v", "--verbose", action="store_true")
        if name == "simulate":
            sp.add_argument("--mode", choices=MODES)
        if name == "bench-overhead":
            sp.add_argument("--runs", type=int)
        if name in ("train", "sweep-hidden"):
            sp.add_argument("--hidden", help="M for train; list or lo:hi[:step] for sweep")
    return p


def run_cli(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    stage = Staging()
    try:
        if args.seed is not None and args.seed < 0:
            raise ConfigurationError("--seed must be a non-negative integer")
        if args.scenario is not None:
            _require(args.scenario, "scenario")
        sc = load_scenario(args.scenario)
        if args.seed is not None:
            sc.seed = args.seed
        sc.require_seed()
        if not os.path.isdir(args.out):
            os.makedirs(args.out)
        COMMANDS[args.command][0](sc, args, stage)
        stage.commit()
        return EXIT_OK
    except (MissingFileError, ConfigurationError, ModelParseError, FileNotFoundError) as exc:
        stage.discard()
        print(f"fbsched {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (FbsError, OSError, ValueError) as exc:
        stage.discard()
        print(f"fbsched {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except BaseException:
        stage.discard()
        raise


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
